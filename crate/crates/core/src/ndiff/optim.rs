use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Error, Result};

use super::net::DenseNet;
use super::tape::GradientTape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// `theta <- theta - lr * g`
    Sgd,
    /// Bias-corrected first/second moment update.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(lr)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("moment decay rates must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid("eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, n_params: usize) -> Result<Self> {
        config.validate()?;
        let moments = match config.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => n_params,
        };
        Ok(Self {
            config,
            step: 0,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. A tape with non-finite entries is refused and
    /// leaves both the net and the step counter untouched.
    pub fn step(&mut self, net: &mut DenseNet, tape: &GradientTape) -> Result<()> {
        ensure_dim(net.n_params(), tape.grad.len(), "gradient tape")?;
        if tape.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient passed to optimizer".into()));
        }
        let lr = self.config.lr;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in net.params_mut().iter_mut().zip(&tape.grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                ensure_dim(self.m.len(), tape.grad.len(), "optimizer moments")?;
                let OptimizerConfig {
                    beta1, beta2, eps, ..
                } = self.config;
                let t = (self.step + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in net
                    .params_mut()
                    .iter_mut()
                    .zip(&tape.grad)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}
