//! Kantorovich-dual W1 estimate with a spectrally normalized critic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Error, Result};
use crate::ndiff::{loss_backward, Activation, DenseNet, LossGraph, OptimizerConfig, OptimizerState, Probe, ProbeOutput, Scratch};
use crate::seed::{self, Stream};
use crate::targets::EmpiricalMeasure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub lr: f64,
    pub iterations: usize,
    pub batch: usize,
    pub eval_size: usize,
    pub restarts: usize,
    /// Power iterations per training step (warm-started).
    pub power_iters: usize,
    /// Power iterations before the final evaluation.
    pub final_power_iters: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Abs,
            lr: 1e-3,
            iterations: 2000,
            batch: 256,
            eval_size: 4096,
            restarts: 3,
            power_iters: 1,
            final_power_iters: 50,
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.eval_size == 0 || self.restarts == 0 {
            return Err(invalid("critic batch, eval_size and restarts must be positive"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(invalid("critic hidden widths must be positive"));
        }
        if self.activation == Activation::Silu {
            return Err(invalid("critic activation must be piecewise linear with unit slope bound"));
        }
        OptimizerConfig::adam(self.lr).validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub restarts: Vec<f64>,
    pub iterations: usize,
}

struct CriticGraph {
    probes: Vec<Probe>,
    n_a: usize,
}

impl LossGraph for CriticGraph {
    fn probes(&self) -> &[Probe] {
        &self.probes
    }

    fn evaluate(&self, outputs: &[ProbeOutput]) -> Result<(f64, Vec<ProbeOutput>)> {
        let n_b = outputs.len() - self.n_a;
        let (wa, wb) = (1.0 / self.n_a as f64, 1.0 / n_b as f64);
        let mut loss = 0.0;
        let adj = outputs
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let w = if i < self.n_a { -wa } else { wb };
                loss += w * o.value[0];
                ProbeOutput {
                    value: vec![w],
                    tangents: Vec::new(),
                }
            })
            .collect();
        Ok((loss, adj))
    }
}

fn draw(m: &EmpiricalMeasure, n: usize, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| m.points()[m.draw_index(rng)].clone()).collect()
}

/// `E_m[psi]`, exact when `m` has at most `size` points and otherwise on a
/// subsample of `size` points drawn without replacement.
fn held_out_mean(
    net: &DenseNet,
    m: &EmpiricalMeasure,
    size: usize,
    rng: &mut seed::Rng,
    scratch: &mut Scratch,
) -> f64 {
    if m.len() <= size {
        m.points()
            .iter()
            .zip(m.weights())
            .map(|(p, w)| w * net.forward_with(p, scratch)[0])
            .sum()
    } else {
        let idx = rand::seq::index::sample(rng, m.len(), size);
        let total: f64 = idx.iter().map(|i| m.weights()[i]).sum();
        idx.iter()
            .map(|i| m.weights()[i] * net.forward_with(&m.points()[i], scratch)[0])
            .sum::<f64>()
            / total
    }
}

/// Trains one critic and returns it with `E_a[psi] - E_b[psi]` on fresh
/// resamples.
pub fn train_critic(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    cfg: &CriticConfig,
    seed: u64,
) -> Result<(DenseNet, f64)> {
    cfg.validate()?;
    ensure_dim(a.dim(), b.dim(), "dual measures")?;
    if a.is_empty() || b.is_empty() {
        return Err(invalid("dual estimate needs nonempty measures"));
    }
    let mut widths = vec![a.dim()];
    widths.extend_from_slice(&cfg.hidden);
    widths.push(1);
    let mut net = DenseNet::new(&widths, cfg.activation, seed::stream(seed, Stream::Init))?;
    net.enable_spectral_norm(seed::derive(seed, &[Stream::Init as u64, 1]));
    net.spectral_normalize_in_place(cfg.final_power_iters)?;
    let mut opt = OptimizerState::new(OptimizerConfig::adam(cfg.lr), net.n_params())?;
    let mut rng = seed::rng(seed::stream(seed, Stream::Critic));
    for iteration in 0..cfg.iterations {
        let mut probes: Vec<Probe> = draw(a, cfg.batch, &mut rng).into_iter().map(Probe::point).collect();
        probes.extend(draw(b, cfg.batch, &mut rng).into_iter().map(Probe::point));
        let graph = CriticGraph { probes, n_a: cfg.batch };
        let tape = loss_backward(&net, &graph).map_err(|_| Error::Diverged { iteration, loss: f64::NAN })?;
        opt.step(&mut net, &tape)?;
        net.spectral_normalize_in_place(cfg.power_iters)?;
    }
    net.spectral_normalize_in_place(cfg.final_power_iters)?;
    let mut eval_rng = seed::rng(seed::stream(seed, Stream::Eval));
    let mut scratch = Scratch::default();
    let value = held_out_mean(&net, a, cfg.eval_size, &mut eval_rng, &mut scratch)
        - held_out_mean(&net, b, cfg.eval_size, &mut eval_rng, &mut scratch);
    if !value.is_finite() {
        return Err(Error::Diverged { iteration: cfg.iterations, loss: value });
    }
    Ok((net, value))
}

pub fn dual_single(a: &EmpiricalMeasure, b: &EmpiricalMeasure, cfg: &CriticConfig, seed: u64) -> Result<f64> {
    Ok(train_critic(a, b, cfg, seed)?.1)
}

/// Mean and standard error over `cfg.restarts` independently seeded critics.
pub fn dual_estimate(a: &EmpiricalMeasure, b: &EmpiricalMeasure, cfg: &CriticConfig, seed: u64) -> Result<DualEstimate> {
    cfg.validate()?;
    let restarts = (0..cfg.restarts)
        .map(|r| dual_single(a, b, cfg, seed::derive(seed, &[r as u64])))
        .collect::<Result<Vec<_>>>()?;
    let n = restarts.len() as f64;
    let mean = restarts.iter().sum::<f64>() / n;
    let stderr = if restarts.len() > 1 {
        (restarts.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(DualEstimate {
        mean,
        stderr,
        restarts,
        iterations: cfg.iterations,
    })
}

/// Largest `|psi(x) - psi(y)| / |x - y|` over random pairs from the cloud.
pub fn empirical_lipschitz(net: &DenseNet, pts: &[Vec<f64>], pairs: usize, seed: u64) -> f64 {
    let mut rng = seed::rng(seed);
    let mut scratch = Scratch::default();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = &pts[rng.gen_range(0..pts.len())];
        let y = &pts[rng.gen_range(0..pts.len())];
        let d = crate::field::sq_dist(x, y).sqrt();
        if d > 0.0 {
            let fx = net.forward_with(x, &mut scratch)[0];
            let fy = net.forward_with(y, &mut scratch)[0];
            worst = worst.max((fx - fy).abs() / d);
        }
    }
    worst
}
