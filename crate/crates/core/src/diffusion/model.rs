use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Result};
use crate::field::VectorField;
use crate::group::GroupRep;
use crate::ndiff::{Activation, DenseNet, Probe, ProbeOutput, Scratch};

/// Fixed map from diffusion time to the two scalar features fed to the net:
/// `t / T` and `ln(t + eps) / ln(T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeFeatures {
    pub horizon: f64,
    pub early_stop: f64,
}

impl TimeFeatures {
    pub const LEN: usize = 2;

    pub fn features(&self, t: f64) -> [f64; 2] {
        let log_t = self.horizon.ln();
        // ln(1) = 0 would blow up the second feature
        let denom = if log_t.abs() < 1e-12 { 1.0 } else { log_t };
        [t / self.horizon, (t + self.early_stop).ln() / denom]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    Plain,
    Equivariant,
}

/// Everything in a score model except the trainable net: variant, group,
/// time featurizer and input/output scaling.
///
/// With `data_variance = Some(v)` the net sees `c(t) x` and its output is
/// multiplied by `c(t)`, where `c(t) = 1/sqrt(v + 2t)`. Both factors depend
/// on `t` only, so group averaging commutes with them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHead {
    variant: ModelVariant,
    group: GroupRep,
    features: TimeFeatures,
    data_variance: Option<f64>,
}

impl ScoreHead {
    pub fn new(
        dim: usize,
        group: Option<GroupRep>,
        features: TimeFeatures,
        data_variance: Option<f64>,
    ) -> Result<Self> {
        if let Some(v) = data_variance {
            if !(v > 0.0) {
                return Err(invalid("preconditioning variance must be positive"));
            }
        }
        let (variant, group) = match group {
            Some(g) => {
                ensure_dim(dim, g.dim(), "score model group")?;
                (ModelVariant::Equivariant, g)
            }
            None => (ModelVariant::Plain, GroupRep::trivial(dim)?),
        };
        Ok(Self {
            variant,
            group,
            features,
            data_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.group.dim()
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn group(&self) -> Option<&GroupRep> {
        match self.variant {
            ModelVariant::Plain => None,
            ModelVariant::Equivariant => Some(&self.group),
        }
    }

    pub fn features(&self) -> &TimeFeatures {
        &self.features
    }

    /// Number of net evaluations per score evaluation.
    pub fn probes_per_point(&self) -> usize {
        self.group.order()
    }

    #[inline]
    pub fn scale(&self, t: f64) -> f64 {
        match self.data_variance {
            Some(v) => 1.0 / (v + 2.0 * t).sqrt(),
            None => 1.0,
        }
    }

    fn net_input(&self, g: usize, x: &[f64], t: f64, out: &mut Vec<f64>) {
        let c = self.scale(t);
        out.clear();
        out.extend(self.group.apply(g, x).into_iter().map(|v| c * v));
        out.extend_from_slice(&self.features.features(t));
    }

    /// Net evaluations needed for `s(x, t)` (and its divergence).
    pub fn probes(&self, x: &[f64], t: f64, with_divergence: bool) -> Vec<Probe> {
        let d = self.dim();
        let c = self.scale(t);
        let width = d + TimeFeatures::LEN;
        (0..self.group.order())
            .map(|g| {
                let mut input = Vec::with_capacity(width);
                self.net_input(g, x, t, &mut input);
                let tangents = if with_divergence {
                    let a = self.group.element(g);
                    (0..d)
                        .map(|i| {
                            let mut e = vec![0.0; width];
                            for r in 0..d {
                                e[r] = c * a[r * d + i];
                            }
                            e
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                Probe { input, tangents }
            })
            .collect()
    }

    /// Combines probe outputs into the score and (when tangents were
    /// requested) its divergence.
    pub fn assemble(&self, t: f64, outputs: &[ProbeOutput]) -> (Vec<f64>, Option<f64>) {
        let d = self.dim();
        let order = self.group.order() as f64;
        let c = self.scale(t);
        let mut s = vec![0.0; d];
        let mut div = 0.0;
        let with_div = !outputs[0].tangents.is_empty();
        for (g, out) in outputs.iter().enumerate() {
            for (a, v) in s.iter_mut().zip(self.group.apply_transpose(g, &out.value)) {
                *a += v;
            }
            if with_div {
                let a = self.group.element(g);
                for (i, tan) in out.tangents.iter().enumerate() {
                    div += (0..d).map(|r| a[r * d + i] * tan[r]).sum::<f64>();
                }
            }
        }
        s.iter_mut().for_each(|v| *v *= c / order);
        (s, with_div.then_some(div * c / order))
    }

    /// Adjoints of the probe outputs given `d loss / d s` and
    /// `d loss / d div`.
    pub fn scatter(&self, t: f64, s_bar: &[f64], div_bar: Option<f64>) -> Vec<ProbeOutput> {
        let d = self.dim();
        let k = self.scale(t) / self.group.order() as f64;
        let scaled: Vec<f64> = s_bar.iter().map(|v| v * k).collect();
        (0..self.group.order())
            .map(|g| {
                let tangents = match div_bar {
                    Some(db) => {
                        let a = self.group.element(g);
                        (0..d)
                            .map(|i| (0..d).map(|r| db * k * a[r * d + i]).collect())
                            .collect()
                    }
                    None => Vec::new(),
                };
                ProbeOutput {
                    value: self.group.apply(g, &scaled),
                    tangents,
                }
            })
            .collect()
    }
}

/// Hyper-parameters of a score network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreNetConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Variance used for input/output scaling; `None` disables it.
    pub data_variance: Option<f64>,
}

impl Default for ScoreNetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32, 32],
            activation: Activation::Silu,
            data_variance: Some(1.0),
        }
    }
}

/// Time-dependent score model `s_theta(x, t)`: a dense net, optionally
/// wrapped in the group average `(1/|G|) sum_g A_g^T net(A_g x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    net: DenseNet,
    head: ScoreHead,
}

impl ScoreModel {
    pub fn new(net: DenseNet, head: ScoreHead) -> Result<Self> {
        let d = head.dim();
        ensure_dim(d + TimeFeatures::LEN, net.input_dim(), "score net input width")?;
        ensure_dim(d, net.output_dim(), "score net output width")?;
        Ok(Self { net, head })
    }

    pub fn build(
        dim: usize,
        cfg: &ScoreNetConfig,
        group: Option<GroupRep>,
        features: TimeFeatures,
        seed: u64,
    ) -> Result<Self> {
        let mut widths = vec![dim + TimeFeatures::LEN];
        widths.extend_from_slice(&cfg.hidden);
        widths.push(dim);
        let net = DenseNet::new(&widths, cfg.activation, seed)?;
        Self::new(net, ScoreHead::new(dim, group, features, cfg.data_variance)?)
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn into_net(self) -> DenseNet {
        self.net
    }

    pub fn head(&self) -> &ScoreHead {
        &self.head
    }

    pub fn variant(&self) -> ModelVariant {
        self.head.variant
    }

    /// The same network behind the group-averaging wrapper `S_G^E`.
    pub fn symmetrized(&self, rep: &GroupRep) -> Result<Self> {
        let head = ScoreHead::new(
            self.head.dim(),
            Some(rep.clone()),
            self.head.features,
            self.head.data_variance,
        )?;
        Self::new(self.net.clone(), head)
    }

    fn eval_with(&self, x: &[f64], t: f64, scratch: &mut Scratch, input: &mut Vec<f64>) -> Vec<f64> {
        let d = self.head.dim();
        let mut s = vec![0.0; d];
        for g in 0..self.head.group.order() {
            self.head.net_input(g, x, t, input);
            let out = self.net.forward_with(input, scratch);
            for (a, v) in s.iter_mut().zip(self.head.group.apply_transpose(g, out)) {
                *a += v;
            }
        }
        let k = self.head.scale(t) / self.head.group.order() as f64;
        s.iter_mut().for_each(|v| *v *= k);
        s
    }

    /// Evaluates many points at one time, reusing buffers.
    pub fn eval_batch(&self, xs: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
        let mut scratch = Scratch::default();
        let mut input = Vec::new();
        xs.iter()
            .map(|x| self.eval_with(x, t, &mut scratch, &mut input))
            .collect()
    }
}

impl VectorField for ScoreModel {
    fn dim(&self) -> usize {
        self.head.dim()
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.eval_with(x, t, &mut Scratch::default(), &mut Vec::new())
    }

    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        let outputs: Vec<ProbeOutput> = self
            .head
            .probes(x, t, true)
            .iter()
            .map(|p| self.net.trace(p).expect("probe widths match the net").output)
            .collect();
        self.head.assemble(t, &outputs).1.unwrap_or(0.0)
    }
}
