//! Dense feed-forward networks with traced forward passes.
//!
//! Parameters live in one flat vector; each layer is a row-major
//! `rows x cols` weight block followed by a bias block. Hidden layers apply
//! the net's activation, the output layer is linear.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Result};
use crate::seed;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// `z * sigmoid(z)`, smooth; used by score networks.
    Silu,
    /// Piecewise linear with slopes `1` and `0.2`.
    LeakyRelu,
    /// `|z|`: unit slope everywhere, so spectrally normalized layers keep
    /// gradient norms; used by critics.
    Abs,
    Identity,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Silu => "silu",
            Activation::LeakyRelu => "leaky-relu",
            Activation::Abs => "abs",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "silu" => Ok(Activation::Silu),
            "leaky-relu" => Ok(Activation::LeakyRelu),
            "abs" => Ok(Activation::Abs),
            "identity" => Ok(Activation::Identity),
            other => Err(invalid(format!("unknown activation `{other}`"))),
        }
    }

    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z * sigmoid(z),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Abs => z.abs(),
            Activation::Identity => z,
        }
    }

    #[inline]
    pub fn first(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Abs => {
                if z >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    #[inline]
    pub fn second(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s))
            }
            Activation::LeakyRelu | Activation::Abs | Activation::Identity => 0.0,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Location of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub rows: usize,
    pub cols: usize,
    pub weight: usize,
    pub bias: usize,
}

impl LayerSlot {
    pub fn weight_len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    widths: Vec<usize>,
    params: Vec<f64>,
    layers: Vec<LayerSlot>,
    activation: Activation,
    /// One unit left-singular-vector estimate per layer, present iff
    /// spectral normalization is enabled.
    power_iter: Option<Vec<Vec<f64>>>,
}

fn layout(widths: &[usize]) -> Result<(Vec<LayerSlot>, usize)> {
    if widths.len() < 2 {
        return Err(invalid("a network needs at least two widths"));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(invalid(format!("widths must be positive, got {widths:?}")));
    }
    let mut offset = 0;
    let layers = widths
        .windows(2)
        .map(|w| {
            let slot = LayerSlot {
                rows: w[1],
                cols: w[0],
                weight: offset,
                bias: offset + w[0] * w[1],
            };
            offset = slot.bias + slot.rows;
            slot
        })
        .collect();
    Ok((layers, offset))
}

impl DenseNet {
    /// Scaled-uniform initialization: every weight is drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases are zero.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let (layers, n) = layout(widths)?;
        let mut params = vec![0.0; n];
        let mut rng = seed::rng(seed);
        for slot in &layers {
            let bound = 1.0 / (slot.cols as f64).sqrt();
            for w in &mut params[slot.weight..slot.weight + slot.weight_len()] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(Self {
            widths: widths.to_vec(),
            params,
            layers,
            activation,
            power_iter: None,
        })
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        let (layers, n) = layout(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            params: vec![0.0; n],
            layers,
            activation,
            power_iter: None,
        })
    }

    pub fn from_params(widths: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let (layers, n) = layout(widths)?;
        ensure_dim(n, params.len(), "parameter vector")?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(crate::Error::NonFinite("network parameters".into()));
        }
        Ok(Self {
            widths: widths.to_vec(),
            params,
            layers,
            activation,
            power_iter: None,
        })
    }

    /// Turns on spectral-normalization bookkeeping with deterministic
    /// random unit start vectors.
    pub fn enable_spectral_norm(&mut self, seed: u64) {
        let mut rng = seed::rng(seed);
        let vectors = self
            .layers
            .iter()
            .map(|slot| {
                let mut u: Vec<f64> = (0..slot.rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    u.iter_mut().for_each(|x| *x /= norm);
                } else {
                    u[0] = 1.0;
                }
                u
            })
            .collect();
        self.power_iter = Some(vectors);
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layers(&self) -> &[LayerSlot] {
        &self.layers
    }

    pub fn spectral_norm_enabled(&self) -> bool {
        self.power_iter.is_some()
    }

    pub fn power_iter_state(&self) -> Option<&[Vec<f64>]> {
        self.power_iter.as_deref()
    }

    pub(crate) fn power_iter_state_mut(&mut self) -> Option<&mut Vec<Vec<f64>>> {
        self.power_iter.as_mut()
    }

    pub(crate) fn set_power_iter_state(&mut self, state: Option<Vec<Vec<f64>>>) {
        self.power_iter = state;
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        let s = self.layers[layer];
        &self.params[s.weight..s.weight + s.weight_len()]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.layers[layer];
        &mut self.params[s.weight..s.weight + s.weight_len()]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let s = self.layers[layer];
        &self.params[s.bias..s.bias + s.rows]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.layers[layer];
        &mut self.params[s.bias..s.bias + s.rows]
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.input_dim(), input.len(), "network input")?;
        let mut scratch = Scratch::default();
        Ok(self.forward_with(input, &mut scratch).to_vec())
    }

    /// Allocation-free forward pass; the input length is checked by
    /// `debug_assert!` only.
    pub fn forward_with<'s>(&self, input: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        debug_assert_eq!(input.len(), self.input_dim());
        scratch.a.clear();
        scratch.a.extend_from_slice(input);
        let last = self.layers.len() - 1;
        for (k, slot) in self.layers.iter().enumerate() {
            scratch.b.clear();
            scratch.b.extend_from_slice(&self.params[slot.bias..slot.bias + slot.rows]);
            let w = &self.params[slot.weight..slot.weight + slot.weight_len()];
            for (r, out) in scratch.b.iter_mut().enumerate() {
                *out += dot(&w[r * slot.cols..(r + 1) * slot.cols], &scratch.a);
            }
            if k < last && self.activation != Activation::Identity {
                for v in scratch.b.iter_mut() {
                    *v = self.activation.value(*v);
                }
            }
            std::mem::swap(&mut scratch.a, &mut scratch.b);
        }
        &scratch.a
    }

    /// Forward pass that also pushes tangent directions through the net
    /// (forward-mode) and records what [`DenseNet::backprop`] needs.
    pub fn trace(&self, probe: &Probe) -> Result<Trace> {
        ensure_dim(self.input_dim(), probe.input.len(), "probe input")?;
        for t in &probe.tangents {
            ensure_dim(self.input_dim(), t.len(), "probe tangent")?;
        }
        let n_layers = self.layers.len();
        let mut acts = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers.saturating_sub(1));
        let mut tacts = Vec::with_capacity(n_layers);
        let mut tpre = Vec::with_capacity(n_layers.saturating_sub(1));
        let mut a = probe.input.clone();
        let mut ta = probe.tangents.clone();
        for (k, slot) in self.layers.iter().enumerate() {
            let w = &self.params[slot.weight..slot.weight + slot.weight_len()];
            let b = &self.params[slot.bias..slot.bias + slot.rows];
            let z: Vec<f64> = (0..slot.rows)
                .map(|r| b[r] + dot(&w[r * slot.cols..(r + 1) * slot.cols], &a))
                .collect();
            let tz: Vec<Vec<f64>> = ta
                .iter()
                .map(|t| {
                    (0..slot.rows)
                        .map(|r| dot(&w[r * slot.cols..(r + 1) * slot.cols], t))
                        .collect()
                })
                .collect();
            acts.push(std::mem::take(&mut a));
            tacts.push(std::mem::take(&mut ta));
            if k + 1 == n_layers {
                return Ok(Trace {
                    acts,
                    pre,
                    tacts,
                    tpre,
                    output: ProbeOutput {
                        value: z,
                        tangents: tz,
                    },
                });
            }
            a = z.iter().map(|&v| self.activation.value(v)).collect();
            ta = tz
                .iter()
                .map(|t| {
                    t.iter()
                        .zip(&z)
                        .map(|(&dt, &zv)| self.activation.first(zv) * dt)
                        .collect()
                })
                .collect();
            pre.push(z);
            tpre.push(tz);
        }
        unreachable!("layout guarantees at least one layer")
    }

    /// Accumulates `d loss / d params` into `grad` given the adjoint of a
    /// traced output (value and tangents).
    pub fn backprop(&self, trace: &Trace, adjoint: &ProbeOutput, grad: &mut [f64]) -> Result<()> {
        ensure_dim(self.params.len(), grad.len(), "gradient buffer")?;
        ensure_dim(self.output_dim(), adjoint.value.len(), "output adjoint")?;
        let n_tan = trace.tacts[0].len();
        if adjoint.tangents.len() != n_tan && !adjoint.tangents.is_empty() {
            return Err(invalid("tangent adjoint count differs from the probe"));
        }
        let mut zbar = adjoint.value.clone();
        let mut tzbar: Vec<Vec<f64>> = if adjoint.tangents.is_empty() {
            vec![vec![0.0; self.output_dim()]; n_tan]
        } else {
            adjoint.tangents.clone()
        };
        for k in (0..self.layers.len()).rev() {
            let slot = self.layers[k];
            let a = &trace.acts[k];
            let ta = &trace.tacts[k];
            {
                let gw = &mut grad[slot.weight..slot.weight + slot.weight_len()];
                for r in 0..slot.rows {
                    let row = &mut gw[r * slot.cols..(r + 1) * slot.cols];
                    axpy(zbar[r], a, row);
                    for (tb, t) in tzbar.iter().zip(ta) {
                        axpy(tb[r], t, row);
                    }
                }
                let gb = &mut grad[slot.bias..slot.bias + slot.rows];
                for (g, z) in gb.iter_mut().zip(&zbar) {
                    *g += z;
                }
            }
            if k == 0 {
                break;
            }
            let w = &self.params[slot.weight..slot.weight + slot.weight_len()];
            let mut abar = vec![0.0; slot.cols];
            let mut tabar = vec![vec![0.0; slot.cols]; n_tan];
            for r in 0..slot.rows {
                let row = &w[r * slot.cols..(r + 1) * slot.cols];
                axpy(zbar[r], row, &mut abar);
                for (tb, tab) in tzbar.iter().zip(tabar.iter_mut()) {
                    axpy(tb[r], row, tab);
                }
            }
            let z = &trace.pre[k - 1];
            let tz = &trace.tpre[k - 1];
            let act = self.activation;
            zbar = (0..slot.cols)
                .map(|i| {
                    let mut v = abar[i] * act.first(z[i]);
                    let s2 = act.second(z[i]);
                    if s2 != 0.0 {
                        for (tab, t) in tabar.iter().zip(tz) {
                            v += tab[i] * s2 * t[i];
                        }
                    }
                    v
                })
                .collect();
            tzbar = tabar
                .iter()
                .map(|tab| (0..slot.cols).map(|i| tab[i] * act.first(z[i])).collect())
                .collect();
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if alpha == 0.0 {
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Reusable buffers for [`DenseNet::forward_with`].
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// One network evaluation requested by a loss: an input point plus any
/// number of input-space tangent directions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Probe {
    pub input: Vec<f64>,
    pub tangents: Vec<Vec<f64>>,
}

impl Probe {
    pub fn point(input: Vec<f64>) -> Self {
        Self {
            input,
            tangents: Vec::new(),
        }
    }
}

/// Network output at a probe: the value and one Jacobian-vector product per
/// tangent. The same shape carries adjoints during backpropagation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeOutput {
    pub value: Vec<f64>,
    pub tangents: Vec<Vec<f64>>,
}

/// Intermediate values of a traced forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    tacts: Vec<Vec<Vec<f64>>>,
    tpre: Vec<Vec<Vec<f64>>>,
    pub output: ProbeOutput,
}
