//! Scalar losses built from network evaluations, and their gradients.

use crate::error::{ensure_dim, Error, Result};

use super::net::{DenseNet, Probe, ProbeOutput};

/// A scalar loss composed of network evaluations and smooth arithmetic.
///
/// The graph declares which evaluations it needs ([`LossGraph::probes`]);
/// given the network outputs it returns the loss together with the adjoint
/// `d loss / d output` for every probe output and tangent.
pub trait LossGraph {
    fn probes(&self) -> &[Probe];
    fn evaluate(&self, outputs: &[ProbeOutput]) -> Result<(f64, Vec<ProbeOutput>)>;
}

/// Gradient of a scalar loss with respect to every network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub loss: f64,
    pub grad: Vec<f64>,
}

impl GradientTape {
    pub fn zeros(net: &DenseNet) -> Self {
        Self {
            loss: 0.0,
            grad: vec![0.0; net.n_params()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

fn check_loss(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite(format!("loss evaluated to {loss}")))
    }
}

/// Evaluates the loss without computing gradients.
pub fn loss_value(net: &DenseNet, graph: &dyn LossGraph) -> Result<f64> {
    let outputs = graph
        .probes()
        .iter()
        .map(|p| net.trace(p).map(|t| t.output))
        .collect::<Result<Vec<_>>>()?;
    check_loss(graph.evaluate(&outputs)?.0)
}

/// Reverse-mode gradient of `graph` with respect to the parameters of `net`.
pub fn loss_backward(net: &DenseNet, graph: &dyn LossGraph) -> Result<GradientTape> {
    let traces = graph
        .probes()
        .iter()
        .map(|p| net.trace(p))
        .collect::<Result<Vec<_>>>()?;
    let outputs: Vec<ProbeOutput> = traces.iter().map(|t| t.output.clone()).collect();
    let (loss, adjoints) = graph.evaluate(&outputs)?;
    check_loss(loss)?;
    ensure_dim(traces.len(), adjoints.len(), "probe adjoints")?;
    let mut tape = GradientTape::zeros(net);
    tape.loss = loss;
    for (trace, adj) in traces.iter().zip(&adjoints) {
        net.backprop(trace, adj, &mut tape.grad)?;
    }
    if !tape.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok(tape)
}

/// Central-difference gradient with per-parameter step
/// `h = rel_step * (1 + |theta_i|)`. Independent of the backprop path; used
/// as the oracle in gradient checks.
pub fn finite_difference_gradient(
    net: &DenseNet,
    graph: &dyn LossGraph,
    rel_step: f64,
) -> Result<Vec<f64>> {
    let mut probe_net = net.clone();
    let mut grad = vec![0.0; net.n_params()];
    for i in 0..net.n_params() {
        let theta = net.params()[i];
        let h = rel_step * (1.0 + theta.abs());
        probe_net.params_mut()[i] = theta + h;
        let up = loss_value(&probe_net, graph)?;
        probe_net.params_mut()[i] = theta - h;
        let down = loss_value(&probe_net, graph)?;
        probe_net.params_mut()[i] = theta;
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Exact divergence `sum_i d out_i / d x_i` of a net whose input is
/// `x ++ t_features` and whose output has the dimension of `x`, using one
/// forward-mode pass per coordinate axis.
pub fn divergence(net: &DenseNet, x: &[f64], t_features: &[f64]) -> Result<f64> {
    let d = x.len();
    ensure_dim(d, net.output_dim(), "divergence output width")?;
    ensure_dim(net.input_dim(), d + t_features.len(), "divergence input width")?;
    let mut input = x.to_vec();
    input.extend_from_slice(t_features);
    let tangents = (0..d)
        .map(|i| {
            let mut e = vec![0.0; input.len()];
            e[i] = 1.0;
            e
        })
        .collect();
    let trace = net.trace(&Probe { input, tangents })?;
    Ok((0..d).map(|i| trace.output.tangents[i][i]).sum())
}
