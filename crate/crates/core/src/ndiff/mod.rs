//! Minimal dense-network engine: forward and traced evaluation, reverse-mode
//! gradients of composed scalar losses, exact divergence, optimizers and
//! spectral normalization.

pub mod checkpoint;
mod net;
mod optim;
mod spectral;
mod tape;

pub(crate) use net::dot as net_dot;
pub use net::{Activation, DenseNet, LayerSlot, Probe, ProbeOutput, Scratch, Trace};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use spectral::{layer_spectral_norms, power_iteration, spectral_normalize};
pub use tape::{
    divergence, finite_difference_gradient, loss_backward, loss_value, GradientTape, LossGraph,
};
