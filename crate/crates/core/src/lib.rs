//! Score-based generative modeling under finite group symmetry.
//!
//! The crate is organised bottom-up:
//!
//! * [`ndiff`]: dense networks, reverse-mode gradients, exact divergence,
//!   optimizers, spectral normalization.
//! * [`group`]: finite orthogonal group representations and the three
//!   symmetrization operators (functions, measures, vector fields).
//! * [`targets`]: analytic isotropic Gaussian mixtures and empirical measures.
//! * [`diffusion`]: score models, denoising / implicit / explicit score
//!   matching, training and reverse-SDE sampling.
//! * [`metrics`]: exact and neural-dual Wasserstein-1, contraction checks,
//!   sample-complexity sweeps and the error ledger.
//! * [`experiment`]: configs, the four-setup experiment grid, the property
//!   suite and CSV/SVG reporting.
//!
//! Interchangeable algorithms (objectives, W1 estimators, property checks)
//! sit behind traits and are selected by name through a [`registry::Registry`].

pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod field;
pub mod group;
pub mod metrics;
pub mod ndiff;
pub mod registry;
pub mod seed;
pub mod targets;

pub use error::{Error, Result};
