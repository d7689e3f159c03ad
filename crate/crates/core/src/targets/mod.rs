//! Analytic Gaussian-mixture targets and empirical measures.

mod empirical;
mod mixture;

pub use empirical::{EmpiricalMeasure, MASS_TOL};
pub use mixture::{log_sum_exp, mollify_empirical, DiffusedScore, GaussianMixture, MixtureScore};
