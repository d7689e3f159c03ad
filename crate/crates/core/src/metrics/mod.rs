//! Wasserstein-1 evaluation and the diagnostics built on it.

mod checks;
mod dual;
mod ledger;
mod sweep;
mod transport;
mod w1;

pub use checks::{contraction_check, invariance_test, percentile, ContractionReport, InvarianceReport};
pub use dual::{dual_estimate, dual_single, empirical_lipschitz, train_critic, CriticConfig, DualEstimate};
pub use ledger::{augmented_space_time_points, error_ledger, LedgerConfig, LedgerEntry, LedgerReport};
pub use sweep::{loglog_slope, mean_and_stderr, sample_complexity_sweep, SweepRow, SweepTable};
pub use transport::{w1_exact_value, ExactOptions, ExactSolution, TransportProblem, MAX_PAIRS};
pub use w1::{w1_dual, w1_estimators, w1_exact, w1_exact_with, ExactFlow, NeuralDual, W1Estimator, W1Method, W1Report};
