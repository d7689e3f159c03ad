//! Score models, score-matching objectives, training and reverse-SDE
//! sampling for the forward process `dx = sqrt(2) dW`.

mod model;
mod objectives;
mod offset;
mod sampler;
mod schedule;
mod train;

pub use model::{ModelVariant, ScoreHead, ScoreModel, ScoreNetConfig, TimeFeatures};
pub use objectives::{
    conditional_score, dsm_loss, dsm_terms, dsm_terms_at_time, esm_loss, esm_terms, ism_loss,
    ism_terms, objectives, perturb, Dsm, Esm, Ism, LossTerm, LossTerms, Objective, ScoreLossGraph,
    TermKind, TrainingSource, Weighting,
};
pub use offset::{dsm_ism_offset_check, offset_check_for, OffsetReport, OFFSET_SE_TOL};
pub use sampler::sample_reverse;
pub use schedule::{DiffusionSchedule, TimeGrid};
pub use train::{train, train_with, TrainConfig, TrainRecord};
