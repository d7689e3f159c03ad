//! Minibatch training of score models.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ensure_dim, invalid, Error, Result};
use crate::ndiff::{loss_backward, OptimizerConfig, OptimizerState};
use crate::seed::{self, Stream};

use super::model::ScoreModel;
use super::objectives::{objectives, Objective, TrainingSource, Weighting};
use super::schedule::DiffusionSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Registered objective name: `dsm`, `ism` or `esm`.
    pub objective: String,
    pub weighting: Weighting,
    pub iterations: usize,
    pub batch: usize,
    pub optimizer: OptimizerConfig,
    pub schedule: DiffusionSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: "dsm".into(),
            weighting: Weighting::NoisePrediction,
            iterations: 10_000,
            batch: 32,
            optimizer: OptimizerConfig::default(),
            schedule: DiffusionSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(invalid("batch size must be positive"));
        }
        self.optimizer.validate()?;
        self.schedule.validate()
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("train config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    /// Loss of the minibatch at each iteration, before the update.
    pub losses: Vec<f64>,
    pub wall_clock_secs: f64,
    pub checkpoint: Option<PathBuf>,
    pub config_hash: String,
    pub seed: u64,
}

impl TrainRecord {
    /// Writes the trace as `iteration,loss` CSV.
    pub fn write_loss_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "loss"])?;
        for (i, l) in self.losses.iter().enumerate() {
            w.write_record([i.to_string(), format!("{l:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_loss_csv(&self, path: &Path) -> Result<()> {
        self.write_loss_csv(std::fs::File::create(path)?)
    }
}

/// Trains `model` on `source` with the objective named in `cfg`.
pub fn train(
    model: ScoreModel,
    source: &TrainingSource,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ScoreModel, TrainRecord)> {
    let reg = objectives();
    let objective = reg.get(&cfg.objective)?;
    train_with(model, objective, source, cfg, seed)
}

pub fn train_with(
    mut model: ScoreModel,
    objective: &dyn Objective,
    source: &TrainingSource,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ScoreModel, TrainRecord)> {
    cfg.validate()?;
    ensure_dim(model.head().dim(), source.dim(), "training data")?;
    if source.len() == Some(0) {
        return Err(invalid("empty training data"));
    }
    let start = Instant::now();
    let mut opt = OptimizerState::new(cfg.optimizer, model.net().n_params())?;
    let mut rng = seed::rng(seed::stream(seed, Stream::Train));
    let mut losses = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let terms = objective.draw(source, &cfg.schedule, cfg.batch, cfg.weighting, &mut rng)?;
        let graph = model.loss_graph(terms);
        let tape = loss_backward(model.net(), &graph).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged {
                iteration,
                loss: f64::NAN,
            },
            other => other,
        })?;
        if !tape.loss.is_finite() || !tape.is_finite() {
            return Err(Error::Diverged {
                iteration,
                loss: tape.loss,
            });
        }
        losses.push(tape.loss);
        opt.step(model.net_mut(), &tape)?;
    }
    let record = TrainRecord {
        losses,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        checkpoint: None,
        config_hash: cfg.hash(),
        seed,
    };
    Ok((model, record))
}
