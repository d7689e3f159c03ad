//! Measurable terms of the generalization-error decomposition.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffusion::{dsm_terms, DiffusionSchedule, ScoreModel, Weighting};
use crate::error::Result;
use crate::field::SpaceTimePoint;
use crate::group::{augment, dfe, GroupRep};
use crate::seed::{self, Stream};
use crate::targets::{EmpiricalMeasure, GaussianMixture};

use super::transport::{w1_exact_value, MAX_PAIRS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerConfig {
    /// Base space-time points drawn before orbit completion.
    pub n_points: usize,
    /// Minibatch size of the DSM estimate.
    pub n_dsm: usize,
    pub ref_size: usize,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self {
            n_points: 1024,
            n_dsm: 4096,
            ref_size: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub term: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerReport {
    pub entries: Vec<LedgerEntry>,
}

impl LedgerReport {
    pub fn get(&self, term: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.term == term).map(|e| e.value)
    }

    /// One `term,value` row per entry.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["term", "value"])?;
        for e in &self.entries {
            w.write_record([e.term.to_string(), format!("{:.12e}", e.value)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Orbit-complete space-time points from the diffused augmented data:
/// `t` uniform on `[eps, T]`, `x = g x_i + sqrt(2t) z`, every group image
/// of each `(x, t)` included with equal weight.
pub fn augmented_space_time_points(
    data: &EmpiricalMeasure,
    rep: &GroupRep,
    schedule: &DiffusionSchedule,
    n: usize,
    seed: u64,
) -> Result<Vec<SpaceTimePoint>> {
    let aug = augment(data, rep)?;
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(n * rep.order());
    for _ in 0..n {
        let x0 = &aug.points()[aug.draw_index(&mut rng)];
        let t = schedule.uniform_time(&mut rng);
        let sd = (2.0 * t).sqrt();
        let x: Vec<f64> = x0.iter().map(|v| v + sd * rng.sample::<f64, _>(StandardNormal)).collect();
        for g in 0..rep.order() {
            out.push(SpaceTimePoint::new(rep.apply(g, &x), t, 1.0));
        }
    }
    Ok(out)
}

/// Reports DFE of the model on the augmented diffused data, the DSM loss
/// of its symmetrization, `W1(pi^N_G, pi)` against a fresh reference, and
/// the unestimated inputs `eps` and `T`.
pub fn error_ledger(
    model: &ScoreModel,
    data: &EmpiricalMeasure,
    target: &GaussianMixture,
    rep: &GroupRep,
    schedule: &DiffusionSchedule,
    cfg: &LedgerConfig,
    seed: u64,
) -> Result<LedgerReport> {
    schedule.validate()?;
    let points = augmented_space_time_points(data, rep, schedule, cfg.n_points, seed::stream(seed, Stream::Eval))?;
    let dfe_value = dfe(model, rep, &points)?;

    let sym = model.symmetrized(rep)?;
    let aug = augment(data, rep)?;
    let mut rng = seed::rng(seed::stream(seed, Stream::Train));
    let terms = dsm_terms(&aug, schedule, cfg.n_dsm, Weighting::Theory, &mut rng)?;
    let dsm_value = terms.value(&sym)?;

    let ref_size = cfg.ref_size.min(MAX_PAIRS / aug.len().max(1));
    let reference = target.sample(ref_size, seed::stream(seed, Stream::Reference))?;
    let w1 = w1_exact_value(&aug, &reference)?;

    Ok(LedgerReport {
        entries: vec![
            LedgerEntry { term: "dfe", value: dfe_value },
            LedgerEntry { term: "dsm_symmetrized", value: dsm_value },
            LedgerEntry { term: "w1_augmented_data", value: w1 },
            LedgerEntry { term: "early_stop", value: schedule.early_stop },
            LedgerEntry { term: "horizon", value: schedule.horizon },
        ],
    })
}
