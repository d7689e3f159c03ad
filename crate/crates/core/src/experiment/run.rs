//! The four-setup experiment: train, sample, evaluate, aggregate.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::diffusion::{sample_reverse, train, ScoreModel, TimeFeatures, TrainingSource};
use crate::error::Result;
use crate::group::{augment, dfe, GroupRep};
use crate::metrics::{augmented_space_time_points, w1_estimators, w1_exact_value};
use crate::seed::{self, Stream};
use crate::targets::{EmpiricalMeasure, GaussianMixture};

use super::config::{ExperimentConfig, Setup};

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub outcome: std::result::Result<RunMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub d1: f64,
    /// Standard error of `d1` (neural dual only).
    pub d1_stderr: Option<f64>,
    pub dfe: f64,
    /// `W1(generated, augment(generated))`.
    pub invariance: f64,
    pub final_loss: f64,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub setup: Setup,
    pub n_training: usize,
    pub effective_training_points: usize,
    pub runs: Vec<RunRecord>,
    /// `d1` of the successful runs in run order.
    pub d1_values: Vec<f64>,
    pub mean_d1: Option<f64>,
    /// Sample standard deviation (zero for a single run).
    pub std_d1: Option<f64>,
    pub mean_dfe: Option<f64>,
    pub mean_invariance: Option<f64>,
    pub failures: usize,
    pub wall_clock_secs: f64,
    pub config_hash: String,
}

impl MetricReport {
    pub fn successes(&self) -> usize {
        self.d1_values.len()
    }

    /// Writes `run,seed,status,d1,d1_stderr,dfe,invariance,final_loss`.
    /// Failed runs keep their row with empty metrics.
    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run", "seed", "status", "d1", "d1_stderr", "dfe", "invariance", "final_loss"])?;
        let num = |v: f64| format!("{v:.12e}");
        for r in &self.runs {
            let mut row = vec![r.run.to_string(), r.seed.to_string()];
            match &r.outcome {
                Ok(m) => row.extend([
                    "ok".to_string(),
                    num(m.d1),
                    m.d1_stderr.map(num).unwrap_or_default(),
                    num(m.dfe),
                    num(m.invariance),
                    num(m.final_loss),
                ]),
                Err(e) => {
                    row.push(format!("failed: {e}"));
                    row.extend(std::iter::repeat(String::new()).take(5));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// The report as a one-cell grid table.
    pub fn as_table(&self) -> GridTable {
        GridTable {
            cells: vec![GridCell {
                n_training: self.n_training,
                setup: self.setup,
                report: Ok(self.clone()),
            }],
        }
    }
}

/// Seed of run `run` at training size `n`. Setups share it, so all four
/// setups of a grid row see the same training draws.
pub fn run_seed(base_seed: u64, n_training: usize, run: usize) -> u64 {
    seed::derive(base_seed, &[n_training as u64, run as u64])
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    mean_std(&v).map(|(m, _)| m)
}

struct Prepared {
    target: GaussianMixture,
    rep: GroupRep,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    Ok(Prepared {
        target: cfg.target.build()?,
        rep: cfg.group.build()?,
    })
}

/// Training data of one run, augmented when the setup asks for it.
pub fn training_data(cfg: &ExperimentConfig, run: usize) -> Result<EmpiricalMeasure> {
    let p = prepare(cfg)?;
    let s = run_seed(cfg.base_seed, cfg.n_training, run);
    let data = p.target.sample(cfg.n_training, seed::stream(s, Stream::Data))?;
    if cfg.setup.augmented {
        augment(&data, &p.rep)
    } else {
        Ok(data)
    }
}

/// Builds the untrained model of one run.
pub fn initial_model(cfg: &ExperimentConfig, run: usize) -> Result<ScoreModel> {
    let p = prepare(cfg)?;
    let s = run_seed(cfg.base_seed, cfg.n_training, run);
    let sched = cfg.train.schedule;
    ScoreModel::build(
        p.target.dim(),
        &cfg.model,
        cfg.setup.equivariant.then(|| p.rep.clone()),
        TimeFeatures {
            horizon: sched.horizon,
            early_stop: sched.early_stop,
        },
        seed::stream(s, Stream::Init),
    )
}

/// Trains the model of one run and returns it with its training data.
pub fn train_run(cfg: &ExperimentConfig, run: usize) -> Result<(ScoreModel, EmpiricalMeasure, f64)> {
    let s = run_seed(cfg.base_seed, cfg.n_training, run);
    let data = training_data(cfg, run)?;
    let model = initial_model(cfg, run)?;
    let (model, record) = train(model, &TrainingSource::Data(data.clone()), &cfg.train, s)?;
    let final_loss = record.losses.last().copied().unwrap_or(f64::NAN);
    Ok((model, data, final_loss))
}

fn execute_run(cfg: &ExperimentConfig, p: &Prepared, run: usize) -> Result<RunMetrics> {
    let start = Instant::now();
    let s = run_seed(cfg.base_seed, cfg.n_training, run);
    let (model, data, final_loss) = train_run(cfg, run)?;
    let sched = &cfg.train.schedule;

    let generated = sample_reverse(&model, sched, cfg.eval.n_gen_samples, s)?;
    let reference = p.target.sample(cfg.eval.n_ref_samples, seed::stream(s, Stream::Reference))?;
    let estimators = w1_estimators(cfg.eval.critic.clone());
    let report = estimators
        .get(cfg.eval.w1_method.tag())?
        .estimate(&generated, &reference, seed::stream(s, Stream::Critic))?;

    let points = augmented_space_time_points(&data, &p.rep, sched, cfg.eval.n_dfe_points, seed::stream(s, Stream::Eval))?;
    let dfe_value = dfe(&model, &p.rep, &points)?;
    let invariance = w1_exact_value(&generated, &augment(&generated, &p.rep)?)?;

    Ok(RunMetrics {
        d1: report.value,
        d1_stderr: report.stderr,
        dfe: dfe_value,
        invariance,
        final_loss,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

fn aggregate(cfg: &ExperimentConfig, rep: &GroupRep, runs: Vec<RunRecord>, secs: f64) -> MetricReport {
    let ok: Vec<&RunMetrics> = runs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let d1_values: Vec<f64> = ok.iter().map(|m| m.d1).collect();
    let failures = runs.len() - ok.len();
    if failures > 0 {
        log::warn!(
            "{} of {} runs failed for setup {} at N = {}",
            failures,
            runs.len(),
            cfg.setup.name(),
            cfg.n_training
        );
    }
    let ms = mean_std(&d1_values);
    MetricReport {
        setup: cfg.setup,
        n_training: cfg.n_training,
        effective_training_points: if cfg.setup.augmented {
            rep.order() * cfg.n_training
        } else {
            cfg.n_training
        },
        d1_values,
        mean_d1: ms.map(|m| m.0),
        std_d1: ms.map(|m| m.1),
        mean_dfe: mean(ok.iter().map(|m| m.dfe)),
        mean_invariance: mean(ok.iter().map(|m| m.invariance)),
        failures,
        wall_clock_secs: secs,
        config_hash: cfg.hash(),
        runs,
    }
}

/// Runs every run of one setup. Failed runs are recorded and left out of
/// the aggregates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricReport> {
    let p = prepare(cfg)?;
    let start = Instant::now();
    let runs: Vec<RunRecord> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|run| RunRecord {
            run,
            seed: run_seed(cfg.base_seed, cfg.n_training, run),
            outcome: execute_run(cfg, &p, run).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(aggregate(cfg, &p.rep, runs, start.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub n_training: usize,
    pub setup: Setup,
    pub report: std::result::Result<MetricReport, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub cells: Vec<GridCell>,
}

impl GridTable {
    /// Writes `N,setup,mean_d1,std_d1,n_runs`, one row per cell. Failed
    /// cells get `NaN` statistics and zero runs.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "setup", "mean_d1", "std_d1", "n_runs"])?;
        for c in &self.cells {
            let (m, s, k) = match &c.report {
                Ok(r) => (
                    r.mean_d1.unwrap_or(f64::NAN),
                    r.std_d1.unwrap_or(f64::NAN),
                    r.successes(),
                ),
                Err(_) => (f64::NAN, f64::NAN, 0),
            };
            w.write_record([
                c.n_training.to_string(),
                c.setup.name().to_string(),
                format!("{m:.12e}"),
                format!("{s:.12e}"),
                k.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn cell(&self, n: usize, setup: Setup) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.n_training == n && c.setup == setup)
    }
}

/// Runs all four setups at every training size. The setup and `N` of
/// `base` are overridden per cell.
pub fn run_grid(base: &ExperimentConfig, ns: &[usize]) -> Result<GridTable> {
    let mut cfgs = Vec::new();
    for &n in ns {
        for setup in Setup::ALL {
            let cfg = ExperimentConfig {
                n_training: n,
                setup,
                ..base.clone()
            };
            cfg.validate()?;
            cfgs.push(cfg);
        }
    }
    let cells = cfgs
        .par_iter()
        .map(|cfg| GridCell {
            n_training: cfg.n_training,
            setup: cfg.setup,
            report: run_experiment(cfg).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(GridTable { cells })
}
