use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use equiscore::diffusion::{ScoreHead, ScoreModel, TimeFeatures, TrainingSource};
use equiscore::experiment::{
    configure_threads, emit_svg, initial_model, run_experiment, run_grid, run_property_suite, run_seed, training_data,
    ExperimentConfig, Setup, SweepConfig,
};
use equiscore::metrics::{error_ledger, sample_complexity_sweep, LedgerConfig};
use equiscore::ndiff::checkpoint;

#[derive(Parser)]
#[command(name = "equiscore", version, about = "Score-based generative modeling under finite group symmetry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment setup or the full four-setup grid.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Run named property checks (`all` for every check).
    Properties {
        #[arg(long, value_delimiter = ',', default_value = "all")]
        suite: Vec<String>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Sample-complexity sweep of plain vs augmented empirical measures.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Train the model of one run and save its parameters.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional `iteration,loss` trace.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Error-ledger diagnostics for a trained checkpoint.
    Ledger {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Experiment config the checkpoint was trained with.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run whose training draw is used as the data set.
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long, default_value = "ledger.csv")]
        out: PathBuf,
    },
    /// Print the default experiment (or sweep) config.
    Config {
        #[arg(long)]
        sweep: bool,
    },
}

#[derive(Subcommand)]
enum ExperimentAction {
    Run(RunArgs),
    Grid {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long = "Ns", value_delimiter = ',', default_value = "10,100,1000")]
        ns: Vec<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV, SVG and metadata files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Evaluate with the neural dual instead of the exact solver.
    #[arg(long)]
    neural_dual: bool,
}

fn load_experiment(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn prepare_run(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = load_experiment(args.config.as_deref())?;
    if args.neural_dual {
        cfg.eval.w1_method = equiscore::metrics::W1Method::NeuralDual;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let meta = format!("config_hash = \"{}\"\nversion = \"{}\"\n\n{}", cfg.hash(), env!("CARGO_PKG_VERSION"), cfg.to_toml()?);
    std::fs::write(args.out.join("metadata.toml"), meta)?;
    Ok(cfg)
}

fn write_file(path: &Path, write: impl FnOnce(std::fs::File) -> equiscore::Result<()>) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write(f)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn experiment(action: ExperimentAction) -> Result<bool> {
    match action {
        ExperimentAction::Run(args) => {
            let cfg = prepare_run(&args)?;
            let report = run_experiment(&cfg)?;
            write_file(&args.out.join("runs.csv"), |f| report.write_runs_csv(f))?;
            write_file(&args.out.join("summary.csv"), |f| report.as_table().write_csv(f))?;
            match (report.mean_d1, report.std_d1) {
                (Some(m), Some(s)) => println!(
                    "{} N={} d1 = {m:.4} +- {s:.4} over {} runs ({} failed, {:.1}s)",
                    cfg.setup.name(),
                    cfg.n_training,
                    report.successes(),
                    report.failures,
                    report.wall_clock_secs
                ),
                _ => println!("{}: every run failed", cfg.setup.name()),
            }
            Ok(report.successes() > 0)
        }
        ExperimentAction::Grid { common, ns } => {
            if ns.is_empty() {
                bail!("--Ns needs at least one training size");
            }
            let cfg = prepare_run(&common)?;
            let table = run_grid(&cfg, &ns)?;
            write_file(&common.out.join("grid.csv"), |f| table.write_csv(f))?;
            let svg = common.out.join("grid.svg");
            match emit_svg(&table, &svg) {
                Ok(()) => println!("wrote {}", svg.display()),
                Err(e) => log::warn!("no plot written: {e}"),
            }
            for c in &table.cells {
                match &c.report {
                    Ok(r) => println!(
                        "N={:<6} {:<22} d1 = {} ({} runs, {} failed, {:.1}s)",
                        c.n_training,
                        c.setup.name(),
                        r.mean_d1.map_or("n/a".into(), |m| format!("{m:.4} +- {:.4}", r.std_d1.unwrap_or(0.0))),
                        r.successes(),
                        r.failures,
                        r.wall_clock_secs
                    ),
                    Err(e) => println!("N={:<6} {:<22} failed: {e}", c.n_training, c.setup.name()),
                }
            }
            Ok(table.cells.iter().all(|c| c.report.is_ok()))
        }
    }
}

fn sweep(config: Option<PathBuf>, out: PathBuf) -> Result<bool> {
    let cfg = match config {
        Some(p) => SweepConfig::load(&p).with_context(|| format!("loading {}", p.display()))?,
        None => SweepConfig::default(),
    };
    let table = sample_complexity_sweep(&cfg.target.build()?, &cfg.group.build()?, &cfg.ns, cfg.reps, cfg.ref_size, cfg.seed)?;
    write_file(&out, |f| table.write_csv(f))?;
    println!("plain slope {:.3}, augmented slope {:.3}", table.plain_slope, table.augmented_slope);
    Ok(true)
}

fn train(config: Option<PathBuf>, run: usize, path: PathBuf, loss_csv: Option<PathBuf>) -> Result<bool> {
    let cfg = load_experiment(config.as_deref())?;
    if run >= cfg.n_runs {
        bail!("run {run} is out of range for n_runs = {}", cfg.n_runs);
    }
    let seed = run_seed(cfg.base_seed, cfg.n_training, run);
    let source = TrainingSource::Data(training_data(&cfg, run)?);
    let (model, record) = equiscore::diffusion::train(initial_model(&cfg, run)?, &source, &cfg.train, seed)?;
    checkpoint::save(model.net(), &path)?;
    let final_loss = record.losses.last().copied().unwrap_or(f64::NAN);
    println!("wrote {} (final loss {final_loss:.4})", path.display());
    if let Some(p) = loss_csv {
        write_file(&p, |f| record.write_loss_csv(f))?;
    }
    Ok(true)
}

fn ledger(path: PathBuf, config: Option<PathBuf>, run: usize, out: PathBuf) -> Result<bool> {
    let cfg = load_experiment(config.as_deref())?;
    let net = checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let target = cfg.target.build()?;
    let rep = cfg.group.build()?;
    let sched = cfg.train.schedule;
    let head = ScoreHead::new(
        target.dim(),
        cfg.setup.equivariant.then(|| rep.clone()),
        TimeFeatures {
            horizon: sched.horizon,
            early_stop: sched.early_stop,
        },
        cfg.model.data_variance,
    )?;
    let model = ScoreModel::new(net, head).context("checkpoint does not match the config's model")?;
    let data = training_data(
        &ExperimentConfig {
            setup: Setup {
                augmented: false,
                ..cfg.setup
            },
            ..cfg.clone()
        },
        run,
    )?;
    let report = error_ledger(&model, &data, &target, &rep, &sched, &LedgerConfig::default(), cfg.base_seed)?;
    write_file(&out, |f| report.write_csv(f))?;
    for e in &report.entries {
        println!("{:<18} {:.6e}", e.term, e.value);
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().map_err(anyhow::Error::from).and_then(|_| match cli.command {
        Command::Experiment { action } => experiment(action),
        Command::Properties { suite, seed } => {
            let selector: Vec<&str> = suite.iter().map(String::as_str).filter(|s| !s.is_empty()).collect();
            let report = run_property_suite(&selector, seed)?;
            for line in report.lines() {
                println!("{line}");
            }
            Ok(report.passed())
        }
        Command::Sweep { config, out } => sweep(config, out),
        Command::Train {
            config,
            run,
            checkpoint,
            loss_csv,
        } => train(config, run, checkpoint, loss_csv),
        Command::Ledger {
            checkpoint,
            config,
            run,
            out,
        } => ledger(checkpoint, config, run, out),
        Command::Config { sweep } => {
            let text = if sweep {
                SweepConfig::default().to_toml()?
            } else {
                ExperimentConfig::default().to_toml()?
            };
            print!("{text}");
            Ok(true)
        }
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
