//! Command-line front end: `train`, `evaluate`, `snapshot`, `frames`.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numeric
//! divergence, 3 I/O error.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::losses::{evaluate_losses, LossBreakdown};
use crate::network::{CheckpointError, Mlp};
use crate::postprocess::{self, ErrorMetrics, PostprocessError};
use crate::sampling::{linspace, CollocationSet, SamplingMode};
use crate::training::{StopReason, TrainError, Trainer};

pub use config::{ConfigError, ProblemParams, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const EVALUATION_FILE: &str = "evaluation.toml";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Diverged(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<PostprocessError> for CliError {
    fn from(e: PostprocessError) -> Self {
        match e {
            PostprocessError::Io { .. } | PostprocessError::Png { .. } => CliError::Io(e.to_string()),
            PostprocessError::NonFinite { .. } => CliError::Diverged(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "pinn2d", version, about = "Physics-informed neural networks for transient PDEs on 2D rectangles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write checkpoint, convergence CSV and summary.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding OUTPUT_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error metrics (heat) or a loss breakdown on fresh random points.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the solution grid at one time as CSV.
    Snapshot {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
    },
    /// Write PNG and CSV frames at times 0, dt, 2dt, ... below TOTAL_TIME.
    Frames {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        dt: f64,
    },
}

/// Parses the config file and applies the environment seed override.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(path)?;
    config.apply_env()?;
    Ok(config)
}

/// Loads a checkpoint and checks it against the config's network shape.
pub fn load_checkpoint(path: &Path, config: &RunConfig) -> Result<Mlp, CliError> {
    let net = Mlp::load(path).map_err(|e| match e {
        CheckpointError::Io(err) => CliError::Io(format!("{}: {err}", path.display())),
        other => CliError::Usage(format!("cannot load checkpoint {}: {other}", path.display())),
    })?;
    let expected = config.net_config().layer_sizes();
    if net.sizes() != expected.as_slice() {
        return Err(CliError::Usage(format!(
            "checkpoint layer sizes {:?} do not match config {:?}",
            net.sizes(),
            expected
        )));
    }
    if net.activation() != config.activation {
        return Err(CliError::Usage(format!(
            "checkpoint activation {:?} does not match config {:?}",
            net.activation(),
            config.activation
        )));
    }
    Ok(net)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    problem: String,
    epochs_requested: usize,
    epochs_run: usize,
    stop: String,
    final_losses: Option<LossBreakdown>,
    wall_time_seconds: f64,
}

/// Outcome of a `train` run.
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub out_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub convergence: PathBuf,
    pub summary: PathBuf,
}

pub fn cmd_train(config_path: &Path, out: Option<&Path>, interrupt: Option<&AtomicBool>, verbose: bool) -> Result<TrainArtifacts, CliError> {
    let config = load_config(config_path)?;
    train_with(&config, out, interrupt, verbose)
}

pub fn train_with(
    config: &RunConfig,
    out: Option<&Path>,
    interrupt: Option<&AtomicBool>,
    verbose: bool,
) -> Result<TrainArtifacts, CliError> {
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&out_dir).map_err(io(&out_dir))?;
    let artifacts = TrainArtifacts {
        checkpoint: out_dir.join(CHECKPOINT_FILE),
        convergence: out_dir.join(CONVERGENCE_FILE),
        summary: out_dir.join(SUMMARY_FILE),
        out_dir,
    };

    let problem = config.problem_spec();
    let net = Mlp::init(&config.net_config()).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut trainer = Trainer::new(&problem, config.domain(), config.train_config());
    if verbose {
        trainer = trainer.print_progress();
    }
    if let Some(flag) = interrupt {
        trainer = trainer.with_interrupt(flag);
    }
    let outcome = match trainer.train(net) {
        Ok(o) => o,
        Err(TrainError::Diverged { epoch, reason, report }) => {
            postprocess::write_convergence_csv(&report, &artifacts.convergence)?;
            return Err(CliError::Diverged(format!("epoch {epoch}: {reason}")));
        }
        Err(e @ TrainError::NonFiniteGradient { .. }) => return Err(CliError::Diverged(e.to_string())),
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };

    outcome
        .net
        .save(&artifacts.checkpoint)
        .map_err(|e| CliError::Io(format!("{}: {e}", artifacts.checkpoint.display())))?;
    postprocess::write_convergence_csv(&outcome.report, &artifacts.convergence)?;
    let summary = TrainSummary {
        problem: config.problem.clone(),
        epochs_requested: config.epochs,
        epochs_run: outcome.report.epochs(),
        stop: match outcome.stop {
            StopReason::Completed => "completed",
            StopReason::Interrupted => "interrupted",
            StopReason::ThresholdReached => "threshold_reached",
        }
        .to_string(),
        final_losses: outcome.report.last(),
        wall_time_seconds: outcome.report.wall_time,
    };
    let text = toml::to_string(&summary).expect("summary serializes");
    fs::write(&artifacts.summary, text).map_err(io(&artifacts.summary))?;
    Ok(artifacts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeMetrics {
    pub t: f64,
    #[serde(flatten)]
    pub metrics: ErrorMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Evaluation {
    Exact {
        pooled: ErrorMetrics,
        per_time: Vec<TimeMetrics>,
    },
    Losses {
        losses: LossBreakdown,
        seed: u64,
    },
}

/// Number of evenly spaced times, endpoints included, for the exact-solution report.
pub const EVAL_TIMES: usize = 5;

pub fn evaluate_with(net: &Mlp, config: &RunConfig) -> Result<Evaluation, CliError> {
    let problem = config.problem_spec();
    let domain = config.domain();
    if problem.has_exact() {
        let times = linspace(0.0, config.total_time, EVAL_TIMES);
        let pooled = postprocess::error_vs_exact(net, &problem, &domain, &times, config.n_points_plot)?;
        let per_time = times
            .iter()
            .map(|&t| {
                postprocess::error_vs_exact(net, &problem, &domain, &[t], config.n_points_plot)
                    .map(|metrics| TimeMetrics { t, metrics })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Evaluation::Exact { pooled, per_time })
    } else {
        // Fresh points: a random draw whose seed differs from any training draw.
        let seed = config.seed ^ 0x5EED_0E7A_1DA7_E000;
        let sets = CollocationSet::generate(&domain, config.n_points, SamplingMode::UniformRandom, seed)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let losses = evaluate_losses(net, &problem, &config.weights, &sets).map_err(|e| CliError::Diverged(e.to_string()))?;
        Ok(Evaluation::Losses { losses, seed })
    }
}

pub fn cmd_evaluate(checkpoint: &Path, config_path: &Path) -> Result<(Evaluation, PathBuf), CliError> {
    let config = load_config(config_path)?;
    let net = load_checkpoint(checkpoint, &config)?;
    let evaluation = evaluate_with(&net, &config)?;
    fs::create_dir_all(&config.output_dir).map_err(io(&config.output_dir))?;
    let path = config.output_dir.join(EVALUATION_FILE);
    let text = toml::to_string(&evaluation).expect("evaluation serializes");
    fs::write(&path, &text).map_err(io(&path))?;
    println!("{text}");
    Ok((evaluation, path))
}

fn check_time(config: &RunConfig, t: f64) -> Result<(), CliError> {
    if t.is_finite() && (0.0..=config.total_time).contains(&t) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("t = {t} is outside [0, {}]", config.total_time)))
    }
}

pub fn cmd_snapshot(checkpoint: &Path, config_path: &Path, t: f64) -> Result<PathBuf, CliError> {
    let config = load_config(config_path)?;
    check_time(&config, t)?;
    let net = load_checkpoint(checkpoint, &config)?;
    let grid = postprocess::snapshot(&net, &config.domain(), t, config.n_points_plot)?;
    fs::create_dir_all(&config.output_dir).map_err(io(&config.output_dir))?;
    let path = config.output_dir.join(format!("snapshot_t{t}.csv"));
    grid.write_csv(&path)?;
    Ok(path)
}

pub fn cmd_frames(checkpoint: &Path, config_path: &Path, dt: f64) -> Result<Vec<PathBuf>, CliError> {
    let config = load_config(config_path)?;
    frames_with(checkpoint, &config, dt)
}

pub fn frames_with(checkpoint: &Path, config: &RunConfig, dt: f64) -> Result<Vec<PathBuf>, CliError> {
    let times = postprocess::arange(0.0, config.total_time, dt)?;
    let net = load_checkpoint(checkpoint, config)?;
    let dir = config.output_dir.join(FRAMES_DIR);
    Ok(postprocess::export_frames(&net, &config.domain(), &times, config.n_points_plot, &dir)?)
}

/// Runs one parsed command and returns the process exit code.
pub fn run(cli: Cli, interrupt: Option<&AtomicBool>) -> i32 {
    let result = match cli.command {
        Command::Train { config, out } => cmd_train(&config, out.as_deref(), interrupt, true).map(|a| {
            println!("wrote {}", a.out_dir.display());
        }),
        Command::Evaluate { checkpoint, config } => cmd_evaluate(&checkpoint, &config).map(|(_, p)| {
            println!("wrote {}", p.display());
        }),
        Command::Snapshot { checkpoint, config, t } => cmd_snapshot(&checkpoint, &config, t).map(|p| {
            println!("wrote {}", p.display());
        }),
        Command::Frames { checkpoint, config, dt } => cmd_frames(&checkpoint, &config, dt).map(|files| {
            println!("wrote {} frames", files.len());
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("run.cfg");
        fs::write(&path, format!("{body}\nOUTPUT_DIR = \"{}\"\n", dir.join("out").display())).unwrap();
        path
    }

    #[test]
    fn unknown_problem_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), "PROBLEM = \"foo\"");
        let err = cmd_train(&cfg, None, None, false).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn missing_config_file_is_config_error() {
        let err = cmd_train(Path::new("/nonexistent/run.cfg"), None, None, false).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn zero_epochs_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), "PROBLEM = \"heat\"\nEPOCHS = 0\nLAYERS = 1\nNEURONS_PER_LAYER = 4");
        let a = cmd_train(&cfg, None, None, false).unwrap();
        assert_eq!(fs::read_to_string(&a.convergence).unwrap(), "epoch,total,residual,initial,boundary\n");
        assert!(a.checkpoint.exists());
        assert!(a.summary.exists());
    }

    #[test]
    fn frames_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            "PROBLEM = \"heat\"\nEPOCHS = 2\nLAYERS = 1\nNEURONS_PER_LAYER = 4\nN_POINTS = 3\nN_POINTS_PLOT = 4\nTOTAL_TIME = 0.5",
        );
        let a = cmd_train(&cfg, None, None, false).unwrap();
        assert_eq!(fs::read_to_string(&a.convergence).unwrap().lines().count(), 3);
        assert_eq!(cmd_frames(&a.checkpoint, &cfg, 0.5).unwrap().len(), 1);
        assert_eq!(cmd_frames(&a.checkpoint, &cfg, 0.01).unwrap().len(), 50);
        assert_eq!(cmd_frames(&a.checkpoint, &cfg, 0.0).unwrap_err().exit_code(), 1);
        assert_eq!(cmd_snapshot(&a.checkpoint, &cfg, 2.0).unwrap_err().exit_code(), 1);
        let snap = cmd_snapshot(&a.checkpoint, &cfg, 0.25).unwrap();
        assert_eq!(fs::read_to_string(snap).unwrap().lines().count(), 17);

        let other = write_config(dir.path(), "PROBLEM = \"heat\"\nLAYERS = 2\nNEURONS_PER_LAYER = 4");
        let err = cmd_evaluate(&a.checkpoint, &other).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("layer sizes"));
    }
}
