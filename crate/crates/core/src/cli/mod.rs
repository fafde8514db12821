//! Command-line front end.
//!
//! Every command writes `manifest.json` into the output directory first,
//! then its tables and plots. Rows are sorted by case id, so outputs are
//! byte-identical for identical inputs whatever the worker count.

mod consensus_cmd;
mod evaluate;
mod grade;
mod synth_cmd;
pub mod tables;

use crate::grading::ThresholdProfile;
use crate::report::{digest_file, InputDigest, RunManifest};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const THREADS_ENV: &str = "GLEASON_ENGINE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gleason-engine", version, about = "Gleason grading, consensus and grader evaluation")]
pub struct Cli {
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Threshold profile: `biopsy`, `tma` or a path to a JSON profile.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bootstrap replicates.
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    /// Permutation-test iterations.
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grade PGM label masks (files or directories of `*.pgm`).
    Grade {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Run the consensus protocol over recorded reads.
    Consensus {
        #[arg(long)]
        reads: PathBuf,
        #[arg(long)]
        ihc: Option<PathBuf>,
    },
    /// Compare predictions with a reference, optionally against a reader panel.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        panel: Option<PathBuf>,
    },
    /// Generate synthetic masks with ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
}

/// Settings that may come from `--config`; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Option<String>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub iterations: Option<usize>,
    pub ci_level: Option<f64>,
    pub grid_points: Option<usize>,
    pub min_sensitivity: Option<f64>,
}

/// Resolved settings shared by the commands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub profile_name: String,
    #[serde(skip)]
    pub profile: ThresholdProfile,
    pub seed: u64,
    /// The seed only when given explicitly.
    #[serde(skip)]
    pub seed_override: Option<u64>,
    pub replicates: usize,
    pub iterations: usize,
    pub ci_level: f64,
    pub grid_points: usize,
    pub min_sensitivity: f64,
}

/// A broken internal guarantee, reported with exit code 2.
#[derive(Debug, Error)]
#[error("internal invariant violated: {0}")]
pub struct InvariantViolation(pub String);

/// Outcome of a command that produced its outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Ok,
    /// Outputs were written but some inputs failed.
    InputFailures,
}

pub fn exit_code(result: &Result<Completion>) -> u8 {
    match result {
        Ok(Completion::Ok) => 0,
        Ok(Completion::InputFailures) => 1,
        Err(e) if e.downcast_ref::<InvariantViolation>().is_some() => 2,
        Err(_) => 1,
    }
}

fn resolve(cli: &Cli) -> Result<(Settings, Option<String>)> {
    let (cfg, cfg_path) = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            (cfg, Some(p.display().to_string()))
        }
        None => (RunConfig::default(), None),
    };
    let profile_name = cli.profile.clone().or(cfg.profile).unwrap_or_else(|| "biopsy".into());
    let profile = ThresholdProfile::resolve(&profile_name)?;
    let settings = Settings {
        profile_name,
        profile,
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        seed_override: cli.seed.or(cfg.seed),
        replicates: cli.replicates.or(cfg.replicates).unwrap_or(1000),
        iterations: cli.iterations.or(cfg.iterations).unwrap_or(10_000),
        ci_level: cfg.ci_level.unwrap_or(0.95),
        grid_points: cfg.grid_points.unwrap_or(101),
        min_sensitivity: cfg.min_sensitivity.unwrap_or(0.99),
    };
    if settings.replicates == 0 || settings.iterations == 0 {
        bail!("--replicates and --iterations must be at least 1");
    }
    if !(settings.ci_level > 0.0 && settings.ci_level < 1.0) {
        bail!("ci_level must lie in (0, 1)");
    }
    Ok((settings, cfg_path))
}

fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a count"))?;
            if n == 0 {
                bail!("{THREADS_ENV} must be at least 1");
            }
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(THREADS_ENV),
    }
}

pub(crate) struct RunContext {
    pub settings: Settings,
    pub config_path: Option<String>,
    pub out: PathBuf,
}

impl RunContext {
    pub fn manifest(&self, command: &str, parameters: serde_json::Value, inputs: Vec<InputDigest>) -> RunManifest {
        RunManifest {
            command: command.into(),
            tool_version: crate::VERSION.into(),
            config_path: self.config_path.clone(),
            output_dir: self.out.display().to_string(),
            seed: Some(self.settings.seed),
            parameters,
            inputs,
        }
    }
}

pub(crate) fn digests(paths: &[&Path], config: Option<&str>) -> Result<Vec<InputDigest>> {
    let mut out = Vec::new();
    for p in config.map(Path::new).into_iter().chain(paths.iter().copied()) {
        out.push(digest_file(p)?);
    }
    Ok(out)
}

pub fn run(cli: &Cli) -> Result<Completion> {
    let (settings, config_path) = resolve(cli)?;
    let out = cli.out.clone().context("--out is required")?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ctx = RunContext { settings, config_path, out };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| {
        pool.install(|| match &cli.command {
            Command::Grade { inputs } => grade::run(&ctx, inputs),
            Command::Consensus { reads, ihc } => consensus_cmd::run(&ctx, reads, ihc.as_deref()),
            Command::Evaluate { predictions, reference, panel } => {
                evaluate::run(&ctx, predictions, reference, panel.as_deref())
            }
            Command::Synth { spec, noise, count } => synth_cmd::run(&ctx, spec, noise.as_deref(), *count),
        })
    }));
    match outcome {
        Ok(r) => r,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "worker panicked".into());
            Err(InvariantViolation(msg).into())
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = run(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    exit_code(&result)
}
