//! Batch driver for the ISRS model: configuration, the five workflows and
//! reproducible output sets.
//!
//! Exit codes: 0 success, 1 i/o, 2 configuration, 3 numerical, truncation
//! or failed cross-check, 4 fit non-convergence.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig};
use output::{sha256_hex, write_artifacts, Manifest};

pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_FIT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "isrs", version, about = "Simulate and analyse squeezed-phonon pump-probe experiments")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Noiseless mean and variance traces with and without squeezing, plus spectra.
    Predict,
    /// Synthetic acquisition with spectra, wavelet map and lifetimes.
    Scan,
    /// Fluence series, 2 Omega amplitudes and the squeezing-coupling fit.
    Fluence,
    /// Cross-check of the Gaussian fast path against the Fock-space oracle.
    Oracle,
    /// Detector shot-noise calibration against probe power.
    ShotNoise,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Predict => "predict",
            Command::Scan => "scan",
            Command::Fluence => "fluence",
            Command::Oracle => "oracle",
            Command::ShotNoise => "shot-noise",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(isrs_core::Error),
    /// A cross-check ran but did not pass.
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use isrs_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Check(_) => EXIT_NUMERICAL,
            CliError::Core(e) => match e {
                E::Fit { .. } => EXIT_FIT,
                E::Io(_) | E::Csv(_) | E::Json(_) => EXIT_IO,
                E::Domain(_) | E::Truncation { .. } | E::StepSize { .. } | E::Unphysical(_) => EXIT_NUMERICAL,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Check(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<isrs_core::Error> for CliError {
    fn from(e: isrs_core::Error) -> Self {
        CliError::Core(e)
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<(RunConfig, Option<String>), ConfigError> {
    let (mut cfg, file_hash) = match &cli.config {
        Some(path) => {
            let (cfg, bytes) = RunConfig::load(path)?;
            (cfg, Some(sha256_hex(&bytes)))
        }
        None => (RunConfig::default(), None),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.outputs.dir = out.clone();
    }
    if cli.threads == Some(0) {
        return Err(ConfigError { field: "--threads".into(), message: "must be >= 1".into() });
    }
    Ok((cfg, file_hash))
}

fn execute(command: Command, cfg: &RunConfig) -> Result<commands::Outcome, CliError> {
    match command {
        Command::Predict => commands::predict(cfg),
        Command::Scan => commands::scan(cfg),
        Command::Fluence => commands::fluence(cfg),
        Command::Oracle => commands::oracle(cfg),
        Command::ShotNoise => commands::shot_noise(cfg),
    }
}

/// Runs one command end to end and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (cfg, file_hash) = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build();
    let outcome = match pool {
        Ok(pool) => pool.install(|| execute(cli.command, &cfg)),
        Err(e) => {
            eprintln!("cannot start worker threads: {e}");
            return EXIT_IO;
        }
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };

    let code = outcome.failure.as_ref().map_or(0, CliError::exit_code);
    let dir = cfg.outputs.dir.clone();
    let outputs = match write_artifacts(&dir, outcome.artifacts, &cfg) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_IO;
        }
    };
    let effective = toml::to_string(&cfg).unwrap_or_default();
    let manifest = Manifest {
        command: cli.command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        threads: cli.threads,
        config_path: cli.config.clone(),
        config_file_sha256: file_hash,
        config_sha256: sha256_hex(effective.as_bytes()),
        effective_config: cfg,
        exit_code: code,
        outputs,
    };
    if let Err(e) = isrs_core::io::write_json(&dir.join("manifest.json"), &manifest) {
        eprintln!("{e}");
        return EXIT_IO;
    }
    if let Some(f) = outcome.failure {
        eprintln!("{f}");
    }
    code
}
