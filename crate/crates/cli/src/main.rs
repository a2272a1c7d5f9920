//! Batch front end for the lattice-oscillator localization experiments.
//!
//! One subcommand per experiment kind; every run takes a JSON config plus
//! a few flag overrides and leaves a CSV table and a JSON summary in the
//! output directory. Exit codes: 0 success, 2 config error, 3 compute or
//! check failure.

mod config;
mod run;
mod verify;

use std::fs;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "holstein",
    about = "Disordered lattice-oscillator localization experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<String>,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<String>,
    /// Override any config field by dotted path, e.g.
    /// `--set model.gamma=0.1` (repeatable).
    #[arg(long = "set", value_name = "PATH=JSON")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact-identity suite (built-in defaults without --config).
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Multiply every tolerance; < 1 tightens the suite.
        #[arg(long)]
        tol_scale: Option<f64>,
    },
    /// Dump the ordered basis enumeration.
    BasisInfo {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Green's-function probe records for explicit pairs.
    Greens {
        #[command(flatten)]
        common: CommonArgs,
        /// Also export the assembled matrix as coordinate triplets.
        #[arg(long)]
        export_matrix: bool,
    },
    /// Disorder-averaged fractional moments.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep plus exponential decay fit.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Disorder-averaged eigenfunction correlators.
    Correlator {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Gap-decay probe at an energy inside an excluded band.
    CtProbe {
        #[command(flatten)]
        common: CommonArgs,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Verify { common, .. }
            | Command::BasisInfo { common }
            | Command::Greens { common, .. }
            | Command::Sweep { common }
            | Command::Fit { common }
            | Command::Correlator { common }
            | Command::CtProbe { common } => common,
        }
    }

    fn expected_kind(&self) -> &'static str {
        match self {
            Command::Verify { .. } => "verify",
            Command::BasisInfo { .. } => "basis-info",
            Command::Greens { .. } => "greens",
            Command::Sweep { .. } => "sweep",
            Command::Fit { .. } => "fit",
            Command::Correlator { .. } => "correlator",
            Command::CtProbe { .. } => "ct-probe",
        }
    }
}

fn apply_set(value: &mut serde_json::Value, path: &str, raw: &str) -> Result<(), ConfigError> {
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            match cursor {
                serde_json::Value::Object(map) => {
                    map.insert(part.to_string(), parsed);
                    return Ok(());
                }
                _ => return Err(ConfigError(format!("--set {path}: not an object"))),
            }
        }
        cursor = cursor
            .get_mut(*part)
            .ok_or_else(|| ConfigError(format!("--set {path}: unknown field '{part}'")))?;
    }
    Err(ConfigError(format!("--set {path}: empty path")))
}

fn load_config(command: &Command) -> Result<ExperimentConfig, ConfigError> {
    let common = command.common();
    let mut raw: serde_json::Value = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {path}: {e}")))?;
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("malformed JSON: {e}")))?
        }
        None => {
            if matches!(command, Command::Verify { .. }) {
                serde_json::to_value(run::default_verify_config())
                    .map_err(|e| ConfigError(e.to_string()))?
            } else {
                return Err(ConfigError("--config is required".into()));
            }
        }
    };

    for set in &common.sets {
        let (path, value) = set
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("--set needs PATH=VALUE, got '{set}'")))?;
        apply_set(&mut raw, path, value)?;
    }
    if let Some(seed) = common.seed {
        apply_set(&mut raw, "seed", &seed.to_string())?;
    }
    if let Some(workers) = common.workers {
        apply_set(&mut raw, "workers", &workers.to_string())?;
    }
    if let Command::Verify {
        tol_scale: Some(scale),
        ..
    } = command
    {
        apply_set(&mut raw, "experiment.tolerance_scale", &scale.to_string())?;
    }
    if let Command::Greens {
        export_matrix: true,
        ..
    } = command
    {
        apply_set(&mut raw, "experiment.export_matrix", "true")?;
    }

    let text = serde_json::to_string(&raw).map_err(|e| ConfigError(e.to_string()))?;
    let config = ExperimentConfig::from_json(&text)?;
    if config.experiment.name() != command.expected_kind() {
        return Err(ConfigError(format!(
            "experiment.kind: config says '{}' but the subcommand is '{}'",
            config.experiment.name(),
            command.expected_kind()
        )));
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(&cli.command) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let out_dir = run::out_dir_of(&config, cli.command.common().out.as_deref());
    match run::run(&config, &out_dir) {
        Ok(outcome) => {
            println!(
                "wrote {} (config {})",
                out_dir.join("summary.json").display(),
                &config.config_hash()[..12]
            );
            if outcome.failed_checks {
                eprintln!("one or more checks failed");
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            if let Some(config_err) = e.downcast_ref::<ConfigError>() {
                eprintln!("{config_err}");
                ExitCode::from(2)
            } else {
                eprintln!("compute error: {e}");
                ExitCode::from(3)
            }
        }
    }
}
