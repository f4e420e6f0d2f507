//! `uavfl`: run, compare and validate UAV federated-learning experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use uavfl_core::config::{parse_config_str, ExperimentConfig};
use uavfl_core::harness::{compare, run_experiment, RunStatus};
use uavfl_core::protocol::Scheme;
use uavfl_core::{report, Error};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "uavfl",
    version,
    about = "Decentralized vs parameter-server federated learning over a UAV network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme and write metrics.csv, loss.svg, latency.svg and manifest.toml.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `scheme.seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `scheme.kind` from the config.
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
    /// Run DFL and FedAvg on the same config and write compare.csv plus three charts.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and check a config, printing the resolved form.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Dfl,
    Fedavg,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Dfl => Scheme::Dfl,
            SchemeArg::Fedavg => Scheme::Fedavg,
        }
    }
}

enum Failure {
    Config(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Other(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Other(format!("{}: {e}", path.display()))
}

/// Written next to every set of outputs. Passing it back as `--config`
/// reruns the same experiment.
#[derive(Serialize, Deserialize)]
struct Manifest {
    tool_version: String,
    command: String,
    config_path: String,
    out_dir: String,
    master_seed: u64,
    config: ExperimentConfig,
}

fn is_manifest(text: &str) -> bool {
    text.lines().any(|l| l.trim_start().starts_with("tool_version"))
}

/// Reads a config file, or the `config` table of a manifest.
fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Config(format!("config error: {}: {e}", path.display())))?;
    let parsed = if is_manifest(&text) {
        toml::from_str::<Manifest>(&text)
            .map_err(|e| Error::config("manifest", e.message()))
            .and_then(|m| m.config.validate().map(|_| m.config))
    } else {
        parse_config_str(&text)
    };
    parsed.map_err(|e| match e {
        Error::Config { .. } => Failure::Config(format!("{}: {e}", path.display())),
        other => other.into(),
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn manifest(command: &str, config_path: &Path, out: &Path, config: &ExperimentConfig) -> Result<String, Failure> {
    let m = Manifest {
        tool_version: format!("uavfl {VERSION}"),
        command: command.into(),
        config_path: config_path.display().to_string(),
        out_dir: out.display().to_string(),
        master_seed: config.scheme.seed,
        config: config.clone(),
    };
    toml::to_string(&m).map_err(|e| Failure::Other(e.to_string()))
}

fn prepare(config: &Path, seed: Option<u64>, out: &Path) -> Result<ExperimentConfig, Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    Ok(cfg)
}

fn cmd_run(config: &Path, seed: Option<u64>, out: &Path, scheme: Option<SchemeArg>) -> Result<bool, Failure> {
    let mut cfg = prepare(config, seed, out)?;
    if let Some(s) = scheme {
        cfg = cfg.with_scheme(s.into());
    }
    let table = run_experiment(&cfg)?;
    write(out, "metrics.csv", &report::metrics_csv(&table))?;
    write(out, "loss.svg", &report::run_loss_svg(&table))?;
    write(out, "latency.svg", &report::run_latency_svg(&table))?;
    write(out, "manifest.toml", &manifest("run", config, out, &cfg)?)?;
    log::info!(
        "{}: {} rounds, status {}, final average loss {:.6}",
        cfg.scheme.kind.as_str(),
        table.rows.len(),
        table.status.as_str(),
        table.final_avg_loss()
    );
    Ok(table.status != RunStatus::Halted)
}

fn cmd_compare(config: &Path, seed: Option<u64>, out: &Path) -> Result<bool, Failure> {
    let cfg = prepare(config, seed, out)?;
    let (a, b, summary) = compare(
        &cfg.clone().with_scheme(Scheme::Dfl),
        &cfg.clone().with_scheme(Scheme::Fedavg),
    )?;
    write(out, "compare.csv", &report::compare_csv(&summary))?;
    write(out, "avg_loss.svg", &report::compare_loss_svg(&a, &b))?;
    write(out, "individual_loss.svg", &report::compare_individual_svg(&summary))?;
    write(out, "latency.svg", &report::compare_latency_svg(&a, &b))?;
    write(out, "manifest.toml", &manifest("compare", config, out, &cfg)?)?;
    log::info!(
        "average loss gap {:+.6}, max individual gap {:.6}, latency delta {:+.6} s",
        summary.avg_loss_gap,
        summary.max_individual_gap,
        summary.latency_delta_s
    );
    Ok(a.status != RunStatus::Halted && b.status != RunStatus::Halted)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LOG_LEVEL", "info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            seed,
            out,
            scheme,
        } => cmd_run(config, *seed, out, *scheme),
        Command::Compare { config, seed, out } => cmd_compare(config, *seed, out),
        Command::ValidateConfig { config } => load_config(config).map(|cfg| {
            print!("{}", cfg.to_toml());
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::warn!("fleet halted; partial outputs written");
            ExitCode::from(3)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
