use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use beamtrack::crlb::{asymptotic_channel_crlb, max_fisher_information, min_crlb_x};
use beamtrack::harness::{format_float, run_experiment, with_workers, Experiment};
use clap::{Args, Parser, Subcommand};

mod config;

use config::{ConfigError, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "beamtrack", version, about = "Recursive analog beam tracking simulations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Static direction: MSE convergence against the CRLB.
    Static(Common),
    /// Sinusoidal trajectory: AoA and rate traces.
    Dynamic(Common),
    /// Fixed-velocity sweep: MSE and rate against angular speed.
    Sweep(Common),
    /// Largest angular speed reaching the capacity fraction.
    Table1(Common),
    /// Probability that the initial estimate lands in the mainlobe.
    InitRate(Common),
    /// Closed-form convergence diagnostics.
    Theory(Common),
    /// Fisher information and CRLB values.
    Crlb(Common),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tracking antennas.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "snr-db", allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Static,
    Dynamic,
    Sweep,
    Table1,
    InitRate,
    Theory,
    Crlb,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Static => "static",
            Command::Dynamic => "dynamic",
            Command::Sweep => "sweep",
            Command::Table1 => "table1",
            Command::InitRate => "init-rate",
            Command::Theory => "theory",
            Command::Crlb => "crlb",
        }
    }
}

impl Sub {
    fn split(self) -> (Command, Common) {
        match self {
            Sub::Static(c) => (Command::Static, c),
            Sub::Dynamic(c) => (Command::Dynamic, c),
            Sub::Sweep(c) => (Command::Sweep, c),
            Sub::Table1(c) => (Command::Table1, c),
            Sub::InitRate(c) => (Command::InitRate, c),
            Sub::Theory(c) => (Command::Theory, c),
            Sub::Crlb(c) => (Command::Crlb, c),
        }
    }
}

fn prepare(command: Command, common: &Common) -> Result<(RunConfig, Option<Experiment>), ConfigError> {
    let file = match &common.config {
        Some(path) => config::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        m: common.m,
        snr_db: common.snr_db,
        seed: common.seed,
        trials: common.trials,
        out: common.out.clone(),
        workers: common.workers,
    };
    let resolved = config::resolve(command, file, &overrides);
    let experiment = config::experiment(command, &resolved)?;
    Ok((resolved, experiment))
}

fn print_crlb(cfg: &RunConfig) -> anyhow::Result<()> {
    let array = config::tracking_array(cfg)?;
    let rho = config::rho(cfg)?;
    let m = array.num_antennas();
    println!("antennas           {m}");
    println!("snr_linear         {}", format_float(rho));
    println!("max_fisher         {}", format_float(max_fisher_information(&array, rho).value()));
    println!("channel_crlb_limit {}", format_float(asymptotic_channel_crlb(&array, 1.0 / rho, 1.0)));
    println!("slot,min_crlb_x");
    for &n in cfg.theory.slots.as_deref().unwrap_or_default() {
        println!("{n},{}", format_float(min_crlb_x(&array, rho, n)));
    }
    Ok(())
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let text = toml::to_string(cfg).context("serializing resolved config")?;
    let path = dir.join("config.toml");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn execute(command: Command, cfg: &RunConfig, experiment: Option<Experiment>) -> anyhow::Result<()> {
    let Some(experiment) = experiment else {
        return print_crlb(cfg);
    };
    let output = with_workers(cfg.run.workers, || run_experiment(&experiment))??;
    if command == Command::Theory {
        if let Some(report) = &output.report {
            print!("{report}");
        }
        if let Some(dir) = &cfg.run.out {
            echo_config(dir, cfg)?;
            output.write(dir).with_context(|| format!("writing results to {}", dir.display()))?;
        }
        return Ok(());
    }
    let dir = cfg.run.out.as_deref().expect("resolved output directory");
    echo_config(dir, cfg)?;
    let written = output
        .write(dir)
        .with_context(|| format!("writing results to {}", dir.display()))?;
    for table in &output.summaries {
        for (param, alg, value) in &table.rows {
            println!("{}: {param} {alg} {}", table.name, format_float(*value));
        }
    }
    eprintln!("wrote {} result files and config.toml to {}", written.len(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let (command, common) = Cli::parse().command.split();
    let (cfg, experiment) = match prepare(command, &common) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(command, &cfg, experiment) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
