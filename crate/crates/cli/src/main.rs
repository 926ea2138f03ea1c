//! `strata`: runs the solver experiments and writes CSV tables, optional SVG
//! plots and a JSON summary per run.
//!
//! Exit codes: 0 pass, 1 invariant failure, 2 configuration error,
//! 3 blow-up or inconclusive.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigError;
use output::{Output, Verdict};
use strata_core::harness::{CheckConfig, EpsilonSweepConfig, KappaSweepConfig};

#[derive(Parser, Debug)]
#[command(name = "strata", version, about = "Bilayer and stratified shallow-water experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration with a "version" field; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized suites; recorded in every summary.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write SVG line plots.
    #[arg(long)]
    plots: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trace the quartic curve and Froude lines, and count their intersections.
    Atlas(Common),
    /// Classify one state point and print its characteristic roots.
    Classify(Common),
    /// Integrate the bilayer system.
    SimulateBilayer(Common),
    /// Integrate the continuously stratified system.
    SimulateStratified(Common),
    /// Build and check the refined approximation around a bilayer reference.
    Refine(Common),
    /// Convergence rate of diffusive runs as the diffusivity vanishes.
    SweepKappa(Common),
    /// Convergence rate of smoothed-pycnocline runs towards the bilayer run.
    SweepEpsilon(Common),
    /// Run every invariant suite.
    CheckAll(Common),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() || err.downcast_ref::<serde_json::Error>().is_some() {
        return 2;
    }
    match err.downcast_ref::<strata_core::Error>() {
        Some(strata_core::Error::BlowUp { .. } | strata_core::Error::DepthPositivity { .. }) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let (id, common) = match &cli.command {
        Command::Atlas(c) => ("atlas", c),
        Command::Classify(c) => ("classify", c),
        Command::SimulateBilayer(c) => ("simulate-bilayer", c),
        Command::SimulateStratified(c) => ("simulate-stratified", c),
        Command::Refine(c) => ("refine", c),
        Command::SweepKappa(c) => ("sweep-kappa", c),
        Command::SweepEpsilon(c) => ("sweep-epsilon", c),
        Command::CheckAll(c) => ("check-all", c),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError(format!("--threads: {e}")))?;
    }
    let cfg_path = common.config.as_deref();
    if let Command::Classify(_) = cli.command {
        let report = commands::classify(&config::load(cfg_path)?)?;
        commands::print_json(&report)?;
        return Ok(0);
    }
    let mut out = Output::new(&common.out, common.plots)?;
    let mut seed = common.seed.unwrap_or(0);
    let mut fit = None;
    let (verdict, detail): (Verdict, serde_json::Value) = match &cli.command {
        Command::Atlas(_) => commands::atlas(&config::load(cfg_path)?, &mut out)?,
        Command::SimulateBilayer(_) => commands::simulate_bilayer(&config::load(cfg_path)?, &mut out)?,
        Command::SimulateStratified(_) => commands::simulate_stratified(&config::load(cfg_path)?, &mut out)?,
        Command::Refine(_) => commands::refine(&config::load(cfg_path)?, &mut out)?,
        Command::SweepKappa(_) => {
            let cfg: KappaSweepConfig = config::load(cfg_path)?;
            let (v, f, d) = commands::sweep_kappa(&cfg, &mut out)?;
            fit = f;
            (v, d)
        }
        Command::SweepEpsilon(_) => {
            let cfg: EpsilonSweepConfig = config::load(cfg_path)?;
            let (v, f, d) = commands::sweep_epsilon(&cfg, &mut out)?;
            fit = f;
            (v, d)
        }
        Command::CheckAll(_) => {
            let mut cfg: CheckConfig = config::load(cfg_path)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            seed = cfg.seed;
            commands::check_all(&cfg, &mut out)?
        }
        Command::Classify(_) => unreachable!("handled above"),
    };
    let summary = out.finish(id, seed, verdict, fit, detail)?;
    commands::print_json(&summary)?;
    Ok(verdict.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
