use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mwgrad::harness::{load_config, run_experiment, run_rate_scenario, write_rate_report, ExperimentConfig, Method};
use mwgrad::Error;

#[derive(Parser)]
#[command(
    name = "mwgrad",
    version,
    about = "Multi-objective Wasserstein gradient descent with particles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of an experiment and write the output tree.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Restrict the run to one method.
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit merit decay rates for a euclidean-rate scenario.
    Rates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config, then exit.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_ERROR: u8 = 1;
const EXIT_DIVERGED: u8 = 2;

fn load_with_overrides(
    path: &Path,
    method: Option<Method>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> mwgrad::Result<ExperimentConfig> {
    let cfg = load_config(path)?;
    if method.is_none() && seed.is_none() && out.is_none() {
        return Ok(cfg);
    }
    let mut raw = cfg.raw;
    if let Some(m) = method {
        raw.methods = Some(vec![m]);
    }
    if seed.is_some() {
        raw.seed = seed;
    }
    if out.is_some() {
        raw.output_dir = out;
    }
    ExperimentConfig::from_raw(raw)
}

fn rates(cfg: &ExperimentConfig) -> mwgrad::Result<u8> {
    let report = run_rate_scenario(cfg)?;
    write_rate_report(cfg, &report)?;
    let mut diverged = false;
    for e in &report.entries {
        println!("{:<8} eta={:<10} {:?}: {}", e.scheme, e.step_size, e.fit_kind, e.fit);
        diverged |= matches!(e.fit, mwgrad::harness::RateFit::Diverged { .. });
    }
    Ok(if diverged { EXIT_DIVERGED } else { 0 })
}

fn execute(cli: Cli) -> mwgrad::Result<u8> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!(
                "ok: {:?}, {} method(s), {} step size(s), {} trial(s)",
                cfg.scenario,
                cfg.methods.len(),
                cfg.step_sizes.len(),
                cfg.num_trials
            );
            Ok(0)
        }
        Command::Rates { config, out } => {
            let cfg = load_with_overrides(&config, None, None, out)?;
            rates(&cfg)
        }
        Command::Run {
            config,
            method,
            seed,
            out,
        } => {
            let cfg = load_with_overrides(&config, method, seed, out)?;
            if cfg.scenario.is_rate() {
                return rates(&cfg);
            }
            let summary = run_experiment(&cfg)?;
            for g in &summary.groups {
                if let Some(last) = g.aggregate.last() {
                    println!(
                        "{:<13} eta={:<8} iter {:>5}: grad_norm {:.6e} +- {:.3e}",
                        g.method, g.step_size, last.iter, last.mean, last.std
                    );
                }
            }
            let diverged: Vec<_> = summary
                .trials
                .iter()
                .filter_map(|t| t.output.record.diverged_at.map(|n| (t, n)))
                .collect();
            for (t, n) in &diverged {
                eprintln!(
                    "diverged: {} eta={} trial {} at iteration {n}",
                    t.method, t.step_size, t.output.record.trial_index
                );
            }
            println!("wrote {}", summary.output_dir.display());
            Ok(if diverged.is_empty() { 0 } else { EXIT_DIVERGED })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Io { .. } = e {
                eprintln!("check that the output directory is writable");
            }
            ExitCode::from(EXIT_ERROR)
        }
    }
}
