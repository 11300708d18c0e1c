use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use steinflow_cli::analyze::analyze_to_dir;
use steinflow_cli::experiment::{run_experiment, run_sweep, sweep_configs};
use steinflow_cli::parse_config;

#[derive(Parser)]
#[command(name = "steinflow", version, about = "Accelerated SVGD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one particle experiment.
    Run {
        config: PathBuf,
        /// Replace a config key, e.g. `--override tau=0.05`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Spectral report and rate table of the linearised Gaussian flows.
    Analyze {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run one experiment per value of a parameter, in parallel.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = parse_config(&read(&config)?, &overrides)?;
            let summary = run_experiment(&cfg)?;
            println!(
                "{} steps, final KL {:.6e}, outputs in {}",
                cfg.n_steps,
                summary.final_kl(),
                summary.output_dir.display()
            );
        }
        Command::Analyze { config, overrides } => {
            let cfg = parse_config(&read(&config)?, &overrides)?;
            let report = analyze_to_dir(&cfg)?;
            println!(
                "alpha* {:.6}, SVGD condition number {:.6}, outputs in {}",
                report.alpha_star,
                report.svgd.condition_number,
                cfg.output_dir.display()
            );
        }
        Command::Sweep {
            config,
            param,
            values,
            overrides,
        } => {
            let text = read(&config)?;
            let base = parse_config(&text, &overrides)?;
            let configs = sweep_configs(&text, &overrides, &param, &values)?;
            let outcomes = run_sweep(&base.output_dir, &param, &values, configs)?;
            let mut failed = 0;
            for o in &outcomes {
                match &o.result {
                    Ok(r) => println!("{param}={}: final KL {:.6e}", o.value, r.final_kl()),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{param}={}: {e}", o.value);
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {} sweep runs failed", outcomes.len());
            }
        }
    }
    Ok(())
}
