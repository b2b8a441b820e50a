use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use blockpd::bench::{
    cmd_counterexample, cmd_solve, cmd_sweep, cmd_verify, LoadedConfig, Overrides,
};
use clap::{Args, Parser, Subcommand};

/// Asynchronous primal-dual simulator and benchmarks.
#[derive(Debug, Parser)]
#[command(name = "blockpd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the horizon.
    #[arg(long)]
    ticks: Option<u64>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<String>,
}

impl Common {
    fn load(&self) -> Result<LoadedConfig> {
        let mut loaded = LoadedConfig::read(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        loaded.config.apply(&Overrides {
            seed: self.seed,
            ticks: self.ticks,
            out: self.out.clone(),
        });
        Ok(loaded)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every assumption and print the derived constants.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Reference solve plus one asynchronous run per seed.
    Solve(Common),
    /// Run every value of the config's sweep.
    Sweep(Common),
    /// Build and check a counterexample instance.
    Counterexample {
        #[arg(long)]
        epsilon: f64,
        #[arg(long = "l")]
        l: f64,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/counterexample")]
        out: String,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Verify { config, json } => {
            let loaded = LoadedConfig::read(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let report = cmd_verify(&loaded)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{report}");
                if let Some(c) = &report.certificate {
                    println!("beta = {}", c.beta);
                }
                if let Some(g) = report.gamma_bound {
                    println!("gamma_bound = {g}");
                }
                if let Some((lo, hi)) = report.rho_interval {
                    println!("rho_interval = ({lo}, {hi})");
                }
            }
            Ok(if report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Solve(common) => {
            let summary = cmd_solve(&common.load()?)?;
            println!(
                "reference: {} iterations, residual {:e}",
                summary.reference.iterations, summary.reference.residual
            );
            for r in &summary.runs {
                println!(
                    "seed {}: final rel err {:e}, converged {}, {}",
                    r.seed, r.final_rel_err, r.converged, r.csv
                );
            }
            println!("summary: {}", summary.summary_path);
            if !summary.not_converged.is_empty() {
                eprintln!(
                    "warning: seeds {:?} did not converge",
                    summary.not_converged
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(common) => {
            let loaded = common.load()?;
            if loaded.config.sweep.is_none() {
                bail!("{} has no sweep section", common.config.display());
            }
            let summary = cmd_sweep(&loaded)?;
            println!(
                "{:>12} {:>6} {:>14} {:>10} {:>14}",
                summary.param.name(),
                "seed",
                "final_err",
                "first_hit",
                "tail_var"
            );
            for s in &summary.settings {
                if let Some(e) = &s.error {
                    println!("{:>12} error: {e}", s.value);
                }
                for r in &s.runs {
                    let hit = r.first_hit.map_or("-".to_string(), |t| t.to_string());
                    println!(
                        "{:>12} {:>6} {:>14.6e} {:>10} {:>14.6e}",
                        s.value, r.seed, r.final_rel_err, hit, r.tail_var
                    );
                }
            }
            println!("table: {}", summary.table_path);
            println!("summary: {}", summary.summary_path);
            Ok(ExitCode::SUCCESS)
        }
        Command::Counterexample {
            epsilon,
            l,
            n,
            seed,
            out,
        } => {
            let summary = cmd_counterexample(epsilon, l, n, seed, &out)?;
            print!("{summary}");
            println!("instance: {}", summary.instance_path);
            println!("problem: {}", summary.problem_path);
            Ok(ExitCode::SUCCESS)
        }
    }
}
