//! Command-line front end: config parsing, planning, benchmarks and artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use drscc_core::PlanMode;

pub use commands::{cmd_benchmark, cmd_plan, cmd_validate, BenchmarkArgs, PlanArgs};
pub use config::{ConfigError, RunConfig};
pub use error::{CliError, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DRSCC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "drscc", version, about = "Distributionally robust safe-corridor trajectory planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Nominal,
    Drscc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan one trajectory and write CSV, JSON and SVG artifacts.
    Plan {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "drscc")]
        mode: ModeArg,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
        /// Also write the assembled QP as sparse triplets (qp.txt).
        #[arg(long)]
        export_qp: bool,
    },
    /// Run the perturbation benchmark over the method and family grid.
    Benchmark {
        config: PathBuf,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
        /// Overrides benchmark.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Instances per alpha value; overrides benchmark.instances_per_alpha.
        #[arg(long)]
        instances: Option<usize>,
        /// Worker threads for instance evaluation (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Also write per-instance outcomes (instances.csv).
        #[arg(long)]
        keep_instances: bool,
    },
    /// Check corridor invariants and preview the tightening without solving.
    Validate { config: PathBuf },
}

fn fail(e: CliError) -> i32 {
    eprintln!("{}", e.record());
    e.code
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Plan { config, mode, out, export_qp } => {
            let mode = match mode {
                ModeArg::Nominal => PlanMode::Nominal,
                ModeArg::Drscc => PlanMode::Drscc,
            };
            match cmd_plan(&PlanArgs { config, mode, out, export_qp }) {
                Ok(o) => {
                    let s = &o.plan.solution;
                    println!(
                        "{} plan {}: objective {:.6e}, {} iterations, stationarity {:.1e}; wrote {}",
                        mode.as_str(),
                        s.status.as_str(),
                        o.plan.objective,
                        s.iterations,
                        s.residuals.stationarity,
                        o.out.display()
                    );
                    EXIT_OK
                }
                Err(e) => fail(e),
            }
        }
        Command::Benchmark { config, out, seed, instances, threads, keep_instances } => {
            match cmd_benchmark(&BenchmarkArgs { config, out, seed, instances, threads, keep_instances }) {
                Ok(o) => {
                    print!("{}", output::table_text(&o.report));
                    println!("wrote {}", o.out.display());
                    EXIT_OK
                }
                Err(e) => fail(e),
            }
        }
        Command::Validate { config } => match cmd_validate(&config) {
            Ok(r) => {
                for n in &r.notes {
                    println!("{n}");
                }
                println!("ok");
                EXIT_OK
            }
            Err(e) => {
                if let Some(list) = e.details.get("issues").and_then(|v| v.as_array()) {
                    for v in list {
                        println!("issue: {}", v.as_str().unwrap_or_default());
                    }
                }
                fail(e)
            }
        },
    }
}
