//! Experiment runner: `zsm run <name>`, `zsm list`, `zsm describe <name>`.

use clap::{Parser, Subcommand};
use std::path::PathBuf;

use zsm_core::cli::{self, EXIT_FAIL, EXIT_PASS};

#[derive(Parser)]
#[command(
    name = "zsm",
    about = "Stochastic-mechanics laboratory: run registered experiments and emit data artifacts with machine-readable verdicts",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a registered experiment and write artifacts plus verdict.json.
    Run {
        /// Experiment name (see `zsm list`).
        name: String,
        /// TOML configuration file (defaults applied when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for artifacts and verdict.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (also via ZSM_THREADS; 0 = library default).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List registered experiments.
    List,
    /// Explain what an experiment checks.
    Describe { name: String },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            name,
            config,
            out,
            seed,
            threads,
        } => {
            let threads = threads.or_else(|| {
                std::env::var("ZSM_THREADS")
                    .ok()
                    .and_then(|v| v.parse().ok())
            });
            if let Some(t) = threads {
                if t > 0 {
                    if let Err(e) = rayon::ThreadPoolBuilder::new()
                        .num_threads(t)
                        .build_global()
                    {
                        eprintln!("warning: could not set thread count: {e}");
                    }
                }
            }
            let out_dir = out.unwrap_or_else(|| PathBuf::from(format!("zsm-out/{name}")));
            match cli::run(&name, config.as_deref(), Some(out_dir.clone()), seed) {
                Ok(verdict) => {
                    for (metric, m) in &verdict.metrics {
                        println!(
                            "{} {metric} = {:.6e}",
                            if m.pass { "PASS" } else { "FAIL" },
                            m.value
                        );
                    }
                    println!(
                        "{}: {} in {:.2}s (verdict in {})",
                        verdict.experiment,
                        if verdict.pass { "PASS" } else { "FAIL" },
                        verdict.wall_seconds,
                        out_dir.join("verdict.json").display()
                    );
                    if verdict.pass {
                        EXIT_PASS
                    } else {
                        EXIT_FAIL
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    e.exit_code()
                }
            }
        }
        Command::List => {
            for line in cli::list_lines() {
                println!("{line}");
            }
            EXIT_PASS
        }
        Command::Describe { name } => match cli::describe(&name) {
            Ok(text) => {
                println!("{text}");
                EXIT_PASS
            }
            Err(e) => {
                eprintln!("{e}");
                e.exit_code()
            }
        },
    };
    std::process::exit(code);
}
