use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use curricula_cli::{commands, Config};

/// Offline data preparation and online cluster scheduling for fine-tuning runs.
#[derive(Debug, Parser)]
#[command(name = "curricula", version)]
struct Cli {
    /// TOML configuration file; every setting has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set clustering.k=5`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Attach difficulty scores from an attempts log.
    Score,
    /// PCA-reduce embeddings and fuse them with standardized difficulty.
    Featurize,
    /// K-means over the fused features.
    Cluster {
        #[arg(long)]
        seed: u64,
    },
    /// Keep a fixed number of examples per cluster.
    Reduce {
        #[arg(long)]
        seed: u64,
    },
    /// Run scheduling policies against a simulated learner.
    Simulate {
        #[arg(long)]
        seed: u64,
    },
    /// Serve batches to a training loop over stdio or TCP.
    Serve {
        #[arg(long)]
        seed: u64,
    },
    /// Rebuild heatmap data from a decision log.
    Replay {
        /// Decision log (JSON lines).
        #[arg(long)]
        log: PathBuf,
        /// Steps per window; defaults to simulation.window.
        #[arg(long)]
        window: Option<u64>,
        /// Output CSV; defaults to `<work_dir>/replay-heatmap.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Score => {
            let out = commands::score(&config)?;
            println!("wrote {}", out.display());
        }
        Command::Featurize => {
            commands::featurize(&config)?;
            println!("wrote {}", config.path(commands::FEATURES).display());
        }
        Command::Cluster { seed } => {
            commands::cluster(&config, seed)?;
            println!("wrote {}", config.path(commands::CLUSTERS).display());
        }
        Command::Reduce { seed } => {
            let set = commands::reduce(&config, seed)?;
            println!(
                "wrote {} ({} clusters, {} examples)",
                config.path(commands::MANIFEST).display(),
                set.k(),
                set.total()
            );
        }
        Command::Simulate { seed } => {
            let out = commands::simulate(&config, seed)?;
            for run in &out.runs {
                println!(
                    "{} seed {}: regret {:.3}, V_T {:.4}",
                    run.policy,
                    run.seed,
                    run.final_regret(),
                    run.final_vt()
                );
            }
            println!("wrote {}", out.metrics.display());
        }
        Command::Serve { seed } => commands::serve(&config, seed)?,
        Command::Replay { log, window, out } => {
            let window = window.unwrap_or(config.simulation.window);
            let out = out.unwrap_or_else(|| config.path("replay-heatmap.csv"));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let n = commands::replay(&log, window, &out)?;
            println!("replayed {n} decisions into {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
