use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ios_bc::cli::{cmd_run, cmd_validate, RunArgs, EXIT_OK, WORKERS_ENV};
use ios_bc::SurfaceMode;

#[derive(Parser)]
#[command(name = "iosbc", version, about = "Omni-surface aided MIMO broadcast sum-rate simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the alternating optimization over a batch of channel realizations.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed range `a..b`, `a..=b`, or a single seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        mode: Option<SurfaceMode>,
        /// Number of runs starting at `experiment.seed` (ignored with --seeds).
        #[arg(long)]
        runs: Option<usize>,
        /// Override a config value, e.g. `--set surface.rows=8`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads (default: all cores).
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Check a config file and print the resolved scenario.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            mode,
            runs,
            set,
            workers,
        } => cmd_run(&RunArgs {
            config,
            out: out.clone(),
            seeds,
            mode,
            runs,
            overrides: set,
            workers,
        })
        .map(|o| {
            let m = &o.summary.mean_objective;
            println!(
                "{} runs, mean final sum rate {:.4} bits/s/Hz over {} iterations; results in {}",
                o.reports.len(),
                m.last().copied().unwrap_or(0.0),
                m.len(),
                out.display()
            );
        }),
        Command::Validate { config, set } => cmd_validate(&config, &set).map(|s| {
            println!("config OK");
            print!("{s}");
        }),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
