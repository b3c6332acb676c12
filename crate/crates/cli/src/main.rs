//! `bregalt`: run alternating Bregman projection experiments and report on
//! their traces.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "bregalt", version, about = "Alternating left/right Bregman projections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress progress lines on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file, or the name of a fixture in the fixture directory.
    #[arg(long)]
    config: String,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its trace and summary.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the convergence rate of a trace CSV (or a CSV with an `error` column).
    Rate {
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fill the angle and three-point columns of a trace CSV and write a probe report.
    Diag {
        trace: PathBuf,
        #[arg(long)]
        config: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment from every start of its sweep and cluster the limits.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        common: Common,
    },
    /// List the registered generators and parametric maps.
    ListGenerators,
    /// List the fixtures in the fixture directory.
    ListFixtures,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { run, common } => commands::run(&run.config, run.seed, run.max_iters, common.out, common.quiet),
        Command::Rate { trace, common } => commands::rate(&trace, common.out, common.quiet),
        Command::Diag { trace, config, common } => commands::diag(&trace, &config, common.out, common.quiet),
        Command::Sweep { run, common } => commands::sweep(&run.config, run.seed, run.max_iters, common.out, common.quiet),
        Command::ListGenerators => commands::list_generators(),
        Command::ListFixtures => commands::list_fixtures(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("bregalt: {err}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
