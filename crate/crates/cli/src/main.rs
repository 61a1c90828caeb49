mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

use commands::PartialFailure;
use config::RunConfig;

/// Seasonal warm-day tercile forecasting pipeline.
#[derive(Debug, Parser)]
#[command(name = "tercile", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Treat partial backtest failures as errors.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load station files, apply quality control and cache the panel.
    Ingest,
    /// Build per-station warm-day and tercile thresholds.
    Climatology,
    /// Assemble daily features and EOF principal components.
    Features,
    /// Run the rolling-origin backtest and write predictions.
    Backtest,
    /// Aggregate predictions into metric, ROC, lead-error and plot tables.
    Report,
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, r| writeln!(buf, "{} {}", r.level(), r.args()))
        .init();
}

fn classify(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<PartialFailure>().is_some() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging();

    let Some(path) = cli.config.as_deref() else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(1);
    };
    let mut cfg = match RunConfig::load(path).and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config: {e:#}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.backtest.seed = cfg.seed;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }

    let result = match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Climatology => commands::climatology(&cfg),
        Command::Features => commands::features(&cfg),
        Command::Backtest => commands::backtest(&cfg, cli.strict),
        Command::Report => commands::report(&cfg),
    };
    // the manifest is refreshed even after a partial failure so written files stay traceable
    let manifest = if cfg.paths.output.is_dir() {
        commands::write_manifest(&cfg.paths.output).map(|_| ())
    } else {
        Ok(())
    };
    match result.and(manifest) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(classify(&e))
        }
    }
}
