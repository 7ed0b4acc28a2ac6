use clap::{Parser, Subcommand};
use onlinefilter::NoiseKind;
use onlinefilter_cli::commands::{cmd_oracle, cmd_report, cmd_run, cmd_synth, run_summary_line};
use onlinefilter_cli::{CliError, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Online de-noise filter selection experiments.
#[derive(Debug, Parser)]
#[command(name = "onlinefilter", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the `seed` key of the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for detector calls while building the oracle table.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write noisy variants of the originals.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Comma-separated noise kinds; give the flag without values to
        /// write no noisy variants.
        #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "blur,dark,white")]
        kinds: Vec<NoiseKind>,
        /// Also write the originals under their own names.
        #[arg(long)]
        originals: bool,
    },
    /// Score the originals and write the oracle table.
    Oracle {
        /// Output CSV; defaults to `paths.oracle`, then `oracle.csv`.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run the configured experiment.
    Run {
        /// Overrides `paths.log`.
        #[arg(long, value_name = "PATH")]
        log: Option<PathBuf>,
        /// Overrides `paths.snapshot`.
        #[arg(long, value_name = "PATH")]
        snapshot: Option<PathBuf>,
    },
    /// Summarize iteration logs.
    Report {
        /// Defaults to `paths.log`.
        #[arg(long, value_name = "PATH")]
        log: Option<PathBuf>,
        /// Further logs to line up against the first by iteration.
        #[arg(long, value_name = "PATH", num_args = 1..)]
        compare: Vec<PathBuf>,
        /// Output directory; defaults to `paths.report`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.jobs == 0 {
        return Err(CliError::config("--jobs must be >= 1"));
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth {
            out,
            kinds,
            originals,
        } => {
            let n = cmd_synth(&cfg, &out, &kinds, originals)?;
            println!("wrote {n} images to {}", out.display());
        }
        Command::Oracle { out } => {
            let out = out
                .or_else(|| cfg.paths.oracle.clone())
                .unwrap_or_else(|| "oracle.csv".into());
            let table = cmd_oracle(&cfg, &out, cli.jobs)?;
            println!(
                "scored {} originals, brightness_ref {:.4}, wrote {}",
                table.len(),
                table.brightness_ref,
                out.display()
            );
        }
        Command::Run { log, snapshot } => {
            if let Some(log) = log {
                cfg.paths.log = log;
            }
            if snapshot.is_some() {
                cfg.paths.snapshot = snapshot;
            }
            let out = cmd_run(&cfg, cli.jobs)?;
            println!("{}", run_summary_line(&out.records));
        }
        Command::Report { log, compare, out } => {
            let log = log.unwrap_or_else(|| cfg.paths.log.clone());
            let out = out.unwrap_or_else(|| cfg.paths.report.clone());
            for path in cmd_report(&log, &compare, &out)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error");
            eprintln!("error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
