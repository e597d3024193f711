use std::path::PathBuf;
use std::process::ExitCode;

use assim_core::bench::{pod_decay, pod_decay_csv, run, write_outputs};
use assim_core::config::{schema_text, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "assim", version, about = "PBDW, bPBDW and sPBDW benchmark harness")]
struct Cli {
    /// Log level for diagnostics on stderr (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set noise.alpha=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> assim_core::Result<ExperimentConfig> {
        ExperimentConfig::load(&self.config, &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark and write its CSV and JSON outputs.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; defaults to `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// POD approximation error against n on the validation set.
    PodDecay {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write pod_decay.csv into this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the configuration keys, their defaults and meaning.
    Info,
}

fn execute(command: Command) -> Result<(), String> {
    match command {
        Command::Run { cfg, out } => {
            let config = cfg.load().map_err(|e| format!("{}: {e}", cfg.config.display()))?;
            let dir = out
                .or_else(|| config.output_dir.clone())
                .ok_or("no output directory: pass --out or set output.dir")?;
            let result = run(&config).map_err(|e| e.to_string())?;
            for (cell, reason) in &result.skipped {
                log::warn!("skipped n={} m={}: {reason}", cell.n, cell.m);
            }
            let files = write_outputs(&result, &dir).map_err(|e| e.to_string())?;
            println!("{} rows written to {}: {}", result.rows.len(), dir.display(), files.join(", "));
        }
        Command::PodDecay { cfg, out } => {
            let config = cfg.load().map_err(|e| format!("{}: {e}", cfg.config.display()))?;
            let csv = pod_decay_csv(&pod_decay(&config).map_err(|e| e.to_string())?);
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
                    let path = dir.join("pod_decay.csv");
                    std::fs::write(&path, csv).map_err(|e| format!("{}: {e}", path.display()))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
        }
        Command::Info => print!("{}", schema_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log).format_timestamp(None).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
