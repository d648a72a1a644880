use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tfbimamba::io::{to_jsonl, write_file};
use tfbimamba::sim::Split;
use tfbimamba_cli::{evaluate, locate, resolve_config, simulate, train, CliError, Method};

#[derive(Parser)]
#[command(name = "tfbimamba", version, about = "Two-microphone sound source localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a simulated dataset with labels and a manifest.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Render only this split (train, val or test).
        #[arg(long)]
        split: Option<String>,
    },
    /// Train the network on a manifest's train split.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resume from this `last.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a method on one split of a manifest.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "tfmamba")]
        method: Method,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-frame azimuth estimates for one two-channel recording.
    Locate {
        wav: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "srp-phat")]
        method: Method,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write records here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    Split::parse(s).ok_or_else(|| CliError::Config(format!("unknown split {s:?}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            out,
            split,
        } => {
            let cfg = resolve_config(config.as_deref(), seed)?;
            eprint!("{}", cfg.to_toml());
            let splits = match split {
                Some(s) => vec![parse_split(&s)?],
                None => vec![Split::Train, Split::Val, Split::Test],
            };
            let recs = simulate(&cfg, &out, &splits)?;
            println!("wrote {} utterances to {}", recs.len(), out.display());
        }
        Command::Train {
            config,
            seed,
            manifest,
            out,
            checkpoint,
        } => {
            let cfg = resolve_config(config.as_deref(), seed)?;
            eprint!("{}", cfg.to_toml());
            let o = train(&cfg, &manifest, &out, checkpoint.as_deref())?;
            println!(
                "trained {} epochs; best validation loss {:.6} at epoch {}",
                o.epochs, o.best_loss, o.best_epoch
            );
        }
        Command::Evaluate {
            config,
            manifest,
            split,
            method,
            checkpoint,
            out,
        } => {
            let expected = match &config {
                Some(p) => Some(resolve_config(Some(p), None)?.net),
                None => None,
            };
            let report = evaluate(
                method,
                checkpoint.as_deref(),
                expected.as_ref(),
                &manifest,
                parse_split(&split)?,
                out.as_deref(),
            )?;
            print!("{}", report.table());
        }
        Command::Locate {
            wav,
            config,
            method,
            checkpoint,
            out,
        } => {
            let cfg = resolve_config(config.as_deref(), None)?;
            let recs = locate(&wav, method, checkpoint.as_deref(), &cfg)?;
            let text = to_jsonl(&recs);
            match out {
                Some(p) => write_file(&p, text.as_bytes())?,
                None => std::io::stdout()
                    .write_all(text.as_bytes())
                    .map_err(|e| CliError::Data(e.to_string()))?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
