//! The `cdds` command line: configuration, run artifacts, explanation
//! rendering and the command implementations behind each verb.

pub mod artifacts;
pub mod commands;
pub mod config;
mod error;
pub mod render;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, Result};

use crate::commands::EvalTarget;
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "cdds", version, about = "Drug-pair synergy prediction with causal substructure disentanglement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on the configured split, validating on the held-out fold.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Cross-validate (`--cv`) or score a checkpoint.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "checkpoint")]
        cv: bool,
        #[arg(long, required_unless_present = "cv")]
        checkpoint: Option<PathBuf>,
        /// Fold to score (defaults to `[split] fold`).
        #[arg(long, conflicts_with = "samples")]
        fold: Option<usize>,
        /// Score the training side of the fold instead of its test side.
        #[arg(long)]
        train_side: bool,
        /// External samples CSV (drug_a_id, drug_b_id, cell_id, score).
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Score drug pairs, optionally with drug substitutions.
    Predict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        substitutions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Export per-atom importances with DOT and SVG renderings.
    Explain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Print and verify a checkpoint.
    InspectCheckpoint {
        path: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write the fold assignment of the configured protocol.
    MakeFolds {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `folds.csv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a SMILES corpus (one `SMILES [name]` per line) and report.
    ParseCorpus {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a planted-motif dataset with a default config.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        pairs: usize,
        #[arg(long, default_value_t = 60)]
        drugs: usize,
        #[arg(long, default_value_t = 8)]
        cells: usize,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train { config } => {
            let s = commands::cmd_train(&RunConfig::load(&config)?)?;
            println!("run directory: {}", s.dir.display());
            print!("{}", s.valid.to_kv());
        }
        Command::Evaluate { config, cv, checkpoint, fold, train_side, samples, out, force } => {
            let cfg = RunConfig::load(&config)?;
            if cv {
                emit(&commands::cmd_evaluate_cv(&cfg)?, out.as_ref())?;
            } else {
                let ckpt = checkpoint.ok_or_else(|| CliError::Usage("--checkpoint or --cv required".into()))?;
                let target = match samples {
                    Some(p) => EvalTarget::External(p),
                    None => EvalTarget::Fold { fold: fold.unwrap_or(cfg.split.fold), train_side },
                };
                emit(&commands::cmd_evaluate_checkpoint(&cfg, &ckpt, &target, force)?.to_csv(), out.as_ref())?;
            }
        }
        Command::Predict { config, checkpoint, pairs, substitutions, out, force } => {
            let cfg = RunConfig::load(&config)?;
            emit(&commands::cmd_predict(&cfg, &checkpoint, &pairs, substitutions.as_deref(), force)?, out.as_ref())?;
        }
        Command::Explain { config, checkpoint, pairs, out, force } => {
            let cfg = RunConfig::load(&config)?;
            let files = commands::cmd_explain(&cfg, &checkpoint, &pairs, &out, force)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::InspectCheckpoint { path, config } => {
            let cfg = config.map(|c| RunConfig::load(&c)).transpose()?;
            print!("{}", commands::cmd_inspect(&path, cfg.as_ref())?);
        }
        Command::MakeFolds { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("folds.csv"));
            let plan = commands::cmd_make_folds(&cfg, &out)?;
            println!("{} samples in {} folds ({}) -> {}", plan.len(), plan.k, plan.protocol, out.display());
        }
        Command::ParseCorpus { input, out } => {
            let (ok, total) = commands::cmd_parse_corpus(&input, out.as_deref())?;
            eprintln!("parsed {ok}/{total}");
        }
        Command::GenSynthetic { out, seed, pairs, drugs, cells } => {
            let spec = cdds_core::synthetic::SyntheticSpec { n_drugs: drugs, n_cells: cells, n_pairs: pairs, seed, ..Default::default() };
            let cfg = commands::cmd_gen_synthetic(&out, &spec)?;
            println!("wrote {}", cfg.display());
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (program name first); returns the exit code:
/// 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
