use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use corpus_contrast::pipeline::{Pipeline, PipelineConfig, Role};
use corpus_contrast::synthetic::{base_documents, fiction_documents, write_corpus_dir};
use corpus_contrast::{Error, Result};
use serde::Serialize;

/// Contrast a base-only and a mixture-trained masked language model.
#[derive(Parser)]
#[command(name = "ccaudit", version)]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, short, global = true, default_value = "ccaudit.json")]
    config: PathBuf,

    /// Output directory; overrides CCAUDIT_OUT and the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report training progress on stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split corpora, build the shared vocab and sample test passages.
    Prepare,
    /// Train one model.
    Train {
        #[arg(long, value_parser = parse_role)]
        role: Role,
    },
    /// Compare both models word by word on both test sets.
    Audit,
    /// Sample text from one model.
    Generate {
        #[arg(long, value_parser = parse_role)]
        role: Role,
    },
    /// Rank fiction test passages by information gain.
    Rank,
    /// Collect headline numbers into run_summary.json.
    Report,
    /// Every step in order.
    Run,
    /// Write synthetic stand-in corpora as directories of text files.
    Synth {
        /// Destination; receives `base/` and `fiction/`.
        dir: PathBuf,
        #[arg(long, default_value_t = 2_000_000)]
        base_words: usize,
        #[arg(long, default_value_t = 700_000)]
        fiction_words: usize,
        #[arg(long, default_value_t = 60)]
        authors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_role(s: &str) -> std::result::Result<Role, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn pipeline(cli: &Cli) -> Result<Pipeline> {
    let config = PipelineConfig::load(&cli.config)?;
    let root = cli
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("CCAUDIT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| root.join(&config.output_dir));
    Ok(Pipeline::new(config, root, out)?.with_log(cli.verbose))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth {
            dir,
            base_words,
            fiction_words,
            authors,
            seed,
        } => {
            write_corpus_dir(&dir.join("base"), &base_documents(*base_words, *seed))?;
            write_corpus_dir(
                &dir.join("fiction"),
                &fiction_documents(*fiction_words, *authors, seed.wrapping_add(1)),
            )?;
            print(&serde_json::json!({ "base": dir.join("base"), "fiction": dir.join("fiction") }))
        }
        Command::Prepare => print(&pipeline(cli)?.prepare()?),
        Command::Train { role } => {
            let p = pipeline(cli)?;
            p.train(*role)?;
            print(&serde_json::json!({
                "role": role.as_str(),
                "checkpoint": p.output_dir().join(format!("checkpoints/{}.ckpt", role.as_str())),
            }))
        }
        Command::Audit => print(&pipeline(cli)?.audit()?),
        Command::Generate { role } => {
            let n = pipeline(cli)?.generate(*role)?;
            print(&serde_json::json!({ "role": role.as_str(), "samples": n }))
        }
        Command::Rank => print(&pipeline(cli)?.rank()?),
        Command::Report => print(&pipeline(cli)?.report()?),
        Command::Run => print(&pipeline(cli)?.run()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport {
                error: e.kind(),
                message: e.to_string(),
            };
            eprintln!(
                "{}",
                serde_json::to_string(&report).unwrap_or_else(|_| e.to_string())
            );
            ExitCode::FAILURE
        }
    }
}
