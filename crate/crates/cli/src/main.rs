use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use biaslens::pipeline::{run_stage, PipelineConfig, Stage};

/// Surface comments likely to contain gender bias: train an
/// addressee-gender classifier while demoting post-content, latent-trait,
/// and overt-term confounds, then evaluate and analyze what it learned.
#[derive(Parser)]
#[command(name = "biaslens", version)]
struct Cli {
    /// Pipeline config file; defaults apply when the file is absent.
    #[arg(short, long, global = true, default_value = "biaslens.toml")]
    config: PathBuf,

    /// Output directory (overrides the config file and BIASLENS_OUT).
    #[arg(long, global = true)]
    out: Option<String>,

    /// Override any config field, e.g. --set model.preset=demotion.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted signals.
    Synth,
    /// Read raw delimiter-separated rows into the canonical corpus.
    Ingest,
    /// Partition authors into train/dev/test with no addressee overlap.
    Split,
    /// Apply overt-term and name substitutions, drop too-short comments.
    Preprocess,
    /// Train the propensity model, match posts, balance comments.
    Match,
    /// Train the gender classifier for the configured preset.
    Train,
    /// Score held-out test comments with the trained model.
    Predict,
    /// Compute held-out precision/recall/F1/accuracy (F positive).
    Eval,
    /// Zero-shot evaluation on tagged posts, with random baselines.
    TransferEval,
    /// Influential words, lexicon differentials, surfaced examples.
    Analyze,
    /// Render metric tables and charts from stored artifacts.
    Report,
}

impl Command {
    fn stage(&self) -> Stage {
        match self {
            Command::Synth => Stage::Synth,
            Command::Ingest => Stage::Ingest,
            Command::Split => Stage::Split,
            Command::Preprocess => Stage::Preprocess,
            Command::Match => Stage::Match,
            Command::Train => Stage::Train,
            Command::Predict => Stage::Predict,
            Command::Eval => Stage::Eval,
            Command::TransferEval => Stage::TransferEval,
            Command::Analyze => Stage::Analyze,
            Command::Report => Stage::Report,
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let overrides: Vec<(String, String)> = cli
        .sets
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .with_context(|| format!("--set expects KEY=VALUE, got {s:?}"))
        })
        .collect::<Result<_>>()?;
    let mut cfg = if cli.config.exists() {
        PipelineConfig::from_path(&cli.config, &overrides)
            .with_context(|| format!("loading config {:?}", cli.config))?
    } else if cli.config.as_os_str() == "biaslens.toml" {
        // No config file: run on defaults plus overrides.
        PipelineConfig::from_toml("", &overrides)?
    } else {
        bail!("config file {:?} does not exist", cli.config);
    };
    if let Some(out) = &cli.out {
        cfg.paths.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let report = run_stage(&cfg, cli.command.stage())?;
    println!("[{}] done", report.stage);
    for note in &report.notes {
        println!("  {note}");
    }
    for output in &report.outputs {
        println!("  wrote {}", output.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
