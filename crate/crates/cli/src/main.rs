use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use arce::cote::StrategyKind;
use arce_cli::stages;
use arce_cli::{CliError, Overrides, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "arce",
    version,
    about = "Elucidation corpus, MLM pre-training and CRF NER"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Log level for the JSON log on stderr.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the deterministic built-in endpoint instead of HTTP.
    #[arg(long)]
    mock: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the elucidation corpus for a dataset.
    GenerateCote {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<StrategyKind>,
    },
    /// Masked-LM pre-training on the corpus.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Encoder checkpoint to resume from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus_fraction: Option<f64>,
        #[arg(long)]
        strategy: Option<StrategyKind>,
    },
    /// Fine-tune encoder + CRF and score the test split.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Start from a freshly initialised encoder.
        #[arg(long)]
        no_pretrain: bool,
        #[arg(long)]
        strategy: Option<StrategyKind>,
    },
    /// Score a model or a prediction file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Score against the whole dataset rather than the test split.
        #[arg(long)]
        all: bool,
    },
    /// One pre-train + fine-tune run per prompt strategy.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Pre-train + fine-tune on growing corpus fractions.
    Scale {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<StrategyKind>,
    },
    /// Tag raw text, one sentence per line.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        seed: c.seed,
        out_dir: c.out_dir.clone(),
        mock: c.mock,
        dataset: c.dataset.clone(),
        corpus: c.corpus.clone(),
        ..Default::default()
    }
}

fn resolve(c: &Common, extra: Overrides) -> Result<RunConfig, CliError> {
    let mut ov = overrides(c);
    ov.checkpoint = extra.checkpoint;
    ov.model = extra.model;
    ov.corpus_fraction = extra.corpus_fraction;
    ov.strategy = extra.strategy;
    RunConfig::resolve(c.config.as_deref(), &ov)
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!(
        "{}",
        serde_json::to_string(v).context("serialising output")?
    );
    Ok(())
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::GenerateCote { common, strategy } => {
            let cfg = resolve(
                &common,
                Overrides {
                    strategy,
                    ..Default::default()
                },
            )?;
            print_json(&stages::generate_cote(&cfg)?)?;
        }
        Command::Pretrain {
            common,
            checkpoint,
            corpus_fraction,
            strategy,
        } => {
            let cfg = resolve(
                &common,
                Overrides {
                    checkpoint,
                    corpus_fraction,
                    strategy,
                    ..Default::default()
                },
            )?;
            let out = stages::pretrain_stage(&cfg)?;
            print_json(&serde_json::json!({
                "checkpoint": out.checkpoint,
                "records": out.records,
                "final_loss": out.epochs.last().map(|e| e.mean_loss),
            }))?;
        }
        Command::Finetune {
            common,
            checkpoint,
            model,
            no_pretrain,
            strategy,
        } => {
            let cfg = resolve(
                &common,
                Overrides {
                    checkpoint,
                    model,
                    strategy,
                    ..Default::default()
                },
            )?;
            let out = stages::finetune_stage(&cfg, no_pretrain)?;
            print!("{}", out.table.to_text());
        }
        Command::Evaluate {
            common,
            model,
            predictions,
            all,
        } => {
            let cfg = resolve(
                &common,
                Overrides {
                    model,
                    ..Default::default()
                },
            )?;
            let out = stages::evaluate_stage(&cfg, predictions.as_deref(), all)?;
            print!("{}", out.table.to_text());
        }
        Command::Ablate { common } => {
            let cfg = resolve(&common, Overrides::default())?;
            print!("{}", stages::ablate(&cfg)?.to_text());
        }
        Command::Scale { common, strategy } => {
            let cfg = resolve(
                &common,
                Overrides {
                    strategy,
                    ..Default::default()
                },
            )?;
            print!("{}", stages::scale(&cfg)?.to_text());
        }
        Command::Predict {
            model,
            input,
            output,
        } => {
            let n = stages::predict_stage(&model, &input, &output)?;
            log::info!("tagged {n} lines into {}", output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    arce_cli::logger::init(cli.log_level);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<CliError>().map_or("error", CliError::code);
            eprintln!("{code}: {e:#}");
            ExitCode::FAILURE
        }
    }
}
