//! `sylstm` command-line interface.
//!
//! Exit status: 0 success, 1 configuration or argument error, 2 I/O or
//! malformed input, 3 checkpoint/vocabulary integrity, 4 misaligned
//! tweets, parses or labels.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{EvalArgs, ParseSource, CHECKPOINT_FILE, VOCAB_FILE};
use crate::config::Dataset;
use crate::exit::Failure;

#[derive(Parser)]
#[command(
    name = "sylstm",
    version,
    about = "Syntax-aware BiLSTM + GCN tweet classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; relative paths resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// `--key value` overrides of configuration keys, e.g. `--seed 7 --model.d_w 16`.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "OVERRIDES"
    )]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ModelArgs {
    /// Training output directory; supplies default checkpoint and vocabulary paths.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<(PathBuf, PathBuf), Failure> {
        let pick = |explicit: &Option<PathBuf>, file: &str, flag: &str| {
            explicit
                .clone()
                .or_else(|| self.run.as_ref().map(|r| r.join(file)))
                .ok_or_else(|| Failure::config(format!("give --{flag} or --run")))
        };
        Ok((
            pick(&self.checkpoint, CHECKPOINT_FILE, "checkpoint")?,
            pick(&self.vocab, VOCAB_FILE, "vocab")?,
        ))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Clean raw tweets, one per line.
    Prep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write its artifacts to the configured output directory.
    Train(ConfigArgs),
    /// Score a trained model on a labelled set, with trivial baselines for context.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "olid")]
        dataset: DatasetArg,
        /// Labelled data: an OLID TSV (training layout, or test tweets with --labels) or the Davidson CSV.
        #[arg(long)]
        data: PathBuf,
        /// OLID gold labels (`id,label`) for test-layout data.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Restrict to the test ids of a split manifest.
        #[arg(long)]
        split: Option<PathBuf>,
        /// CoNLL-U parses keyed by `# sent_id`.
        #[arg(long)]
        parses: PathBuf,
        /// Write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the comparison table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Label raw tweets, one per line; writes one class name per line.
    Predict {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// CoNLL-U parses of the cleaned tweets, in input order.
        #[arg(
            long,
            conflicts_with = "parser_cmd",
            required_unless_present = "parser_cmd"
        )]
        parses: Option<PathBuf>,
        /// Shell command reading cleaned tweets on stdin and writing CoNLL-U on stdout.
        #[arg(long)]
        parser_cmd: Option<String>,
    },
    /// Linear SVM and majority-style baselines on the configured split.
    Baseline {
        /// Write the reports as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DatasetArg {
    Olid,
    Davidson,
}

impl From<DatasetArg> for Dataset {
    fn from(d: DatasetArg) -> Self {
        match d {
            DatasetArg::Olid => Dataset::Olid,
            DatasetArg::Davidson => Dataset::Davidson,
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::Prep { input, out } => commands::prep(&input, &out),
        Cmd::Train(args) => {
            let cfg = config::load(&args.config, &args.overrides)?;
            cfg.check_trainable()?;
            commands::train(&cfg)
        }
        Cmd::Eval {
            model,
            dataset,
            data,
            labels,
            split,
            parses,
            report,
            csv,
        } => {
            let (checkpoint, vocab) = model.resolve()?;
            commands::eval(&EvalArgs {
                checkpoint,
                vocab,
                dataset: dataset.into(),
                data,
                labels,
                split,
                parses,
                report,
                csv,
            })
        }
        Cmd::Predict {
            model,
            input,
            out,
            parses,
            parser_cmd,
        } => {
            let (checkpoint, vocab) = model.resolve()?;
            let source = match (parses, parser_cmd) {
                (Some(p), _) => ParseSource::Sidecar(p),
                (None, Some(c)) => ParseSource::Command(c),
                (None, None) => return Err(Failure::config("give --parses or --parser-cmd")),
            };
            commands::predict(&checkpoint, &vocab, &input, &out, &source)
        }
        Cmd::Baseline {
            report,
            config: args,
        } => {
            let cfg = config::load(&args.config, &args.overrides)?;
            commands::baseline(&cfg, report.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::OK
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
