//! `selfcheck` — sample responses, score them for hallucinations,
//! and evaluate detection quality.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 backend
//! failure.

mod backend_set;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use backend_set::BackendSet;
use commands::EvidenceMode;
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "selfcheck",
    version,
    about = "Sampling-based hallucination scoring for LLM responses"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. --set n_samples=5.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a main response plus N stochastic samples per concept.
    Sample {
        /// File with one concept per line.
        #[arg(long, value_name = "FILE")]
        concepts: PathBuf,
        /// Output dataset (JSONL).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Samples per concept (defaults to the configured n_samples).
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Score each sentence of each passage with the selected methods.
    Score {
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// Output scores (JSONL).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Comma-separated method ids, e.g.
        /// unigram-max,bertsim,nli,prompt,qa,avg-neg-logprob.
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        methods: Vec<String>,
        /// Check against "sampled" responses or the stored "reference".
        #[arg(long, default_value = "sampled")]
        evidence: String,
    },
    /// Compute detection and ranking quality from scores plus labels.
    Eval {
        #[arg(long, value_name = "FILE")]
        scores: PathBuf,
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// Output report (JSON).
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        /// Directory for PR-curve CSVs (default: <report dir>/curves).
        #[arg(long, value_name = "DIR")]
        curves_dir: Option<PathBuf>,
        /// Re-evaluate using only the first n samples, for each n.
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        sweep_n: Vec<usize>,
        /// Where to write the sweep CSV (default: <report dir>/sweep.csv).
        #[arg(long, value_name = "FILE")]
        sweep_out: Option<PathBuf>,
        /// Evaluate even when config or dataset digests do not match.
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic corpus with known ground truth.
    Synth {
        /// Output dataset (JSONL).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        concepts: usize,
        /// Sentences per passage.
        #[arg(long, default_value_t = 10)]
        sentences: usize,
        /// Probability that a sentence is hallucinated.
        #[arg(long, default_value_t = 0.5)]
        halluc_rate: f64,
        /// Label noise in [0, 1]: 0 = perfect separation, 1 = none.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Samples per passage (defaults to the configured n_samples).
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// 2 for backend failures, 1 for everything else.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(selfcheck::Error::Backend(_)) = cause.downcast_ref::<selfcheck::Error>() {
            return 2;
        }
        if cause.downcast_ref::<selfcheck::error::BackendError>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = RunConfig::load(cli.config.as_deref(), &cli.sets)?;
    match &cli.command {
        Command::Sample { concepts, out, n_samples } => {
            let backends = BackendSet::from_config(&config)?;
            commands::cmd_sample(&config, &backends, concepts, out, *n_samples)
        }
        Command::Score { dataset, out, methods, evidence } => {
            let backends = BackendSet::from_config(&config)?;
            let mode = EvidenceMode::parse(evidence)?;
            commands::cmd_score(&config, &backends, dataset, out, methods, mode)
        }
        Command::Eval {
            scores,
            dataset,
            report,
            curves_dir,
            sweep_n,
            sweep_out,
            force,
        } => commands::cmd_eval(
            &config,
            scores,
            dataset,
            report,
            curves_dir.as_deref(),
            sweep_n,
            sweep_out.as_deref(),
            *force,
        ),
        Command::Synth {
            out,
            concepts,
            sentences,
            halluc_rate,
            noise,
            n_samples,
            seed,
        } => commands::cmd_synth(
            &config,
            out,
            *concepts,
            *sentences,
            *halluc_rate,
            *noise,
            *n_samples,
            *seed,
        ),
    }
}
