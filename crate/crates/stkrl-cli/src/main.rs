//! Command-line frontend. Settings resolve in three layers: built-in
//! defaults, then a `key = value` config file (`--config`, or the
//! `STKRL_CONFIG` environment variable when the flag is absent), then
//! explicit flags. Machine-readable output goes to stdout as TSV; progress
//! and diagnostics go to stderr. Exit codes: 0 success, 1 runtime failure
//! (including a failed gradient check), 2 configuration or usage errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stkrl::encoders::EncoderKind;
use stkrl::model::{AggregationMode, EnergyMode, LossMode};
use stkrl::numerics::NormKind;
use stkrl::Error;

use config::CliConfig;

#[derive(Parser)]
#[command(
    name = "stkrl",
    about = "Joint structural/textual knowledge-graph embeddings",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file of `key = value` lines (`#` starts a comment).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global random seed; derived streams use fixed offsets from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for internal parallelism (1 = sequential).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Sentence encoder: rnn, rnn-pool or lstm.
    #[arg(long, global = true)]
    encoder: Option<String>,

    /// Sentence aggregation: top-m or mean.
    #[arg(long, global = true)]
    attention: Option<String>,

    /// Ranking loss layout: four-hinges or summed.
    #[arg(long, global = true)]
    loss_mode: Option<String>,

    /// Energy composition: full or transE-only.
    #[arg(long, global = true)]
    energy_mode: Option<String>,

    /// Distance norm for energies: l1 or l2.
    #[arg(long, global = true)]
    norm: Option<String>,

    /// Hinge margin.
    #[arg(long, global = true)]
    margin: Option<f64>,

    /// Entity/relation embedding dimension.
    #[arg(long, global = true)]
    dim: Option<usize>,

    /// Number of sentences kept by top-m attention.
    #[arg(long, global = true)]
    top_m: Option<usize>,

    /// Position ids are clipped to [-clip-d, clip-d].
    #[arg(long, global = true)]
    clip_d: Option<i32>,

    /// Training triples (TSV: head, relation, tail).
    #[arg(long, global = true)]
    train_triples: Option<PathBuf>,

    /// Validation triples.
    #[arg(long, global = true)]
    valid_triples: Option<PathBuf>,

    /// Test triples.
    #[arg(long, global = true)]
    test_triples: Option<PathBuf>,

    /// Raw text with one entity description block per line.
    #[arg(long, global = true)]
    text: Option<PathBuf>,

    /// Extracted sentence corpus (cache file).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,

    /// Pretrained word vectors (`word v_1 .. v_kw` lines).
    #[arg(long, global = true)]
    word_vectors: Option<PathBuf>,

    /// Checkpoint to load.
    #[arg(long, global = true)]
    checkpoint_in: Option<PathBuf>,

    /// Checkpoint to write.
    #[arg(long, global = true)]
    checkpoint_out: Option<PathBuf>,

    /// JSON report sidecar.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract and cache reference sentences from raw text.
    Extract,
    /// Generate a synthetic dataset (triples + corpus) for experiments.
    Synth,
    /// Train a model and write a checkpoint.
    Train,
    /// Triple classification: fit thresholds on valid, score test.
    EvalTc,
    /// Link prediction: mean rank and Hits@10, overall and per category.
    EvalLp,
    /// Print every entity's sentences ordered by attention score.
    RankSentences,
    /// Compare analytic gradients against finite differences on a toy task.
    Gradcheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) | Error::Argument(_) => 2,
        _ => 1,
    }
}

fn run(cli: &Cli) -> stkrl::Result<i32> {
    let config = resolve_config(cli)?;
    if config.threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Extract => commands::extract(&config),
        Command::Synth => commands::synth(&config),
        Command::Train => commands::train_cmd(&config),
        Command::EvalTc => commands::eval_tc(&config),
        Command::EvalLp => commands::eval_lp(&config),
        Command::RankSentences => commands::rank_sentences_cmd(&config),
        Command::Gradcheck => commands::gradcheck(&config),
    }
}

/// Builds the effective configuration: defaults, then the config file, then
/// command-line flags.
fn resolve_config(cli: &Cli) -> stkrl::Result<CliConfig> {
    let mut config = CliConfig::default();
    let file = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("STKRL_CONFIG").map(PathBuf::from));
    if let Some(path) = file {
        let contents = std::fs::read_to_string(&path)?;
        config.apply_file(&contents)?;
    }

    if let Some(seed) = cli.seed {
        config.hyper.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    if let Some(s) = &cli.encoder {
        config.hyper.encoder = EncoderKind::parse(s)?;
    }
    if let Some(s) = &cli.attention {
        config.hyper.aggregation = AggregationMode::parse(s)?;
    }
    if let Some(s) = &cli.loss_mode {
        config.hyper.loss_mode = LossMode::parse(s)?;
    }
    if let Some(s) = &cli.energy_mode {
        config.hyper.energy_mode = EnergyMode::parse(s)?;
    }
    if let Some(s) = &cli.norm {
        config.hyper.norm = NormKind::parse(s)?;
    }
    if let Some(v) = cli.margin {
        config.hyper.margin = v;
    }
    if let Some(v) = cli.dim {
        config.hyper.k = v;
    }
    if let Some(v) = cli.top_m {
        config.hyper.top_m = v;
    }
    if let Some(v) = cli.clip_d {
        config.hyper.clip_distance = v;
    }

    let paths = [
        (&cli.train_triples, &mut config.train_triples),
        (&cli.valid_triples, &mut config.valid_triples),
        (&cli.test_triples, &mut config.test_triples),
        (&cli.text, &mut config.text),
        (&cli.corpus, &mut config.corpus),
        (&cli.word_vectors, &mut config.word_vectors),
        (&cli.checkpoint_in, &mut config.checkpoint_in),
        (&cli.checkpoint_out, &mut config.checkpoint_out),
        (&cli.report, &mut config.report),
    ];
    for (flag, slot) in paths {
        if let Some(p) = flag {
            *slot = Some(p.clone());
        }
    }

    config.validate()?;
    Ok(config)
}
