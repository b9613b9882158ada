//! The `senseforge` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use senseforge_core::eval::{Dataset, SenseModel, SimilarityMetric};
use senseforge_core::pruning::{estimate_threshold, prune_model, ThresholdOptions};
use senseforge_core::{AttentionMode, NegativeTable, SenseMask, TrainConfig, Vocabulary};

use crate::corpus_file::{build_vocab, encode_corpus, TokenizeOptions};
use crate::datasets::{self, ParseOptions};
use crate::hogwild::train_parallel;
use crate::modelio::{self, Model, Precision};
use crate::progress::LossLog;
use crate::tasks;

#[derive(Debug, Parser)]
#[command(name = "senseforge", version, about = "Train, prune and evaluate multi-sense word embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a corpus
    Train(TrainArgs),
    /// Estimate the duplicate-sense threshold and write a sense mask
    Prune(PruneArgs),
    /// Train from scratch with a sense mask applied
    Retrain(RetrainArgs),
    /// Nearest neighbors of a word's senses
    Neighbors(NeighborsArgs),
    /// Context-free similarity (MaxSim) on a word-pair list
    EvalSim(EvalSimArgs),
    /// Contextual similarity (MaxSimC, AvgSimC) on SCWS-style data
    EvalContextual(EvalContextualArgs),
    /// WiC-style same-sense judgments
    EvalWic(EvalWicArgs),
    /// Write word-intrusion or sense-selection task CSVs
    ExportTasks(ExportTasksArgs),
    /// Print model header metadata
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sasi,
    Gasi,
    GasiBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F64,
    F32,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Whitespace-tokenized training text, read as one stream
    #[arg(long, env = "SENSEFORGE_CORPUS")]
    pub corpus: PathBuf,
    /// Lowercase all tokens
    #[arg(long, env = "SENSEFORGE_LOWERCASE")]
    pub lowercase: bool,
    /// Token marking a document or sentence break; windows never cross it
    #[arg(long, env = "SENSEFORGE_BOUNDARY")]
    pub boundary: Option<String>,
    /// Treat each line end as a boundary
    #[arg(long, env = "SENSEFORGE_LINE_BOUNDARIES")]
    pub line_boundaries: bool,
}

impl CorpusArgs {
    fn tokenize(&self) -> TokenizeOptions {
        TokenizeOptions {
            lowercase: self.lowercase,
            boundary: self.boundary.clone(),
            line_boundaries: self.line_boundaries,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long, value_enum, default_value = "gasi-beta", env = "SENSEFORGE_MODE")]
    pub mode: ModeArg,
    /// Embedding dimension
    #[arg(long, default_value_t = 300, env = "SENSEFORGE_DIM")]
    pub dim: usize,
    /// Senses per word
    #[arg(long, default_value_t = 3, env = "SENSEFORGE_SENSES")]
    pub senses: usize,
    /// Context words on each side of the center word
    #[arg(long, default_value_t = 5, env = "SENSEFORGE_WINDOW")]
    pub window: usize,
    #[arg(long, default_value_t = 5, env = "SENSEFORGE_EPOCHS")]
    pub epochs: usize,
    /// Initial learning rate, decayed linearly
    #[arg(long, default_value_t = 0.01, env = "SENSEFORGE_LR")]
    pub lr: f64,
    /// Context pairs per SGD step
    #[arg(long, default_value_t = 512, env = "SENSEFORGE_BATCH")]
    pub batch: usize,
    /// Negative samples per context pair
    #[arg(long, default_value_t = 5, env = "SENSEFORGE_NEGATIVES")]
    pub negatives: usize,
    /// Frequent-word subsampling threshold
    #[arg(long, default_value_t = 1e-4, env = "SENSEFORGE_SUBSAMPLE")]
    pub subsample: f64,
    /// Gumbel-softmax temperature (gasi, gasi-beta)
    #[arg(long, default_value_t = 0.5, env = "SENSEFORGE_TEMPERATURE")]
    pub temperature: f64,
    /// Gumbel noise scale (gasi-beta)
    #[arg(long, default_value_t = 0.4, env = "SENSEFORGE_BETA")]
    pub beta: f64,
    #[arg(long, default_value_t = 1, env = "SENSEFORGE_SEED")]
    pub seed: u64,
    /// Worker threads; more than one trains lock-free and is not reproducible
    #[arg(long, default_value_t = 1, env = "SENSEFORGE_THREADS")]
    pub threads: usize,
    /// Write `epoch,batch,lr,mean_loss` rows to this CSV file
    #[arg(long, env = "SENSEFORGE_LOSS_LOG")]
    pub loss_log: Option<PathBuf>,
    /// Batches between loss-log rows
    #[arg(long, default_value_t = 100, env = "SENSEFORGE_LOG_EVERY")]
    pub log_every: usize,
    /// Float width in the written model file
    #[arg(long, value_enum, default_value = "f64", env = "SENSEFORGE_PRECISION")]
    pub precision: PrecisionArg,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output model file
    #[arg(short, long, env = "SENSEFORGE_OUTPUT")]
    pub output: PathBuf,
    /// Use this `word<TAB>count` vocabulary instead of counting the corpus
    #[arg(long, env = "SENSEFORGE_VOCAB", conflicts_with_all = ["max_vocab", "min_count"])]
    pub vocab: Option<PathBuf>,
    /// Keep at most this many word types
    #[arg(long, env = "SENSEFORGE_MAX_VOCAB")]
    pub max_vocab: Option<usize>,
    /// Drop word types seen fewer times
    #[arg(long, default_value_t = 5, env = "SENSEFORGE_MIN_COUNT")]
    pub min_count: u64,
    /// Also write the vocabulary as `word<TAB>count` lines
    #[arg(long, env = "SENSEFORGE_SAVE_VOCAB")]
    pub save_vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RetrainArgs {
    /// Model whose vocabulary and sense count are reused
    #[arg(long, env = "SENSEFORGE_MODEL")]
    pub model: PathBuf,
    /// Sense mask written by `prune`
    #[arg(long, env = "SENSEFORGE_MASK")]
    pub mask: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(short, long, env = "SENSEFORGE_OUTPUT")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, env = "SENSEFORGE_MODEL")]
    pub model: PathBuf,
    /// Sense mask file overriding the one stored in the model
    #[arg(long, env = "SENSEFORGE_MASK")]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output mask file
    #[arg(short, long, env = "SENSEFORGE_OUTPUT")]
    pub output: PathBuf,
    /// Also write a copy of the model carrying the new mask
    #[arg(long, env = "SENSEFORGE_OUTPUT_MODEL")]
    pub output_model: Option<PathBuf>,
    /// Fixed duplicate threshold (cosine distance) instead of estimating it
    #[arg(long, env = "SENSEFORGE_LAMBDA")]
    pub lambda: Option<f64>,
    /// Words drawn from the noise distribution for threshold estimation
    #[arg(long, default_value_t = 100, env = "SENSEFORGE_SAMPLE_WORDS")]
    pub sample_words: usize,
    /// Nearest senses inspected per sampled sense
    #[arg(long, default_value_t = 5, env = "SENSEFORGE_NEIGHBORS")]
    pub neighbors: usize,
    #[arg(long, default_value_t = 1, env = "SENSEFORGE_SEED")]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct NeighborsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, env = "SENSEFORGE_WORD")]
    pub word: String,
    /// Query sense; every active sense when omitted
    #[arg(long, env = "SENSEFORGE_SENSE")]
    pub sense: Option<u32>,
    #[arg(long, default_value_t = 10, env = "SENSEFORGE_TOP")]
    pub top: usize,
    /// List each neighboring word once, at its best sense
    #[arg(long, env = "SENSEFORGE_DEDUP")]
    pub dedup: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Fail on malformed lines instead of skipping them
    #[arg(long, env = "SENSEFORGE_STRICT")]
    pub strict: bool,
    /// Lowercase dataset tokens
    #[arg(long, env = "SENSEFORGE_LOWERCASE")]
    pub lowercase: bool,
}

impl DatasetArgs {
    fn options(&self) -> ParseOptions {
        ParseOptions {
            strict: self.strict,
            lowercase: self.lowercase,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalSimArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `word1 word2 score` lines
    #[arg(long, env = "SENSEFORGE_PAIRS")]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub dataset: DatasetArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    All,
    MaxSimC,
    AvgSimC,
    MaxSim,
}

#[derive(Debug, Clone, Args)]
pub struct EvalContextualArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// SCWS-style tab-separated file
    #[arg(long, env = "SENSEFORGE_DATASET")]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "all", env = "SENSEFORGE_METRIC")]
    pub metric: MetricArg,
    /// Context words on each side of the target
    #[arg(long, default_value_t = 5, env = "SENSEFORGE_WINDOW")]
    pub window: usize,
    #[command(flatten)]
    pub parse: DatasetArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalWicArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Tab-separated `target, pos, i-j, context1, context2` lines
    #[arg(long, env = "SENSEFORGE_DATA")]
    pub data: PathBuf,
    /// `T`/`F` labels, one per instance
    #[arg(long, env = "SENSEFORGE_GOLD")]
    pub gold: Option<PathBuf>,
    /// Write one `T`/`F` judgment per instance here
    #[arg(long, env = "SENSEFORGE_PREDICTIONS")]
    pub predictions: Option<PathBuf>,
    /// Seed for the coin flips on monosemous and unknown targets
    #[arg(long, default_value_t = 1, env = "SENSEFORGE_SEED")]
    pub seed: u64,
    #[arg(long, default_value_t = 5, env = "SENSEFORGE_WINDOW")]
    pub window: usize,
    #[command(flatten)]
    pub parse: DatasetArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskKind {
    Intrusion,
    Selection,
}

#[derive(Debug, Clone, Args)]
pub struct ExportTasksArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, env = "SENSEFORGE_KIND")]
    pub kind: TaskKind,
    /// Target words for intrusion tasks, one per line
    #[arg(long, env = "SENSEFORGE_WORDS")]
    pub words: Option<PathBuf>,
    /// `<b>`-marked sentences for selection tasks, one per line
    #[arg(long, env = "SENSEFORGE_SENTENCES")]
    pub sentences: Option<PathBuf>,
    /// Intrusion tasks per sense
    #[arg(long, default_value_t = 3, env = "SENSEFORGE_PER_SENSE")]
    pub per_sense: usize,
    #[arg(long, default_value_t = 5, env = "SENSEFORGE_WINDOW")]
    pub window: usize,
    #[arg(long, default_value_t = 1, env = "SENSEFORGE_SEED")]
    pub seed: u64,
    #[arg(long, env = "SENSEFORGE_LOWERCASE")]
    pub lowercase: bool,
    /// Output CSV file
    #[arg(short, long, env = "SENSEFORGE_OUTPUT")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InfoArgs {
    #[arg(long, env = "SENSEFORGE_MODEL")]
    pub model: PathBuf,
}

/// A problem with the command line itself (exit status 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn explicit(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine | ValueSource::EnvVariable))
}

/// Training configuration from the flags, rejecting flags that the chosen
/// mode ignores.
fn train_config(h: &HyperArgs, m: &ArgMatches) -> anyhow::Result<TrainConfig> {
    let mode = match h.mode {
        ModeArg::Sasi => {
            for flag in ["temperature", "beta"] {
                if explicit(m, flag) {
                    return Err(usage(format!("--{flag} has no effect with --mode sasi")));
                }
            }
            AttentionMode::sasi()
        }
        ModeArg::Gasi => {
            if explicit(m, "beta") {
                return Err(usage("--beta is fixed to 1 in --mode gasi; use --mode gasi-beta"));
            }
            AttentionMode::gasi(h.temperature)
        }
        ModeArg::GasiBeta => AttentionMode::gasi_beta(h.temperature, h.beta),
    };
    if h.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let config = TrainConfig {
        dim: h.dim,
        senses: h.senses,
        window: h.window,
        epochs: h.epochs,
        initial_lr: h.lr,
        batch: h.batch,
        negatives: h.negatives,
        subsample: h.subsample,
        mode,
        seed: h.seed,
        ..TrainConfig::default()
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn precision(p: PrecisionArg) -> Precision {
    match p {
        PrecisionArg::F64 => Precision::F64,
        PrecisionArg::F32 => Precision::F32,
    }
}

fn run_training(
    ids: &[u32],
    vocab: &Vocabulary,
    config: &TrainConfig,
    mask: Option<&SenseMask>,
    h: &HyperArgs,
    out: &mut impl Write,
) -> anyhow::Result<senseforge_core::ModelParams> {
    let log_file = match &h.loss_log {
        Some(p) => Some(std::io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => None,
    };
    let mut log = LossLog::new(log_file, h.log_every);
    eprintln!(
        "training {} on {} tokens, {} word types, K={}, d={}",
        config.mode.variant.name(),
        ids.len(),
        vocab.len(),
        config.senses,
        config.dim
    );
    let start = Instant::now();
    let params = train_parallel(ids, vocab, config, mask, h.threads, &mut log)?;
    let secs = start.elapsed().as_secs_f64();
    eprintln!(
        "trained in {secs:.1}s ({:.0} tokens/s)",
        (ids.len() * config.epochs) as f64 / secs.max(1e-9)
    );
    let means = log.finish().context("writing loss log")?;
    for (e, l) in means.iter().enumerate() {
        writeln!(out, "epoch\t{}\t{l:.6}", e + 1)?;
    }
    Ok(params)
}

fn cmd_train(a: &TrainArgs, m: &ArgMatches, out: &mut impl Write) -> anyhow::Result<()> {
    let config = train_config(&a.hyper, m)?;
    let tok = a.corpus.tokenize();
    let vocab = match &a.vocab {
        Some(p) => modelio::load_vocab(p)?,
        None => build_vocab(&a.corpus.corpus, &tok, a.max_vocab.unwrap_or(usize::MAX), a.min_count)?,
    };
    if vocab.is_empty() {
        bail!("{}: no word type survives the vocabulary cutoffs", a.corpus.corpus.display());
    }
    if let Some(p) = &a.save_vocab {
        modelio::save_vocab(p, &vocab)?;
    }
    let ids = encode_corpus(&a.corpus.corpus, &tok, &vocab)?;
    let params = run_training(&ids, &vocab, &config, None, &a.hyper, out)?;
    modelio::save_model(&a.output, &params, &vocab, None, precision(a.hyper.precision))?;
    Ok(())
}

fn cmd_retrain(a: &RetrainArgs, m: &ArgMatches, out: &mut impl Write) -> anyhow::Result<()> {
    let header = modelio::read_header(&a.model)?;
    let base = modelio::load_model(&a.model)?;
    let k = base.params.senses();
    let mut hyper = a.hyper.clone();
    if explicit(m, "senses") && hyper.senses != k {
        return Err(usage(format!("--senses {} disagrees with the model's {k} senses", hyper.senses)));
    }
    hyper.senses = k;
    if !explicit(m, "dim") {
        hyper.dim = header.dim as usize;
    }
    let config = train_config(&hyper, m)?;
    let (mask, _) = modelio::load_mask(&a.mask, &base.vocab, k)?;
    let ids = encode_corpus(&a.corpus.corpus, &a.corpus.tokenize(), &base.vocab)?;
    let params = run_training(&ids, &base.vocab, &config, Some(&mask), &hyper, out)?;
    modelio::save_model(&a.output, &params, &base.vocab, Some(&mask), precision(hyper.precision))?;
    Ok(())
}

fn load(a: &ModelArgs) -> anyhow::Result<Model> {
    let mut model = modelio::load_model(&a.model)?;
    if let Some(p) = &a.mask {
        let (mask, _) = modelio::load_mask(p, &model.vocab, model.params.senses())?;
        model.mask = Some(mask);
    }
    Ok(model)
}

fn cmd_prune(a: &PruneArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let model = load(&a.model)?;
    let (lambda, estimate) = match a.lambda {
        Some(l) if l.is_finite() => (l, None),
        Some(l) => return Err(usage(format!("--lambda {l} is not finite"))),
        None => {
            let table = NegativeTable::from_vocab(&model.vocab, senseforge_core::corpus::DEFAULT_NEGATIVE_POWER)?;
            let opts = ThresholdOptions {
                sample_words: a.sample_words,
                neighbors: a.neighbors,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let est = estimate_threshold(&model.params, &table, model.mask.as_ref(), opts, &mut rng)?;
            if est.dup_fallback {
                eprintln!("warning: no same-word senses among the neighbors; lambda is half the mean neighbor distance");
            }
            (est.lambda, Some(est))
        }
    };
    let (mask, summary) = prune_model(&model.params, lambda, model.mask.as_ref())?;
    modelio::save_mask(&a.output, &mask, &model.vocab, Some(lambda))?;
    if let Some(p) = &a.output_model {
        modelio::save_model(p, &model.params, &model.vocab, Some(&mask), Precision::F64)?;
    }
    writeln!(out, "lambda\t{lambda:.6}")?;
    if let Some(est) = &estimate {
        let mean = |v: &[f64]| senseforge_core::math::mean(v).map_or("nan".to_string(), |m| format!("{m:.6}"));
        writeln!(out, "dup_mean\t{}\t{}", mean(&est.dup_distances), est.dup_distances.len())?;
        writeln!(out, "nn_mean\t{}\t{}", mean(&est.nn_distances), est.nn_distances.len())?;
        writeln!(out, "dup_fallback\t{}", est.dup_fallback)?;
    }
    writeln!(out, "removed\t{}", summary.removed)?;
    writeln!(out, "mean_removed_per_word\t{:.6}", summary.mean_removed())?;
    for (i, d) in summary.per_decile.iter().enumerate() {
        writeln!(out, "decile\t{}\t{}\t{}", i + 1, d.words, d.removed)?;
    }
    Ok(())
}

fn sense_model<'a>(model: &'a Model, window: usize) -> anyhow::Result<SenseModel<'a>> {
    Ok(SenseModel::new(&model.params, &model.vocab, model.mask.as_ref(), window)?)
}

fn cmd_neighbors(a: &NeighborsArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let model = load(&a.model)?;
    let sm = sense_model(&model, 5)?;
    let w = model
        .vocab
        .id(&a.word)
        .with_context(|| format!("{:?} is not in the model vocabulary", a.word))?;
    let k = model.params.senses() as u32;
    let senses: Vec<u32> = match a.sense {
        Some(s) if s >= k => return Err(usage(format!("--sense {s} out of range; the model has {k} senses"))),
        Some(s) => vec![s],
        None => (0..k).filter(|&s| model.mask.as_ref().is_none_or(|m| m.is_active(w, s as usize))).collect(),
    };
    let index = sm.sense_index();
    for &s in &senses {
        if a.sense.is_none() {
            writeln!(out, ">{}#{s}", a.word)?;
        }
        for n in sm.nearest_words(&index, w, s, a.top, a.dedup)? {
            writeln!(out, "{}#{}\t{:.6}", model.vocab.word(n.word), n.sense, n.similarity)?;
        }
    }
    Ok(())
}

fn report_diagnostics(path: &Path, diags: &[datasets::Diagnostic]) {
    for d in diags.iter().take(20) {
        eprintln!("warning: {}:{}: skipped: {}", path.display(), d.line, d.message);
    }
    if diags.len() > 20 {
        eprintln!("warning: {}: {} more malformed lines skipped", path.display(), diags.len() - 20);
    }
}

fn cmd_eval_sim(a: &EvalSimArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let model = load(&a.model)?;
    let data = datasets::parse_plain_pairs(&a.pairs, a.dataset.options())?;
    report_diagnostics(&a.pairs, &data.diagnostics);
    let r = sense_model(&model, 5)?.evaluate(Dataset::Plain(&data.records), SimilarityMetric::MaxSim)?;
    writeln!(out, "{}\t{:.6}\t{:.6}", r.metric.name(), r.rho, r.coverage)?;
    Ok(())
}

fn cmd_eval_contextual(a: &EvalContextualArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let model = load(&a.model)?;
    let data = datasets::parse_contextual(&a.dataset, a.parse.options())?;
    report_diagnostics(&a.dataset, &data.diagnostics);
    let metrics: &[SimilarityMetric] = match a.metric {
        MetricArg::All => &[SimilarityMetric::MaxSimC, SimilarityMetric::AvgSimC, SimilarityMetric::MaxSim],
        MetricArg::MaxSimC => &[SimilarityMetric::MaxSimC],
        MetricArg::AvgSimC => &[SimilarityMetric::AvgSimC],
        MetricArg::MaxSim => &[SimilarityMetric::MaxSim],
    };
    let sm = sense_model(&model, a.window)?;
    for &metric in metrics {
        let r = sm.evaluate(Dataset::Contextual(&data.records), metric)?;
        writeln!(out, "{}\t{:.6}\t{:.6}", r.metric.name(), r.rho, r.coverage)?;
    }
    Ok(())
}

fn cmd_eval_wic(a: &EvalWicArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let model = load(&a.model)?;
    let data = datasets::parse_wic(&a.data, a.gold.as_deref(), a.parse.options())?;
    report_diagnostics(&a.data, &data.diagnostics);
    if data.records.is_empty() {
        bail!("{}: no WiC instances", a.data.display());
    }
    let sm = sense_model(&model, a.window)?;
    let judged = sm.wic_judge_all(&data.records, a.seed)?;
    if let Some(p) = &a.predictions {
        let text: String = judged.iter().map(|&j| if j { "T\n" } else { "F\n" }).collect();
        modelio::write_atomic(p, text.as_bytes())?;
    }
    let by_model = data
        .records
        .iter()
        .filter(|inst| {
            let w = model.vocab.id(&inst.target).or_else(|| {
                let t = inst.context1.target_token();
                (t == inst.context2.target_token()).then(|| model.vocab.id(t)).flatten()
            });
            w.is_some_and(|w| sm.active_senses(w) > 1)
        })
        .count();
    let coverage = by_model as f64 / data.records.len() as f64;
    match senseforge_core::eval::wic_accuracy(&data.records, &judged) {
        Some(acc) => writeln!(out, "WiC\t{acc:.6}\t{coverage:.6}")?,
        None => {
            eprintln!("no gold labels; printing judgments");
            for j in judged {
                writeln!(out, "{}", if j { "T" } else { "F" })?;
            }
        }
    }
    Ok(())
}

fn cmd_export_tasks(a: &ExportTasksArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let model = load(&a.model)?;
    let sm = sense_model(&model, a.window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut buf = Vec::new();
    let (count, skipped) = match a.kind {
        TaskKind::Intrusion => {
            let path = a.words.as_ref().ok_or_else(|| usage("--kind intrusion needs --words"))?;
            let words = datasets::read_word_list(path, a.lowercase)?;
            let mut ids = Vec::new();
            let mut unknown = 0;
            for w in &words {
                match model.vocab.id(w) {
                    Some(id) => ids.push(id),
                    None => unknown += 1,
                }
            }
            let (tasks, skipped) = sm.export_intrusion_tasks(&ids, a.per_sense, &mut rng)?;
            tasks::write_intrusion_csv(&mut buf, &tasks)?;
            (tasks.len(), skipped.len() + unknown)
        }
        TaskKind::Selection => {
            let path = a.sentences.as_ref().ok_or_else(|| usage("--kind selection needs --sentences"))?;
            let opts = ParseOptions {
                strict: false,
                lowercase: a.lowercase,
            };
            let sentences = datasets::parse_marked_sentences(path, opts)?;
            report_diagnostics(path, &sentences.diagnostics);
            let (tasks, skipped) = sm.export_sense_selection_tasks(&sentences.records, &mut rng)?;
            tasks::write_selection_csv(&mut buf, &tasks)?;
            (tasks.len(), skipped.len())
        }
    };
    modelio::write_atomic(&a.output, &buf)?;
    writeln!(out, "tasks\t{count}")?;
    writeln!(out, "skipped\t{skipped}")?;
    Ok(())
}

fn cmd_info(a: &InfoArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let h = modelio::read_header(&a.model)?;
    let model = modelio::load_model(&a.model)?;
    let active = model
        .mask
        .as_ref()
        .map_or(model.params.vocab_size() * model.params.senses(), |m| m.total_active());
    writeln!(out, "format_version\t{}", h.version)?;
    writeln!(out, "vocab_size\t{}", h.vocab_size)?;
    writeln!(out, "senses\t{}", h.senses)?;
    writeln!(out, "dim\t{}", h.dim)?;
    writeln!(out, "precision\t{}", if h.precision() == Precision::F32 { "f32" } else { "f64" })?;
    writeln!(out, "mask\t{}", h.has_mask())?;
    writeln!(out, "active_senses\t{active}")?;
    writeln!(out, "corpus_tokens\t{}", model.vocab.total_tokens())?;
    Ok(())
}

fn dispatch(cli: &Cli, m: &ArgMatches, out: &mut impl Write) -> anyhow::Result<()> {
    let sub = m.subcommand().map(|(_, s)| s).unwrap_or(m);
    match &cli.command {
        Command::Train(a) => cmd_train(a, sub, out),
        Command::Prune(a) => cmd_prune(a, out),
        Command::Retrain(a) => cmd_retrain(a, sub, out),
        Command::Neighbors(a) => cmd_neighbors(a, out),
        Command::EvalSim(a) => cmd_eval_sim(a, out),
        Command::EvalContextual(a) => cmd_eval_contextual(a, out),
        Command::EvalWic(a) => cmd_eval_wic(a, out),
        Command::ExportTasks(a) => cmd_export_tasks(a, out),
        Command::Info(a) => cmd_info(a, out),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let result = dispatch(&cli, &matches, &mut out).and_then(|()| out.flush().map_err(Into::into));
    match result {
        Ok(()) => 0,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
