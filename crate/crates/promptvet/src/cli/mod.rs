//! Command-line interface: the full pipeline as subcommands.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Results go to
//! stdout, diagnostics to stderr, and every artifact-producing run writes a
//! reproducing manifest next to its output. Configuration precedence is
//! CLI flag > config file > built-in default, with the resolved values
//! recorded in the manifest.

mod manifest;

pub use manifest::{manifest_path_for, LlmIdentity, RunManifest};

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classifier::{
    attribute, load_model, predict, save_model, train_with_record, FeatureConfig, NgramRange,
    TrainConfig,
};
use crate::corpus::{
    augment_longtail, builtin_templates, default_format_counts, default_payloads, load_corpus,
    merge, AugmentMode, Corpus,
};
use crate::evalharness::{
    build_adapter, emit_report, evaluate_with_options, flops_estimate, AdapterSpec,
    DimensionMode, ErrorPolicy, EvalOptions, EvalSuite, HttpAdapterConfig, ReportFormat,
};
use crate::llmclient::{LlmClient, LlmConfig, StubScript};
use crate::mof::{mof_pipeline, token_recheck, MofConfig, RetrainMode};
use crate::notinject::{build_notinject, Topic};
use crate::textproc::{build_rank_table, build_vocab, TokenizerConfig, Vocabulary};
use crate::trigger::{
    apply_denylist, apply_manual_review, identify_triggers, refine_with_llm_parallel,
    TriggerReport, TriggerStatus,
};

#[derive(Parser)]
#[command(
    name = "promptvet",
    version,
    about = "Prompt-injection guard toolkit: trigger analysis, over-defense datasets, guard training, debiasing, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus utilities: stats, merge, long-tail augmentation
    #[command(subcommand)]
    Corpus(CorpusAction),
    /// Token statistics and vocabulary construction
    #[command(subcommand)]
    Tokens(TokensAction),
    /// Identify trigger words by frequency-rank difference
    FindTriggers(FindTriggersArgs),
    /// Build the over-defense evaluation dataset
    BuildNotinject(BuildNotinjectArgs),
    /// Train the guard classifier
    Train(TrainArgs),
    /// Classify text with a trained model
    Predict(PredictArgs),
    /// Token-wise bias recheck of a trained model
    Recheck(RecheckArgs),
    /// Debiasing pipeline: train, recheck, synthesize, retrain
    MofTrain(MofTrainArgs),
    /// Three-dimensional evaluation of a guard
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LlmMode {
    Stub,
    Llm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RetrainModeArg {
    Scratch,
    Finetune,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Table,
    Json,
}

/// Entry point used by `main` and by integration tests.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            if kind == ErrorKind::DisplayHelp || kind == ErrorKind::DisplayVersion {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Corpus(action) => run_corpus(action),
        Command::Tokens(action) => run_tokens(action),
        Command::FindTriggers(args) => run_find_triggers(args),
        Command::BuildNotinject(args) => run_build_notinject(args),
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args),
        Command::Recheck(args) => run_recheck(args),
        Command::MofTrain(args) => run_mof_train(args),
        Command::Evaluate(args) => run_evaluate(args),
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn load_merged(paths: &[PathBuf], name: &str) -> Result<Corpus> {
    let mut corpora = Vec::with_capacity(paths.len());
    for path in paths {
        corpora.push(
            load_corpus(path).with_context(|| format!("loading {}", path.display()))?,
        );
    }
    Ok(if corpora.len() == 1 {
        corpora.pop().expect("one corpus")
    } else {
        merge(&corpora, name)
    })
}

fn build_client(mode: LlmMode, llm_config: Option<&Path>, seed: u64) -> Result<LlmClient> {
    match mode {
        LlmMode::Stub => Ok(LlmClient::stub(StubScript::default(), seed)),
        LlmMode::Llm => {
            let path = llm_config
                .ok_or_else(|| anyhow!("--mode llm requires --llm-config <file>"))?;
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let config: LlmConfig = serde_json::from_str(&raw)
                .with_context(|| format!("parsing {}", path.display()))?;
            Ok(LlmClient::http(config)?)
        }
    }
}

fn mode_name(mode: LlmMode) -> &'static str {
    match mode {
        LlmMode::Stub => "stub",
        LlmMode::Llm => "llm",
    }
}

// ---------------------------------------------------------------------------
// corpus
// ---------------------------------------------------------------------------

#[derive(Subcommand)]
enum CorpusAction {
    /// Print sample, label, source, and category counts
    Stats { path: PathBuf },
    /// Concatenate corpora (later duplicate ids are renamed)
    Merge {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "merged")]
        name: String,
    },
    /// Generate injection samples in long-tail carrier formats
    Augment {
        #[arg(long, value_enum, default_value = "stub")]
        mode: LlmMode,
        /// Per-format counts as inline JSON, e.g. '{"Email":48}'; defaults
        /// to the built-in long-tail table (435 samples)
        #[arg(long)]
        counts: Option<String>,
        /// Newline-separated payload file for stub mode
        #[arg(long)]
        payloads: Option<PathBuf>,
        #[arg(long)]
        llm_config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn run_corpus(action: CorpusAction) -> Result<()> {
    match action {
        CorpusAction::Stats { path } => {
            let corpus = load_corpus(&path)?;
            let (benign, injection) = corpus.label_counts();
            println!("samples\t{}", corpus.len());
            println!("benign\t{benign}");
            println!("injection\t{injection}");
            for (source, count) in corpus.source_counts() {
                println!("source\t{source}\t{count}");
            }
            for (category, count) in corpus.category_counts() {
                println!("category\t{category}\t{count}");
            }
            Ok(())
        }
        CorpusAction::Merge {
            paths,
            output,
            name,
        } => {
            let mut manifest = RunManifest::new(
                "corpus merge",
                serde_json::json!({"paths": paths, "name": name, "output": output}),
            );
            let mut corpora = Vec::new();
            for path in &paths {
                manifest.record_input(path)?;
                corpora.push(load_corpus(path)?);
            }
            let merged = merge(&corpora, name);
            merged.save(&output)?;
            manifest.write_alongside(&output)?;
            eprintln!("merged {} samples into {}", merged.len(), output.display());
            Ok(())
        }
        CorpusAction::Augment {
            mode,
            counts,
            payloads,
            llm_config,
            seed,
            output,
        } => {
            let counts_map: BTreeMap<String, usize> = match &counts {
                Some(raw) => serde_json::from_str(raw).context("parsing --counts JSON")?,
                None => default_format_counts(),
            };
            let payload_list = match &payloads {
                Some(path) => std::fs::read_to_string(path)?
                    .lines()
                    .map(|l| l.trim().to_string())
                    .filter(|l| !l.is_empty())
                    .collect(),
                None => default_payloads(),
            };
            let mut manifest = RunManifest::new(
                "corpus augment",
                serde_json::json!({
                    "mode": mode_name(mode),
                    "counts": counts_map,
                    "output": output,
                }),
            );
            manifest.record_seed("augment", seed);
            if let Some(path) = &payloads {
                manifest.record_input(path)?;
            }
            let client = match mode {
                LlmMode::Stub => None,
                LlmMode::Llm => Some(build_client(mode, llm_config.as_deref(), seed)?),
            };
            if let Some(c) = &client {
                manifest.record_llm(mode_name(mode), c.identity());
            }
            let corpus = augment_longtail(
                &payload_list,
                &builtin_templates(),
                &counts_map,
                match mode {
                    LlmMode::Stub => AugmentMode::Stub,
                    LlmMode::Llm => AugmentMode::Llm,
                },
                client.as_ref(),
            )?;
            corpus.save(&output)?;
            manifest.write_alongside(&output)?;
            eprintln!("wrote {} augmented samples to {}", corpus.len(), output.display());
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// tokens
// ---------------------------------------------------------------------------

#[derive(Subcommand)]
enum TokensAction {
    /// Print the top-N rank table as tab-separated word/freq/rank
    Stats {
        corpus: PathBuf,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Build a vocabulary JSON from one or more corpora
    Vocab {
        #[arg(required = true)]
        corpora: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        max_size: Option<usize>,
    },
}

fn run_tokens(action: TokensAction) -> Result<()> {
    match action {
        TokensAction::Stats { corpus, top } => {
            let corpus = load_corpus(&corpus)?;
            let table = build_rank_table(&corpus, &TokenizerConfig::default());
            for (word, freq, rank) in table.iter().take(top) {
                println!("{word}\t{freq}\t{rank}");
            }
            Ok(())
        }
        TokensAction::Vocab {
            corpora,
            output,
            max_size,
        } => {
            let mut manifest = RunManifest::new(
                "tokens vocab",
                serde_json::json!({"corpora": corpora, "max_size": max_size}),
            );
            let mut loaded = Vec::new();
            for path in &corpora {
                manifest.record_input(path)?;
                loaded.push(load_corpus(path)?);
            }
            let refs: Vec<&Corpus> = loaded.iter().collect();
            let vocab = build_vocab(&refs, &TokenizerConfig::default(), max_size);
            vocab.save(&output)?;
            manifest.write_alongside(&output)?;
            eprintln!("wrote {} tokens to {}", vocab.len(), output.display());
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// find-triggers
// ---------------------------------------------------------------------------

#[derive(Args)]
struct FindTriggersArgs {
    #[arg(long)]
    benign: PathBuf,
    #[arg(long)]
    malicious: PathBuf,
    #[arg(short, long, default_value_t = 200)]
    k: usize,
    /// Run the harmfulness refinement pass over the candidates
    #[arg(long)]
    refine: bool,
    /// Reviewer denylist applied after refinement; without it every
    /// approved word is finalized
    #[arg(long)]
    denylist: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "stub")]
    mode: LlmMode,
    #[arg(long)]
    llm_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum concurrent refinement queries
    #[arg(long, default_value_t = 1)]
    max_in_flight: usize,
    #[arg(short, long)]
    output: PathBuf,
}

fn run_find_triggers(args: FindTriggersArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "find-triggers",
        serde_json::json!({
            "benign": args.benign,
            "malicious": args.malicious,
            "k": args.k,
            "refine": args.refine,
            "denylist": args.denylist,
            "mode": mode_name(args.mode),
            "max_in_flight": args.max_in_flight,
        }),
    );
    manifest.record_input(&args.benign)?;
    manifest.record_input(&args.malicious)?;
    manifest.record_seed("stub", args.seed);

    let benign = load_corpus(&args.benign)?;
    let malicious = load_corpus(&args.malicious)?;
    let config = TokenizerConfig::default();
    let benign_table = build_rank_table(&benign, &config);
    let malicious_table = build_rank_table(&malicious, &config);
    let mut report = identify_triggers(&benign_table, &malicious_table, args.k)?;

    if args.refine {
        let client = build_client(args.mode, args.llm_config.as_deref(), args.seed)?;
        manifest.record_llm(mode_name(args.mode), client.identity());
        report = refine_with_llm_parallel(&report, &client, args.max_in_flight)?;
        report = match &args.denylist {
            Some(path) => {
                manifest.record_input(path)?;
                apply_manual_review(&report, path)?
            }
            None => apply_denylist(&report, &Default::default()),
        };
    } else if let Some(path) = &args.denylist {
        manifest.record_input(path)?;
        report = apply_manual_review(&report, path)?;
    }

    report.save(&args.output)?;
    manifest.write_alongside(&args.output)?;
    let final_count = report.words_with_status(TriggerStatus::Final).len();
    eprintln!(
        "wrote {} candidates ({} final) to {}",
        report.candidates.len(),
        final_count,
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// build-notinject
// ---------------------------------------------------------------------------

#[derive(Args)]
struct BuildNotinjectArgs {
    /// Trigger report JSON (words with status "final" are used)
    #[arg(long)]
    triggers: PathBuf,
    #[arg(long, default_value_t = 113)]
    per_subset: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "stub")]
    mode: LlmMode,
    #[arg(long)]
    llm_config: Option<PathBuf>,
    /// Optional per-subset topic mixes as inline JSON, e.g.
    /// '{"1": {"Common Queries": 58, "Techniques": 16, "Virtual Creation": 14, "Multilingual": 25}}'
    #[arg(long)]
    topic_mix: Option<String>,
    /// Newline-separated sample ids rejected by a human reviewer
    #[arg(long)]
    reviewer_file: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

fn parse_topic_mixes(raw: &str) -> Result<[Option<BTreeMap<Topic, usize>>; 3]> {
    let by_subset: BTreeMap<String, BTreeMap<String, usize>> =
        serde_json::from_str(raw).context("parsing --topic-mix JSON")?;
    let mut mixes: [Option<BTreeMap<Topic, usize>>; 3] = [None, None, None];
    for (subset, counts) in by_subset {
        let n: usize = subset
            .parse()
            .ok()
            .filter(|n| (1..=3).contains(n))
            .ok_or_else(|| anyhow!("topic mix subset key must be 1..=3, got '{subset}'"))?;
        let mut mix = BTreeMap::new();
        for (name, count) in counts {
            let topic = Topic::parse(&name)
                .ok_or_else(|| anyhow!("unknown topic '{name}' in --topic-mix"))?;
            mix.insert(topic, count);
        }
        mixes[n - 1] = Some(mix);
    }
    Ok(mixes)
}

fn run_build_notinject(args: BuildNotinjectArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "build-notinject",
        serde_json::json!({
            "triggers": args.triggers,
            "per_subset": args.per_subset,
            "mode": mode_name(args.mode),
            "topic_mix": args.topic_mix,
        }),
    );
    manifest.record_input(&args.triggers)?;
    manifest.record_seed("generation", args.seed);

    let report = TriggerReport::load(&args.triggers)?;
    let triggers = report.words_with_status(TriggerStatus::Final);
    if triggers.is_empty() {
        bail!(
            "trigger report has no finalized words; run find-triggers with --refine (and optionally --denylist) first"
        );
    }
    let mixes = match &args.topic_mix {
        Some(raw) => parse_topic_mixes(raw)?,
        None => [None, None, None],
    };
    let client = build_client(args.mode, args.llm_config.as_deref(), args.seed)?;
    manifest.record_llm(mode_name(args.mode), client.identity());

    let mut build = build_notinject(&triggers, args.per_subset, &mixes, &client, args.seed)?;
    if let Some(path) = &args.reviewer_file {
        manifest.record_input(path)?;
        build = crate::notinject::apply_reviewer_file(&build, path)?;
    }
    build.corpus.save(&args.output)?;
    let sidecar = args.output.with_file_name(format!(
        "{}.manifest.json",
        args.output
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    ));
    std::fs::write(
        &sidecar,
        serde_json::to_string_pretty(&build.manifest).expect("manifest serializes"),
    )?;
    manifest.write_alongside(&args.output)?;
    eprintln!(
        "wrote {} samples ({:?} per subset) to {}",
        build.corpus.len(),
        build.manifest.subset_sizes,
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Config-file shape mirroring the train flags; all fields optional.
#[derive(Debug, Default, serde::Deserialize, serde::Serialize)]
struct TrainFileConfig {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    warmup_steps: Option<usize>,
    schedule: Option<crate::classifier::Schedule>,
    l2: Option<f64>,
    seed: Option<u64>,
    hash_dimension: Option<usize>,
    word_ngrams: Option<[usize; 2]>,
    char_ngrams: Option<[usize; 2]>,
    threshold: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hash_dim: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

struct ResolvedTrain {
    feature_config: FeatureConfig,
    train_config: TrainConfig,
    threshold: f64,
}

fn resolve_train_config(args: &TrainArgs) -> Result<ResolvedTrain> {
    let file: TrainFileConfig = match &args.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TrainFileConfig::default(),
    };
    let defaults_tc = TrainConfig::default();
    let defaults_fc = FeatureConfig::default();
    let train_config = TrainConfig {
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults_tc.epochs),
        batch_size: args
            .batch_size
            .or(file.batch_size)
            .unwrap_or(defaults_tc.batch_size),
        learning_rate: args
            .learning_rate
            .or(file.learning_rate)
            .unwrap_or(defaults_tc.learning_rate),
        warmup_steps: args
            .warmup_steps
            .or(file.warmup_steps)
            .unwrap_or(defaults_tc.warmup_steps),
        schedule: file.schedule.unwrap_or(defaults_tc.schedule),
        l2: args.l2.or(file.l2).unwrap_or(defaults_tc.l2),
        seed: args.seed.or(file.seed).unwrap_or(defaults_tc.seed),
    };
    let feature_config = FeatureConfig {
        hash_dimension: args
            .hash_dim
            .or(file.hash_dimension)
            .unwrap_or(defaults_fc.hash_dimension),
        word_ngrams: file
            .word_ngrams
            .map(|[lo, hi]| NgramRange::new(lo, hi))
            .unwrap_or(defaults_fc.word_ngrams),
        char_ngrams: file
            .char_ngrams
            .map(|[lo, hi]| NgramRange::new(lo, hi))
            .unwrap_or(defaults_fc.char_ngrams),
        tokenizer: TokenizerConfig::default(),
    };
    Ok(ResolvedTrain {
        feature_config,
        train_config,
        threshold: args.threshold.or(file.threshold).unwrap_or(0.5),
    })
}

fn run_train(args: TrainArgs) -> Result<()> {
    let resolved = resolve_train_config(&args)?;
    let mut manifest = RunManifest::new(
        "train",
        serde_json::json!({
            "data": args.data,
            "feature_config": resolved.feature_config,
            "train_config": resolved.train_config,
            "threshold": resolved.threshold,
        }),
    );
    for path in &args.data {
        manifest.record_input(path)?;
    }
    manifest.record_seed("train", resolved.train_config.seed);

    let corpus = load_merged(&args.data, "train")?;
    let (mut model, record) =
        train_with_record(&corpus, &resolved.feature_config, &resolved.train_config)?;
    model.threshold = resolved.threshold;
    save_model(&model, &args.output)?;
    manifest.write_alongside(&args.output)?;
    eprintln!(
        "trained on {} samples; epoch losses {:?}",
        corpus.len(),
        record
            .epoch_losses
            .iter()
            .map(|l| (l * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    );
    eprintln!("saved model to {}", args.output.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

#[derive(Args)]
#[group(required = true, multiple = false)]
struct PredictInput {
    /// Classify a single text
    #[arg(long, group = "input")]
    text: Option<String>,
    /// Classify every sample of a corpus file
    #[arg(long, group = "input")]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: PredictInput,
    /// Also print per-token score contributions (single text only)
    #[arg(long)]
    attribute: bool,
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    if let Some(text) = &args.input.text {
        let prediction = predict(&model, text);
        println!("{}\t{:.6}", prediction.label, prediction.probability_injection);
        if args.attribute {
            for (token, contribution) in attribute(&model, text) {
                println!("{token}\t{contribution:+.6}");
            }
        }
        return Ok(());
    }
    let path = args.input.file.as_ref().expect("clap enforces the input group");
    let corpus = load_corpus(path)?;
    for sample in corpus.samples() {
        let prediction = predict(&model, &sample.text);
        println!(
            "{}\t{}\t{:.6}",
            sample.id, prediction.label, prediction.probability_injection
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// recheck
// ---------------------------------------------------------------------------

#[derive(Args)]
struct RecheckArgs {
    #[arg(long)]
    model: PathBuf,
    /// Vocabulary JSON (array of tokens)
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Corpora to build the vocabulary from instead
    #[arg(long, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

fn run_recheck(args: RecheckArgs) -> Result<()> {
    if args.vocab.is_none() && args.data.is_empty() {
        bail!("recheck needs --vocab <file> or --data <corpus...>");
    }
    let mut manifest = RunManifest::new(
        "recheck",
        serde_json::json!({"model": args.model, "vocab": args.vocab, "data": args.data}),
    );
    manifest.record_input(&args.model)?;
    let model = load_model(&args.model)?;
    let vocab = match &args.vocab {
        Some(path) => {
            manifest.record_input(path)?;
            Vocabulary::load(path)?
        }
        None => {
            for path in &args.data {
                manifest.record_input(path)?;
            }
            let corpus = load_merged(&args.data, "recheck")?;
            build_vocab(&[&corpus], &TokenizerConfig::default(), None)
        }
    };
    let report = token_recheck(&model, &vocab);
    report.save(&args.output)?;
    manifest.write_alongside(&args.output)?;
    eprintln!(
        "flagged {} of {} tokens; wrote {}",
        report.biased_tokens.len(),
        report.checked_count,
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// mof-train
// ---------------------------------------------------------------------------

#[derive(Args)]
struct MofTrainArgs {
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// MofConfig JSON file; --mode and --seed override it
    #[arg(long)]
    mof_config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<RetrainModeArg>,
    /// Train config JSON (same shape as `train --config`)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hash_dim: Option<usize>,
    #[arg(long, value_enum, default_value = "stub")]
    llm_mode: LlmMode,
    #[arg(long)]
    llm_config: Option<PathBuf>,
    /// External vocabulary JSON; defaults to the training-data vocabulary
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Also save the stage-1 bias report here
    #[arg(long)]
    emit_bias: Option<PathBuf>,
    /// Also save the synthetic benign corpus here
    #[arg(long)]
    emit_synthetic: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

fn run_mof_train(args: MofTrainArgs) -> Result<()> {
    let mut mof_config: MofConfig = match &args.mof_config {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?
        }
        None => MofConfig::default(),
    };
    if let Some(mode) = args.mode {
        mof_config.retrain = match mode {
            RetrainModeArg::Scratch => RetrainMode::FromScratch,
            RetrainModeArg::Finetune => RetrainMode::Finetune,
        };
    }
    if let Some(seed) = args.seed {
        mof_config.seed = seed;
    }
    let train_args = TrainArgs {
        data: args.data.clone(),
        config: args.config.clone(),
        epochs: None,
        batch_size: None,
        learning_rate: None,
        warmup_steps: None,
        l2: None,
        seed: args.seed,
        hash_dim: args.hash_dim,
        threshold: None,
        output: args.output.clone(),
    };
    let resolved = resolve_train_config(&train_args)?;

    let mut manifest = RunManifest::new(
        "mof-train",
        serde_json::json!({
            "data": args.data,
            "mof_config": mof_config,
            "feature_config": resolved.feature_config,
            "train_config": resolved.train_config,
            "llm_mode": mode_name(args.llm_mode),
        }),
    );
    for path in &args.data {
        manifest.record_input(path)?;
    }
    manifest.record_seed("train", resolved.train_config.seed);
    manifest.record_seed("mof", mof_config.seed);

    let corpus = load_merged(&args.data, "mof-train")?;
    let vocab = match &args.vocab {
        Some(path) => {
            manifest.record_input(path)?;
            Vocabulary::load(path)?
        }
        None => build_vocab(&[&corpus], &TokenizerConfig::default(), None),
    };
    let client = build_client(args.llm_mode, args.llm_config.as_deref(), mof_config.seed)?;
    manifest.record_llm(mode_name(args.llm_mode), client.identity());

    let outcome = mof_pipeline(
        &corpus,
        &vocab,
        &resolved.feature_config,
        &resolved.train_config,
        &mof_config,
        &client,
    )?;
    let mut final_model = outcome.final_model;
    final_model.threshold = resolved.threshold;
    save_model(&final_model, &args.output)?;
    manifest.write_alongside(&args.output)?;
    if let Some(path) = &args.emit_bias {
        outcome.bias_report.save(path)?;
    }
    if let Some(path) = &args.emit_synthetic {
        outcome.synthetic.save(path)?;
    }
    eprintln!(
        "stage-1 flagged {} of {} tokens; synthesized {} benign samples; saved final model to {}",
        outcome.bias_report.biased_tokens.len(),
        outcome.bias_report.checked_count,
        outcome.synthetic.len(),
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args)]
#[group(required = true, multiple = false)]
struct EvaluateTarget {
    /// Internal model file
    #[arg(long, group = "target")]
    model: Option<PathBuf>,
    /// HTTP adapter config JSON
    #[arg(long, group = "target")]
    endpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Suite manifest JSON: {"benign": [...], "malicious": [...], "overdefense": [...]}
    #[arg(long)]
    suite: PathBuf,
    #[command(flatten)]
    target: EvaluateTarget,
    #[arg(long, default_value_t = 3)]
    timing_repeats: usize,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    /// Include a GFLOPs-per-sample estimate (internal models only)
    #[arg(long)]
    flops: bool,
    /// Abort on adapter failures instead of scoring them incorrect
    #[arg(long)]
    strict: bool,
    /// Pool samples within a dimension instead of averaging per-set accuracies
    #[arg(long)]
    pooled: bool,
    /// Also write the JSON report here
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "evaluate",
        serde_json::json!({
            "suite": args.suite,
            "model": args.target.model,
            "endpoint": args.target.endpoint,
            "timing_repeats": args.timing_repeats,
            "pooled": args.pooled,
        }),
    );
    manifest.record_input(&args.suite)?;

    let spec = if let Some(model_path) = &args.target.model {
        manifest.record_input(model_path)?;
        AdapterSpec::Internal {
            model_path: model_path.clone(),
        }
    } else {
        let path = args.target.endpoint.as_ref().expect("clap enforces the target group");
        manifest.record_input(path)?;
        let raw = std::fs::read_to_string(path)?;
        let config: HttpAdapterConfig =
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
        AdapterSpec::Http(config)
    };
    if args.flops && matches!(spec, AdapterSpec::Http(_)) {
        bail!("GFLOPs estimation is not supported for HTTP adapters");
    }

    let suite = EvalSuite::from_manifest(&args.suite)?;
    let adapter = build_adapter(&spec)?;
    let options = EvalOptions {
        on_error: if args.strict {
            ErrorPolicy::Abort
        } else {
            ErrorPolicy::ScoreIncorrect
        },
        dimension_mode: if args.pooled {
            DimensionMode::Pooled
        } else {
            DimensionMode::MeanOverSets
        },
        ..EvalOptions::default()
    };
    let mut report =
        evaluate_with_options(adapter.as_ref(), &suite, args.timing_repeats, &options)?;

    if args.flops {
        let model_path = args.target.model.as_ref().expect("checked above");
        let model = load_model(model_path)?;
        let texts: Vec<String> = suite
            .benign_sets
            .iter()
            .chain(&suite.malicious_sets)
            .chain(&suite.overdefense_sets)
            .flat_map(|(_, c)| c.samples())
            .map(|s| s.text.clone())
            .collect();
        report.gflops_per_sample = Some(flops_estimate(&model, &texts)?);
    }

    let rendered = match args.format {
        FormatArg::Table => emit_report(&report, ReportFormat::Table),
        FormatArg::Json => emit_report(&report, ReportFormat::Json),
    };
    print!("{rendered}");
    if let Some(path) = &args.output {
        std::fs::write(path, emit_report(&report, ReportFormat::Json))?;
        manifest.write_alongside(path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_exits_zero() {
        assert_eq!(dispatch(["promptvet", "--help"]), 0);
        assert_eq!(dispatch(["promptvet", "train", "--help"]), 0);
    }

    #[test]
    fn unknown_subcommand_exits_one() {
        assert_eq!(dispatch(["promptvet", "frobnicate"]), 1);
    }

    #[test]
    fn train_without_data_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("m.bin");
        let code = dispatch([
            "promptvet",
            "train",
            "-o",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn missing_input_file_exits_two() {
        assert_eq!(
            dispatch(["promptvet", "corpus", "stats", "/nonexistent/nope.jsonl"]),
            2
        );
    }

    #[test]
    fn config_precedence_is_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("train.json");
        std::fs::write(
            &config_path,
            r#"{"epochs": 7, "learning_rate": 0.5, "hash_dimension": 4096}"#,
        )
        .unwrap();
        let args = TrainArgs {
            data: vec![PathBuf::from("unused.jsonl")],
            config: Some(config_path),
            epochs: Some(9), // flag beats file
            batch_size: None,
            learning_rate: None, // file beats default
            warmup_steps: None,
            l2: None,
            seed: None,
            hash_dim: None,
            threshold: None,
            output: dir.path().join("m.bin"),
        };
        let resolved = resolve_train_config(&args).unwrap();
        assert_eq!(resolved.train_config.epochs, 9);
        assert_eq!(resolved.train_config.learning_rate, 0.5);
        assert_eq!(resolved.feature_config.hash_dimension, 4096);
        // Untouched values fall back to defaults.
        assert_eq!(resolved.train_config.batch_size, 32);
        assert_eq!(resolved.train_config.warmup_steps, 100);
        assert_eq!(resolved.threshold, 0.5);
    }

    #[test]
    fn topic_mix_parses_paper_style_table() {
        let mixes = parse_topic_mixes(
            r#"{"1": {"Common Queries": 58, "Techniques": 16, "Virtual Creation": 14, "Multilingual": 25}}"#,
        )
        .unwrap();
        let one = mixes[0].as_ref().unwrap();
        assert_eq!(one[&Topic::CommonQueries], 58);
        assert_eq!(one[&Topic::Multilingual], 25);
        assert!(mixes[1].is_none() && mixes[2].is_none());
    }

    #[test]
    fn topic_mix_rejects_unknown_topic_and_subset() {
        assert!(parse_topic_mixes(r#"{"9": {"Techniques": 1}}"#).is_err());
        assert!(parse_topic_mixes(r#"{"1": {"Cooking": 1}}"#).is_err());
    }
}
