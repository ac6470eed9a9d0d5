use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use docmrt::harness::kv::read_kv_file;
use docmrt::harness::{
    enum_check, generate_synthetic_corpus, grad_check_cmd, run_experiment, score_corpus, train_mle_baseline,
    write_outputs, EnumCheckConfig, ExperimentConfig, GradCheckConfig, TaskSpec,
};
use docmrt::metrics::MetricKind;
use docmrt::model::{ModelDims, ModelParams};
use docmrt::mrt::{finetune_with_log, TrainConfig};
use docmrt::textcore::{read_document_corpus, DocIds, DocumentCorpus, Vocabulary};
use docmrt::{Error, Result};

#[derive(Parser)]
#[command(name = "docmrt", version, about = "Document-level minimum risk training laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/valid/test corpus.
    GenData(GenDataArgs),
    /// Train an MLE model with early stopping on validation doc-BLEU.
    TrainMle(TrainMleArgs),
    /// Fine-tune a checkpoint with MLE, sequence MRT or document MRT.
    FinetuneMrt(FinetuneArgs),
    /// Score a hypothesis file against references.
    Score(ScoreArgs),
    /// Finite-difference checks of the analytic gradients.
    GradCheck(GradCheckArgs),
    /// Enumeration checks: normalization and the constant-cost null gradient.
    EnumCheck(EnumCheckArgs),
    /// Baseline plus fine-tuning runs, reported as JSON.
    Experiment(ExperimentArgs),
}

/// Declares a group of optional `--key value` flags that are applied as
/// configuration pairs after the config file.
macro_rules! flag_group {
    ($name:ident { $($field:ident => $key:literal),* $(,)? }) => {
        #[derive(Args, Debug, Default)]
        struct $name {
            $(
                #[arg(long = $key, value_name = "VALUE")]
                $field: Option<String>,
            )*
        }

        impl $name {
            fn pairs(&self) -> Vec<(&'static str, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push(($key, v.clone()));
                    }
                )*
                out
            }
        }
    };
}

flag_group!(TaskFlags {
    vocab_size => "vocab-size",
    min_sent_len => "min-sent-len",
    max_sent_len => "max-sent-len",
    sents_per_doc => "sents-per-doc",
    train_docs => "train-docs",
    valid_docs => "valid-docs",
    test_docs => "test-docs",
    rule => "rule",
    style_consistency => "style-consistency",
    style_bias => "style-bias",
    noise => "noise",
});

flag_group!(TaskSeedFlags {
    cipher_seed => "cipher-seed",
    task_seed => "task-seed",
});

flag_group!(TrainFlags {
    samples => "samples",
    batch_size => "batch-size",
    temperature => "temperature",
    sharpness => "sharpness",
    mode => "mode",
    estimator => "estimator",
    cost_kind => "cost-kind",
    batching => "batching",
    learning_rate => "learning-rate",
    accumulation => "accumulation",
    max_updates => "max-updates",
    seed => "seed",
    max_len => "max-len",
    eval_interval => "eval-interval",
    beam => "beam",
});

flag_group!(ModelFlags {
    embed => "embed",
    hidden => "hidden",
});

flag_group!(BaselineFlags {
    mle_learning_rate => "mle-learning-rate",
    mle_batch_size => "mle-batch-size",
    mle_max_updates => "mle-max-updates",
    mle_eval_interval => "mle-eval-interval",
    mle_patience => "mle-patience",
});

flag_group!(ExperimentFlags {
    finetune_style_bias => "finetune-style-bias",
    finetune_docs => "finetune-docs",
    modes => "modes",
    batchings => "batchings",
    costs => "costs",
});

#[derive(Args)]
struct ConfigArg {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn pairs(&self, flags: Vec<(&'static str, String)>) -> Result<Vec<(String, String)>> {
        let mut pairs = match &self.config {
            Some(path) => read_kv_file(path)?,
            None => Vec::new(),
        };
        pairs.extend(flags.into_iter().map(|(k, v)| (k.to_string(), v)));
        Ok(pairs)
    }
}

#[derive(Args)]
struct OutArg {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn emit<T: Serialize>(&self, value: &T) -> Result<()> {
        let json = serde_json::to_string_pretty(value)? + "\n";
        match &self.out {
            Some(path) => fs::write(path, json).map_err(|e| Error::io(path, e)),
            None => {
                print!("{json}");
                Ok(())
            }
        }
    }
}

/// Parallel corpus files; document boundaries come from a doc-id file or from
/// fixed-size pseudo-documents.
#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    docids: Option<PathBuf>,
    /// Treat every run of this many lines as one document.
    #[arg(long, conflicts_with = "docids")]
    pseudo_docs: Option<usize>,
}

impl CorpusArgs {
    fn load(&self, vocab: &Vocabulary) -> Result<DocumentCorpus> {
        load_corpus(&self.src, &self.reference, self.docids.as_deref(), self.pseudo_docs, vocab)
    }
}

#[derive(Args)]
struct HeldoutArgs {
    #[arg(long)]
    valid_src: Option<PathBuf>,
    #[arg(long)]
    valid_ref: Option<PathBuf>,
    #[arg(long)]
    valid_docids: Option<PathBuf>,
}

impl HeldoutArgs {
    fn load(&self, vocab: &Vocabulary) -> Result<Option<DocumentCorpus>> {
        match (&self.valid_src, &self.valid_ref) {
            (Some(s), Some(r)) => Ok(Some(load_corpus(s, r, self.valid_docids.as_deref(), None, vocab)?)),
            (None, None) => Ok(None),
            _ => Err(Error::config("--valid-src and --valid-ref must be given together")),
        }
    }
}

fn load_corpus(
    src: &Path,
    reference: &Path,
    docids: Option<&Path>,
    pseudo: Option<usize>,
    vocab: &Vocabulary,
) -> Result<DocumentCorpus> {
    let ids = match (docids, pseudo) {
        (Some(p), _) => DocIds::File(p),
        (None, Some(s)) => DocIds::Pseudo(s),
        (None, None) => return Err(Error::config("give --docids or --pseudo-docs")),
    };
    read_document_corpus(src, reference, ids, vocab)
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    task: TaskFlags,
    #[command(flatten)]
    seeds: TaskSeedFlags,
    /// Directory for {train,valid,test}.{src,ref,docids} and vocab.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainMleArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    train: CorpusArgs,
    #[command(flatten)]
    heldout: HeldoutArgs,
    /// Vocabulary file written by gen-data.
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    baseline: BaselineFlags,
    #[command(flatten)]
    train_flags: TrainFlags,
    /// Checkpoint output path.
    #[arg(long)]
    save: PathBuf,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct FinetuneArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Starting checkpoint.
    #[arg(long)]
    init: PathBuf,
    #[command(flatten)]
    train: CorpusArgs,
    #[command(flatten)]
    heldout: HeldoutArgs,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    train_flags: TrainFlags,
    /// Training log, one JSON object per update.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    save: PathBuf,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    src: Option<PathBuf>,
    #[arg(long)]
    docids: Option<PathBuf>,
    /// bleu, ter or gleu.
    #[arg(long, default_value = "bleu")]
    metric: MetricKind,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 6)]
    vocab_size: usize,
    #[arg(long, default_value_t = 4)]
    embed: usize,
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    max_len: usize,
    #[arg(long, default_value_t = 50)]
    coords: usize,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test hook: perturb this analytic gradient coordinate by 1e-3.
    #[arg(long, hide = true)]
    corrupt: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct EnumCheckArgs {
    #[arg(long, default_value_t = 5)]
    vocab_size: usize,
    #[arg(long, default_value_t = 3)]
    embed: usize,
    #[arg(long, default_value_t = 3)]
    hidden: usize,
    #[arg(long, default_value_t = 3)]
    max_len: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    task: TaskFlags,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    baseline: BaselineFlags,
    #[command(flatten)]
    experiment: ExperimentFlags,
    #[command(flatten)]
    train_flags: TrainFlags,
    /// Also write decoded outputs, the test split and the checkpoint here.
    #[arg(long)]
    save_outputs: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

fn concat(groups: Vec<Vec<(&'static str, String)>>) -> Vec<(&'static str, String)> {
    groups.into_iter().flatten().collect()
}

fn unknown_key(key: &str) -> Error {
    Error::config(format!("unknown configuration key {key:?}"))
}

fn gen_data(args: GenDataArgs) -> Result<bool> {
    let mut spec = TaskSpec::default();
    for (k, v) in args.config.pairs(concat(vec![args.task.pairs(), args.seeds.pairs()]))? {
        if !spec.apply(&k, &v)? {
            return Err(unknown_key(&k));
        }
    }
    let corpus = generate_synthetic_corpus(&spec)?;
    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vocab = Vocabulary::synthetic(spec.vocab_size)?;
    vocab.save(&dir.join("vocab.txt"))?;
    for (name, split) in [("train", &corpus.train), ("valid", &corpus.valid), ("test", &corpus.test)] {
        split.write(
            &vocab,
            &dir.join(format!("{name}.src")),
            &dir.join(format!("{name}.ref")),
            &dir.join(format!("{name}.docids")),
        )?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        spec: &'a TaskSpec,
        train_sentences: usize,
        valid_sentences: usize,
        test_sentences: usize,
    }
    let summary = Summary {
        spec: &spec,
        train_sentences: corpus.train.len(),
        valid_sentences: corpus.valid.len(),
        test_sentences: corpus.test.len(),
    };
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    print!("{json}");
    Ok(true)
}

fn train_mle(args: TrainMleArgs) -> Result<bool> {
    let mut cfg = ExperimentConfig::default();
    let flags = concat(vec![args.model.pairs(), args.baseline.pairs(), args.train_flags.pairs()]);
    for (k, v) in args.config.pairs(flags)? {
        cfg.apply(&k, &v)?;
    }
    let vocab = Vocabulary::load(&args.vocab)?;
    let train = args.train.load(&vocab)?;
    let valid = args
        .heldout
        .load(&vocab)?
        .ok_or_else(|| Error::config("train-mle needs --valid-src and --valid-ref"))?;
    let dims = ModelDims::new(vocab.len(), cfg.embed, cfg.hidden)?;
    let init = ModelParams::init(dims, cfg.finetune.seed);
    let (params, updates, valid_bleu) = train_mle_baseline(
        &init,
        &train,
        &valid,
        &cfg.baseline,
        cfg.finetune.max_len,
        cfg.finetune.beam,
        cfg.finetune.seed,
    )?;
    params.save(&args.save)?;
    #[derive(Serialize)]
    struct Summary {
        updates: usize,
        valid_bleu: f64,
    }
    args.out.emit(&Summary { updates, valid_bleu })?;
    Ok(true)
}

fn finetune_mrt(args: FinetuneArgs) -> Result<bool> {
    let mut cfg = TrainConfig::default();
    for (k, v) in args.config.pairs(args.train_flags.pairs())? {
        if !cfg.apply(&k, &v)? {
            return Err(unknown_key(&k));
        }
    }
    cfg.validate()?;
    let vocab = Vocabulary::load(&args.vocab)?;
    let train = args.train.load(&vocab)?;
    let heldout = args.heldout.load(&vocab)?;
    let init = ModelParams::load(&args.init)?;
    let mut log_text = String::new();
    let mut last = None;
    let theta = finetune_with_log(&init, &train, heldout.as_ref(), &cfg, &mut |r| {
        log_text.push_str(&serde_json::to_string(r)?);
        log_text.push('\n');
        last = Some(r.clone());
        Ok(())
    })?;
    if let Some(path) = &args.log {
        fs::write(path, &log_text).map_err(|e| Error::io(path, e))?;
    }
    theta.save(&args.save)?;
    #[derive(Serialize)]
    struct Summary {
        config: TrainConfig,
        last: Option<docmrt::mrt::LogRecord>,
    }
    args.out.emit(&Summary { config: cfg, last })?;
    Ok(true)
}

fn score(args: ScoreArgs) -> Result<bool> {
    let report = score_corpus(
        &args.hyp,
        &args.reference,
        args.src.as_deref(),
        args.docids.as_deref(),
        args.metric,
    )?;
    args.out.emit(&report)?;
    Ok(true)
}

fn grad_check(args: GradCheckArgs) -> Result<bool> {
    let cfg = GradCheckConfig {
        vocab: args.vocab_size,
        embed: args.embed,
        hidden: args.hidden,
        max_len: args.max_len,
        coords: args.coords,
        eps: args.eps,
        seed: args.seed,
        corrupt: args.corrupt,
        ..GradCheckConfig::default()
    };
    let report = grad_check_cmd(&cfg)?;
    args.out.emit(&report)?;
    Ok(report.passed)
}

fn enum_check_cmd(args: EnumCheckArgs) -> Result<bool> {
    let cfg = EnumCheckConfig {
        vocab: args.vocab_size,
        embed: args.embed,
        hidden: args.hidden,
        max_len: args.max_len,
        trials: args.trials,
        seed: args.seed,
    };
    let report = enum_check(&cfg)?;
    args.out.emit(&report)?;
    Ok(report.passed)
}

fn experiment(args: ExperimentArgs) -> Result<bool> {
    let flags = concat(vec![
        args.task.pairs(),
        args.model.pairs(),
        args.baseline.pairs(),
        args.experiment.pairs(),
        args.train_flags.pairs(),
    ]);
    let mut cfg = ExperimentConfig::default();
    for (k, v) in args.config.pairs(flags)? {
        cfg.apply(&k, &v)?;
    }
    let start = Instant::now();
    let (report, artifacts) = run_experiment(&cfg)?;
    if let Some(dir) = &args.save_outputs {
        write_outputs(dir, &report, &artifacts)?;
    }
    args.out.emit(&report)?;
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::TrainMle(a) => train_mle(a),
        Command::FinetuneMrt(a) => finetune_mrt(a),
        Command::Score(a) => score(a),
        Command::GradCheck(a) => grad_check(a),
        Command::EnumCheck(a) => enum_check_cmd(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
