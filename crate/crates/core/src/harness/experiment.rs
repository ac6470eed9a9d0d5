//! MLE baseline followed by fine-tuning runs on a shifted task.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::kv::{parse_list, parse_value};
use super::synth::{generate_synthetic_corpus, TaskSpec};
use super::{decode_sources, score_outputs, BatchMode, HeldoutScores};
use crate::error::{Error, Result};
use crate::metrics::{CostKind, MetricKind};
use crate::model::{ModelDims, ModelParams};
use crate::mrt::{finetune_with_log, TrainConfig, TrainMode, Trainer};
use crate::textcore::{decode, DocumentCorpus, Sentence, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_updates: usize,
    /// Updates between validation doc-BLEU evaluations.
    pub eval_interval: usize,
    /// Non-improving evaluations tolerated before stopping.
    pub patience: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            learning_rate: 1.0,
            batch_size: 16,
            max_updates: 20_000,
            eval_interval: 1000,
            patience: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub task: TaskSpec,
    pub embed: usize,
    pub hidden: usize,
    pub baseline: BaselineConfig,
    /// Probability of cipher variant A in the fine-tuning and test data.
    pub finetune_style_bias: f64,
    /// Training documents of the shifted task.
    pub finetune_docs: usize,
    /// Template for every fine-tuning run; mode, batching and cost are
    /// overridden per run.
    pub finetune: TrainConfig,
    pub modes: Vec<TrainMode>,
    pub batchings: Vec<BatchMode>,
    pub costs: Vec<CostKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            task: TaskSpec::default(),
            embed: 16,
            hidden: 32,
            baseline: BaselineConfig::default(),
            finetune_style_bias: 0.9,
            finetune_docs: 2000,
            finetune: TrainConfig {
                samples: 4,
                batch_size: 4,
                learning_rate: 0.01,
                max_updates: 2000,
                max_len: 10,
                ..TrainConfig::default()
            },
            modes: vec![TrainMode::DocMrtOrdered, TrainMode::DocMrtRandom],
            batchings: vec![BatchMode::Random],
            costs: vec![CostKind::OneMinusDocbleu],
        }
    }
}

impl ExperimentConfig {
    /// Applies one kebab-case key. Baseline keys carry an `mle-` prefix;
    /// remaining keys go to the task, then to the fine-tuning template.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "embed" => self.embed = parse_value(key, value)?,
            "hidden" => self.hidden = parse_value(key, value)?,
            "mle-learning-rate" => self.baseline.learning_rate = parse_value(key, value)?,
            "mle-batch-size" => self.baseline.batch_size = parse_value(key, value)?,
            "mle-max-updates" => self.baseline.max_updates = parse_value(key, value)?,
            "mle-eval-interval" => self.baseline.eval_interval = parse_value(key, value)?,
            "mle-patience" => self.baseline.patience = parse_value(key, value)?,
            "finetune-style-bias" => self.finetune_style_bias = parse_value(key, value)?,
            "finetune-docs" => self.finetune_docs = parse_value(key, value)?,
            "modes" => self.modes = parse_list(value)?,
            "batchings" => self.batchings = parse_list(value)?,
            "costs" => self.costs = parse_list(value)?,
            "task-seed" | "cipher-seed" => {
                return Err(Error::config(format!("{key} is derived from seed in experiments")));
            }
            _ => {
                if !self.task.apply(key, value)? && !self.finetune.apply(key, value)? {
                    return Err(Error::config(format!("unknown configuration key {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in pairs {
            cfg.apply(k, v)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.finetune.validate()?;
        if self.task.max_len > self.finetune.max_len {
            return Err(Error::config("max-sent-len exceeds the model max-len"));
        }
        if !(0.0..=1.0).contains(&self.finetune_style_bias) {
            return Err(Error::config("finetune-style-bias must lie in [0, 1]"));
        }
        if self.modes.is_empty() || self.batchings.is_empty() || self.costs.is_empty() {
            return Err(Error::config("modes, batchings and costs must be non-empty"));
        }
        let b = &self.baseline;
        if b.batch_size == 0 || b.eval_interval == 0 || b.patience == 0 || !(b.learning_rate > 0.0) {
            return Err(Error::config("invalid MLE baseline settings"));
        }
        if self.task.valid_docs == 0 || self.task.test_docs == 0 || self.finetune_docs == 0 {
            return Err(Error::config("valid-docs, test-docs and finetune-docs must be positive"));
        }
        ModelDims::new(self.task.vocab_size, self.embed, self.hidden)?;
        Ok(())
    }

    fn derived_seed(&self, k: u64) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(k)
    }

    /// Base task and its shifted fine-tuning variant. Both share one cipher pair.
    pub fn tasks(&self) -> (TaskSpec, TaskSpec) {
        let base = TaskSpec {
            seed: self.derived_seed(1),
            cipher_seed: self.derived_seed(2),
            ..self.task.clone()
        };
        let shifted = TaskSpec {
            seed: self.derived_seed(3),
            style_bias: self.finetune_style_bias,
            train_docs: self.finetune_docs,
            ..base.clone()
        };
        (base, shifted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub updates: usize,
    pub valid_bleu: f64,
    pub test: HeldoutScores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub mode: TrainMode,
    pub batching: BatchMode,
    pub cost_kind: CostKind,
    /// Mean risk over the last tenth of the updates.
    pub final_risk: f64,
    pub test: HeldoutScores,
}

impl RunRow {
    pub fn file_stem(&self) -> String {
        format!("{}.{}.{}", self.mode, self.batching, self.cost_kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub baseline: BaselineSummary,
    pub rows: Vec<RunRow>,
}

impl ExperimentReport {
    pub fn row(&self, mode: TrainMode, batching: BatchMode, cost: CostKind) -> Option<&RunRow> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.batching == batching && r.cost_kind == cost)
    }

    /// Change of `metric` from the baseline, signed so that positive is better.
    pub fn improvement(&self, row: &RunRow, metric: MetricKind) -> f64 {
        let delta = row.test.get(metric) - self.baseline.test.get(metric);
        if metric.higher_is_better() {
            delta
        } else {
            -delta
        }
    }
}

/// Decoded outputs that back every score in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentArtifacts {
    pub vocab: Vocabulary,
    pub test: DocumentCorpus,
    pub baseline: Vec<Sentence>,
    pub rows: Vec<Vec<Sentence>>,
    pub checkpoint: ModelParams,
}

/// MLE training with early stopping on validation doc-BLEU; returns the best
/// parameters seen, the updates run and the best validation score.
pub fn train_mle_baseline(
    init: &ModelParams,
    train: &DocumentCorpus,
    valid: &DocumentCorpus,
    cfg: &BaselineConfig,
    max_len: usize,
    beam: usize,
    seed: u64,
) -> Result<(ModelParams, usize, f64)> {
    let tc = TrainConfig {
        mode: TrainMode::Mle,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        batching: BatchMode::Random,
        max_updates: cfg.max_updates,
        accumulation: 1,
        seed,
        max_len,
        beam,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(init, train, &tc)?;
    let mut best = init.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut stale = 0;
    while trainer.updates() < cfg.max_updates {
        trainer.step()?;
        if trainer.updates() % cfg.eval_interval != 0 && trainer.updates() != cfg.max_updates {
            continue;
        }
        let score = super::evaluate_metric(trainer.params(), valid, MetricKind::Bleu, beam, max_len)?;
        if score > best_score {
            best_score = score;
            best = trainer.params().clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, trainer.updates(), best_score))
}

/// Trains the baseline on the base task, fine-tunes it once per requested
/// (mode, batching, cost) on the shifted task and scores every model on the
/// shifted test split with beam decoding.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, ExperimentArtifacts)> {
    cfg.validate()?;
    let (base_spec, shifted_spec) = cfg.tasks();
    let base = generate_synthetic_corpus(&base_spec)?;
    let shifted = generate_synthetic_corpus(&shifted_spec)?;
    let dims = ModelDims::new(cfg.task.vocab_size, cfg.embed, cfg.hidden)?;
    let init = ModelParams::init(dims, cfg.derived_seed(4));
    let (max_len, beam) = (cfg.finetune.max_len, cfg.finetune.beam);

    let (checkpoint, updates, valid_bleu) = train_mle_baseline(
        &init,
        &base.train,
        &base.valid,
        &cfg.baseline,
        max_len,
        beam,
        cfg.derived_seed(5),
    )?;
    let test = shifted.test;
    let test_sources = test.sources();
    let baseline_hyps = decode_sources(&checkpoint, &test_sources, beam, max_len)?;
    let baseline = BaselineSummary {
        updates,
        valid_bleu,
        test: score_outputs(&baseline_hyps, &test)?,
    };

    let mut rows = Vec::new();
    let mut row_hyps = Vec::new();
    let mut run = 0u64;
    for &cost_kind in &cfg.costs {
        for &mode in &cfg.modes {
            for &batching in &cfg.batchings {
                run += 1;
                let tc = TrainConfig {
                    mode,
                    batching,
                    cost_kind,
                    seed: cfg.derived_seed(100 + run),
                    ..cfg.finetune.clone()
                };
                let mut risks = Vec::with_capacity(tc.max_updates);
                let theta = finetune_with_log(&checkpoint, &shifted.train, None, &tc, &mut |r| {
                    risks.push(r.risk);
                    Ok(())
                })?;
                let tail = &risks[risks.len() - (risks.len() / 10).max(1).min(risks.len())..];
                let final_risk = if tail.is_empty() {
                    0.0
                } else {
                    tail.iter().sum::<f64>() / tail.len() as f64
                };
                let hyps = decode_sources(&theta, &test_sources, beam, max_len)?;
                rows.push(RunRow {
                    mode,
                    batching,
                    cost_kind,
                    final_risk,
                    test: score_outputs(&hyps, &test)?,
                });
                row_hyps.push(hyps);
            }
        }
    }
    let report = ExperimentReport {
        seed: cfg.seed,
        config: cfg.clone(),
        baseline,
        rows,
    };
    let artifacts = ExperimentArtifacts {
        vocab: Vocabulary::synthetic(cfg.task.vocab_size)?,
        test,
        baseline: baseline_hyps,
        rows: row_hyps,
        checkpoint,
    };
    Ok((report, artifacts))
}

fn write_sentences(path: &Path, vocab: &Vocabulary, sentences: &[Sentence]) -> Result<()> {
    let mut text = String::new();
    for s in sentences {
        text.push_str(&decode(s, vocab)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the report, the test split, the baseline checkpoint and every
/// decoded output under `dir`.
pub fn write_outputs(dir: &Path, report: &ExperimentReport, artifacts: &ExperimentArtifacts) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let v = &artifacts.vocab;
    artifacts
        .test
        .write(v, &dir.join("test.src"), &dir.join("test.ref"), &dir.join("test.docids"))?;
    write_sentences(&dir.join("baseline.hyp"), v, &artifacts.baseline)?;
    for (row, hyps) in report.rows.iter().zip(&artifacts.rows) {
        write_sentences(&dir.join(format!("{}.hyp", row.file_stem())), v, hyps)?;
    }
    artifacts.checkpoint.save(&dir.join("baseline.ckpt"))?;
    let json = serde_json::to_string_pretty(report)?;
    let path = dir.join("report.json");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in [
            ("vocab-size", "8"),
            ("max-sent-len", "3"),
            ("min-sent-len", "1"),
            ("train-docs", "30"),
            ("valid-docs", "4"),
            ("test-docs", "4"),
            ("finetune-docs", "10"),
            ("embed", "4"),
            ("hidden", "6"),
            ("mle-max-updates", "40"),
            ("mle-eval-interval", "10"),
            ("max-updates", "6"),
            ("max-len", "4"),
            ("modes", "mle,doc_mrt_ordered"),
            ("batchings", "random,document"),
        ] {
            cfg.apply(k, v).unwrap();
        }
        cfg
    }

    #[test]
    fn one_row_per_requested_run() {
        let (report, artifacts) = run_experiment(&tiny()).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(artifacts.rows.len(), 4);
        assert!(report.row(TrainMode::Mle, BatchMode::Document, CostKind::OneMinusDocbleu).is_some());
        assert!(report.baseline.updates <= 40);
    }

    #[test]
    fn config_keys() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply("no-such-key", "1").is_err());
        assert!(cfg.apply("task-seed", "1").is_err());
        cfg.apply("costs", "doc_ter,one_minus_docbleu").unwrap();
        assert_eq!(cfg.costs, vec![CostKind::DocTer, CostKind::OneMinusDocbleu]);
        cfg.apply("max-sent-len", "12").unwrap();
        assert!(cfg.validate().is_err());
    }
}
