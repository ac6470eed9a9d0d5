use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{accumulate_weighted_grad, build_documents, doc_mrt_weights, seq_mrt_weights, TrainConfig, TrainMode};
use crate::error::Result;
use crate::harness::{evaluate_metric, make_batches};
use crate::model::{accumulate_mle_grad, ModelParams};
use crate::sampling::{draw_sample_set, order_samples};
use crate::textcore::{DocumentBatch, DocumentCorpus};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub update: usize,
    pub mode: TrainMode,
    /// Mean micro-batch risk (or MLE loss) of this update.
    pub risk: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout_metric: Option<f64>,
    pub seed: u64,
}

/// Adds one micro-batch gradient into `acc` and returns its risk.
fn accumulate_micro_batch(
    params: &ModelParams,
    batch: &DocumentBatch,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    acc: &mut [f64],
) -> Result<f64> {
    if cfg.mode == TrainMode::Mle {
        return accumulate_mle_grad(params, batch, cfg.max_len, 1.0, acc);
    }
    let set = draw_sample_set(
        params,
        batch,
        cfg.samples,
        cfg.temperature,
        rng,
        cfg.max_len,
        cfg.cost_kind.sentence_level(),
    )?;
    let (risk, weights) = match cfg.mode.scheme() {
        None => seq_mrt_weights(&set, cfg.estimator, cfg.sharpness),
        Some(scheme) => {
            let set = order_samples(set);
            let docs = build_documents(&set, scheme, &cfg.cost_kind.document_level(), rng)?;
            let (risk, weights) = doc_mrt_weights(&set, &docs, cfg.estimator, cfg.sharpness);
            accumulate_weighted_grad(params, &set, &weights, cfg.max_len, acc)?;
            return Ok(risk);
        }
    };
    accumulate_weighted_grad(params, &set, &weights, cfg.max_len, acc)?;
    Ok(risk)
}

/// Plain-SGD training state over one corpus.
///
/// Each update accumulates `k` micro-batch gradients and applies
/// `θ ← θ − lr · acc / k`. Batches are rebuilt with seed `seed + epoch` each
/// time the corpus is exhausted; sampling draws from its own stream of the
/// same seed.
pub struct Trainer<'a> {
    corpus: &'a DocumentCorpus,
    cfg: TrainConfig,
    theta: ModelParams,
    rng: ChaCha8Rng,
    epoch: u64,
    batches: Vec<DocumentBatch>,
    next: usize,
    acc: Vec<f64>,
    updates: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(params: &ModelParams, corpus: &'a DocumentCorpus, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Trainer {
            corpus,
            cfg: cfg.clone(),
            theta: params.clone(),
            rng,
            epoch: 0,
            batches: make_batches(corpus, cfg.batching, cfg.batch_size, cfg.seed)?,
            next: 0,
            acc: vec![0.0; params.len()],
            updates: 0,
        })
    }

    /// Performs one update and returns its mean micro-batch risk.
    pub fn step(&mut self) -> Result<f64> {
        let scale = 1.0 / self.cfg.accumulation as f64;
        self.acc.iter_mut().for_each(|g| *g = 0.0);
        let mut risk = 0.0;
        for _ in 0..self.cfg.accumulation {
            if self.next == self.batches.len() {
                self.epoch += 1;
                let seed = self.cfg.seed.wrapping_add(self.epoch);
                self.batches = make_batches(self.corpus, self.cfg.batching, self.cfg.batch_size, seed)?;
                self.next = 0;
            }
            let batch = &self.batches[self.next];
            risk += accumulate_micro_batch(&self.theta, batch, &self.cfg, &mut self.rng, &mut self.acc)?;
            self.next += 1;
        }
        let lr = self.cfg.learning_rate;
        for (t, g) in self.theta.values.iter_mut().zip(&self.acc) {
            *t -= lr * g * scale;
        }
        self.updates += 1;
        Ok(risk * scale)
    }

    pub fn params(&self) -> &ModelParams {
        &self.theta
    }

    pub fn into_params(self) -> ModelParams {
        self.theta
    }

    pub fn updates(&self) -> usize {
        self.updates
    }
}

/// Runs `max_updates` updates of a [`Trainer`], handing every log record to
/// `sink`. `heldout` is scored with beam decoding every `eval_interval`
/// updates in the metric of the configured cost.
pub fn finetune_with_log(
    params: &ModelParams,
    corpus: &DocumentCorpus,
    heldout: Option<&DocumentCorpus>,
    cfg: &TrainConfig,
    sink: &mut dyn FnMut(&LogRecord) -> Result<()>,
) -> Result<ModelParams> {
    let mut trainer = Trainer::new(params, corpus, cfg)?;
    for update in 1..=cfg.max_updates {
        let risk = trainer.step()?;
        let heldout_metric = match heldout {
            Some(h) if cfg.eval_interval > 0 && update % cfg.eval_interval == 0 => Some(evaluate_metric(
                trainer.params(),
                h,
                cfg.cost_kind.metric(),
                cfg.beam,
                cfg.max_len,
            )?),
            _ => None,
        };
        sink(&LogRecord {
            update,
            mode: cfg.mode,
            risk,
            heldout_metric,
            seed: cfg.seed,
        })?;
    }
    Ok(trainer.into_params())
}

/// [`finetune_with_log`] collecting the log in memory.
pub fn finetune(
    params: &ModelParams,
    corpus: &DocumentCorpus,
    heldout: Option<&DocumentCorpus>,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<LogRecord>)> {
    let mut log = Vec::new();
    let theta = finetune_with_log(params, corpus, heldout, cfg, &mut |r| {
        log.push(r.clone());
        Ok(())
    })?;
    Ok((theta, log))
}
