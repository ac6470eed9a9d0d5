//! Risk objectives and their gradient estimators.
//!
//! Sequence MRT weights every sample's score function by its own sentence
//! cost. Document MRT weights it by the cost of the sampled document it was
//! placed in. In both cases the gradient is accumulated cell by cell over the
//! sample grid in `(sentence, sample)` order, so two estimators that assign
//! the same weight to every cell produce bit-identical gradients.

mod config;
mod exact;
mod finetune;
mod gradcheck;

use rand::Rng;

pub use config::{Estimator, Scheme, TrainConfig, TrainMode};
pub use exact::{enumerate_batch_outputs, exact_risk, exact_risk_and_grad, exact_risk_grad};
pub use finetune::{finetune, finetune_with_log, LogRecord, Trainer};
pub use gradcheck::{fd_gradient_check, GradCheck};

use crate::error::Result;
use crate::model::{accumulate_log_prob_grad, ModelParams};
use crate::sampling::{
    build_documents_ordered, build_documents_random, draw_sample_set, order_samples, DocumentCost, SampleSet,
    SampledDocument,
};
use crate::textcore::DocumentBatch;

/// A risk value and its (estimated) gradient in the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEstimate {
    pub risk: f64,
    pub grad: Vec<f64>,
    /// Documents (doc-MRT) or samples (seq-MRT) that contributed.
    pub n_used: usize,
}

/// `q_i ∝ exp(α · log p_i)`, normalized over the pool.
pub fn sharpened_weights(log_probs: &[f64], alpha: f64) -> Vec<f64> {
    let m = log_probs
        .iter()
        .map(|l| alpha * l)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_probs.iter().map(|l| (alpha * l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Per-cell weights and risk for sequence MRT.
pub fn seq_mrt_weights(set: &SampleSet, estimator: Estimator, alpha: f64) -> (f64, Vec<Vec<f64>>) {
    let inv_n = 1.0 / set.n_samples() as f64;
    let mut risk = 0.0;
    let mut weights = Vec::with_capacity(set.n_sentences());
    for (row, costs) in set.grid.iter().zip(&set.costs) {
        let q = match estimator {
            Estimator::Raw => vec![inv_n; row.len()],
            Estimator::Renormalized => {
                let lps: Vec<f64> = row.iter().map(|h| h.log_prob).collect();
                sharpened_weights(&lps, alpha)
            }
        };
        let w: Vec<f64> = costs.iter().zip(&q).map(|(c, q)| c * q).collect();
        for x in &w {
            risk += x;
        }
        weights.push(w);
    }
    (risk, weights)
}

/// Per-cell weights and risk for document MRT: each cell collects the
/// weighted cost of every document it appears in.
pub fn doc_mrt_weights(
    set: &SampleSet,
    docs: &[SampledDocument],
    estimator: Estimator,
    alpha: f64,
) -> (f64, Vec<Vec<f64>>) {
    // Canonical document order, so results do not depend on how the
    // scheme happened to list its documents.
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| docs[a].assignment.cmp(&docs[b].assignment));
    let q: Vec<f64> = match estimator {
        Estimator::Raw => order.iter().map(|&i| docs[i].weight).collect(),
        Estimator::Renormalized => {
            let lps: Vec<f64> = order.iter().map(|&i| docs[i].log_prob).collect();
            sharpened_weights(&lps, alpha)
        }
    };
    let mut weights: Vec<Vec<f64>> = set.grid.iter().map(|row| vec![0.0; row.len()]).collect();
    let mut risk = 0.0;
    for (&i, q) in order.iter().zip(&q) {
        let w = docs[i].cost * q;
        risk += w;
        for (s, &n) in docs[i].assignment.iter().enumerate() {
            weights[s][n] += w;
        }
    }
    (risk, weights)
}

/// Adds `Σ_{s,n} w[s][n] ∇ log P(y_n^(s) | x^(s))` into `grad`.
pub fn accumulate_weighted_grad(
    params: &ModelParams,
    set: &SampleSet,
    weights: &[Vec<f64>],
    max_len: usize,
    grad: &mut [f64],
) -> Result<()> {
    for (s, (row, w)) in set.grid.iter().zip(weights).enumerate() {
        let src = &set.batch.sources[s];
        for (hyp, &w) in row.iter().zip(w) {
            if w != 0.0 {
                accumulate_log_prob_grad(params, src, &hyp.sentence, max_len, w, grad)?;
            }
        }
    }
    Ok(())
}

pub fn seq_mrt_grad_from_set(
    params: &ModelParams,
    set: &SampleSet,
    estimator: Estimator,
    alpha: f64,
    max_len: usize,
) -> Result<RiskEstimate> {
    let mut grad = vec![0.0; params.len()];
    let (risk, weights) = seq_mrt_weights(set, estimator, alpha);
    accumulate_weighted_grad(params, set, &weights, max_len, &mut grad)?;
    Ok(RiskEstimate {
        risk,
        grad,
        n_used: set.n_sentences() * set.n_samples(),
    })
}

pub fn doc_mrt_grad_from_documents(
    params: &ModelParams,
    set: &SampleSet,
    docs: &[SampledDocument],
    estimator: Estimator,
    alpha: f64,
    max_len: usize,
) -> Result<RiskEstimate> {
    let mut grad = vec![0.0; params.len()];
    let (risk, weights) = doc_mrt_weights(set, docs, estimator, alpha);
    accumulate_weighted_grad(params, set, &weights, max_len, &mut grad)?;
    Ok(RiskEstimate {
        risk,
        grad,
        n_used: docs.len(),
    })
}

/// Builds the `N` documents of a sample set with the given scheme.
pub fn build_documents<R: Rng + ?Sized>(
    set: &SampleSet,
    scheme: Scheme,
    cost: &dyn DocumentCost,
    rng: &mut R,
) -> Result<Vec<SampledDocument>> {
    match scheme {
        Scheme::Ordered => build_documents_ordered(set, cost),
        Scheme::Random => build_documents_random(set, cost, rng),
    }
}

/// Draws a sample set for `batch` and returns the sequence-MRT estimate.
pub fn seq_mrt_grad<R: Rng + ?Sized>(
    params: &ModelParams,
    batch: &DocumentBatch,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<RiskEstimate> {
    let set = draw_sample_set(
        params,
        batch,
        cfg.samples,
        cfg.temperature,
        rng,
        cfg.max_len,
        cfg.cost_kind.sentence_level(),
    )?;
    seq_mrt_grad_from_set(params, &set, cfg.estimator, cfg.sharpness, cfg.max_len)
}

/// Draws a sample set for `batch`, forms `N` documents with `scheme` and
/// returns the document-MRT estimate.
pub fn doc_mrt_grad<R: Rng + ?Sized>(
    params: &ModelParams,
    batch: &DocumentBatch,
    cfg: &TrainConfig,
    scheme: Scheme,
    rng: &mut R,
) -> Result<RiskEstimate> {
    let set = draw_sample_set(
        params,
        batch,
        cfg.samples,
        cfg.temperature,
        rng,
        cfg.max_len,
        cfg.cost_kind.sentence_level(),
    )?;
    let set = order_samples(set);
    let docs = build_documents(&set, scheme, &cfg.cost_kind.document_level(), rng)?;
    doc_mrt_grad_from_documents(params, &set, &docs, cfg.estimator, cfg.sharpness, cfg.max_len)
}
