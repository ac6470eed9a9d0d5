//! Exact document risk by enumerating every output document.

use crate::error::{Error, Result};
use crate::model::{accumulate_log_prob_grad, enumerate_output_space, ModelParams, ScoredHypothesis};
use crate::sampling::DocumentCost;
use crate::textcore::{DocumentBatch, Sentence};

/// Upper bound on the number of documents visited by the exact risk.
pub const DOCUMENT_SPACE_LIMIT: f64 = 1e6;

/// Output spaces of every sentence in the batch, guarded on their product size.
pub fn enumerate_batch_outputs(
    params: &ModelParams,
    batch: &DocumentBatch,
    max_len: usize,
) -> Result<Vec<Vec<ScoredHypothesis>>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let spaces = batch
        .sources
        .iter()
        .map(|src| enumerate_output_space(params, src, max_len))
        .collect::<Result<Vec<_>>>()?;
    let size: f64 = spaces.iter().map(|s| s.len() as f64).product();
    if size > DOCUMENT_SPACE_LIMIT {
        return Err(Error::EnumerationGuard {
            size,
            limit: DOCUMENT_SPACE_LIMIT,
        });
    }
    Ok(spaces)
}

/// `R(θ) = Σ_Y D(Y, Y*) P(Y|X; θ)` together with, for every sentence `s` and
/// output `y`, the mass `Σ_{Y : y^(s) = y} D(Y, Y*) P(Y|X; θ)`.
fn risk_and_marginals(
    spaces: &[Vec<ScoredHypothesis>],
    batch: &DocumentBatch,
    cost: &dyn DocumentCost,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let s_count = spaces.len();
    let mut marginals: Vec<Vec<f64>> = spaces.iter().map(|sp| vec![0.0; sp.len()]).collect();
    let mut idx = vec![0usize; s_count];
    let mut risk = 0.0;
    let mut hyps: Vec<&Sentence> = spaces.iter().map(|sp| &sp[0].sentence).collect();
    loop {
        let mut lp = 0.0;
        for (s, &i) in idx.iter().enumerate() {
            hyps[s] = &spaces[s][i].sentence;
            lp += spaces[s][i].log_prob;
        }
        let mass = cost.document_cost(batch, &hyps)? * lp.exp();
        risk += mass;
        for (s, &i) in idx.iter().enumerate() {
            marginals[s][i] += mass;
        }
        let mut pos = s_count;
        loop {
            if pos == 0 {
                return Ok((risk, marginals));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < spaces[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

pub fn exact_risk(params: &ModelParams, batch: &DocumentBatch, cost: &dyn DocumentCost, max_len: usize) -> Result<f64> {
    let spaces = enumerate_batch_outputs(params, batch, max_len)?;
    Ok(risk_and_marginals(&spaces, batch, cost)?.0)
}

/// `∇R(θ) = Σ_Y D(Y, Y*) P(Y|X; θ) Σ_s ∇ log P(y^(s)|x^(s); θ)`.
pub fn exact_risk_and_grad(
    params: &ModelParams,
    batch: &DocumentBatch,
    cost: &dyn DocumentCost,
    max_len: usize,
) -> Result<(f64, Vec<f64>)> {
    let spaces = enumerate_batch_outputs(params, batch, max_len)?;
    let (risk, marginals) = risk_and_marginals(&spaces, batch, cost)?;
    let mut grad = vec![0.0; params.len()];
    for (s, (space, w)) in spaces.iter().zip(&marginals).enumerate() {
        for (hyp, &w) in space.iter().zip(w) {
            accumulate_log_prob_grad(params, &batch.sources[s], &hyp.sentence, max_len, w, &mut grad)?;
        }
    }
    Ok((risk, grad))
}

pub fn exact_risk_grad(
    params: &ModelParams,
    batch: &DocumentBatch,
    cost: &dyn DocumentCost,
    max_len: usize,
) -> Result<Vec<f64>> {
    Ok(exact_risk_and_grad(params, batch, cost, max_len)?.1)
}
