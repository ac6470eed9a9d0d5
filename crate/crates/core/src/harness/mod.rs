//! Synthetic data, batching, experiment orchestration, scoring and checks.

mod batches;
mod checks;
mod experiment;
pub mod kv;
mod score;
mod synth;

use serde::Serialize;

pub use batches::{make_batches, BatchMode};
pub use checks::{enum_check, grad_check_cmd, CheckLine, CheckReport, EnumCheckConfig, GradCheckConfig};
pub use experiment::{
    run_experiment, train_mle_baseline, write_outputs, BaselineConfig, BaselineSummary, ExperimentArtifacts,
    ExperimentConfig, ExperimentReport, RunRow,
};
pub use score::{score_corpus, score_token_lines, DocumentScore, ScoreReport};
pub use synth::{generate_synthetic_corpus, CipherPair, SyntheticCorpus, TaskSpec};

use crate::error::Result;
use crate::metrics::{doc_score, MetricKind};
use crate::model::{beam_decode, ModelParams};
use crate::textcore::{DocumentCorpus, Sentence};

/// Top beam hypothesis for every source sentence.
pub fn decode_sources(params: &ModelParams, sources: &[Sentence], beam: usize, max_len: usize) -> Result<Vec<Sentence>> {
    sources
        .iter()
        .map(|src| Ok(beam_decode(params, src, beam, max_len)?.swap_remove(0).sentence))
        .collect()
}

/// Held-out scores of a decoded corpus, pooled over all its documents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeldoutScores {
    pub bleu: f64,
    pub ter: f64,
    pub gleu: f64,
}

impl HeldoutScores {
    pub fn get(&self, metric: MetricKind) -> f64 {
        match metric {
            MetricKind::Bleu => self.bleu,
            MetricKind::Ter => self.ter,
            MetricKind::Gleu => self.gleu,
        }
    }
}

pub fn score_outputs(hyps: &[Sentence], corpus: &DocumentCorpus) -> Result<HeldoutScores> {
    let srcs = corpus.sources();
    let refs = corpus.references();
    let get = |m| Ok::<_, crate::Error>(doc_score(m, hyps, &refs, Some(&srcs))?.value);
    Ok(HeldoutScores {
        bleu: get(MetricKind::Bleu)?,
        ter: get(MetricKind::Ter)?,
        gleu: get(MetricKind::Gleu)?,
    })
}

pub fn evaluate(params: &ModelParams, corpus: &DocumentCorpus, beam: usize, max_len: usize) -> Result<HeldoutScores> {
    let hyps = decode_sources(params, &corpus.sources(), beam, max_len)?;
    score_outputs(&hyps, corpus)
}

pub fn evaluate_metric(
    params: &ModelParams,
    corpus: &DocumentCorpus,
    metric: MetricKind,
    beam: usize,
    max_len: usize,
) -> Result<f64> {
    let hyps = decode_sources(params, &corpus.sources(), beam, max_len)?;
    let srcs = corpus.sources();
    Ok(doc_score(metric, &hyps, &corpus.references(), Some(&srcs))?.value)
}
