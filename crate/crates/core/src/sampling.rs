//! Sample grids and document assembly.
//!
//! A [`SampleSet`] holds `N` ancestral samples for each of the `S` sentences
//! of a batch. Documents take one sample per sentence. The ordered scheme
//! ranks each sentence's samples by cost and forms document `n` from the
//! rank-`n` samples. The random scheme pairs samples through an independent
//! random permutation per sentence. In both schemes every grid cell lands in
//! exactly one of the `N` documents.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::{doc_cost, seq_cost, CostKind};
use crate::model::{Decoder, ModelParams, ScoredHypothesis};
use crate::textcore::{DocumentBatch, Sentence};

/// Upper bound on `N^S` for exhaustive document enumeration.
pub const DOCUMENT_ENUMERATION_LIMIT: f64 = 1e6;

/// Document-level cost `D(Y, Y*)` of a candidate document for a batch.
pub trait DocumentCost {
    fn document_cost(&self, batch: &DocumentBatch, hyps: &[&Sentence]) -> Result<f64>;
}

impl DocumentCost for CostKind {
    fn document_cost(&self, batch: &DocumentBatch, hyps: &[&Sentence]) -> Result<f64> {
        doc_cost(*self, hyps, &batch.references, Some(&batch.sources))
    }
}

impl<F> DocumentCost for F
where
    F: Fn(&DocumentBatch, &[&Sentence]) -> f64,
{
    fn document_cost(&self, batch: &DocumentBatch, hyps: &[&Sentence]) -> Result<f64> {
        Ok(self(batch, hyps))
    }
}

/// Sum of per-sentence costs: a document cost that decomposes over sentences.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveCost(pub CostKind);

impl DocumentCost for AdditiveCost {
    fn document_cost(&self, batch: &DocumentBatch, hyps: &[&Sentence]) -> Result<f64> {
        let kind = self.0.sentence_level();
        let mut total = 0.0;
        for (s, h) in hyps.iter().enumerate() {
            total += seq_cost(
                kind,
                h.ids(),
                batch.references[s].ids(),
                Some(batch.sources[s].ids()),
            )?;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub batch: DocumentBatch,
    /// `grid[s][n]` is the `n`-th sample for sentence `s`.
    pub grid: Vec<Vec<ScoredHypothesis>>,
    /// Sentence cost Δ of each grid cell.
    pub costs: Vec<Vec<f64>>,
    pub cost_kind: CostKind,
    /// `ranks[s][r]` is the sample index holding rank `r` (best first).
    pub ranks: Option<Vec<Vec<usize>>>,
}

impl SampleSet {
    /// Wraps an existing grid, scoring each cell with the sentence-level cost.
    pub fn from_grid(batch: DocumentBatch, grid: Vec<Vec<ScoredHypothesis>>, cost_kind: CostKind) -> Result<Self> {
        let kind = cost_kind.sentence_level();
        if grid.len() != batch.len() {
            return Err(Error::LengthMismatch {
                what: "sample grid rows and batch sentences",
                left: grid.len(),
                right: batch.len(),
            });
        }
        let n = grid.first().map_or(0, Vec::len);
        if n == 0 || grid.iter().any(|row| row.len() != n) {
            return Err(Error::config("sample grid must be rectangular with N >= 1"));
        }
        let costs = grid
            .iter()
            .enumerate()
            .map(|(s, row)| {
                row.iter()
                    .map(|h| {
                        seq_cost(
                            kind,
                            h.sentence.ids(),
                            batch.references[s].ids(),
                            Some(batch.sources[s].ids()),
                        )
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleSet {
            batch,
            grid,
            costs,
            cost_kind: kind,
            ranks: None,
        })
    }

    pub fn n_sentences(&self) -> usize {
        self.grid.len()
    }

    pub fn n_samples(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }

    /// Ranking permutation for each sentence, computed if not stored.
    pub fn rank_permutations(&self) -> Vec<Vec<usize>> {
        match &self.ranks {
            Some(r) => r.clone(),
            None => (0..self.n_sentences()).map(|s| self.rank_sentence(s)).collect(),
        }
    }

    /// Ascending cost; ties by descending log-probability, then sample index.
    fn rank_sentence(&self, s: usize) -> Vec<usize> {
        let costs = &self.costs[s];
        let row = &self.grid[s];
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| {
            costs[a]
                .total_cmp(&costs[b])
                .then(row[b].log_prob.total_cmp(&row[a].log_prob))
                .then(a.cmp(&b))
        });
        idx
    }

    /// Builds the document that picks `assignment[s]` for each sentence `s`.
    pub fn document(&self, assignment: Vec<usize>, cost: &dyn DocumentCost) -> Result<SampledDocument> {
        let hyps: Vec<&Sentence> = assignment
            .iter()
            .enumerate()
            .map(|(s, &n)| &self.grid[s][n].sentence)
            .collect();
        let cost = cost.document_cost(&self.batch, &hyps)?;
        let log_prob = assignment
            .iter()
            .enumerate()
            .fold(0.0, |acc, (s, &n)| acc + self.grid[s][n].log_prob);
        let hyps = hyps.into_iter().cloned().collect();
        Ok(SampledDocument {
            assignment,
            hyps,
            log_prob,
            cost,
            weight: 1.0 / self.n_samples() as f64,
        })
    }
}

/// One hypothesis per sentence, with its joint log-probability and cost.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledDocument {
    /// Sample index (0-based) chosen for each sentence.
    pub assignment: Vec<usize>,
    pub hyps: Vec<Sentence>,
    /// `Σ_s log P(y^(s) | x^(s); θ)`
    pub log_prob: f64,
    pub cost: f64,
    /// Monte Carlo weight: `1/N` for the N-document schemes, `1/N^S` under enumeration.
    pub weight: f64,
}

/// Draws `n` independent samples per sentence, sentence by sentence.
pub fn draw_sample_set<R: Rng + ?Sized>(
    params: &ModelParams,
    batch: &DocumentBatch,
    n: usize,
    temperature: f64,
    rng: &mut R,
    max_len: usize,
    cost_kind: CostKind,
) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::config("N must be at least 1"));
    }
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut grid = Vec::with_capacity(batch.len());
    for src in &batch.sources {
        let mut dec = Decoder::new(params, src.ids())?;
        grid.push((0..n).map(|_| dec.sample(temperature, rng, max_len)).collect());
    }
    SampleSet::from_grid(batch.clone(), grid, cost_kind)
}

/// Stores the per-sentence ranking permutation in the set.
pub fn order_samples(mut set: SampleSet) -> SampleSet {
    set.ranks = Some((0..set.n_sentences()).map(|s| set.rank_sentence(s)).collect());
    set
}

/// Document `n` concatenates the rank-`n` sample of every sentence.
pub fn build_documents_ordered(set: &SampleSet, cost: &dyn DocumentCost) -> Result<Vec<SampledDocument>> {
    let ranks = set.rank_permutations();
    (0..set.n_samples())
        .map(|r| set.document(ranks.iter().map(|perm| perm[r]).collect(), cost))
        .collect()
}

/// Each sentence's samples are dealt to the `N` documents by an independent
/// uniform permutation.
pub fn build_documents_random<R: Rng + ?Sized>(
    set: &SampleSet,
    cost: &dyn DocumentCost,
    rng: &mut R,
) -> Result<Vec<SampledDocument>> {
    let n = set.n_samples();
    let perms: Vec<Vec<usize>> = (0..set.n_sentences())
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    (0..n)
        .map(|d| set.document(perms.iter().map(|p| p[d]).collect(), cost))
        .collect()
}

/// All `N^S` documents over the grid, each weighted `1/N^S`.
pub fn enumerate_documents(set: &SampleSet, cost: &dyn DocumentCost) -> Result<Vec<SampledDocument>> {
    let n = set.n_samples();
    let s = set.n_sentences();
    let count = (n as f64).powi(s as i32);
    if count > DOCUMENT_ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            size: count,
            limit: DOCUMENT_ENUMERATION_LIMIT,
        });
    }
    let weight = 1.0 / count;
    let mut out = Vec::with_capacity(count as usize);
    let mut assignment = vec![0usize; s];
    loop {
        let mut doc = set.document(assignment.clone(), cost)?;
        doc.weight = weight;
        out.push(doc);
        // Mixed-radix increment, last sentence fastest.
        let mut pos = s;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < n {
                break;
            }
            assignment[pos] = 0;
        }
    }
}
