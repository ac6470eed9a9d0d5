use crate::error::{Error, Result};
use crate::textcore::TokenId;

use super::bleu::check_aligned;

/// Longest block considered for a shift.
pub const MAX_SHIFT_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TerStats {
    /// Insertions, deletions and substitutions left after shifting.
    pub edits: usize,
    pub shifts: usize,
    pub ref_len: usize,
}

impl TerStats {
    pub fn cost(&self) -> usize {
        self.edits + self.shifts
    }

    pub fn ter(&self) -> f64 {
        self.cost() as f64 / self.ref_len as f64
    }
}

/// Word-level Levenshtein distance with unit costs.
pub fn levenshtein(a: &[TokenId], b: &[TokenId]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn occurs_in(block: &[TokenId], reference: &[TokenId]) -> bool {
    reference.windows(block.len()).any(|w| w == block)
}

/// Best single block move, if any strictly lowers the edit distance.
fn best_shift(hyp: &[TokenId], reference: &[TokenId], base: usize) -> Option<(usize, Vec<TokenId>)> {
    let mut best: Option<(usize, Vec<TokenId>)> = None;
    let n = hyp.len();
    for len in 1..=MAX_SHIFT_LEN.min(n) {
        for start in 0..=n - len {
            let block = &hyp[start..start + len];
            if !occurs_in(block, reference) {
                continue;
            }
            let rest: Vec<TokenId> = hyp[..start].iter().chain(&hyp[start + len..]).copied().collect();
            for dest in 0..=rest.len() {
                if dest == start {
                    continue;
                }
                let mut cand = Vec::with_capacity(n);
                cand.extend_from_slice(&rest[..dest]);
                cand.extend_from_slice(block);
                cand.extend_from_slice(&rest[dest..]);
                let d = levenshtein(&cand, reference);
                let bound = best.as_ref().map_or(base, |b| b.0);
                if d < bound {
                    best = Some((d, cand));
                }
            }
        }
    }
    best
}

/// Greedy shift search followed by edit counting.
pub fn ter_stats(hyp: &[TokenId], reference: &[TokenId]) -> Result<TerStats> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let mut cur = hyp.to_vec();
    let mut edits = levenshtein(&cur, reference);
    let mut shifts = 0;
    while edits > 0 {
        match best_shift(&cur, reference, edits) {
            Some((d, next)) => {
                cur = next;
                edits = d;
                shifts += 1;
            }
            None => break,
        }
    }
    Ok(TerStats {
        edits,
        shifts,
        ref_len: reference.len(),
    })
}

pub fn ter(hyp: &[TokenId], reference: &[TokenId]) -> Result<f64> {
    Ok(ter_stats(hyp, reference)?.ter())
}

/// Word error rate: Levenshtein edits over reference length, no shifts.
pub fn wer(hyp: &[TokenId], reference: &[TokenId]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(levenshtein(hyp, reference) as f64 / reference.len() as f64)
}

/// Pooled TER: total edits and shifts over total reference length.
pub fn doc_ter<H, R>(hyps: &[H], refs: &[R]) -> Result<f64>
where
    H: AsRef<[TokenId]>,
    R: AsRef<[TokenId]>,
{
    check_aligned("hypotheses and references", hyps.len(), refs.len())?;
    let mut cost = 0usize;
    let mut len = 0usize;
    for (h, r) in hyps.iter().zip(refs) {
        let s = ter_stats(h.as_ref(), r.as_ref())?;
        cost += s.cost();
        len += s.ref_len;
    }
    Ok(cost as f64 / len as f64)
}
