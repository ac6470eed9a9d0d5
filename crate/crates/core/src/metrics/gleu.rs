use std::collections::HashMap;

use crate::error::Result;
use crate::textcore::{clipped_overlap, ngrams, NgramCounts, TokenId};

use super::bleu::{check_aligned, NgramStats};

/// Source n-grams that the reference does not keep, with multiplicity.
fn source_minus_reference<'a>(src: &NgramCounts<'a>, reference: &NgramCounts<'_>) -> NgramCounts<'a> {
    let mut out = HashMap::new();
    for (g, &c) in src {
        let left = c.saturating_sub(reference.get(g).copied().unwrap_or(0));
        if left > 0 {
            out.insert(*g, left);
        }
    }
    out
}

/// Single-reference GLEU statistics for one sentence.
///
/// The per-order numerator is the number of hypothesis n-grams matching the
/// reference minus those matching source n-grams the reference dropped,
/// floored at zero.
pub fn gleu_stats(hyp: &[TokenId], src: &[TokenId], reference: &[TokenId], max_n: usize) -> NgramStats {
    let mut stats = NgramStats::zero(max_n);
    for n in 1..=max_n {
        let h = ngrams(hyp, n);
        let r = ngrams(reference, n);
        let s = ngrams(src, n);
        let matched = clipped_overlap(&h, &r);
        let penalty = clipped_overlap(&h, &source_minus_reference(&s, &r));
        stats.matches[n - 1] = matched.saturating_sub(penalty);
        stats.totals[n - 1] = (hyp.len() + 1).saturating_sub(n);
    }
    stats.hyp_len = hyp.len();
    stats.ref_len = reference.len();
    stats
}

/// Corpus GLEU, pooled over all triples, unsmoothed.
pub fn gleu<H, S, R>(hyps: &[H], srcs: &[S], refs: &[R], max_n: usize) -> Result<f64>
where
    H: AsRef<[TokenId]>,
    S: AsRef<[TokenId]>,
    R: AsRef<[TokenId]>,
{
    assert!(max_n >= 1, "max_n must be at least 1");
    check_aligned("hypotheses and references", hyps.len(), refs.len())?;
    check_aligned("hypotheses and sources", hyps.len(), srcs.len())?;
    let mut pooled = NgramStats::zero(max_n);
    for ((h, s), r) in hyps.iter().zip(srcs).zip(refs) {
        pooled.add(&gleu_stats(h.as_ref(), s.as_ref(), r.as_ref(), max_n));
    }
    Ok(pooled.score(false))
}

/// Add-one smoothed GLEU of a single sentence, the sentence-level counterpart
/// used for sequence costs and sample ranking.
pub fn sentence_gleu_smoothed(hyp: &[TokenId], src: &[TokenId], reference: &[TokenId], max_n: usize) -> f64 {
    gleu_stats(hyp, src, reference, max_n).score(true)
}
