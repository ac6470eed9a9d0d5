use crate::error::{Error, Result};
use crate::textcore::{clipped_overlap, ngrams, TokenId};

/// Per-order n-gram statistics, summable over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramStats {
    /// Clipped matches (BLEU) or penalized matches (GLEU) per order.
    pub matches: Vec<usize>,
    /// Hypothesis n-gram totals per order.
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl NgramStats {
    pub fn zero(max_n: usize) -> Self {
        NgramStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    pub fn add(&mut self, other: &NgramStats) {
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Combines the statistics into a BLEU-style score.
    ///
    /// Smoothed: every order contributes `(m + 1) / (t + 1)`. Unsmoothed:
    /// orders with no hypothesis n-grams are left out of the geometric mean
    /// and any remaining zero precision gives 0.
    pub fn score(&self, smoothed: bool) -> f64 {
        let bp = brevity_penalty(self.hyp_len, self.ref_len);
        if bp == 0.0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0usize;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if smoothed {
                log_sum += ((m as f64 + 1.0) / (t as f64 + 1.0)).ln();
                orders += 1;
            } else if t > 0 {
                if m == 0 {
                    return 0.0;
                }
                log_sum += (m as f64 / t as f64).ln();
                orders += 1;
            }
        }
        if orders == 0 {
            return bp;
        }
        bp * (log_sum / orders as f64).exp()
    }
}

pub fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len >= ref_len {
        1.0
    } else if hyp_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

pub fn bleu_stats(hyp: &[TokenId], reference: &[TokenId], max_n: usize) -> NgramStats {
    let mut stats = NgramStats::zero(max_n);
    for n in 1..=max_n {
        let h = ngrams(hyp, n);
        let r = ngrams(reference, n);
        stats.matches[n - 1] = clipped_overlap(&h, &r);
        stats.totals[n - 1] = (hyp.len() + 1).saturating_sub(n);
    }
    stats.hyp_len = hyp.len();
    stats.ref_len = reference.len();
    stats
}

/// Sentence BLEU with add-one smoothing on every order.
pub fn sentence_bleu_smoothed(hyp: &[TokenId], reference: &[TokenId], max_n: usize) -> f64 {
    assert!(max_n >= 1, "max_n must be at least 1");
    bleu_stats(hyp, reference, max_n).score(true)
}

pub(crate) fn check_aligned(what: &'static str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { what, left, right });
    }
    if left == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(())
}

/// Corpus BLEU with n-gram counts and lengths pooled over all pairs.
pub fn corpus_bleu<H, R>(hyps: &[H], refs: &[R], max_n: usize, smoothed: bool) -> Result<f64>
where
    H: AsRef<[TokenId]>,
    R: AsRef<[TokenId]>,
{
    assert!(max_n >= 1, "max_n must be at least 1");
    check_aligned("hypotheses and references", hyps.len(), refs.len())?;
    let mut pooled = NgramStats::zero(max_n);
    for (h, r) in hyps.iter().zip(refs) {
        pooled.add(&bleu_stats(h.as_ref(), r.as_ref(), max_n));
    }
    Ok(pooled.score(smoothed))
}
