//! Sentence- and document-level metrics and the costs derived from them.
//!
//! All scores compare token ids. BLEU and GLEU lie in `[0, 1]`; TER is
//! non-negative and may exceed 1. Costs are oriented so that lower is better.

mod bleu;
mod gleu;
mod ter;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu_stats, brevity_penalty, corpus_bleu, sentence_bleu_smoothed, NgramStats};
pub use gleu::{gleu, gleu_stats, sentence_gleu_smoothed};
pub use ter::{doc_ter, levenshtein, ter, ter_stats, wer, TerStats, MAX_SHIFT_LEN};

use crate::error::{Error, Result};
use crate::textcore::TokenId;

pub const DEFAULT_MAX_N: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Bleu,
    Ter,
    Gleu,
}

impl MetricKind {
    pub fn higher_is_better(self) -> bool {
        !matches!(self, MetricKind::Ter)
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bleu" => Ok(MetricKind::Bleu),
            "ter" => Ok(MetricKind::Ter),
            "gleu" => Ok(MetricKind::Gleu),
            other => Err(Error::config(format!("unknown metric {other:?}"))),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Bleu => "bleu",
            MetricKind::Ter => "ter",
            MetricKind::Gleu => "gleu",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub kind: MetricKind,
    pub value: f64,
}

/// Selects a sentence cost (Δ) or document cost (D).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    OneMinusSbleu,
    OneMinusDocbleu,
    SentTer,
    DocTer,
    OneMinusSentGleu,
    OneMinusDocGleu,
}

impl CostKind {
    pub const ALL: [CostKind; 6] = [
        CostKind::OneMinusSbleu,
        CostKind::OneMinusDocbleu,
        CostKind::SentTer,
        CostKind::DocTer,
        CostKind::OneMinusSentGleu,
        CostKind::OneMinusDocGleu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::OneMinusSbleu => "one_minus_sbleu",
            CostKind::OneMinusDocbleu => "one_minus_docbleu",
            CostKind::SentTer => "sent_ter",
            CostKind::DocTer => "doc_ter",
            CostKind::OneMinusSentGleu => "one_minus_sent_gleu",
            CostKind::OneMinusDocGleu => "one_minus_doc_gleu",
        }
    }

    pub fn is_document_level(self) -> bool {
        matches!(
            self,
            CostKind::OneMinusDocbleu | CostKind::DocTer | CostKind::OneMinusDocGleu
        )
    }

    pub fn sentence_level(self) -> CostKind {
        match self {
            CostKind::OneMinusDocbleu => CostKind::OneMinusSbleu,
            CostKind::DocTer => CostKind::SentTer,
            CostKind::OneMinusDocGleu => CostKind::OneMinusSentGleu,
            k => k,
        }
    }

    pub fn document_level(self) -> CostKind {
        match self {
            CostKind::OneMinusSbleu => CostKind::OneMinusDocbleu,
            CostKind::SentTer => CostKind::DocTer,
            CostKind::OneMinusSentGleu => CostKind::OneMinusDocGleu,
            k => k,
        }
    }

    pub fn metric(self) -> MetricKind {
        match self {
            CostKind::OneMinusSbleu | CostKind::OneMinusDocbleu => MetricKind::Bleu,
            CostKind::SentTer | CostKind::DocTer => MetricKind::Ter,
            CostKind::OneMinusSentGleu | CostKind::OneMinusDocGleu => MetricKind::Gleu,
        }
    }

    pub fn needs_sources(self) -> bool {
        self.metric() == MetricKind::Gleu
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CostKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown cost kind {s:?}")))
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sentence-level cost Δ(hyp, ref).
pub fn seq_cost(kind: CostKind, hyp: &[TokenId], reference: &[TokenId], src: Option<&[TokenId]>) -> Result<f64> {
    match kind {
        CostKind::OneMinusSbleu => Ok(1.0 - sentence_bleu_smoothed(hyp, reference, DEFAULT_MAX_N)),
        CostKind::SentTer => ter(hyp, reference),
        CostKind::OneMinusSentGleu => {
            let src = src.ok_or(Error::MissingSources)?;
            Ok(1.0 - sentence_gleu_smoothed(hyp, src, reference, DEFAULT_MAX_N))
        }
        k => Err(Error::WrongCostLevel(k.name(), "sentence")),
    }
}

/// Document-level cost D(Y, Y*).
pub fn doc_cost<H, R, S>(kind: CostKind, hyps: &[H], refs: &[R], srcs: Option<&[S]>) -> Result<f64>
where
    H: AsRef<[TokenId]>,
    R: AsRef<[TokenId]>,
    S: AsRef<[TokenId]>,
{
    match kind {
        CostKind::OneMinusDocbleu => Ok(1.0 - corpus_bleu(hyps, refs, DEFAULT_MAX_N, false)?),
        CostKind::DocTer => doc_ter(hyps, refs),
        CostKind::OneMinusDocGleu => {
            let srcs = srcs.ok_or(Error::MissingSources)?;
            Ok(1.0 - gleu(hyps, srcs, refs, DEFAULT_MAX_N)?)
        }
        k => Err(Error::WrongCostLevel(k.name(), "document")),
    }
}

/// Document score for a metric (BLEU unsmoothed, pooled TER, GLEU).
pub fn doc_score<H, R, S>(metric: MetricKind, hyps: &[H], refs: &[R], srcs: Option<&[S]>) -> Result<MetricScore>
where
    H: AsRef<[TokenId]>,
    R: AsRef<[TokenId]>,
    S: AsRef<[TokenId]>,
{
    let value = match metric {
        MetricKind::Bleu => corpus_bleu(hyps, refs, DEFAULT_MAX_N, false)?,
        MetricKind::Ter => doc_ter(hyps, refs)?,
        MetricKind::Gleu => gleu(hyps, srcs.ok_or(Error::MissingSources)?, refs, DEFAULT_MAX_N)?,
    };
    Ok(MetricScore { kind: metric, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type NoSrc = Option<&'static [Vec<TokenId>]>;

    #[test]
    fn seq_cost_examples() {
        let s = [4, 5, 6];
        assert_eq!(seq_cost(CostKind::OneMinusSbleu, &s, &s, None).unwrap(), 0.0);
        assert_eq!(seq_cost(CostKind::SentTer, &s, &s, None).unwrap(), 0.0);
        let c = seq_cost(CostKind::OneMinusSbleu, &[4, 5, 6], &[7, 8, 9], None).unwrap();
        assert!((c - 0.5482).abs() < 1e-4);
        assert!(matches!(
            seq_cost(CostKind::DocTer, &s, &s, None),
            Err(Error::WrongCostLevel(..))
        ));
        assert!(matches!(
            seq_cost(CostKind::OneMinusSentGleu, &s, &s, None),
            Err(Error::MissingSources)
        ));
    }

    #[test]
    fn doc_cost_examples() {
        let refs = vec![vec![11, 12], vec![4, 5, 6]];
        assert_eq!(doc_cost(CostKind::OneMinusDocbleu, &refs, &refs, None as NoSrc).unwrap(), 0.0);
        assert_eq!(doc_cost(CostKind::DocTer, &refs, &refs, None as NoSrc).unwrap(), 0.0);
        assert!(matches!(
            doc_cost(CostKind::SentTer, &refs, &refs, None as NoSrc),
            Err(Error::WrongCostLevel(..))
        ));
        let hyps = vec![vec![11, 12], vec![4, 5, 6]];
        let refs = vec![vec![11, 12], vec![4, 10, 6]];
        // The trigram (4,5,6) is unmatched, so unsmoothed 4-gram document BLEU is 0.
        assert_eq!(doc_cost(CostKind::OneMinusDocbleu, &hyps, &refs, None as NoSrc).unwrap(), 1.0);
    }

    #[test]
    fn cost_kind_names_parse() {
        for k in CostKind::ALL {
            assert_eq!(k.name().parse::<CostKind>().unwrap(), k);
            assert_eq!(k.sentence_level().document_level(), k.document_level());
            assert!(!k.sentence_level().is_document_level());
        }
    }

    fn sentence() -> impl Strategy<Value = Vec<TokenId>> {
        prop::collection::vec(4u32..9, 1..9)
    }

    proptest! {
        #[test]
        fn sbleu_in_unit_interval(h in sentence(), r in sentence()) {
            let s = sentence_bleu_smoothed(&h, &r, 4);
            prop_assert!(s > 0.0 && s <= 1.0);
            if h == r {
                prop_assert_eq!(s, 1.0);
            } else if h.len() == r.len() {
                prop_assert!(s < 1.0);
            }
        }

        #[test]
        fn ter_never_exceeds_wer(h in sentence(), r in sentence()) {
            prop_assert!(ter(&h, &r).unwrap() <= wer(&h, &r).unwrap() + 1e-15);
        }

        #[test]
        fn doc_ter_between_sentence_extremes(pairs in prop::collection::vec((sentence(), sentence()), 1..5)) {
            let (h, r): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let d = doc_ter(&h, &r).unwrap();
            let each: Vec<f64> = h.iter().zip(&r).map(|(a, b)| ter(a, b).unwrap()).collect();
            let lo = each.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = each.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(d >= lo - 1e-12 && d <= hi + 1e-12);
        }

        #[test]
        fn unsmoothed_zero_when_an_order_misses(h in sentence(), r in sentence()) {
            let stats = bleu_stats(&h, &r, 4);
            let missing = stats.matches.iter().zip(&stats.totals).any(|(&m, &t)| t > 0 && m == 0);
            if missing {
                prop_assert_eq!(corpus_bleu(&[&h], &[&r], 4, false).unwrap(), 0.0);
            }
        }

        #[test]
        fn pooled_scores_are_permutation_invariant(
            triples in prop::collection::vec((sentence(), sentence(), sentence()), 1..6),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = triples.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |t: &[(Vec<u32>, Vec<u32>, Vec<u32>)]| {
                let h: Vec<_> = t.iter().map(|x| x.0.clone()).collect();
                let r: Vec<_> = t.iter().map(|x| x.1.clone()).collect();
                let s: Vec<_> = t.iter().map(|x| x.2.clone()).collect();
                (h, r, s)
            };
            let (h1, r1, s1) = split(&triples);
            let (h2, r2, s2) = split(&shuffled);
            for m in [MetricKind::Bleu, MetricKind::Ter, MetricKind::Gleu] {
                let a = doc_score(m, &h1, &r1, Some(&s1)).unwrap().value;
                let b = doc_score(m, &h2, &r2, Some(&s2)).unwrap().value;
                prop_assert_eq!(a, b);
            }
        }
    }
}
