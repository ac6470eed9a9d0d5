//! Corpus scoring from text files.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{doc_score, MetricKind};
use crate::textcore::{read_doc_ids, read_lines, Sentence, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentScore {
    pub doc_id: u64,
    pub sentences: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub metric: MetricKind,
    pub sentences: usize,
    pub corpus: f64,
    pub documents: Vec<DocumentScore>,
}

/// Scores aligned token-id sentences. Without `doc_ids` the whole corpus is
/// document 0.
pub fn score_token_lines(
    metric: MetricKind,
    hyps: &[Sentence],
    refs: &[Sentence],
    srcs: Option<&[Sentence]>,
    doc_ids: Option<&[u64]>,
) -> Result<ScoreReport> {
    if metric == MetricKind::Gleu && srcs.is_none() {
        return Err(Error::MissingSources);
    }
    let check = |what, n: usize| {
        if n == hyps.len() {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                what,
                left: hyps.len(),
                right: n,
            })
        }
    };
    check("hypothesis and reference lines", refs.len())?;
    if let Some(s) = srcs {
        check("hypothesis and source lines", s.len())?;
    }
    if let Some(d) = doc_ids {
        check("hypothesis and doc-id lines", d.len())?;
    }
    let corpus = doc_score(metric, hyps, refs, srcs)?.value;
    let ids: Vec<u64> = doc_ids.map_or_else(|| vec![0; hyps.len()], <[u64]>::to_vec);
    let mut documents = Vec::new();
    let mut start = 0;
    while start < ids.len() {
        let end = start + ids[start..].iter().take_while(|&&d| d == ids[start]).count();
        let score = doc_score(metric, &hyps[start..end], &refs[start..end], srcs.map(|s| &s[start..end]))?.value;
        documents.push(DocumentScore {
            doc_id: ids[start],
            sentences: end - start,
            score,
        });
        start = end;
    }
    Ok(ScoreReport {
        metric,
        sentences: hyps.len(),
        corpus,
        documents,
    })
}

/// Maps every distinct surface token to its own id; metrics only compare ids.
#[derive(Default)]
struct Interner(HashMap<String, TokenId>);

impl Interner {
    fn sentence(&mut self, line: &str) -> Sentence {
        Sentence(
            line.split_whitespace()
                .map(|tok| {
                    let next = self.0.len() as TokenId;
                    *self.0.entry(tok.to_string()).or_insert(next)
                })
                .collect(),
        )
    }

    fn file(&mut self, path: &Path) -> Result<Vec<Sentence>> {
        Ok(read_lines(path)?.iter().map(|l| self.sentence(l)).collect())
    }
}

pub fn score_corpus(
    hyp_path: &Path,
    ref_path: &Path,
    src_path: Option<&Path>,
    docid_path: Option<&Path>,
    metric: MetricKind,
) -> Result<ScoreReport> {
    if metric == MetricKind::Gleu && src_path.is_none() {
        return Err(Error::MissingSources);
    }
    let mut interner = Interner::default();
    let hyps = interner.file(hyp_path)?;
    let refs = interner.file(ref_path)?;
    let srcs = src_path.map(|p| interner.file(p)).transpose()?;
    let ids = docid_path.map(read_doc_ids).transpose()?;
    score_token_lines(metric, &hyps, &refs, srcs.as_deref(), ids.as_deref())
}
