//! Vocabulary, sentences, n-gram extraction and parallel corpus files.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const NUM_RESERVED: usize = 4;

const RESERVED: [&str; NUM_RESERVED] = ["<pad>", "<s>", "</s>", "<unk>"];

/// A closed token inventory. Ids 0..4 are reserved for PAD, BOS, EOS and UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    fn from_corpus_tokens(corpus_tokens: Vec<String>) -> Self {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(corpus_tokens);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Vocabulary of `size` ids whose non-reserved tokens are `w0`, `w1`, ...
    pub fn synthetic(size: usize) -> Result<Self> {
        if size <= NUM_RESERVED {
            return Err(Error::config(format!("vocabulary size {size} must be at least 5")));
        }
        Ok(Self::from_corpus_tokens(
            (0..size - NUM_RESERVED).map(|i| format!("w{i}")).collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Writes the non-reserved tokens, one per line, in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for tok in &self.tokens[NUM_RESERVED..] {
            out.push_str(tok);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        if tokens.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self::from_corpus_tokens(tokens))
    }
}

/// Builds a vocabulary from whitespace-tokenized lines, keeping the most
/// frequent tokens. Ties go to the token seen first.
pub fn build_vocab<S: AsRef<str>>(lines: &[S], max_size: usize) -> Result<Vocabulary> {
    if max_size <= NUM_RESERVED {
        return Err(Error::config(format!("max_size {max_size} must be at least 5")));
    }
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for line in lines {
        for tok in line.as_ref().split_whitespace() {
            if RESERVED.contains(&tok) {
                continue;
            }
            let next = counts.len();
            counts.entry(tok).or_insert((0, next)).0 += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize, usize)> =
        counts.into_iter().map(|(t, (c, first))| (t, c, first)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(max_size - NUM_RESERVED);
    Ok(Vocabulary::from_corpus_tokens(
        ranked.into_iter().map(|(t, _, _)| t.to_string()).collect(),
    ))
}

/// A sequence of token ids without BOS/EOS markers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sentence(pub Vec<TokenId>);

impl Sentence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Sentence(ids)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<TokenId>> for Sentence {
    fn from(ids: Vec<TokenId>) -> Self {
        Sentence(ids)
    }
}

impl AsRef<[TokenId]> for Sentence {
    fn as_ref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<&[TokenId]> for Sentence {
    fn from(ids: &[TokenId]) -> Self {
        Sentence(ids.to_vec())
    }
}

pub fn encode(line: &str, vocab: &Vocabulary) -> Sentence {
    Sentence(
        line.split_whitespace()
            .map(|t| vocab.id(t).unwrap_or(UNK))
            .collect(),
    )
}

pub fn decode(sentence: &Sentence, vocab: &Vocabulary) -> Result<String> {
    let words = sentence
        .ids()
        .iter()
        .map(|&id| {
            vocab.token(id).ok_or(Error::TokenOutOfRange {
                id,
                size: vocab.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(words.join(" "))
}

/// Multiset of contiguous n-grams, keyed by borrowed slices of the sentence.
pub type NgramCounts<'a> = HashMap<&'a [TokenId], usize>;

pub fn ngrams(ids: &[TokenId], n: usize) -> NgramCounts<'_> {
    assert!(n >= 1, "n-gram order must be at least 1");
    let mut counts = HashMap::new();
    for w in ids.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Size of the multiset intersection (clipped matches).
pub fn clipped_overlap(a: &NgramCounts<'_>, b: &NgramCounts<'_>) -> usize {
    a.iter()
        .map(|(g, &c)| b.get(g).map_or(0, |&d| c.min(d)))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub source: Sentence,
    pub reference: Sentence,
    pub doc_id: u64,
}

/// Aligned source/reference pairs grouped into documents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocumentCorpus {
    pub entries: Vec<CorpusEntry>,
}

impl DocumentCorpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Contiguous runs of entries sharing a doc id.
    pub fn documents(&self) -> Vec<&[CorpusEntry]> {
        self.entries
            .chunk_by(|a, b| a.doc_id == b.doc_id)
            .collect()
    }

    pub fn sources(&self) -> Vec<Sentence> {
        self.entries.iter().map(|e| e.source.clone()).collect()
    }

    pub fn references(&self) -> Vec<Sentence> {
        self.entries.iter().map(|e| e.reference.clone()).collect()
    }

    pub fn doc_ids(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.doc_id).collect()
    }

    /// Writes the three parallel files (source, reference, doc ids).
    pub fn write(&self, vocab: &Vocabulary, src: &Path, reference: &Path, docids: &Path) -> Result<()> {
        let mut s = String::new();
        let mut r = String::new();
        let mut d = String::new();
        for e in &self.entries {
            s.push_str(&decode(&e.source, vocab)?);
            s.push('\n');
            r.push_str(&decode(&e.reference, vocab)?);
            r.push('\n');
            d.push_str(&e.doc_id.to_string());
            d.push('\n');
        }
        fs::write(src, s).map_err(|e| Error::io(src, e))?;
        fs::write(reference, r).map_err(|e| Error::io(reference, e))?;
        fs::write(docids, d).map_err(|e| Error::io(docids, e))
    }
}

/// S aligned (source, reference) pairs sharing one mini-batch context.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocumentBatch {
    pub sources: Vec<Sentence>,
    pub references: Vec<Sentence>,
    pub doc_ids: Vec<u64>,
}

impl DocumentBatch {
    pub fn new(sources: Vec<Sentence>, references: Vec<Sentence>) -> Result<Self> {
        if sources.len() != references.len() {
            return Err(Error::LengthMismatch {
                what: "batch sources and references",
                left: sources.len(),
                right: references.len(),
            });
        }
        let doc_ids = vec![0; sources.len()];
        Ok(DocumentBatch {
            sources,
            references,
            doc_ids,
        })
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = &'a CorpusEntry>) -> Self {
        let mut batch = DocumentBatch::default();
        for e in entries {
            batch.sources.push(e.source.clone());
            batch.references.push(e.reference.clone());
            batch.doc_ids.push(e.doc_id);
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Appends the pairs of `other` after this batch's pairs.
    pub fn concat(&self, other: &DocumentBatch) -> DocumentBatch {
        let mut out = self.clone();
        out.sources.extend(other.sources.iter().cloned());
        out.references.extend(other.references.iter().cloned());
        out.doc_ids.extend(other.doc_ids.iter().copied());
        out
    }
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn read_doc_ids(path: &Path) -> Result<Vec<u64>> {
    let lines = read_lines(path)?;
    let mut ids = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let id: u64 = line.trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("invalid document id {line:?}"),
        })?;
        if let Some(&prev) = ids.last() {
            if id < prev {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("document id {id} decreases (previous {prev})"),
                });
            }
        }
        ids.push(id);
    }
    Ok(ids)
}

/// Where document boundaries come from when reading a corpus.
#[derive(Debug, Clone, Copy)]
pub enum DocIds<'a> {
    File(&'a Path),
    /// Consecutive runs of this many lines form a pseudo-document.
    Pseudo(usize),
}

pub fn read_document_corpus(
    src_path: &Path,
    ref_path: &Path,
    doc_ids: DocIds<'_>,
    vocab: &Vocabulary,
) -> Result<DocumentCorpus> {
    let src = read_lines(src_path)?;
    let refs = read_lines(ref_path)?;
    if src.len() != refs.len() {
        return Err(Error::LengthMismatch {
            what: "source and reference line counts",
            left: src.len(),
            right: refs.len(),
        });
    }
    let ids = match doc_ids {
        DocIds::File(path) => {
            let ids = read_doc_ids(path)?;
            if ids.len() != src.len() {
                return Err(Error::LengthMismatch {
                    what: "source and doc-id line counts",
                    left: src.len(),
                    right: ids.len(),
                });
            }
            ids
        }
        DocIds::Pseudo(size) => {
            if size == 0 {
                return Err(Error::config("pseudo-document size must be at least 1"));
            }
            (0..src.len()).map(|i| (i / size) as u64).collect()
        }
    };
    let entries = src
        .iter()
        .zip(&refs)
        .zip(ids)
        .map(|((s, r), doc_id)| CorpusEntry {
            source: encode(s, vocab),
            reference: encode(r, vocab),
            doc_id,
        })
        .collect();
    Ok(DocumentCorpus { entries })
}
