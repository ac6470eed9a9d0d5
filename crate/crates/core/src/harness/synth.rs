//! Seeded synthetic parallel documents.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kv::parse_value;
use crate::error::{Error, Result};
use crate::textcore::{CorpusEntry, DocumentCorpus, Sentence, TokenId, NUM_RESERVED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub sents_per_doc: usize,
    pub train_docs: usize,
    pub valid_docs: usize,
    pub test_docs: usize,
    /// 0 identity, 1 reversal, 2 substitution cipher, 3 cipher then sort.
    pub rule: u32,
    /// Draw the cipher variant once per document instead of once per sentence.
    pub style_consistency: bool,
    /// Probability of cipher variant A.
    pub style_bias: f64,
    /// Per-token reference corruption rate, training split only.
    pub noise: f64,
    /// Seed of the cipher pair, kept apart so shifted variants of a task can
    /// share its ciphers.
    pub cipher_seed: u64,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            vocab_size: 20,
            min_len: 3,
            max_len: 8,
            sents_per_doc: 4,
            train_docs: 2000,
            valid_docs: 200,
            test_docs: 100,
            rule: 3,
            style_consistency: true,
            style_bias: 0.5,
            noise: 0.0,
            cipher_seed: 0,
            seed: 0,
        }
    }
}

impl TaskSpec {
    /// Sets one field from its kebab-case key. Returns `false` for keys this
    /// spec does not own.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "vocab-size" => self.vocab_size = parse_value(key, value)?,
            "min-sent-len" => self.min_len = parse_value(key, value)?,
            "max-sent-len" => self.max_len = parse_value(key, value)?,
            "sents-per-doc" => self.sents_per_doc = parse_value(key, value)?,
            "train-docs" => self.train_docs = parse_value(key, value)?,
            "valid-docs" => self.valid_docs = parse_value(key, value)?,
            "test-docs" => self.test_docs = parse_value(key, value)?,
            "rule" => self.rule = parse_value(key, value)?,
            "style-consistency" => self.style_consistency = parse_value(key, value)?,
            "style-bias" => self.style_bias = parse_value(key, value)?,
            "noise" => self.noise = parse_value(key, value)?,
            "cipher-seed" => self.cipher_seed = parse_value(key, value)?,
            "task-seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rule > 3 {
            return Err(Error::InvalidRule(self.rule));
        }
        if self.vocab_size < NUM_RESERVED + 1 {
            return Err(Error::config("vocab-size must be at least 5"));
        }
        if self.min_len > self.max_len {
            return Err(Error::config("min-sent-len exceeds max-sent-len"));
        }
        if self.sents_per_doc == 0 {
            return Err(Error::config("sents-per-doc must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.style_bias) || !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::config("style-bias and noise must lie in [0, 1]"));
        }
        Ok(())
    }

    fn content_tokens(&self) -> Vec<TokenId> {
        (NUM_RESERVED as TokenId..self.vocab_size as TokenId).collect()
    }
}

/// The two cipher variants of a task, as lookup tables over all token ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CipherPair {
    pub a: Vec<TokenId>,
    pub b: Vec<TokenId>,
}

impl CipherPair {
    /// Variant A is a random permutation of the content tokens. Variant B
    /// agrees with A on half of them and rotates A's images on the rest.
    fn draw(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Self {
        let content = spec.content_tokens();
        let mut image = content.clone();
        image.shuffle(rng);
        let mut a: Vec<TokenId> = (0..spec.vocab_size as TokenId).collect();
        for (&x, &y) in content.iter().zip(&image) {
            a[x as usize] = y;
        }
        let mut changed = content.clone();
        changed.shuffle(rng);
        changed.truncate((content.len() / 2).max(2).min(content.len()));
        let mut b = a.clone();
        for (i, &x) in changed.iter().enumerate() {
            let next = changed[(i + 1) % changed.len()];
            b[x as usize] = a[next as usize];
        }
        CipherPair { a, b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: DocumentCorpus,
    pub valid: DocumentCorpus,
    pub test: DocumentCorpus,
    pub ciphers: CipherPair,
    /// Variant drawn for each training document (`true` = A); per-sentence
    /// draws are not recorded.
    pub train_variants: Vec<bool>,
}

fn transduce(rule: u32, source: &[TokenId], cipher: &[TokenId]) -> Vec<TokenId> {
    match rule {
        0 => source.to_vec(),
        1 => source.iter().rev().copied().collect(),
        2 => source.iter().map(|&t| cipher[t as usize]).collect(),
        _ => {
            let mut out: Vec<TokenId> = source.iter().map(|&t| cipher[t as usize]).collect();
            out.sort_unstable();
            out
        }
    }
}

fn generate_split(
    spec: &TaskSpec,
    ciphers: &CipherPair,
    docs: usize,
    noisy: bool,
    rng: &mut ChaCha8Rng,
) -> (DocumentCorpus, Vec<bool>) {
    let content = spec.content_tokens();
    let mut entries = Vec::with_capacity(docs * spec.sents_per_doc);
    let mut variants = Vec::with_capacity(docs);
    for doc in 0..docs {
        let doc_variant = rng.gen_bool(spec.style_bias);
        variants.push(doc_variant);
        for _ in 0..spec.sents_per_doc {
            let len = rng.gen_range(spec.min_len..=spec.max_len);
            let source: Vec<TokenId> = (0..len).map(|_| *content.choose(rng).unwrap()).collect();
            let use_a = if spec.style_consistency {
                doc_variant
            } else {
                rng.gen_bool(spec.style_bias)
            };
            let cipher = if use_a { &ciphers.a } else { &ciphers.b };
            let mut reference = transduce(spec.rule, &source, cipher);
            if noisy && spec.noise > 0.0 {
                for t in reference.iter_mut() {
                    if rng.gen_bool(spec.noise) {
                        *t = *content.choose(rng).unwrap();
                    }
                }
            }
            entries.push(CorpusEntry {
                source: Sentence(source),
                reference: Sentence(reference),
                doc_id: doc as u64,
            });
        }
    }
    (DocumentCorpus { entries }, variants)
}

/// Train, validation and test splits of the synthetic task. Splits are drawn
/// one after another from one seeded stream, so they never share a document.
/// The cipher pair depends on `cipher_seed` alone.
pub fn generate_synthetic_corpus(spec: &TaskSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let ciphers = CipherPair::draw(spec, &mut ChaCha8Rng::seed_from_u64(spec.cipher_seed));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (train, train_variants) = generate_split(spec, &ciphers, spec.train_docs, true, &mut rng);
    let (valid, _) = generate_split(spec, &ciphers, spec.valid_docs, false, &mut rng);
    let (test, _) = generate_split(spec, &ciphers, spec.test_docs, false, &mut rng);
    Ok(SyntheticCorpus {
        train,
        valid,
        test,
        ciphers,
        train_variants,
    })
}
