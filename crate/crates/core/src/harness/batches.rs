use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textcore::{DocumentBatch, DocumentCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchMode {
    /// Corpus-wide shuffle, then chunks of `S` (pseudo-documents).
    Random,
    /// Chunks of at most `S` consecutive sentences inside one document.
    Document,
}

impl FromStr for BatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(BatchMode::Random),
            "document" => Ok(BatchMode::Document),
            other => Err(Error::config(format!("unknown batch mode {other:?}"))),
        }
    }
}

impl fmt::Display for BatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BatchMode::Random => "random",
            BatchMode::Document => "document",
        })
    }
}

/// Partitions the corpus into batches. Short final chunks are kept. In
/// document mode the order of the batches is shuffled, their content is not.
pub fn make_batches(corpus: &DocumentCorpus, mode: BatchMode, size: usize, seed: u64) -> Result<Vec<DocumentBatch>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if size == 0 {
        return Err(Error::config("batch size S must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        BatchMode::Random => {
            let mut order: Vec<usize> = (0..corpus.len()).collect();
            order.shuffle(&mut rng);
            Ok(order
                .chunks(size)
                .map(|chunk| DocumentBatch::from_entries(chunk.iter().map(|&i| &corpus.entries[i])))
                .collect())
        }
        BatchMode::Document => {
            let mut batches: Vec<DocumentBatch> = corpus
                .documents()
                .into_iter()
                .flat_map(|doc| doc.chunks(size).map(DocumentBatch::from_entries))
                .collect();
            batches.shuffle(&mut rng);
            Ok(batches)
        }
    }
}
