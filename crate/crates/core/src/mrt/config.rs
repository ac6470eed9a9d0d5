use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::kv::parse_value;
use crate::harness::BatchMode;
use crate::metrics::CostKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Mle,
    SeqMrt,
    DocMrtOrdered,
    DocMrtRandom,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] = [
        TrainMode::Mle,
        TrainMode::SeqMrt,
        TrainMode::DocMrtOrdered,
        TrainMode::DocMrtRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Mle => "mle",
            TrainMode::SeqMrt => "seq_mrt",
            TrainMode::DocMrtOrdered => "doc_mrt_ordered",
            TrainMode::DocMrtRandom => "doc_mrt_random",
        }
    }

    pub fn scheme(self) -> Option<Scheme> {
        match self {
            TrainMode::DocMrtOrdered => Some(Scheme::Ordered),
            TrainMode::DocMrtRandom => Some(Scheme::Random),
            _ => None,
        }
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown training mode {s:?}")))
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Document construction scheme for doc-MRT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ordered,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Monte Carlo average with weight `1/N` per sample or document.
    Raw,
    /// Weights `∝ P^α`, renormalized over the sample or document pool.
    Renormalized,
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Estimator::Raw),
            "renormalized" => Ok(Estimator::Renormalized),
            other => Err(Error::config(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Samples per sentence (N).
    pub samples: usize,
    /// Sentences per micro-batch (S).
    pub batch_size: usize,
    pub temperature: f64,
    /// Risk sharpness α, used by the renormalized estimator.
    pub sharpness: f64,
    pub mode: TrainMode,
    pub estimator: Estimator,
    /// Either level; seq-MRT uses its sentence form, doc-MRT its document form.
    pub cost_kind: CostKind,
    pub batching: BatchMode,
    pub learning_rate: f64,
    /// Micro-batches accumulated per update (k).
    pub accumulation: usize,
    pub max_updates: usize,
    pub seed: u64,
    pub max_len: usize,
    /// Held-out evaluation period in updates; 0 disables it.
    pub eval_interval: usize,
    pub beam: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            samples: 4,
            batch_size: 4,
            temperature: 1.0,
            sharpness: 5e-3,
            mode: TrainMode::DocMrtOrdered,
            estimator: Estimator::Raw,
            cost_kind: CostKind::OneMinusDocbleu,
            batching: BatchMode::Random,
            learning_rate: 0.1,
            accumulation: 1,
            max_updates: 100,
            seed: 0,
            max_len: 10,
            eval_interval: 0,
            beam: 4,
        }
    }
}

impl TrainConfig {
    /// Sets one field from its kebab-case key. Returns `false` for keys this
    /// config does not own.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "samples" => self.samples = parse_value(key, value)?,
            "batch-size" => self.batch_size = parse_value(key, value)?,
            "temperature" => self.temperature = parse_value(key, value)?,
            "sharpness" => self.sharpness = parse_value(key, value)?,
            "mode" => self.mode = value.trim().parse()?,
            "estimator" => self.estimator = value.trim().parse()?,
            "cost-kind" => self.cost_kind = value.trim().parse()?,
            "batching" => self.batching = value.trim().parse()?,
            "learning-rate" => self.learning_rate = parse_value(key, value)?,
            "accumulation" => self.accumulation = parse_value(key, value)?,
            "max-updates" => self.max_updates = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "max-len" => self.max_len = parse_value(key, value)?,
            "eval-interval" => self.eval_interval = parse_value(key, value)?,
            "beam" => self.beam = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::config(msg));
        if self.samples == 0 {
            return fail("samples (N) must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch-size (S) must be at least 1");
        }
        if !(self.temperature > 0.0) {
            return fail("temperature must be positive");
        }
        if !(self.sharpness > 0.0) {
            return fail("sharpness must be positive");
        }
        if self.accumulation == 0 {
            return fail("accumulation (k) must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail("learning-rate must be positive and finite");
        }
        if self.beam == 0 {
            return fail("beam must be at least 1");
        }
        Ok(())
    }
}
