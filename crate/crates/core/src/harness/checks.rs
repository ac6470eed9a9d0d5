//! Gradient and enumeration self-checks behind the `grad-check` and
//! `enum-check` commands.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::metrics::CostKind;
use crate::model::{
    enumerate_output_space, log_prob, log_prob_grad, mle_loss_grad, ModelDims, ModelParams,
};
use crate::mrt::{exact_risk, exact_risk_and_grad, exact_risk_grad, fd_gradient_check};
use crate::textcore::{DocumentBatch, Sentence, TokenId, NUM_RESERVED};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckLine {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        CheckLine {
            name: name.to_string(),
            value,
            threshold,
            passed: value < threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub checks: Vec<CheckLine>,
    pub passed: bool,
}

impl CheckReport {
    fn new(checks: Vec<CheckLine>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        CheckReport { checks, passed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub coords: usize,
    pub eps: f64,
    /// Vocabulary and length cap of the exact-risk instance (two sentences).
    pub risk_vocab: usize,
    pub risk_max_len: usize,
    pub seed: u64,
    /// Adds `1e-3` to this coordinate of every analytic gradient.
    pub corrupt: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            vocab: 6,
            embed: 4,
            hidden: 4,
            max_len: 4,
            coords: 50,
            eps: 1e-4,
            risk_vocab: 5,
            risk_max_len: 2,
            seed: 0,
            corrupt: None,
        }
    }
}

pub const LOG_PROB_TOLERANCE: f64 = 1e-5;
pub const EXACT_RISK_TOLERANCE: f64 = 1e-4;
pub const ENUMERATION_TOLERANCE: f64 = 1e-10;

fn random_sentence(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> Sentence {
    Sentence(
        (0..len)
            .map(|_| rng.gen_range(NUM_RESERVED as TokenId..vocab as TokenId))
            .collect(),
    )
}

/// `count` distinct random coordinates among the first `len`; the corrupted
/// coordinate, if any, is always included.
fn coordinates(rng: &mut ChaCha8Rng, len: usize, count: usize, corrupt: Option<usize>) -> Vec<usize> {
    let mut coords = sample_indices(rng, len, count.min(len)).into_vec();
    if let Some(c) = corrupt.filter(|&c| c < len) {
        if !coords.contains(&c) {
            coords[0] = c;
        }
    }
    coords
}

fn params_with(dims: ModelDims, theta: &[f64]) -> ModelParams {
    ModelParams::from_values(dims, theta.to_vec()).expect("layout preserved")
}

/// Finite-difference checks of `log_prob`, the MLE loss and the exact risk.
pub fn grad_check_cmd(cfg: &GradCheckConfig) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = ModelDims::new(cfg.vocab, cfg.embed, cfg.hidden)?;
    let p = ModelParams::init(dims, cfg.seed.wrapping_add(1));
    let corrupt = |mut g: Vec<f64>| {
        if let Some(c) = cfg.corrupt.filter(|&c| c < g.len()) {
            g[c] += 1e-3;
        }
        g
    };

    let src = random_sentence(&mut rng, cfg.vocab, 3);
    let tgt = random_sentence(&mut rng, cfg.vocab, cfg.max_len.saturating_sub(1));
    let g = corrupt(log_prob_grad(&p, &src, &tgt, cfg.max_len)?);
    let coords = coordinates(&mut rng, p.len(), cfg.coords, cfg.corrupt);
    let lp = fd_gradient_check(
        |t| log_prob(&params_with(dims, t), &src, &tgt, cfg.max_len).unwrap(),
        &p.values,
        &g,
        cfg.eps,
        &coords,
    );

    let batch = DocumentBatch::new(
        (0..3).map(|i| random_sentence(&mut rng, cfg.vocab, 2 + i)).collect(),
        (0..3).map(|i| random_sentence(&mut rng, cfg.vocab, (1 + i).min(cfg.max_len))).collect(),
    )?;
    let (_, g) = mle_loss_grad(&p, &batch, cfg.max_len)?;
    let g = corrupt(g);
    let coords = coordinates(&mut rng, p.len(), cfg.coords, cfg.corrupt);
    let mle = fd_gradient_check(
        |t| mle_loss_grad(&params_with(dims, t), &batch, cfg.max_len).unwrap().0,
        &p.values,
        &g,
        cfg.eps,
        &coords,
    );

    let rdims = ModelDims::new(cfg.risk_vocab, cfg.embed, cfg.hidden)?;
    let rp = ModelParams::init(rdims, cfg.seed.wrapping_add(2));
    let rbatch = DocumentBatch::new(
        (0..2).map(|_| random_sentence(&mut rng, cfg.risk_vocab, 2)).collect(),
        (0..2).map(|i| random_sentence(&mut rng, cfg.risk_vocab, 1 + i)).collect(),
    )?;
    let (_, g) = exact_risk_and_grad(&rp, &rbatch, &CostKind::DocTer, cfg.risk_max_len)?;
    let g = corrupt(g);
    let coords = coordinates(&mut rng, rp.len(), cfg.coords, cfg.corrupt);
    let risk = fd_gradient_check(
        |t| exact_risk(&params_with(rdims, t), &rbatch, &CostKind::DocTer, cfg.risk_max_len).unwrap(),
        &rp.values,
        &g,
        cfg.eps,
        &coords,
    );

    Ok(CheckReport::new(vec![
        CheckLine::below("log_prob", lp.max_rel_error, LOG_PROB_TOLERANCE),
        CheckLine::below("mle_loss", mle.max_rel_error, LOG_PROB_TOLERANCE),
        CheckLine::below("exact_risk", risk.max_rel_error, EXACT_RISK_TOLERANCE),
    ]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumCheckConfig {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for EnumCheckConfig {
    fn default() -> Self {
        EnumCheckConfig {
            vocab: 5,
            embed: 3,
            hidden: 3,
            max_len: 3,
            trials: 20,
            seed: 0,
        }
    }
}

/// Enumeration oracles: normalization of the output space over random
/// parameters and the constant-cost null gradient on a two-sentence batch.
pub fn enum_check(cfg: &EnumCheckConfig) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = ModelDims::new(cfg.vocab, cfg.embed, cfg.hidden)?;
    let mut max_dev: f64 = 0.0;
    for trial in 0..cfg.trials {
        let mut p = ModelParams::init(dims, cfg.seed.wrapping_add(trial as u64));
        p.values.iter_mut().for_each(|v| *v *= 20.0);
        let src = random_sentence(&mut rng, cfg.vocab, 1 + trial % 3);
        let space = enumerate_output_space(&p, &src, cfg.max_len)?;
        let total: f64 = space.iter().map(|h| h.prob()).sum();
        max_dev = max_dev.max((total - 1.0).abs());
    }

    let p = ModelParams::init(dims, cfg.seed);
    let batch = DocumentBatch::new(
        (0..2).map(|_| random_sentence(&mut rng, cfg.vocab, 2)).collect(),
        (0..2).map(|_| random_sentence(&mut rng, cfg.vocab, 2)).collect(),
    )?;
    let constant = |_: &DocumentBatch, _: &[&Sentence]| 0.7;
    let g = exact_risk_grad(&p, &batch, &constant, cfg.max_len.min(2))?;
    let null = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    Ok(CheckReport::new(vec![
        CheckLine {
            name: "normalization".into(),
            value: max_dev,
            threshold: ENUMERATION_TOLERANCE,
            passed: max_dev <= ENUMERATION_TOLERANCE,
        },
        CheckLine {
            name: "constant_cost_null".into(),
            value: null,
            threshold: ENUMERATION_TOLERANCE,
            passed: null <= ENUMERATION_TOLERANCE,
        },
    ]))
}
