//! Minimal autoregressive encoder-decoder with exact gradients.
//!
//! The source is encoded as the mean of its token embeddings. Each decoder
//! step feeds `[context ; embedding(previous target token)]` through one
//! `tanh` layer and an output projection:
//!
//! ```text
//! hidden = tanh(W^T [ctx; E_t[prev]] + b)
//! logits = U^T hidden + c
//! ```
//!
//! Generation stops at EOS. A sentence that reaches `max_len` tokens is
//! terminated with probability one, so the output space of sentences of
//! length `<= max_len` carries a normalized distribution.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textcore::{DocumentBatch, Sentence, TokenId, BOS, EOS};

pub const CHECKPOINT_MAGIC: &str = "docmrt-ckpt v1";
pub const INIT_SCALE: f64 = 0.1;
/// Upper bound on `V^max_len` for exhaustive output-space enumeration.
pub const ENUMERATION_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl ModelDims {
    pub fn new(vocab: usize, embed: usize, hidden: usize) -> Result<Self> {
        if vocab < 5 || embed == 0 || hidden == 0 {
            return Err(Error::config(format!(
                "model dims need V >= 5 and d, h >= 1 (got V={vocab} d={embed} h={hidden})"
            )));
        }
        Ok(ModelDims { vocab, embed, hidden })
    }

    /// `2Vd + 2dh + h + hV + V`
    pub fn num_params(&self) -> usize {
        let (v, d, h) = (self.vocab, self.embed, self.hidden);
        2 * v * d + 2 * d * h + h + h * v + v
    }

    fn layout(&self) -> Layout {
        let (v, d, h) = (self.vocab, self.embed, self.hidden);
        let src_embed = 0;
        let tgt_embed = src_embed + v * d;
        let w = tgt_embed + v * d;
        let b = w + 2 * d * h;
        let u = b + h;
        let c = u + h * v;
        Layout {
            src_embed,
            tgt_embed,
            w,
            b,
            u,
            c,
        }
    }
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    src_embed: usize,
    tgt_embed: usize,
    w: usize,
    b: usize,
    u: usize,
    c: usize,
}

/// Flat parameter vector `θ = [E_s, E_t, W, b, U, c]`, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        ModelParams {
            dims,
            values: vec![0.0; dims.num_params()],
        }
    }

    /// I.i.d. uniform entries in `[-0.1, 0.1]`.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..dims.num_params())
            .map(|_| rng.gen_range(-INIT_SCALE..=INIT_SCALE))
            .collect();
        ModelParams { dims, values }
    }

    pub fn from_values(dims: ModelDims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.num_params() {
            return Err(Error::LengthMismatch {
                what: "parameter vector and layout",
                left: values.len(),
                right: dims.num_params(),
            });
        }
        Ok(ModelParams { dims, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_checkpoint_string(&self) -> String {
        let d = self.dims;
        let mut out = format!("{CHECKPOINT_MAGIC} {} {} {}\n", d.vocab, d.embed, d.hidden);
        for v in &self.values {
            // LowerExp prints the shortest digits that round-trip.
            writeln!(out, "{v:e}").unwrap();
        }
        out
    }

    pub fn from_checkpoint_str(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let rest = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .ok_or_else(|| parse_err(1, format!("bad header {header:?}")))?;
        let nums: Vec<usize> = rest
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(1, e.to_string()))?;
        let [v, d, h] = nums[..] else {
            return Err(parse_err(1, format!("expected V d h, got {rest:?}")));
        };
        let dims = ModelDims::new(v, d, h)?;
        let mut values = Vec::with_capacity(dims.num_params());
        for (i, line) in lines.enumerate() {
            let x: f64 = line
                .trim()
                .parse()
                .map_err(|_| parse_err(i + 2, format!("invalid parameter {line:?}")))?;
            values.push(x);
        }
        Self::from_values(dims, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text, path)
    }

    fn layout(&self) -> Layout {
        self.dims.layout()
    }
}

/// A sentence together with its natural-log probability under the model
/// (at temperature 1, EOS included unless forced).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredHypothesis {
    pub sentence: Sentence,
    pub log_prob: f64,
}

impl ScoredHypothesis {
    pub fn prob(&self) -> f64 {
        self.log_prob.exp()
    }
}

fn log_softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    for x in z.iter_mut() {
        *x -= lse;
    }
}

fn check_ids(ids: &[TokenId], vocab: usize) -> Result<()> {
    match ids.iter().find(|&&id| id as usize >= vocab) {
        Some(&id) => Err(Error::TokenOutOfRange { id, size: vocab }),
        None => Ok(()),
    }
}

/// Per-source view of the decoder. The next-token distribution depends only
/// on the source and the previous token, so rows are cached by previous token.
pub struct Decoder<'a> {
    params: &'a ModelParams,
    ctx: Vec<f64>,
    rows: Vec<Option<Row>>,
}

struct Row {
    hidden: Vec<f64>,
    logits: Vec<f64>,
    log_probs: Vec<f64>,
}

impl<'a> Decoder<'a> {
    pub fn new(params: &'a ModelParams, src: &[TokenId]) -> Result<Self> {
        let dims = params.dims;
        check_ids(src, dims.vocab)?;
        let lay = params.layout();
        let d = dims.embed;
        let mut ctx = vec![0.0; d];
        if !src.is_empty() {
            for &tok in src {
                let row = &params.values[lay.src_embed + tok as usize * d..][..d];
                for (c, e) in ctx.iter_mut().zip(row) {
                    *c += e;
                }
            }
            let inv = 1.0 / src.len() as f64;
            for c in &mut ctx {
                *c *= inv;
            }
        }
        let mut rows = Vec::with_capacity(dims.vocab);
        rows.resize_with(dims.vocab, || None);
        Ok(Decoder { params, ctx, rows })
    }

    pub fn vocab(&self) -> usize {
        self.params.dims.vocab
    }

    fn compute_row(&self, prev: TokenId) -> Row {
        let dims = self.params.dims;
        let (v, d, h) = (dims.vocab, dims.embed, dims.hidden);
        let lay = self.params.layout();
        let theta = &self.params.values;
        let emb = &theta[lay.tgt_embed + prev as usize * d..][..d];
        let mut hidden = theta[lay.b..lay.b + h].to_vec();
        for (j, &x) in self.ctx.iter().chain(emb).enumerate() {
            let w_row = &theta[lay.w + j * h..][..h];
            for (acc, &w) in hidden.iter_mut().zip(w_row) {
                *acc += x * w;
            }
        }
        for x in &mut hidden {
            *x = x.tanh();
        }
        let mut logits = theta[lay.c..lay.c + v].to_vec();
        for (i, &a) in hidden.iter().enumerate() {
            let u_row = &theta[lay.u + i * v..][..v];
            for (acc, &u) in logits.iter_mut().zip(u_row) {
                *acc += a * u;
            }
        }
        let mut log_probs = logits.clone();
        log_softmax_in_place(&mut log_probs);
        Row {
            hidden,
            logits,
            log_probs,
        }
    }

    fn row(&mut self, prev: TokenId) -> &Row {
        let idx = prev as usize;
        if self.rows[idx].is_none() {
            self.rows[idx] = Some(self.compute_row(prev));
        }
        self.rows[idx].as_ref().unwrap()
    }

    /// Log-probabilities (temperature 1) of every next token after `prev`.
    pub fn next_log_probs(&mut self, prev: TokenId) -> &[f64] {
        &self.row(prev).log_probs
    }

    /// Log-probability of `tgt`, including the EOS step when `len < max_len`.
    pub fn score(&mut self, tgt: &[TokenId], max_len: usize) -> Result<f64> {
        if tgt.len() > max_len {
            return Err(Error::TargetTooLong {
                len: tgt.len(),
                max_len,
            });
        }
        check_ids(tgt, self.vocab())?;
        let mut lp = 0.0;
        let mut prev = BOS;
        for &tok in tgt {
            lp += self.next_log_probs(prev)[tok as usize];
            prev = tok;
        }
        if tgt.len() < max_len {
            lp += self.next_log_probs(prev)[EOS as usize];
        }
        Ok(lp)
    }

    /// Draws one sentence left to right. `temperature == 0` decodes greedily.
    pub fn sample<R: Rng + ?Sized>(&mut self, temperature: f64, rng: &mut R, max_len: usize) -> ScoredHypothesis {
        assert!(temperature >= 0.0, "temperature must be non-negative");
        let mut ids = Vec::new();
        let mut lp = 0.0;
        let mut prev = BOS;
        let mut weights = vec![0.0; self.vocab()];
        while ids.len() < max_len {
            let row = self.row(prev);
            let tok = if temperature == 0.0 {
                argmax(&row.log_probs)
            } else {
                let scaled = row.logits.iter().map(|z| z / temperature);
                let m = scaled.clone().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (w, z) in weights.iter_mut().zip(scaled) {
                    *w = (z - m).exp();
                    total += *w;
                }
                let mut u = rng.gen::<f64>() * total;
                let mut pick = weights.len() - 1;
                for (i, &w) in weights.iter().enumerate() {
                    if u < w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                pick as TokenId
            };
            lp += row.log_probs[tok as usize];
            if tok == EOS {
                return ScoredHypothesis {
                    sentence: Sentence(ids),
                    log_prob: lp,
                };
            }
            ids.push(tok);
            prev = tok;
        }
        ScoredHypothesis {
            sentence: Sentence(ids),
            log_prob: lp,
        }
    }
}

fn argmax(xs: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best as TokenId
}

pub fn log_prob(params: &ModelParams, src: &Sentence, tgt: &Sentence, max_len: usize) -> Result<f64> {
    Decoder::new(params, src.ids())?.score(tgt.ids(), max_len)
}

/// Adds `scale * ∇_θ log P(tgt | src; θ)` into `grad` and returns the log-probability.
pub fn accumulate_log_prob_grad(
    params: &ModelParams,
    src: &Sentence,
    tgt: &Sentence,
    max_len: usize,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    assert_eq!(grad.len(), params.len(), "gradient buffer has wrong length");
    let mut dec = Decoder::new(params, src.ids())?;
    let lp = dec.score(tgt.ids(), max_len)?;
    if scale == 0.0 {
        return Ok(lp);
    }

    let dims = params.dims;
    let (v, d, h) = (dims.vocab, dims.embed, dims.hidden);
    let lay = params.layout();
    let theta = &params.values;

    // Steps sharing a previous token share activations, so the output
    // gradient is accumulated per previous token before backpropagating.
    let mut groups: Vec<(TokenId, f64, Vec<f64>)> = Vec::new();
    let mut push = |prev: TokenId, target: TokenId| {
        let pos = match groups.iter().position(|g| g.0 == prev) {
            Some(p) => p,
            None => {
                groups.push((prev, 0.0, vec![0.0; v]));
                groups.len() - 1
            }
        };
        groups[pos].1 += 1.0;
        groups[pos].2[target as usize] += 1.0;
    };
    let mut prev = BOS;
    for &tok in tgt.ids() {
        push(prev, tok);
        prev = tok;
    }
    if tgt.len() < max_len {
        push(prev, EOS);
    }

    let ctx = dec.ctx.clone();
    let mut dctx = vec![0.0; d];
    let mut dz = vec![0.0; v];
    let mut dpre = vec![0.0; h];
    for (prev, count, targets) in &groups {
        let row = dec.row(*prev);
        for ((g, &t), &lp) in dz.iter_mut().zip(targets).zip(&row.log_probs) {
            *g = scale * (t - count * lp.exp());
        }
        for (k, &g) in dz.iter().enumerate() {
            grad[lay.c + k] += g;
        }
        for i in 0..h {
            let a = row.hidden[i];
            let u_row = &theta[lay.u + i * v..][..v];
            let gu = &mut grad[lay.u + i * v..][..v];
            let mut dh = 0.0;
            for k in 0..v {
                gu[k] += a * dz[k];
                dh += u_row[k] * dz[k];
            }
            dpre[i] = dh * (1.0 - a * a);
            grad[lay.b + i] += dpre[i];
        }
        let emb_off = lay.tgt_embed + *prev as usize * d;
        for j in 0..2 * d {
            let x = if j < d { ctx[j] } else { theta[emb_off + j - d] };
            let w_row = &theta[lay.w + j * h..][..h];
            let gw = &mut grad[lay.w + j * h..][..h];
            let mut din = 0.0;
            for i in 0..h {
                gw[i] += x * dpre[i];
                din += w_row[i] * dpre[i];
            }
            if j < d {
                dctx[j] += din;
            } else {
                grad[emb_off + j - d] += din;
            }
        }
    }
    if !src.is_empty() {
        let inv = 1.0 / src.len() as f64;
        for &tok in src.ids() {
            let g = &mut grad[lay.src_embed + tok as usize * d..][..d];
            for (gj, &c) in g.iter_mut().zip(&dctx) {
                *gj += c * inv;
            }
        }
    }
    Ok(lp)
}

pub fn log_prob_grad(params: &ModelParams, src: &Sentence, tgt: &Sentence, max_len: usize) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.len()];
    accumulate_log_prob_grad(params, src, tgt, max_len, 1.0, &mut grad)?;
    Ok(grad)
}

/// Ancestral sample from the tempered distribution; `log_prob` is always at τ = 1.
pub fn sample<R: Rng + ?Sized>(
    params: &ModelParams,
    src: &Sentence,
    temperature: f64,
    rng: &mut R,
    max_len: usize,
) -> Result<ScoredHypothesis> {
    Ok(Decoder::new(params, src.ids())?.sample(temperature, rng, max_len))
}

pub fn greedy_decode(params: &ModelParams, src: &Sentence, max_len: usize) -> Result<ScoredHypothesis> {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    Ok(Decoder::new(params, src.ids())?.sample(0.0, &mut rng, max_len))
}

/// Length-unnormalized beam search. Returns distinct finished hypotheses
/// sorted by log-probability, at most `beam` of them.
pub fn beam_decode(params: &ModelParams, src: &Sentence, beam: usize, max_len: usize) -> Result<Vec<ScoredHypothesis>> {
    assert!(beam >= 1, "beam must be at least 1");
    let mut dec = Decoder::new(params, src.ids())?;
    if max_len == 0 {
        return Ok(vec![ScoredHypothesis {
            sentence: Sentence::default(),
            log_prob: 0.0,
        }]);
    }
    let mut live: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<ScoredHypothesis> = Vec::new();
    while !live.is_empty() {
        // (prefix index, token, score); EOS or reaching max_len finishes.
        let mut cands: Vec<(usize, TokenId, f64)> = Vec::with_capacity(live.len() * dec.vocab());
        for (i, (prefix, score)) in live.iter().enumerate() {
            let prev = prefix.last().copied().unwrap_or(BOS);
            for (tok, &lp) in dec.next_log_probs(prev).iter().enumerate() {
                cands.push((i, tok as TokenId, score + lp));
            }
        }
        // Stable sort keeps lower token ids first among ties, matching greedy.
        cands.sort_by(|a, b| b.2.total_cmp(&a.2));
        cands.truncate(beam);
        let mut next = Vec::with_capacity(beam);
        for (i, tok, score) in cands {
            let prefix = &live[i].0;
            if tok == EOS {
                finished.push(ScoredHypothesis {
                    sentence: Sentence(prefix.clone()),
                    log_prob: score,
                });
                continue;
            }
            let mut ids = prefix.clone();
            ids.push(tok);
            if ids.len() >= max_len {
                finished.push(ScoredHypothesis {
                    sentence: Sentence(ids),
                    log_prob: score,
                });
            } else {
                next.push((ids, score));
            }
        }
        live = next;
    }
    finished.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
    finished.dedup_by(|a, b| a.sentence == b.sentence);
    finished.truncate(beam);
    Ok(finished)
}

/// Every sentence of length `<= max_len` with its exact log-probability.
/// Sentences are listed by length, then lexicographically.
pub fn enumerate_output_space(params: &ModelParams, src: &Sentence, max_len: usize) -> Result<Vec<ScoredHypothesis>> {
    let v = params.dims.vocab;
    let size = (v as f64).powi(max_len as i32);
    if size > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut dec = Decoder::new(params, src.ids())?;
    let mut out = Vec::new();
    // Prefixes of the current length with their accumulated log-probability.
    let mut frontier: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    for len in 0..=max_len {
        let mut next = Vec::new();
        for (prefix, lp) in &frontier {
            if len == max_len {
                out.push(ScoredHypothesis {
                    sentence: Sentence(prefix.clone()),
                    log_prob: *lp,
                });
                continue;
            }
            let prev = prefix.last().copied().unwrap_or(BOS);
            let row = dec.next_log_probs(prev).to_vec();
            out.push(ScoredHypothesis {
                sentence: Sentence(prefix.clone()),
                log_prob: lp + row[EOS as usize],
            });
            for (tok, &l) in row.iter().enumerate() {
                if tok as TokenId == EOS {
                    continue;
                }
                let mut ids = prefix.clone();
                ids.push(tok as TokenId);
                next.push((ids, lp + l));
            }
        }
        frontier = next;
    }
    Ok(out)
}

/// Token-normalized negative log-likelihood of the references and its gradient.
pub fn mle_loss_grad(params: &ModelParams, batch: &DocumentBatch, max_len: usize) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    let loss = accumulate_mle_grad(params, batch, max_len, 1.0, &mut grad)?;
    Ok((loss, grad))
}

/// Adds `scale * ∇ loss` into `grad`; returns the loss.
pub fn accumulate_mle_grad(
    params: &ModelParams,
    batch: &DocumentBatch,
    max_len: usize,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let tokens: usize = batch.references.iter().map(|r| r.len() + 1).sum();
    let norm = 1.0 / tokens as f64;
    let mut total = 0.0;
    for (src, reference) in batch.sources.iter().zip(&batch.references) {
        total += accumulate_log_prob_grad(params, src, reference, max_len, -scale * norm, grad)?;
    }
    Ok(-total * norm)
}
