//! Acceptance suite. Prints one PASS/FAIL line per check and exits non-zero
//! if any check fails. Run with `cargo test --release --test acceptance`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::Instant;

use docmrt::harness::kv::read_kv_file;
use docmrt::harness::{grad_check_cmd, run_experiment, BatchMode, ExperimentConfig, ExperimentReport, GradCheckConfig};
use docmrt::metrics::{
    corpus_bleu, doc_ter, gleu, sentence_bleu_smoothed, ter, wer, CostKind, MetricKind, DEFAULT_MAX_N,
};
use docmrt::model::{enumerate_output_space, ModelDims, ModelParams};
use docmrt::mrt::{
    build_documents, doc_mrt_grad, doc_mrt_grad_from_documents, exact_risk_grad, seq_mrt_grad_from_set, Estimator,
    Scheme, TrainConfig, TrainMode,
};
use docmrt::sampling::{build_documents_ordered, draw_sample_set, order_samples, AdditiveCost};
use docmrt::textcore::{DocumentBatch, Sentence, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { name, passed, detail }
}

fn random_sentence(rng: &mut ChaCha8Rng, vocab: u32, min: usize, max: usize) -> Sentence {
    let len = rng.gen_range(min..=max);
    Sentence((0..len).map(|_| rng.gen_range(4..vocab)).collect())
}

fn random_params(rng: &mut ChaCha8Rng, dims: ModelDims, scale: f64) -> ModelParams {
    let values = (0..dims.num_params()).map(|_| rng.gen_range(-scale..scale)).collect();
    ModelParams::from_values(dims, values).unwrap()
}

fn gradient_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 3];
    for seed in 0..5 {
        let cfg = GradCheckConfig {
            vocab: 6,
            embed: 4,
            hidden: 4,
            max_len: 4,
            coords: 50,
            eps: 1e-4,
            seed,
            ..GradCheckConfig::default()
        };
        let report = grad_check_cmd(&cfg).unwrap();
        for (i, line) in report.checks.iter().enumerate() {
            worst[i] = worst[i].max(line.value);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = worst[0] < 1e-5 && worst[1] < 1e-5 && worst[2] < 1e-4 && secs < 60.0;
    outcome(
        "gradient exactness",
        passed,
        format!(
            "max rel err log_prob {:.2e} (<1e-5), mle_loss {:.2e} (<1e-5), exact_risk {:.2e} (<1e-4) over 5 instances, {secs:.1}s (<60s)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = ModelDims::new(5, 3, 3).unwrap();
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let scale = if trial % 2 == 0 { 0.5 } else { 3.0 };
        let p = random_params(&mut rng, dims, scale);
        let src = random_sentence(&mut rng, 5, 0, 3);
        let total: f64 = enumerate_output_space(&p, &src, 3).unwrap().iter().map(|h| h.prob()).sum();
        worst = worst.max((total - 1.0).abs());
    }
    outcome(
        "normalization",
        worst <= 1e-10,
        format!("max |Σp − 1| = {worst:.2e} over 20 random θ (≤1e-10)"),
    )
}

fn constant_cost_null() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dims = ModelDims::new(5, 4, 4).unwrap();
    let p = random_params(&mut rng, dims, 1.0);
    let batch = DocumentBatch::new(
        (0..2).map(|_| random_sentence(&mut rng, 5, 1, 3)).collect(),
        (0..2).map(|_| random_sentence(&mut rng, 5, 1, 2)).collect(),
    )
    .unwrap();
    let constant = |_: &DocumentBatch, _: &[&Sentence]| 0.7;
    let g = exact_risk_grad(&p, &batch, &constant, 2).unwrap();
    let worst = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    outcome(
        "constant-cost null",
        worst <= 1e-10,
        format!("max |∇R| = {worst:.2e} with D ≡ 0.7 (≤1e-10)"),
    )
}

fn unbiasedness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dims = ModelDims::new(5, 8, 8).unwrap();
    let p = random_params(&mut rng, dims, 1.0);
    let batch = DocumentBatch::new(vec![Sentence(vec![4, 4]), Sentence(vec![4])], vec![Sentence(vec![4]), Sentence(vec![4, 4])])
        .unwrap();
    let cost = CostKind::OneMinusDocbleu;
    let exact = exact_risk_grad(&p, &batch, &cost, 2).unwrap();
    let cfg = TrainConfig {
        samples: 4,
        batch_size: 2,
        max_len: 2,
        cost_kind: cost,
        estimator: Estimator::Raw,
        ..TrainConfig::default()
    };
    let trials = 10_000;
    let mut sum = vec![0.0; p.len()];
    let mut sum_sq = vec![0.0; p.len()];
    for _ in 0..trials {
        let est = doc_mrt_grad(&p, &batch, &cfg, Scheme::Random, &mut rng).unwrap();
        for ((s, q), g) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&est.grad) {
            *s += g;
            *q += g * g;
        }
    }
    let n = trials as f64;
    let mut considered = 0;
    let mut within = 0;
    for i in 0..p.len() {
        if exact[i].abs() <= 1e-6 {
            continue;
        }
        considered += 1;
        let mean = sum[i] / n;
        let var = (sum_sq[i] / n - mean * mean).max(0.0) * n / (n - 1.0);
        let se = (var / n).sqrt();
        if (mean - exact[i]).abs() <= 3.0 * se {
            within += 1;
        }
    }
    let frac = within as f64 / considered as f64;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        "estimator unbiasedness",
        considered > 0 && frac >= 0.99 && secs < 300.0,
        format!("{within}/{considered} coordinates within 3 SE ({:.2}% ≥ 99%), 10^4 estimates, {secs:.1}s (<300s)", 100.0 * frac),
    )
}

fn reduction_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut identical = 0;
    let kinds = [
        (CostKind::SentTer, None),
        (CostKind::OneMinusSbleu, Some(AdditiveCost(CostKind::OneMinusSbleu))),
    ];
    for trial in 0..100 {
        let dims = ModelDims::new(rng.gen_range(5..9), 3, 3).unwrap();
        let p = random_params(&mut rng, dims, 1.0);
        let v = dims.vocab as u32;
        let batch = DocumentBatch::new(vec![random_sentence(&mut rng, v, 0, 4)], vec![random_sentence(&mut rng, v, 1, 4)])
            .unwrap();
        let (kind, additive) = kinds[trial % 2];
        let n = rng.gen_range(1..7);
        let set = order_samples(draw_sample_set(&p, &batch, n, 1.0, &mut rng, 5, kind).unwrap());
        let seq = seq_mrt_grad_from_set(&p, &set, Estimator::Raw, 5e-3, 5).unwrap();
        let mut all = true;
        for scheme in [Scheme::Ordered, Scheme::Random] {
            let docs = match additive {
                Some(c) => build_documents(&set, scheme, &c, &mut rng).unwrap(),
                None => build_documents(&set, scheme, &CostKind::DocTer, &mut rng).unwrap(),
            };
            let doc = doc_mrt_grad_from_documents(&p, &set, &docs, Estimator::Raw, 5e-3, 5).unwrap();
            let same = seq.grad.iter().zip(&doc.grad).all(|(a, b)| a.to_bits() == b.to_bits())
                && seq.risk.to_bits() == doc.risk.to_bits();
            all &= same;
        }
        identical += all as usize;
    }
    outcome(
        "reduction identity",
        identical == 100,
        format!("{identical}/100 single-sentence trials bit-identical for both schemes"),
    )
}

fn ordered_scheme_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut partition_ok = 0;
    let mut monotone_ok = 0;
    for _ in 0..1000 {
        let dims = ModelDims::new(rng.gen_range(5..10), 2, 3).unwrap();
        let p = random_params(&mut rng, dims, 2.0);
        let v = dims.vocab as u32;
        let s = rng.gen_range(1..6);
        let n = rng.gen_range(1..9);
        let batch = DocumentBatch::new(
            (0..s).map(|_| random_sentence(&mut rng, v, 0, 5)).collect(),
            (0..s).map(|_| random_sentence(&mut rng, v, 1, 5)).collect(),
        )
        .unwrap();
        let kind = [CostKind::OneMinusSbleu, CostKind::SentTer, CostKind::OneMinusSentGleu][rng.gen_range(0..3)];
        let set = order_samples(draw_sample_set(&p, &batch, n, 1.0, &mut rng, 6, kind).unwrap());
        let docs = build_documents_ordered(&set, &AdditiveCost(kind)).unwrap();
        let mut used = vec![vec![0usize; n]; s];
        for d in &docs {
            for (si, &ni) in d.assignment.iter().enumerate() {
                used[si][ni] += 1;
            }
        }
        if docs.len() == n && used.iter().flatten().all(|&c| c == 1) {
            partition_ok += 1;
        }
        if docs.windows(2).all(|w| w[0].cost <= w[1].cost) {
            monotone_ok += 1;
        }
    }
    outcome(
        "ordered-scheme invariants",
        partition_ok == 1000 && monotone_ok == 1000,
        format!("partition {partition_ok}/1000, monotone additive costs {monotone_ok}/1000"),
    )
}

/// Smoothed sentence BLEU from explicit window comparisons.
fn brute_force_sbleu(hyp: &[TokenId], reference: &[TokenId]) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=DEFAULT_MAX_N {
        let windows = |s: &[TokenId]| -> Vec<Vec<TokenId>> {
            if s.len() < n {
                Vec::new()
            } else {
                (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
            }
        };
        let h = windows(hyp);
        let r = windows(reference);
        let mut matches = 0;
        let mut seen: Vec<&Vec<TokenId>> = Vec::new();
        for g in &h {
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            let ch = h.iter().filter(|x| *x == g).count();
            let cr = r.iter().filter(|x| *x == g).count();
            matches += ch.min(cr);
        }
        log_sum += ((matches as f64 + 1.0) / (h.len() as f64 + 1.0)).ln();
    }
    if hyp.is_empty() {
        return 0.0;
    }
    let bp = if hyp.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / hyp.len() as f64).exp()
    };
    bp * (log_sum / DEFAULT_MAX_N as f64).exp()
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bleu_err: f64 = 0.0;
    for _ in 0..100 {
        let h = random_sentence(&mut rng, 9, 1, 10);
        let r = random_sentence(&mut rng, 9, 1, 10);
        bleu_err = bleu_err.max((sentence_bleu_smoothed(&h.0, &r.0, 4) - brute_force_sbleu(&h.0, &r.0)).abs());
    }
    let mut ter_ok = 0;
    for _ in 0..1000 {
        let h = random_sentence(&mut rng, 8, 0, 12);
        let r = random_sentence(&mut rng, 8, 1, 12);
        if ter(&h.0, &r.0).unwrap() <= wer(&h.0, &r.0).unwrap() + 1e-15 {
            ter_ok += 1;
        }
    }
    let (a, b, c, d, x) = (4, 5, 6, 7, 8);
    let close = |v: f64, t: f64| (v - t).abs() < 1e-4;
    let fixed = [
        ("ter identity", ter(&[a, b], &[a, b]).unwrap() == 0.0),
        ("ter substitution", ter(&[a, x, c, d], &[a, b, c, d]).unwrap() == 0.25),
        ("ter shift", ter(&[c, d, a, b], &[a, b, c, d]).unwrap() == 0.25),
        ("wer shift", wer(&[c, d, a, b], &[a, b, c, d]).unwrap() == 1.0),
        ("sbleu identity", sentence_bleu_smoothed(&[a, b], &[a, b], 4) == 1.0),
        ("sbleu disjoint", close(sentence_bleu_smoothed(&[a, b, c], &[d, x, 9], 4), 0.4518)),
        ("sbleu brevity", close(sentence_bleu_smoothed(&[a, b, c], &[a, b, c, d], 4), 0.7165)),
        ("bleu identity", corpus_bleu(&[vec![a, b, c]], &[vec![a, b, c]], 4, false).unwrap() == 1.0),
        ("bleu disjoint", corpus_bleu(&[vec![a, b, c]], &[vec![d, x, 9]], 4, false).unwrap() == 0.0),
        (
            "bleu pooled bigram",
            close(
                corpus_bleu(&[vec![a, b], vec![c, d, x]], &[vec![a, b], vec![c, 9, x]], 2, false).unwrap(),
                0.5164,
            ),
        ),
        (
            "doc ter pooled",
            doc_ter(&[vec![a, x, c, d], vec![a, b, c, d, x, 9]], &[vec![a, b, c, d], vec![a, b, c, d, x, 9]]).unwrap()
                == 0.1,
        ),
        ("gleu identity", gleu(&[vec![a, b]], &[vec![a, x]], &[vec![a, b]], 4).unwrap() == 1.0),
        ("gleu uncorrected", gleu(&[vec![a, b]], &[vec![a, b]], &[vec![a, c]], 4).unwrap() == 0.0),
        ("gleu correction", gleu(&[vec![a, b]], &[vec![a, x]], &[vec![a, b]], 4).unwrap() == 1.0),
    ];
    let mut gleu_bleu_ok = 0;
    for _ in 0..100 {
        let hyps: Vec<Sentence> = (0..3).map(|_| random_sentence(&mut rng, 10, 1, 6)).collect();
        let refs: Vec<Sentence> = (0..3).map(|_| random_sentence(&mut rng, 10, 1, 6)).collect();
        // Sources over tokens that never appear in hypotheses or references.
        let srcs: Vec<Sentence> = (0..3).map(|_| Sentence(vec![12, 13])).collect();
        if gleu(&hyps, &srcs, &refs, 4).unwrap() == corpus_bleu(&hyps, &refs, 4, false).unwrap() {
            gleu_bleu_ok += 1;
        }
    }
    let failed: Vec<&str> = fixed.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    let passed = bleu_err <= 1e-12 && ter_ok == 1000 && failed.is_empty() && gleu_bleu_ok == 100;
    outcome(
        "metric oracles",
        passed,
        format!(
            "sBLEU oracle max err {bleu_err:.1e} (≤1e-12), TER ≤ WER {ter_ok}/1000, fixed cases {}/{} ok{}, GLEU = BLEU without source overlap {gleu_bleu_ok}/100",
            fixed.len() - failed.len(),
            fixed.len(),
            if failed.is_empty() { String::new() } else { format!(" (failed: {})", failed.join(", ")) }
        ),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn trend_config(seed: u64) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/trend.conf");
    let mut cfg = ExperimentConfig::default();
    for (k, v) in read_kv_file(&path).unwrap() {
        cfg.apply(&k, &v).unwrap();
    }
    cfg.seed = seed;
    cfg
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Runs the trend experiment for every seed in parallel; returns the reports
/// and the summed per-run wall-clock time.
fn trend_reports() -> (Vec<ExperimentReport>, f64) {
    let runs: Vec<(ExperimentReport, f64)> = thread::scope(|scope| {
        let handles: Vec<_> = SEEDS
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let start = Instant::now();
                    let (report, _) = run_experiment(&trend_config(seed)).unwrap();
                    (report, start.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let total: f64 = runs.iter().map(|r| r.1).sum();
    (runs.into_iter().map(|r| r.0).collect(), total)
}

fn trend(reports: &[ExperimentReport], serial_secs: f64) -> Outcome {
    let bleu = CostKind::OneMinusDocbleu;
    let ordered: Vec<f64> = reports
        .iter()
        .map(|r| r.improvement(r.row(TrainMode::DocMrtOrdered, BatchMode::Random, bleu).unwrap(), MetricKind::Bleu))
        .collect();
    let random: Vec<f64> = reports
        .iter()
        .map(|r| r.improvement(r.row(TrainMode::DocMrtRandom, BatchMode::Random, bleu).unwrap(), MetricKind::Bleu))
        .collect();
    let (mo, mr) = (median(ordered.clone()), median(random.clone()));
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{:+.4}", x)).collect::<Vec<_>>().join(" ");
    outcome(
        "trend reproduction",
        mo >= 0.01 && mo >= mr && serial_secs < 900.0,
        format!(
            "median doc-BLEU gain ordered {mo:+.4} (≥ +0.0100), random {mr:+.4} (ordered ≥ random); per seed ordered [{}] random [{}]; {serial_secs:.0}s single-core total (<900s)",
            fmt(&ordered),
            fmt(&random)
        ),
    )
}

fn ter_objective(reports: &[ExperimentReport]) -> Outcome {
    let deltas: Vec<f64> = reports
        .iter()
        .map(|r| {
            let row = r.row(TrainMode::DocMrtOrdered, BatchMode::Random, CostKind::DocTer).unwrap();
            row.test.ter - r.baseline.test.ter
        })
        .collect();
    let m = median(deltas.clone());
    outcome(
        "TER objective",
        m <= 0.0,
        format!(
            "median doc-TER change after doc-MRT (ordered, doc_ter cost) {m:+.4} (≤ 0); per seed [{}]",
            deltas.iter().map(|x| format!("{:+.4}", x)).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn determinism(first: &ExperimentReport) -> Outcome {
    let (again, _) = run_experiment(&trend_config(first.seed)).unwrap();
    let a = serde_json::to_string_pretty(first).unwrap();
    let b = serde_json::to_string_pretty(&again).unwrap();
    outcome(
        "determinism",
        a.as_bytes() == b.as_bytes(),
        format!("two runs with seed {} give {} and {} report bytes, identical: {}", first.seed, a.len(), b.len(), a == b),
    )
}

fn main() -> ExitCode {
    let quick: Vec<fn() -> Outcome> = vec![
        gradient_exactness,
        normalization,
        constant_cost_null,
        unbiasedness,
        reduction_identity,
        ordered_scheme_invariants,
        metric_oracles,
    ];
    let mut results: HashMap<usize, Outcome> = HashMap::new();
    thread::scope(|scope| {
        let handles: Vec<_> = quick.iter().map(|f| scope.spawn(f)).collect();
        for (i, h) in handles.into_iter().enumerate() {
            results.insert(i, h.join().unwrap());
        }
    });
    let (reports, serial_secs) = trend_reports();
    results.insert(7, trend(&reports, serial_secs));
    results.insert(8, ter_objective(&reports));
    results.insert(9, determinism(&reports[0]));

    let mut failures = 0;
    for i in 0..10 {
        let o = &results[&i];
        println!("{} [{:>2}] {}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.name, o.detail);
        failures += (!o.passed) as usize;
    }
    println!("acceptance: {} passed, {failures} failed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
