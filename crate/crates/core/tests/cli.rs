//! End-to-end runs of the `docmrt` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use docmrt::harness::score_corpus;
use docmrt::metrics::MetricKind;

fn docmrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docmrt")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY_TASK: &[&str] = &[
    "--vocab-size", "8", "--min-sent-len", "1", "--max-sent-len", "3", "--sents-per-doc", "3",
    "--train-docs", "20", "--valid-docs", "3", "--test-docs", "3",
];

#[test]
fn pipeline_gen_train_finetune_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut args = vec!["gen-data", "--out-dir", s(d)];
    args.extend_from_slice(TINY_TASK);
    let summary: serde_json::Value = serde_json::from_str(&ok(&docmrt(&args))).unwrap();
    assert_eq!(summary["train_sentences"], 60);
    for f in ["vocab.txt", "train.src", "train.ref", "train.docids", "valid.src", "test.docids"] {
        assert!(d.join(f).exists(), "{f}");
    }

    let p = |f: &str| d.join(f).to_str().unwrap().to_string();
    let mle_out = ok(&docmrt(&[
        "train-mle", "--vocab", &p("vocab.txt"),
        "--src", &p("train.src"), "--ref", &p("train.ref"), "--docids", &p("train.docids"),
        "--valid-src", &p("valid.src"), "--valid-ref", &p("valid.ref"), "--valid-docids", &p("valid.docids"),
        "--embed", "4", "--hidden", "6", "--mle-max-updates", "20", "--mle-eval-interval", "5",
        "--max-len", "4", "--save", &p("mle.ckpt"),
    ]));
    let mle: serde_json::Value = serde_json::from_str(&mle_out).unwrap();
    assert!(mle["updates"].as_u64().unwrap() <= 20);

    ok(&docmrt(&[
        "finetune-mrt", "--init", &p("mle.ckpt"), "--vocab", &p("vocab.txt"),
        "--src", &p("train.src"), "--ref", &p("train.ref"), "--docids", &p("train.docids"),
        "--valid-src", &p("valid.src"), "--valid-ref", &p("valid.ref"), "--valid-docids", &p("valid.docids"),
        "--mode", "doc_mrt_ordered", "--samples", "3", "--batch-size", "3", "--max-updates", "4",
        "--eval-interval", "2", "--max-len", "4", "--log", &p("train.log"), "--save", &p("mrt.ckpt"),
    ]));
    let log = fs::read_to_string(d.join("train.log")).unwrap();
    let records: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 4);
    assert_eq!(records[3]["update"], 4);
    assert_eq!(records[0]["mode"], "doc_mrt_ordered");
    assert!(records[1]["heldout_metric"].is_number());
    assert!(records[0].get("heldout_metric").is_none());

    let report: serde_json::Value = serde_json::from_str(&ok(&docmrt(&[
        "score", "--hyp", &p("test.ref"), "--ref", &p("test.ref"), "--docids", &p("test.docids"), "--metric", "ter",
    ])))
    .unwrap();
    assert_eq!(report["corpus"], 0.0);
    assert_eq!(report["documents"].as_array().unwrap().len(), 3);
}

#[test]
fn grad_check_exit_codes() {
    ok(&docmrt(&["grad-check"]));
    ok(&docmrt(&["enum-check"]));
    let bad = docmrt(&["grad-check", "--corrupt", "7"]);
    assert_eq!(bad.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "samples = 0\n").unwrap();
    let out = docmrt(&["experiment", "--config", s(&conf)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(&conf, "no-such-key = 1\n").unwrap();
    assert_eq!(docmrt(&["gen-data", "--config", s(&conf), "--out-dir", s(dir.path())]).status.code(), Some(2));
    assert_eq!(docmrt(&["gen-data", "--noise", "1.5", "--out-dir", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_one() {
    let out = docmrt(&["score", "--hyp", "/nonexistent/h", "--ref", "/nonexistent/r"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/h"));
}

const TINY_EXPERIMENT: &str = "\
# tiny end-to-end configuration
vocab-size = 8
min-sent-len = 1
max-sent-len = 3
train-docs = 30
valid-docs = 4
test-docs = 4
finetune-docs = 10
embed = 4
hidden = 6
mle-max-updates = 30
mle-eval-interval = 10
max-updates = 5
max-len = 4
modes = seq_mrt,doc_mrt_ordered,doc_mrt_random
costs = one_minus_docbleu,doc_ter
";

#[test]
fn experiment_is_deterministic_and_outputs_rescore_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let conf = d.join("tiny.conf");
    fs::write(&conf, TINY_EXPERIMENT).unwrap();
    let out_dir = d.join("run");
    let first = ok(&docmrt(&["experiment", "--config", s(&conf), "--seed", "3", "--save-outputs", s(&out_dir)]));
    let second = ok(&docmrt(&["experiment", "--config", s(&conf), "--seed", "3"]));
    assert_eq!(first, second);
    assert_eq!(fs::read_to_string(out_dir.join("report.json")).unwrap(), first);

    let report: serde_json::Value = serde_json::from_str(&first).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let check = |hyp: &Path, expected: f64, metric: MetricKind| {
        let scored = score_corpus(
            hyp,
            &out_dir.join("test.ref"),
            Some(&out_dir.join("test.src")),
            Some(&out_dir.join("test.docids")),
            metric,
        )
        .unwrap();
        assert!((scored.corpus - expected).abs() < 1e-12, "{hyp:?} {metric:?}: {} vs {expected}", scored.corpus);
    };
    for (metric, key) in [(MetricKind::Bleu, "bleu"), (MetricKind::Ter, "ter"), (MetricKind::Gleu, "gleu")] {
        check(&out_dir.join("baseline.hyp"), report["baseline"]["test"][key].as_f64().unwrap(), metric);
        for row in rows {
            let stem = format!(
                "{}.{}.{}",
                row["mode"].as_str().unwrap(),
                row["batching"].as_str().unwrap(),
                row["cost_kind"].as_str().unwrap()
            );
            check(&out_dir.join(format!("{stem}.hyp")), row["test"][key].as_f64().unwrap(), metric);
        }
    }
}
