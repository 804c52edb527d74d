//! End-to-end tests of the command-line surface, driving the compiled
//! binary the way a user would.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_werpred"))
}

fn tmp(name: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("werpred-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&p);
    std::fs::create_dir_all(&p).unwrap();
    p
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn synth_corpus(dir: &Path, n: usize, seed: u64, audio: bool) {
    let mut args = vec![
        "synth".to_string(),
        "--out".into(),
        dir.display().to_string(),
        "--n".into(),
        n.to_string(),
        "--seed".into(),
        seed.to_string(),
    ];
    if !audio {
        args.push("--no-audio".into());
    }
    let out = bin().args(&args).output().unwrap();
    ok(&out);
}

#[test]
fn synth_is_byte_reproducible() {
    let d1 = tmp("synth-a");
    let d2 = tmp("synth-b");
    synth_corpus(&d1, 30, 7, true);
    synth_corpus(&d2, 30, 7, true);
    let m1 = std::fs::read(d1.join("manifest.jsonl")).unwrap();
    let m2 = std::fs::read(d2.join("manifest.jsonl")).unwrap();
    assert_eq!(m1, m2, "manifests must be byte-identical across runs");
    let w1 = std::fs::read(d1.join("audio/u00003.wav")).unwrap();
    let w2 = std::fs::read(d2.join("audio/u00003.wav")).unwrap();
    assert_eq!(w1, w2, "audio must be byte-identical across runs");
    for f in ["lexicon.tsv", "phone_categories.json", "tags.tsv"] {
        assert!(d1.join(f).exists(), "{f} missing");
    }
    let _ = std::fs::remove_dir_all(&d1);
    let _ = std::fs::remove_dir_all(&d2);
}

#[test]
fn score_reports_reference_wer() {
    let d = tmp("score");
    synth_corpus(&d, 25, 3, false);
    let scores = d.join("scores.jsonl");
    let out = run(&[
        "score",
        "--manifest",
        d.join("manifest.jsonl").to_str().unwrap(),
        "--out",
        scores.to_str().unwrap(),
    ]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("scored 25 utterances"), "{stdout}");
    let lines = std::fs::read_to_string(&scores).unwrap();
    assert_eq!(lines.lines().count(), 25);
    assert!(lines.lines().all(|l| l.contains("\"wer_ref\"")));
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn evaluate_perfect_predictions() {
    let d = tmp("eval-perfect");
    synth_corpus(&d, 20, 5, false);
    // predictions equal to the reference WER of each utterance
    let scores = d.join("scores.jsonl");
    ok(&run(&[
        "score",
        "--manifest",
        d.join("manifest.jsonl").to_str().unwrap(),
        "--out",
        scores.to_str().unwrap(),
    ]));
    let mut preds = String::new();
    for line in std::fs::read_to_string(&scores).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        preds.push_str(&format!(
            "{{\"id\":{},\"wer_pred\":{}}}\n",
            v["id"], v["wer_ref"]
        ));
    }
    let pred_path = d.join("preds.jsonl");
    std::fs::write(&pred_path, preds).unwrap();
    let out_dir = d.join("report");
    ok(&run(&[
        "evaluate",
        "--predictions",
        pred_path.to_str().unwrap(),
        "--manifest",
        d.join("manifest.jsonl").to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["mae"].as_f64().unwrap(), 0.0);
    assert!((metrics["kendall_tau"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(metrics["n"].as_u64().unwrap(), 20);

    // aggregate mirrors the per-style table: NS, S rows plus "NS + S"
    let agg = std::fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    assert!(agg.lines().any(|l| l.starts_with("NS,")), "{agg}");
    assert!(agg.lines().any(|l| l.starts_with("NS + S,")), "{agg}");

    // histogram: bins of width 5 over [0,150] plus the open-ended bin
    let hist = std::fs::read_to_string(out_dir.join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 31, "{hist}");
    assert!(hist.starts_with("bin_start,count\n"));
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn evaluate_rejects_unknown_prediction_ids() {
    let d = tmp("eval-badid");
    synth_corpus(&d, 5, 1, false);
    let pred_path = d.join("preds.jsonl");
    std::fs::write(&pred_path, "{\"id\":\"nope\",\"wer_pred\":10.0}\n").unwrap();
    let out = run(&[
        "evaluate",
        "--predictions",
        pred_path.to_str().unwrap(),
        "--manifest",
        d.join("manifest.jsonl").to_str().unwrap(),
        "--out-dir",
        d.join("report").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn compare_identical_files_reports_no_differences() {
    let d = tmp("cmp-same");
    synth_corpus(&d, 10, 2, false);
    let pred_path = d.join("preds.jsonl");
    let manifest = d.join("manifest.jsonl");
    let scores = d.join("scores.jsonl");
    ok(&run(&[
        "score",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        scores.to_str().unwrap(),
    ]));
    let mut preds = String::new();
    for line in std::fs::read_to_string(&scores).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        preds.push_str(&format!("{{\"id\":{},\"wer_pred\":12.5}}\n", v["id"]));
    }
    std::fs::write(&pred_path, &preds).unwrap();
    let out = run(&[
        "compare",
        "--a",
        pred_path.to_str().unwrap(),
        "--b",
        pred_path.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        d.join("cmp").to_str().unwrap(),
    ]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("no non-zero differences"), "{stdout}");
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn compare_disjoint_id_sets_exits_2() {
    let d = tmp("cmp-disjoint");
    synth_corpus(&d, 6, 2, false);
    let a = d.join("a.jsonl");
    let b = d.join("b.jsonl");
    std::fs::write(&a, "{\"id\":\"u00000\",\"wer_pred\":10.0}\n").unwrap();
    std::fs::write(&b, "{\"id\":\"u00001\",\"wer_pred\":10.0}\n").unwrap();
    let out = run(&[
        "compare",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
        "--manifest",
        d.join("manifest.jsonl").to_str().unwrap(),
        "--out-dir",
        d.join("cmp").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&d);
}

/// Full regression-baseline pipeline: extract → train-reg (both feature
/// subsets) → predict → compare, emitting the comparison rows.
#[test]
fn regression_pipeline_end_to_end() {
    let d = tmp("regpipe");
    synth_corpus(&d, 40, 11, true);
    let manifest = d.join("manifest.jsonl");
    let features = d.join("features.csv");
    ok(&run(&[
        "extract",
        "--manifest",
        manifest.to_str().unwrap(),
        "--features",
        "pos,lex,lm,sig",
        "--out",
        features.to_str().unwrap(),
        "--lexicon",
        d.join("lexicon.tsv").to_str().unwrap(),
        "--phone-categories",
        d.join("phone_categories.json").to_str().unwrap(),
        "--pos-tags",
        d.join("tags.tsv").to_str().unwrap(),
    ]));
    let header = std::fs::read_to_string(&features)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert!(header.starts_with("id,pos_"), "{header}");
    assert!(header.ends_with(",wer_ref"), "{header}");
    assert!(header.contains("sig_f0"), "{header}");

    for (name, feats) in [("reg3.json", "pos+lex+lm"), ("reg4.json", "pos+lex+lm+sig")] {
        ok(&run(&[
            "train-reg",
            "--features-file",
            features.to_str().unwrap(),
            "--features",
            feats,
            "--out",
            d.join(name).to_str().unwrap(),
            "--trees",
            "30",
        ]));
        ok(&run(&[
            "predict",
            "--model",
            d.join(name).to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--features-file",
            features.to_str().unwrap(),
            "--out",
            d.join(format!("{name}.preds.jsonl")).to_str().unwrap(),
        ]));
    }
    let out = run(&[
        "compare",
        "--a",
        d.join("reg3.json.preds.jsonl").to_str().unwrap(),
        "--b",
        d.join("reg4.json.preds.jsonl").to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        d.join("cmp").to_str().unwrap(),
    ]);
    ok(&out);
    let table = std::fs::read_to_string(d.join("cmp/comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}"); // header + two systems
    assert!(table.starts_with("system,mae,tau_x100"), "{table}");
    let _ = std::fs::remove_dir_all(&d);
}

/// Determinism of train-cnn: identical seed/config/data give bit-identical
/// checkpoints and predictions.
#[test]
fn train_cnn_is_bit_deterministic() {
    let d = tmp("cnn-det");
    synth_corpus(&d, 24, 9, false);
    let manifest = d.join("manifest.jsonl");
    for run_dir in ["m1", "m2"] {
        ok(&run(&[
            "train-cnn",
            "--manifest",
            manifest.to_str().unwrap(),
            "--input",
            "embed",
            "--head",
            "softmax",
            "--out",
            d.join(run_dir).to_str().unwrap(),
            "--seed",
            "42",
            "--epochs",
            "2",
            "--restarts",
            "2",
            "--batch-size",
            "8",
        ]));
        ok(&run(&[
            "predict",
            "--model",
            d.join(run_dir).to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            d.join(format!("{run_dir}.preds.jsonl")).to_str().unwrap(),
        ]));
    }
    let c1 = std::fs::read(d.join("m1/checkpoint.bin")).unwrap();
    let c2 = std::fs::read(d.join("m2/checkpoint.bin")).unwrap();
    assert_eq!(c1, c2, "checkpoints must be bit-identical");
    let p1 = std::fs::read(d.join("m1.preds.jsonl")).unwrap();
    let p2 = std::fs::read(d.join("m2.preds.jsonl")).unwrap();
    assert_eq!(p1, p2, "predictions must be bit-identical");
    let log = std::fs::read_to_string(d.join("m1/train_log.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&log).unwrap();
    assert_eq!(v["logs"].as_array().unwrap().len(), 2);
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn train_cnn_relu_head_runs() {
    let d = tmp("cnn-relu");
    synth_corpus(&d, 16, 4, false);
    ok(&run(&[
        "train-cnn",
        "--manifest",
        d.join("manifest.jsonl").to_str().unwrap(),
        "--input",
        "embed",
        "--head",
        "relu",
        "--out",
        d.join("model").to_str().unwrap(),
        "--seed",
        "1",
        "--epochs",
        "1",
        "--restarts",
        "1",
        "--batch-size",
        "8",
    ]));
    ok(&run(&[
        "predict",
        "--model",
        d.join("model").to_str().unwrap(),
        "--manifest",
        d.join("manifest.jsonl").to_str().unwrap(),
        "--out",
        d.join("preds.jsonl").to_str().unwrap(),
    ]));
    let preds = std::fs::read_to_string(d.join("preds.jsonl")).unwrap();
    for line in preds.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["wer_pred"].as_f64().unwrap() >= 0.0);
    }
    let _ = std::fs::remove_dir_all(&d);
}

/// The flagship configuration — joint text+raw-signal input with the
/// softmax-expectation head — wires up end to end through the CLI.
#[test]
fn train_cnn_joint_embed_raw_end_to_end() {
    let d = tmp("cnn-joint");
    synth_corpus(&d, 16, 6, true);
    let manifest = d.join("manifest.jsonl");
    ok(&run(&[
        "train-cnn",
        "--manifest",
        manifest.to_str().unwrap(),
        "--input",
        "embed+raw",
        "--head",
        "softmax",
        "--out",
        d.join("model").to_str().unwrap(),
        "--seed",
        "3",
        "--epochs",
        "1",
        "--restarts",
        "1",
        "--batch-size",
        "8",
    ]));
    ok(&run(&[
        "predict",
        "--model",
        d.join("model").to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        d.join("preds.jsonl").to_str().unwrap(),
    ]));
    let out_dir = d.join("report");
    ok(&run(&[
        "evaluate",
        "--predictions",
        d.join("preds.jsonl").to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap())
            .unwrap();
    assert!(metrics["mae"].as_f64().unwrap().is_finite());
    // predictions from the softmax head stay within the WER vector range
    for line in std::fs::read_to_string(d.join("preds.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let p = v["wer_pred"].as_f64().unwrap();
        assert!((0.0..=150.0).contains(&p));
    }
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn unparseable_predictions_exit_2() {
    let d = tmp("eval-parse");
    synth_corpus(&d, 4, 1, false);
    let pred_path = d.join("bad.jsonl");
    std::fs::write(&pred_path, "this is not json\n").unwrap();
    let out = run(&[
        "evaluate",
        "--predictions",
        pred_path.to_str().unwrap(),
        "--manifest",
        d.join("manifest.jsonl").to_str().unwrap(),
        "--out-dir",
        d.join("r").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&d);
}
