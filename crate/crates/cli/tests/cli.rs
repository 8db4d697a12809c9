use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tprop_cli::args::RunFlags;
use tprop_cli::manifest::RunManifest;
use tprop_cli::resolve;

fn tprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tprop"))
        .args(args)
        .env_remove("TPROP_SEED")
        .output()
        .expect("spawn tprop")
}

fn small_corpus(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/hamlet.txt")).unwrap();
    let p = dir.join("small.txt");
    std::fs::write(&p, &text[..6000]).unwrap();
    p
}

fn last_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(&text[text.rfind("{\n").unwrap()..]).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn flags_beat_env_beat_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "lambda = 0.1\nlr-h = 0.5\nh-steps = 3\n").unwrap();
    let flags = RunFlags {
        config: Some(cfg),
        h_steps: Some("5".into()),
        ..RunFlags::default()
    };
    let env = vec![
        ("TPROP_LR_H".to_owned(), "0.25".to_owned()),
        ("TPROP_H_STEPS".to_owned(), "4".to_owned()),
    ];
    let st = resolve(&flags, env).unwrap();
    assert_eq!(st.lambda, 0.1);
    assert_eq!(st.lr_h, 0.25);
    assert_eq!(st.h_steps, 5);
}

#[test]
fn bad_arguments_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_corpus(dir.path());
    for args in [
        vec!["train-bptt", "--corpus", s(&c), "--K", "0"],
        vec!["train-btprop", "--corpus", s(&c), "--B", "0"],
        vec!["train-btprop", "--corpus", s(&c), "--schedule", "sometimes"],
        vec!["train-bptt"],
        vec!["no-such-command"],
    ] {
        let out = tprop(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_corpus(dir.path());
    let metrics = dir.path().join("run.jsonl");
    let ckpt = dir.path().join("run.ckpt");
    let out = tprop(&[
        "train-btprop", "--corpus", s(&c), "--hidden", "8", "--epochs", "2",
        "--metrics-out", s(&metrics), "--checkpoint-out", s(&ckpt),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["epochs"], 2);

    let lines = std::fs::read_to_string(&metrics).unwrap();
    assert_eq!(lines.lines().count(), 2);
    assert!(!lines.contains("seconds"));
    assert!(dir.path().join("run.timing.jsonl").exists());
    let m = RunManifest::read(&dir.path().join("run.manifest.json")).unwrap();
    assert_eq!(m.settings.hidden, 8);

    let out = tprop(&["eval", "--checkpoint", s(&ckpt), "--corpus", s(&c), "--split", "valid"]);
    assert!(out.status.success());
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["perplexity"], summary["final_valid_ppl"]);
}

#[test]
fn prebuilt_vocab_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_corpus(dir.path());
    let v = dir.path().join("vocab.json");
    let out = tprop(&["build-vocab", "--corpus", s(&c), "--mode", "word", "--vocab-max", "50", "--out", s(&v)]);
    assert!(out.status.success());
    let built: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let out = tprop(&["train-bptt", "--corpus", s(&c), "--vocab", s(&v), "--mode", "word", "--hidden", "4", "--epochs", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // without --metrics-out the epoch records are echoed before the summary
    let summary = last_json(&out);
    assert_eq!(summary["vocab"], built["size"]);

    // mode mismatch is a configuration error
    let out = tprop(&["train-bptt", "--corpus", s(&c), "--vocab", s(&v), "--hidden", "4", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_rejects_a_changed_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_corpus(dir.path());
    let metrics = dir.path().join("a.jsonl");
    let out = tprop(&["train-bptt", "--corpus", s(&c), "--hidden", "4", "--epochs", "1", "--metrics-out", s(&metrics)]);
    assert!(out.status.success());
    std::fs::write(&c, "something else entirely").unwrap();
    let out = tprop(&[
        "replay", "--manifest", s(&dir.path().join("a.manifest.json")),
        "--metrics-out", s(&dir.path().join("b.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_dry_run_lists_every_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = tprop(&["sweep", "--hidden-sizes", "16,32,64", "--out-dir", s(dir.path()), "--dry-run"]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 9);
    let status = rdr.headers().unwrap().iter().position(|h| h == "status").unwrap();
    assert!(rows.iter().all(|r| &r[status] == "planned"));

    let out = tprop(&["sweep", "--grid", "--out-dir", s(dir.path()), "--dry-run"]);
    assert!(out.status.success());
    let n = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap().records().count();
    assert_eq!(n, 243);
}

#[test]
fn sweep_continues_past_failed_children() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_corpus(dir.path());
    // the reinit flag is only legal for BTPROP in the batch regime, so the
    // BTPROP children fail and BPTT succeeds
    let out = tprop(&[
        "sweep", "--corpus", s(&c), "--hidden-sizes", "4", "--epochs", "1",
        "--h-reinit-each-epoch", "--out-dir", s(dir.path()), "--jobs", "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let mut rdr = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let status = rdr.headers().unwrap().iter().position(|h| h == "status").unwrap();
    let st: Vec<String> = rdr.records().map(|r| r.unwrap()[status].to_owned()).collect();
    assert_eq!(st[0], "ok");
    assert!(st[1].starts_with("failed") && st[2].starts_with("failed"), "{st:?}");
}

#[test]
fn verify_commands_report_json() {
    let out = tprop(&["verify-grads", "--count", "2"]);
    assert!(out.status.success());
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["passed"], true);

    let out = tprop(&["verify-equivalence", "--cell", "gru", "--eta", "0.1", "--lambda", "0.1", "--seeds", "2"]);
    assert!(out.status.success());
    let out = tprop(&["verify-equivalence", "--seeds", "1", "--init-offset", "0.05"]);
    assert_eq!(out.status.code(), Some(1));
}
