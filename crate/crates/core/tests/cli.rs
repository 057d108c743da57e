use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use enhp::data::Split;
use enhp::model::load_checkpoint;
use serde_json::Value;

fn enhp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enhp"))
        .args(args)
        .env("ENHP_THREADS", "1")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = enhp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const STABLE_SPEC: &str = r#"{
  "M": 2,
  "mu": [0.3, 0.2],
  "kernels": [
    [{"variant": "exponential", "params": {"alpha": 0.4, "delta": 1.0}}, {"variant": "step", "params": {"height": 0.2, "support": 1.0}}],
    [{"variant": "zero"}, {"variant": "cosine", "params": {"scale": 2.0, "support": null}}]
  ]
}"#;

fn simulate_small(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    fs::write(&spec, STABLE_SPEC).unwrap();
    let data = dir.join("data");
    ok(&[
        "simulate", "--spec", s(&spec), "--out", s(&data), "--horizon", "15",
        "--num-train", "24", "--num-val", "8", "--num-test", "8", "-q",
    ]);
    data
}

#[test]
fn simulate_is_reproducible_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_small(dir.path());
    let first = fs::read(data.join("data.jsonl")).unwrap();
    let meta_first = fs::read(data.join("metadata.json")).unwrap();
    let spec = dir.path().join("spec.json");
    let again = dir.path().join("again");
    ok(&[
        "simulate", "--spec", s(&spec), "--out", s(&again), "--horizon", "15",
        "--num-train", "24", "--num-val", "8", "--num-test", "8", "-q",
    ]);
    assert_eq!(first, fs::read(again.join("data.jsonl")).unwrap());
    assert_eq!(meta_first, fs::read(again.join("metadata.json")).unwrap());

    let meta: Value = serde_json::from_slice(&meta_first).unwrap();
    assert_eq!(meta["num_types"], 2);
    assert_eq!(meta["provenance"]["config"]["horizon"], 15.0);
    let ds = enhp::cli::load_data(&data, None).unwrap();
    assert_eq!(ds.split(Split::Train).len(), 24);
    assert_eq!(ds.split(Split::Test).len(), 8);
}

#[test]
fn bundled_process_is_refused_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let out = enhp(&["simulate", "--out", s(&dir.path().join("x")), "-q"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("3.000000"));

    let data = dir.path().join("capped");
    ok(&[
        "simulate", "--out", s(&data), "--allow-supercritical", "--max-events", "10",
        "--num-train", "5", "--num-val", "2", "--num-test", "2", "-q",
    ]);
    let meta: Value = serde_json::from_slice(&fs::read(data.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["num_types"], 3);
    assert_eq!(meta["ground_truth"]["mu"], serde_json::json!([0.3, 0.05, 0.2]));
    assert_eq!(meta["capped_sequences"], 9);
}

#[test]
fn fit_eval_predict_and_interpret() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = simulate_small(d);
    let cfg = d.join("fit.json");
    fs::write(
        &cfg,
        r#"{"hidden_dim": 8, "embed_dim": 2, "learning_rate": 0.01, "batch_size": 8, "max_epochs": 3,
            "integrator": {"method": "monte_carlo", "mc_samples": 2}}"#,
    )
    .unwrap();
    let ckpt = d.join("out/model.json");
    let log = d.join("out/log.csv");
    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--out", s(&ckpt), "--log", s(&log), "--max-epochs", "2", "-q"]);
    let loaded = load_checkpoint(&ckpt).unwrap();
    assert_eq!(loaded.model.embed_dim(), 2);
    assert_eq!(loaded.provenance["config"]["max_epochs"], 2, "flags override the file");
    assert_eq!(loaded.provenance["config"]["learning_rate"], 0.01);
    let log_text = fs::read_to_string(&log).unwrap();
    assert_eq!(log_text.lines().count(), 1 + 3);
    assert!(d.join("out/log.csv.provenance.json").exists());

    let report = d.join("eval.json");
    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--split", "test", "--out", s(&report), "-q"]);
    let r: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["report"]["num_sequences"], 8);
    assert_eq!(r["provenance"]["inputs"]["split"], "test");
    assert!(r["report"]["ll_per_event"].as_f64().unwrap().is_finite());

    let ds = enhp::cli::load_data(&data, None).unwrap();
    let test = ds.split(Split::Test);
    let events: usize = test.iter().map(|q| q.len()).sum();
    let nonempty = test.iter().filter(|q| !q.is_empty()).count();
    let preds = d.join("pred.csv");
    ok(&["predict", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&preds), "-q"]);
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 1 + events);
    ok(&["predict", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&preds), "--include-first", "false", "-q"]);
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 1 + events - nonempty);

    let impact = d.join("impact.csv");
    let svg = d.join("impact.svg");
    ok(&["impact", "--checkpoint", s(&ckpt), "--horizon", "10", "--out", s(&impact), "--svg", s(&svg), "-q"]);
    let m = enhp::interpret::LabeledMatrix::read_csv(fs::File::open(&impact).unwrap()).unwrap();
    assert_eq!(m.values.len(), 2);
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    let sidecar: Value = serde_json::from_slice(&fs::read(d.join("impact.csv.provenance.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["horizon"], 10.0);

    let curve = d.join("curve.csv");
    ok(&["kernel-curve", "--checkpoint", s(&ckpt), "--source", "0", "--target", "1", "--steps", "50", "--out", s(&curve), "-q"]);
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 1 + 51);

    let vocab = d.join("vocab.json");
    fs::write(&vocab, r#"{"0": "alpha", "1": "beta"}"#).unwrap();
    let topics = d.join("topics.csv");
    ok(&["topics", "--checkpoint", s(&ckpt), "--vocab", s(&vocab), "--top-n", "2", "--out", s(&topics), "-q"]);
    assert!(fs::read_to_string(&topics).unwrap().contains("alpha"));
}

#[test]
fn zero_epochs_keeps_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_small(dir.path());
    let ckpt = dir.path().join("m.json");
    ok(&["fit", "--data", s(&data), "--out", s(&ckpt), "--max-epochs", "0", "--hidden-dim", "4", "--seed", "5", "-q"]);
    let ds = enhp::cli::load_data(&data, None).unwrap();
    let cfg = enhp::train::FitConfig {
        hidden_dim: 4,
        seed: 5,
        max_epochs: 0,
        ..Default::default()
    };
    let init = enhp::train::initial_model(&ds.split(Split::Train), 2, &cfg).unwrap();
    assert_eq!(load_checkpoint(&ckpt).unwrap().model, init);
}

#[test]
fn dimension_sweep_writes_one_row_per_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_small(dir.path());
    let out = dir.path().join("sweep.csv");
    ok(&[
        "fit", "--data", s(&data), "--sweep-dims", "1,2", "--sweep-out", s(&out),
        "--max-epochs", "1", "--hidden-dim", "4", "--mc-samples", "2", "-q",
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "D,val_ll,best_epoch");
    assert!(rows[1].starts_with("1,") && rows[2].starts_with("2,"));
}

#[test]
fn gradcheck_exit_codes() {
    let out = ok(&["gradcheck", "--num-models", "4", "-q"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let first = String::from_utf8_lossy(&out.stdout).to_string();
    let again = ok(&["gradcheck", "--num-models", "4", "-q"]);
    assert_eq!(first, String::from_utf8_lossy(&again.stdout));

    let bad = enhp(&["gradcheck", "--num-models", "4", "--corrupt", "-q"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_small(dir.path());
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"embed_dimm": 3}"#).unwrap();
    let out = enhp(&["fit", "--data", s(&data), "--config", s(&cfg), "--out", s(&dir.path().join("m.json")), "-q"]);
    assert_eq!(out.status.code(), Some(1));
    let out = enhp(&["fit", "--data", s(&data), "--out", s(&dir.path().join("m.json")), "--patience", "0", "-q"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(enhp(&["eval", "--checkpoint", "nope.json"]).status.code(), Some(1));
    assert_eq!(enhp(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(enhp(&["--help"]).status.code(), Some(0));
}
