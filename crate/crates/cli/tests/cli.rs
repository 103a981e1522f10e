use std::path::Path;
use std::process::Command;

use satneuro_cli::compare::read_comparison;
use satneuro_cli::pipeline::{DatasetSummary, ModelEvaluation};
use satneuro_cli::sweep::read_sweep_csv;

fn satneuro(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_satneuro")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = satneuro(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(satneuro(&["--help"]).status.code(), Some(0));
    assert_eq!(satneuro(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(satneuro(&["gen-data", "--samples", "many", "--out", "x"]).status.code(), Some(1));
    assert_eq!(satneuro(&["gen-data", "--samples", "3", "--out", "x"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    assert_eq!(
        satneuro(&["train-snn", "--data", p(&missing), "--out", p(&dir.path().join("m.ckpt"))]).status.code(),
        Some(2)
    );
}

#[test]
fn full_pipeline_at_small_scale() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    ok(&["gen-data", "--samples", "60", "--seed", "11", "--out", p(&data)]);
    for f in ["dataset.json", "catalog.csv", "summary.json", "manifest.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let summary: DatasetSummary = serde_json::from_str(&std::fs::read_to_string(data.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.n_samples, 60);

    let relabeled = d.join("relabeled");
    ok(&["label", "--data", p(&data), "--out", p(&relabeled), "--pmax", "100", "--beta1", "0.5"]);
    let s2: DatasetSummary =
        serde_json::from_str(&std::fs::read_to_string(relabeled.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s2.feature_hash, summary.feature_hash);
    assert!(s2.feasible_count < summary.feasible_count);

    let cfg = d.join("run.toml");
    std::fs::write(
        &cfg,
        "[snn.train]\nepochs = 2\n[cnn]\npreprocess = { percentile = 99.0, ds = 36 }\n[cnn.train]\nepochs = 2\nbatch_size = 16\n",
    )
    .unwrap();
    ok(&["train-snn", "--data", p(&data), "--config", p(&cfg), "--out", p(&d.join("snn/model.ckpt"))]);
    ok(&["train-cnn", "--data", p(&data), "--config", p(&cfg), "--out", p(&d.join("cnn/model.ckpt"))]);
    assert!(d.join("snn/manifest.json").exists() && d.join("cnn/manifest.json").exists());

    ok(&["eval", "--model", p(&d.join("snn/model.ckpt")), "--data", p(&data), "--split", "validation", "--out", p(&d.join("snn_eval"))]);
    ok(&["eval", "--model", p(&d.join("cnn/model.ckpt")), "--data", p(&data), "--out", p(&d.join("cnn_eval"))]);
    // a reloaded checkpoint reproduces the post-training evaluation
    let trained = ModelEvaluation::load(&d.join("snn/eval.json")).unwrap();
    let reloaded = ModelEvaluation::load(&d.join("snn_eval/eval.json")).unwrap();
    assert_eq!(trained.predictions, reloaded.predictions);
    assert_eq!(trained.scores, reloaded.scores);
    let cnn_eval = ModelEvaluation::load(&d.join("cnn_eval/eval.json")).unwrap();
    assert_eq!(ModelEvaluation::load(&d.join("cnn/eval.json")).unwrap().predictions, cnn_eval.predictions);

    ok(&["compare", "--snn", p(&d.join("snn_eval/eval.json")), "--cnn", p(&d.join("cnn_eval/eval.json")), "--out", p(&d.join("cmp"))]);
    let c = read_comparison(std::fs::File::open(d.join("cmp/comparison.csv")).unwrap()).unwrap();
    assert_eq!(c.examples, reloaded.labels.len());
    assert_eq!(satneuro(&["compare", "--snn", p(&d.join("cnn_eval/eval.json")), "--cnn", p(&d.join("cnn_eval/eval.json")), "--out", p(&d.join("cmp2"))]).status.code(), Some(1));

    ok(&["report", "--eval", p(&d.join("snn_eval/eval.json")), "--data", p(&data), "--out", p(&d.join("report"))]);
    for f in ["report.csv", "confusion.csv", "roc.svg", "report.json", "manifest.json"] {
        assert!(d.join("report").join(f).exists(), "{f}");
    }
    assert!(std::fs::read_dir(d.join("report")).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with("roc_")));

    ok(&["sweep", "--data", p(&data), "--axis", "theta_enc", "--values", "0.5,1,2", "--config", p(&cfg), "--out", p(&d.join("sweep"))]);
    let points = read_sweep_csv(&d.join("sweep/sweep_theta_enc.csv")).unwrap();
    assert_eq!(points.len(), 3);
    assert!(points.windows(2).all(|w| w[1].input_spikes <= w[0].input_spikes));
    assert!(d.join("sweep/sweep_theta_enc_accuracy.svg").exists());
    assert_eq!(satneuro(&["sweep", "--data", p(&data), "--axis", "steps", "--values", "32,8", "--out", p(&d.join("s2"))]).status.code(), Some(1));
}
