use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"{
  "model": {"d": 4, "d_model": 8, "heads": 2, "shallow_width": 4, "mapper_width": 2, "cube_sizes": [8, 12]},
  "epochs": 2, "batch_size": 8, "lr": 1e-3, "train_per_class": 4, "val_per_class": 2,
  "checkpoint_every": 1, "eval_batch": 64
}"#;

fn mivit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mivit")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mivit(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    mivit(args).status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small scene and a model trained on it for two epochs.
struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Run {
        let dir = tempfile::tempdir().unwrap();
        let run = Run { dir };
        ok(&["synth", "--size", "16", "--out", s(&run.data())]);
        std::fs::write(run.path("small.json"), SMALL).unwrap();
        ok(&["train", "--quiet", "--data", s(&run.data()), "--config", s(&run.path("small.json")), "--out", s(&run.path("run"))]);
        run
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn data(&self) -> PathBuf {
        self.path("scene.mmrs")
    }

    fn ckpt(&self) -> PathBuf {
        self.path("run/final.ckpt")
    }
}

#[test]
fn synth_is_reproducible_per_seed() {
    let d = tempfile::tempdir().unwrap();
    let f = |n: &str| d.path().join(n);
    ok(&["synth", "--seed", "7", "--size", "16", "--out", s(&f("a.mmrs"))]);
    ok(&["synth", "--seed", "7", "--size", "16", "--out", s(&f("b.mmrs"))]);
    ok(&["synth", "--seed", "8", "--size", "16", "--out", s(&f("c.mmrs"))]);
    let read = |n: &str| std::fs::read(f(n)).unwrap();
    assert_eq!(read("a.mmrs"), read("b.mmrs"));
    assert_ne!(read("a.mmrs"), read("c.mmrs"));
}

#[test]
fn gradcheck_of_the_iac_module_passes() {
    let out = ok(&["gradcheck", "--module", "iac"]);
    assert!(out.starts_with("iac") && out.trim_end().ends_with("ok"), "{out}");
}

#[test]
fn config_applies_flag_overrides() {
    let v: serde_json::Value = serde_json::from_str(&ok(&["config", "--lr", "0.5", "--lambda2", "0"])).unwrap();
    assert_eq!(v["lr"], 0.5);
    assert_eq!(v["lambda2"], 0.0);
    assert_eq!(v["epochs"], 500);
}

#[test]
fn failures_map_to_exit_codes_without_partial_outputs() {
    let d = tempfile::tempdir().unwrap();
    let f = |n: &str| d.path().join(n);
    assert_eq!(code(&["synth", "--bogus"]), 2);
    assert_eq!(code(&["config", "--batch-size", "1"]), 2);
    std::fs::write(f("bad.json"), r#"{"epoch": 3}"#).unwrap();
    assert_eq!(code(&["config", "--config", s(&f("bad.json"))]), 2);

    assert_eq!(code(&["train", "--data", s(&f("missing.mmrs")), "--out", s(&f("run"))]), 5);
    std::fs::write(f("junk.mmrs"), b"not a scene").unwrap();
    assert_eq!(code(&["train", "--data", s(&f("junk.mmrs")), "--out", s(&f("run"))]), 3);
    assert!(!f("run").join("final.ckpt").exists());

    assert_eq!(code(&["select-modality", "--data", s(&f("junk.mmrs")), "--modality", "1", "--out", s(&f("one.mmrs"))]), 3);
    assert!(!f("one.mmrs").exists());
}

#[test]
fn trained_run_supports_every_downstream_command() {
    let run = Run::new();
    for name in ["final.ckpt", "best.ckpt", "epoch_0001.ckpt", "metrics.csv", "manifest.json"] {
        assert!(run.path("run").join(name).exists(), "{name}");
    }
    let (ckpt, data) = (run.ckpt(), run.data());

    let printed: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "--ckpt", s(&ckpt), "--data", s(&data), "--classifier", "3"])).unwrap();
    let file = std::fs::read(run.path("run/eval_classifier3_test.json")).unwrap();
    assert_eq!(printed, serde_json::from_slice::<serde_json::Value>(&file).unwrap());
    let oa = printed["metrics"]["oa"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&oa));

    let pgm = run.path("map.pgm");
    ok(&["infer", "--ckpt", s(&ckpt), "--data", s(&data), "--modality", "fused", "--out", s(&pgm)]);
    let text = std::fs::read_to_string(&pgm).unwrap();
    let mut tokens = text.split_whitespace();
    assert_eq!(tokens.next(), Some("P2"));
    let header: Vec<u32> = tokens.by_ref().take(3).map(|t| t.parse().unwrap()).collect();
    assert_eq!(header, vec![16, 16, 3]);
    let pixels: Vec<u32> = tokens.map(|t| t.parse().unwrap()).collect();
    assert_eq!(pixels.len(), 256);
    assert!(pixels.iter().all(|&v| v <= 3));

    let csv = run.path("corr.csv");
    ok(&["analyze-redundancy", "--ckpt", s(&ckpt), "--data", s(&data), "--out", s(&csv)]);
    assert!(!std::fs::read_to_string(&csv).unwrap().is_empty());

    let feats = run.path("f.csv");
    let msg = ok(&["export-features", "--ckpt", s(&ckpt), "--data", s(&data), "--layer", "vit", "--out", s(&feats)]);
    let rows = std::fs::read_to_string(&feats).unwrap().lines().count();
    assert!(msg.contains(&format!("{} rows", rows - 1)), "{msg}");
    assert_eq!(code(&["export-features", "--ckpt", s(&ckpt), "--data", s(&data), "--layer", "nope", "--out", s(&feats)]), 2);
}

#[test]
fn shallow_inference_does_not_depend_on_the_other_modality() {
    let run = Run::new();
    let (ckpt, data) = (run.ckpt(), run.data());
    let single = run.path("hsi_only.mmrs");
    ok(&["select-modality", "--data", s(&data), "--modality", "1", "--out", s(&single)]);

    let both = run.path("both.pgm");
    let alone = run.path("alone.pgm");
    ok(&["infer", "--ckpt", s(&ckpt), "--data", s(&data), "--modality", "hsi", "--out", s(&both)]);
    ok(&["infer", "--ckpt", s(&ckpt), "--data", s(&single), "--modality", "hsi", "--out", s(&alone)]);
    assert_eq!(std::fs::read(&both).unwrap(), std::fs::read(&alone).unwrap());

    let fused = run.path("fused.pgm");
    assert_eq!(code(&["infer", "--ckpt", s(&ckpt), "--data", s(&single), "--modality", "fused", "--out", s(&fused)]), 3);
    assert!(!fused.exists());
}

#[test]
fn repeating_a_run_from_its_manifest_reproduces_the_checkpoint() {
    let run = Run::new();
    let manifest = run.path("run/manifest.json");
    ok(&["train", "--quiet", "--data", s(&run.data()), "--config", s(&manifest), "--out", s(&run.path("again"))]);
    assert_eq!(std::fs::read(run.ckpt()).unwrap(), std::fs::read(run.path("again/final.ckpt")).unwrap());
}

#[test]
fn count_params_prints_two_decimal_columns() {
    let out = ok(&["count-params", "--path", "fused"]);
    assert!(out.starts_with("fused params/K 485.45 FLOPs/M "), "{out}");
    assert_eq!(code(&["count-params", "--path", "middle"]), 2);
}
