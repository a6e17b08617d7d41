mod common;

use std::path::Path;
use std::process::{Command, Output};

use perturb_bench::audio::{read_manifest, Corpus, Split};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perturb-bench"))
        .args(args)
        .env_remove(perturb_bench::harness::CACHE_ENV)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn inapplicable_cells_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for (scenario, attack, removal) in [("well", "mifgsm", "joint"), ("well", "ssed", "qt"), ("ignorant", "mifgsm", "joint")] {
        let out = cli(&[
            "run", "--scenario", scenario, "--attack", attack, "--removal", removal, "--out", path(dir.path()),
        ]);
        assert_eq!(out.status.code(), Some(2), "{scenario}/{attack}/{removal}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("not applicable"));
    }
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "run", "--scenario", "ignorant", "--attack", "mifgsm", "--removal", "qt",
        "--config", "/nonexistent/config.json", "--out", path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = cli(&["report", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_then_defend() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = cli(&["synth", "--speakers", "2", "--utterances", "2", "--seconds", "0.3", "--out", path(&corpus)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = corpus.join("manifest.json");
    assert_eq!(read_manifest(&manifest).unwrap().len(), 4);

    let defended = dir.path().join("qt");
    let out = cli(&[
        "defend", "--kind", "qt", "--param", "256", "--in-manifest", path(&manifest), "--out-dir", path(&defended),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = Corpus::load(&defended.join("manifest.json"), Split::Test).unwrap();
    assert_eq!(c.len(), 4);
    for w in c.utterances() {
        let codes = w.samples().iter().map(|s| s * 32768.0);
        assert!(codes.clone().all(|v| (v / 256.0 - (v / 256.0).round()).abs() < 1e-6 || v.abs() > 32000.0));
    }

    let out = cli(&["defend", "--kind", "ms", "--param", "4", "--in-manifest", path(&manifest), "--out-dir", path(&defended)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_report_train_and_attack() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny_config_path();
    let run_dir = dir.path().join("run");
    let out = cli(&[
        "run", "--scenario", "ignorant", "--attack", "ssed", "--removal", "ms",
        "--config", path(&cfg), "--out", path(&run_dir), "--seed", "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("Ori") && table.contains("Adv") && table.contains("Processed"));
    let out = cli(&["report", path(&run_dir)]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("ms"));

    let models = dir.path().join("models");
    let out = cli(&["train", "encoder", "--config", path(&cfg), "--out", path(&models)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cli(&["train", "noise-denoiser", "--config", path(&cfg), "--out", path(&models)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(models.join("loss_history.csv")).unwrap();
    assert!(history.starts_with("epoch,"));
    assert!(models.join("remover.ckpt").is_file());

    let corpus = dir.path().join("corpus");
    assert!(cli(&["synth", "--speakers", "2", "--utterances", "1", "--seconds", "0.5", "--out", path(&corpus)])
        .status
        .success());
    let attacked = dir.path().join("attacked");
    let out = cli(&[
        "attack", "mifgsm", "--iters", "2",
        "--encoder", path(&models.join("encoder-white.ckpt")),
        "--in-manifest", path(&corpus.join("manifest.json")),
        "--out-dir", path(&attacked),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let adv = Corpus::load(&attacked.join("manifest.json"), Split::Test).unwrap();
    let orig = Corpus::load(&corpus.join("manifest.json"), Split::Test).unwrap();
    for (a, o) in adv.utterances().iter().zip(orig.utterances()) {
        // One quantization step of slack for the WAV round trip.
        assert!(a.max_abs_diff(o).unwrap() <= 0.05 + 2.0 / 32768.0);
    }
}
