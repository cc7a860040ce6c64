use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rvemor::pod::files::read_snapshot_matrix;

fn quick_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quick.toml")
}

fn rvemor(out: &Path, config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvemor"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, config: &Path, args: &[&str]) -> String {
    let o = rvemor(out, config, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

/// Quick configuration with literal text substitutions.
fn variant(dir: &Path, replace: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(quick_config()).unwrap();
    for (from, to) in replace {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    let path = dir.join("variant.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn full_pipeline_writes_report_and_manifest_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = quick_config();
    for cmd in ["dns", "pod-build", "pod-run", "train", "rnn-run"] {
        ok(&out, &cfg, &[cmd]);
    }
    let report = ok(&out, &cfg, &["compare"]);
    assert!(report.contains("val_cyclic_000") && report.contains("val_random_001"), "{report}");

    let summary = std::fs::read_to_string(out.join("compare/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    let timing = std::fs::read_to_string(out.join("compare/timing.csv")).unwrap();
    for line in timing.lines().filter(|l| l.starts_with("RNN-MOR")) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[5], "0", "online linear solves: {line}");
        // 4x4 elements, 4 points each, 20 increments
        assert_eq!(f[6], "1280", "{line}");
    }

    let m = manifest(&out);
    let a = &m["artifacts"];
    let basis_hash = a["basis.bin"]["sha256"].as_str().unwrap();
    assert_eq!(a["model.bin"]["inputs"]["basis.bin"].as_str().unwrap(), basis_hash);
    assert_eq!(
        a["basis.bin"]["inputs"]["snapshots.bin"].as_str().unwrap(),
        a["snapshots.bin"]["sha256"].as_str().unwrap()
    );
    assert_eq!(
        a["online/val_cyclic_000_stress.csv"]["inputs"]["model.bin"].as_str().unwrap(),
        a["model.bin"]["sha256"].as_str().unwrap()
    );
    assert!(a["snapshots.bin"]["inputs"].as_object().unwrap().len() == 32);

    let sweep = ok(&out, &cfg, &["sweep"]);
    assert_eq!(sweep.lines().count(), 2);
    assert!(out.join("sweep.csv").exists());
}

#[test]
fn dns_rerun_gives_identical_snapshot_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config();
    let hash = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&out, &cfg, &["--seed", seed, "--threads", "1", "dns"]);
        manifest(&out)["artifacts"]["snapshots.bin"]["sha256"].as_str().unwrap().to_string()
    };
    let first = hash("a", "7");
    assert_eq!(first, hash("b", "7"));
    assert_ne!(first, hash("c", "8"));
}

#[test]
fn identity_path_gives_zero_displacement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(
        dir.path(),
        &[
            ("cyclic_train = 12", "cyclic_train = 0"),
            ("random_train = 20", "random_train = 1"),
            ("cyclic_val = 2", "cyclic_val = 0"),
            ("random_val = 2", "random_val = 1"),
            ("random_step = 0.01", "random_step = 0.0"),
        ],
    );
    let out = dir.path().join("run");
    ok(&out, &cfg, &["dns"]);
    let mut r = std::fs::File::open(out.join("dns/val_random_000_u.bin")).unwrap();
    let u = read_snapshot_matrix(&mut r).unwrap();
    assert_eq!(u.ncols(), 20);
    assert_eq!(u.amax(), 0.0);
    // the training snapshots are all zero as well, so no basis exists
    let o = rvemor(&out, &cfg, &["pod-build"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn homogeneous_material_fails_the_rank_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), &[("[geometry]\ndivisions = 4", "[geometry]\ndivisions = 4\nparticles = []")]);
    let out = dir.path().join("run");
    ok(&out, &cfg, &["dns"]);
    let o = rvemor(&out, &cfg, &["pod-build"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rank 0"));
}

#[test]
fn pod_build_on_zero_snapshots_is_an_empty_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(
        dir.path(),
        &[("cyclic_train = 12", "cyclic_train = 0"), ("random_train = 20", "random_train = 0")],
    );
    let out = dir.path().join("run");
    ok(&out, &cfg, &["dns"]);
    let o = rvemor(&out, &cfg, &["pod-build"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty input"));
}

#[test]
fn rnn_run_refuses_a_model_trained_on_another_basis() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = quick_config();
    for cmd in ["dns", "pod-build", "pod-run", "train"] {
        ok(&out, &cfg, &[cmd]);
    }
    let trained_on = manifest(&out)["artifacts"]["model.bin"]["attributes"]["basis_digest"]
        .as_str()
        .unwrap()
        .to_string();
    let other = variant(dir.path(), &[("n_b = 4", "n_b = 3")]);
    ok(&out, &other, &["pod-build"]);
    let now = manifest(&out)["artifacts"]["basis.bin"]["attributes"]["basis_digest"]
        .as_str()
        .unwrap()
        .to_string();
    assert_ne!(trained_on, now);
    let o = rvemor(&out, &other, &["rnn-run"]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&trained_on) && err.contains(&now), "{err}");
}

#[test]
fn edited_artifact_is_a_data_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = quick_config();
    ok(&out, &cfg, &["dns"]);
    std::fs::write(out.join("snapshots.csv"), "sim,inc,U11,U22,U12\n").unwrap();
    assert_eq!(rvemor(&out, &cfg, &["pod-build"]).status.code(), Some(4));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(rvemor(&out, &dir.path().join("absent.toml"), &["dns"]).status.code(), Some(2));
    let bad = variant(dir.path(), &[("n_inc = 20", "n_inc = 21")]);
    assert_eq!(rvemor(&out, &bad, &["dns"]).status.code(), Some(2));
    // upstream stage not run yet
    let o = rvemor(&out, &quick_config(), &["pod-build"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `dns` first"));
    let o = Command::new(env!("CARGO_BIN_EXE_rvemor")).arg("bogus").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
