//! CLI behavior: exit codes, dependency checks, config validation.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_protolex")
}

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/romance_albanian_latin.tsv")
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("protolex-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn evaluate_without_inputs_exits_2() {
    let out = tmpdir("missing");
    let status = Command::new(bin())
        .args(["run", "evaluate", "--data"])
        .arg(data())
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&status.stderr);
    assert!(
        stderr.contains("reconstructions.tsv"),
        "names the missing artifact: {stderr}"
    );
}

#[test]
fn phylo_without_characters_exits_2() {
    let out = tmpdir("missing-phylo");
    let status = Command::new(bin())
        .args(["run", "phylo", "--data"])
        .arg(data())
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn bad_config_exits_3() {
    let out = tmpdir("badcfg");
    let cfg = out.join("bad.conf");
    std::fs::write(&cfg, "alpha = 7\n").unwrap();
    let status = Command::new(bin())
        .args(["run", "train-align", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(data())
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));

    let status = Command::new(bin())
        .args(["run", "nonsense", "--data"])
        .arg(data())
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));

    let status = Command::new(bin())
        .args(["run", "train-align", "--data", "/nonexistent.tsv", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));
}

#[test]
fn unknown_outgroup_exits_3() {
    let out = tmpdir("badog");
    let status = Command::new(bin())
        .args(["run", "train-align", "--outgroup", "MARTIAN", "--data"])
        .arg(data())
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));
}

#[test]
fn train_align_writes_model_and_manifest() {
    let out = tmpdir("train");
    let status = Command::new(bin())
        .args(["run", "train-align", "--data"])
        .arg(data())
        .arg("--out")
        .arg(&out)
        .arg("--dump-alignments")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("scoring_model.tsv").exists());
    assert!(out.join("alignments.tsv").exists());
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("train-align"));
    assert!(manifest.contains("fnv1a:"));
    // stage can be re-run standalone and its artifact checksum is stable
    let before: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    let status = Command::new(bin())
        .args(["run", "train-align", "--data"])
        .arg(data())
        .arg("--out")
        .arg(&out)
        .arg("--dump-alignments")
        .status()
        .unwrap();
    assert!(status.success());
    let after: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(
        before["stages"]["train-align"]["artifacts"],
        after["stages"]["train-align"]["artifacts"]
    );
}
