use std::path::{Path, PathBuf};
use std::process::Command;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn provex(run: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_provex"))
        .arg("--config")
        .arg(fixtures().join("provex.toml"))
        .arg("--run-dir")
        .arg(run)
        .arg("--cache-dir")
        .arg(run.join("cache"))
        .args(args)
        .output()
        .expect("spawn provex")
}

#[test]
fn stage_without_prior_artifact_names_the_stage_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = provex(dir.path(), &["match"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run `provex fetch` first"), "{err}");
}

#[test]
fn analyze_reports_one_chain_with_five_operations_for_the_running_example() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["harvest", "fetch", "analyze"] {
        let out = provex(dir.path(), &[stage, "--offline", "--threads", "2"]);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let chains = std::fs::read_to_string(dir.path().join("chains.jsonl")).unwrap();
    let fig2: Vec<&str> = chains.lines().filter(|l| l.contains("\"script_path\":\"fig2.py\"")).collect();
    assert_eq!(fig2.len(), 1);
    let ops = fig2[0].matches("\"role\":").count();
    assert_eq!(ops, 5);
    assert!(dir.path().join("config.toml").is_file());
}

#[test]
fn harvest_prints_summary_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = provex(dir.path(), &["harvest"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[harvest]"));
    assert!(stdout.lines().any(|l| l.contains("software packages") && l.trim_end().ends_with('3')), "{stdout}");
}

#[test]
fn unknown_config_key_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_provex"))
        .arg("--config")
        .arg(&cfg)
        .arg("harvest")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
