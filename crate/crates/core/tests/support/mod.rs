//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use provex_core::config::RunConfig;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture(rel: &str) -> PathBuf {
    fixtures().join(rel)
}

pub const RUNNING_EXAMPLE_DOI: &str = "10.5281/zenodo.6997897";
pub const RUNNING_EXAMPLE_ARTICLE: &str = "10.1101/2021.10.21.465270";

pub fn article_text() -> String {
    std::fs::read_to_string(fixture("articles/10.1101%2F2021.10.21.465270.txt")).unwrap()
}

/// The bundled offline configuration, writing into `work`.
pub fn fixture_config(work: &Path) -> RunConfig {
    let mut c = RunConfig::load(&fixture("provex.toml")).expect("fixture config");
    c.run_dir = work.join("run");
    c.cache_dir = Some(work.join("cache"));
    c
}

/// Every file under `dir` (relative path -> bytes).
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    walk(dir, dir)
}

fn walk(root: &Path, dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(root, &p));
        } else {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.insert(rel, std::fs::read(&p).unwrap());
        }
    }
    out
}

pub fn python_available() -> bool {
    std::process::Command::new("python3")
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

/// Recompute settings whose "environment" is a symlink to the system
/// interpreter, so tests skip virtualenv creation.
pub fn stub_recompute(c: &mut RunConfig) {
    let make = "mkdir -p {env}/bin && ln -sf \"$(command -v python3)\" {env}/bin/python";
    c.recompute.config.create_env = vec!["sh".into(), "-c".into(), make.into()];
}
