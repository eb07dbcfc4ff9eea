//! Per-package environment planning and preparation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::dataflow::ImportRef;
use crate::doi::Doi;
use crate::error::{Error, Result};
use crate::ingest::{FileKind, LocalPackage};

use super::RecomputeConfig;

const DEFAULT_TABLE: &str = include_str!("../../data/module-distributions.tsv");
const STDLIB_310: &str = include_str!("../../data/stdlib/python-3.10.txt");

/// Import root -> distribution name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleDistributionTable {
    map: BTreeMap<String, String>,
}

impl ModuleDistributionTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (module, dist) = line
                .split_once('\t')
                .ok_or_else(|| Error::Config(format!("distribution table line {}: expected a tab", no + 1)))?;
            map.insert(module.trim().to_string(), dist.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn lookup(&self, module_root: &str) -> Option<&str> {
        self.map.get(module_root).map(String::as_str)
    }
}

impl Default for ModuleDistributionTable {
    fn default() -> Self {
        Self::parse(DEFAULT_TABLE).expect("bundled table is valid")
    }
}

/// Standard-library module roots for one interpreter version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StdlibAllowlist {
    pub version: String,
    modules: BTreeSet<String>,
}

impl StdlibAllowlist {
    /// The bundled list for `version`; unknown versions fall back to the
    /// newest bundled list with a warning.
    pub fn bundled(version: &str) -> Self {
        if version != "3.10" {
            log::warn!("no stdlib list for Python {version}; using 3.10");
        }
        Self::parse("3.10", STDLIB_310)
    }

    pub fn parse(version: &str, text: &str) -> Self {
        let modules = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        Self { version: version.to_string(), modules }
    }

    pub fn contains(&self, module_root: &str) -> bool {
        self.modules.contains(module_root)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Requirement {
    pub module_root: String,
    pub distribution: String,
    /// Not in the distribution table; the root was used verbatim.
    pub unmapped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentPlan {
    pub package_doi: Doi,
    pub interpreter_version: String,
    /// Distinct distribution names, sorted.
    pub distributions: Vec<String>,
    pub requirements: Vec<Requirement>,
    pub env_path: PathBuf,
    pub package_root: PathBuf,
}

/// Map imports to distributions. Standard-library roots and modules shipped
/// inside the package itself (`import utils` next to `utils.py`) are dropped.
pub fn plan_environment(
    pkg: &LocalPackage,
    imports: &[ImportRef],
    table: &ModuleDistributionTable,
    stdlib: &StdlibAllowlist,
    env_path: PathBuf,
) -> EnvironmentPlan {
    let local = local_modules(pkg);
    let mut requirements = BTreeSet::new();
    for import in imports {
        let root = import.module_root.as_str();
        if stdlib.contains(root) || local.contains(root) {
            continue;
        }
        let (distribution, unmapped) = match table.lookup(root) {
            Some(d) => (d.to_string(), false),
            None => (root.to_string(), true),
        };
        requirements.insert(Requirement { module_root: root.to_string(), distribution, unmapped });
    }
    let distributions: BTreeSet<String> = requirements.iter().map(|r| r.distribution.clone()).collect();
    EnvironmentPlan {
        package_doi: pkg.doi().clone(),
        interpreter_version: stdlib.version.clone(),
        distributions: distributions.into_iter().collect(),
        requirements: requirements.into_iter().collect(),
        env_path,
        package_root: pkg.root_path.clone(),
    }
}

fn local_modules(pkg: &LocalPackage) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for e in &pkg.files.entries {
        if e.kind != FileKind::Script {
            continue;
        }
        let path = Path::new(&e.relative_path);
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if path.parent().map_or(true, |p| p.as_os_str().is_empty()) {
                out.insert(stem.to_string());
            }
        }
        if let Some(top) = path.components().next().filter(|_| path.components().count() > 1) {
            out.insert(top.as_os_str().to_string_lossy().into_owned());
        }
    }
    out
}

/// Outcome of creating the environment and installing what is missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preparation {
    pub installed: Vec<String>,
    /// `(distribution, reason)` for each failed install.
    pub failures: Vec<(String, String)>,
}

impl Preparation {
    pub fn ready(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Expand `{env}` and `{base}` placeholders.
pub(crate) fn expand(template: &str, env: &Path, config: &RecomputeConfig) -> String {
    template
        .replace("{env}", &env.to_string_lossy())
        .replace("{base}", &config.base_interpreter)
}

/// Create the environment if absent, then install every required
/// distribution whose module cannot already be imported.
pub fn prepare_environment(plan: &EnvironmentPlan, config: &RecomputeConfig) -> Result<Preparation> {
    let interpreter = PathBuf::from(expand(&config.env_interpreter, &plan.env_path, config));
    if !interpreter.exists() {
        if let Some(parent) = plan.env_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let argv: Vec<String> = config
            .create_env
            .iter()
            .map(|a| expand(a, &plan.env_path, config))
            .collect();
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| Error::Config("create_env command is empty".into()))?;
        let status = Command::new(program)
            .args(args)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .output()
            .map_err(|e| Error::InterpreterMissing(format!("{program}: {e}")))?;
        if !status.status.success() || !interpreter.exists() {
            return Err(Error::InterpreterMissing(format!(
                "creating {} failed: {}",
                plan.env_path.display(),
                String::from_utf8_lossy(&status.stderr).trim()
            )));
        }
    }
    let installer = expand(&config.env_installer, &plan.env_path, config);
    let mut prep = Preparation { installed: Vec::new(), failures: Vec::new() };
    let mut done = BTreeSet::new();
    for req in &plan.requirements {
        if importable(&interpreter, &req.module_root)? || !done.insert(req.distribution.clone()) {
            continue;
        }
        match install(&installer, &req.distribution, config) {
            Ok(()) if importable(&interpreter, &req.module_root)? => prep.installed.push(req.distribution.clone()),
            Ok(()) => prep.failures.push((
                req.distribution.clone(),
                format!("installed but `{}` is still not importable", req.module_root),
            )),
            Err(reason) => prep.failures.push((req.distribution.clone(), reason)),
        }
    }
    Ok(prep)
}

fn importable(interpreter: &Path, module: &str) -> Result<bool> {
    let status = Command::new(interpreter)
        .args([
            "-c",
            "import importlib.util, sys; sys.exit(0 if importlib.util.find_spec(sys.argv[1]) else 1)",
            module,
        ])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map_err(|e| Error::InterpreterMissing(format!("{}: {e}", interpreter.display())))?;
    Ok(status.success())
}

fn install(installer: &str, distribution: &str, config: &RecomputeConfig) -> std::result::Result<(), String> {
    let mut child = Command::new(installer)
        .args(["install", distribution])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("cannot run installer {installer}: {e}"))?;
    let stderr = child.stderr.take();
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut s) = stderr {
            let _ = std::io::Read::read_to_end(&mut s, &mut buf);
        }
        buf
    });
    let timeout = Duration::from_secs(config.install_timeout_secs);
    match child.wait_timeout(timeout).map_err(|e| e.to_string())? {
        Some(status) if status.success() => Ok(()),
        Some(status) => {
            let err = reader.join().unwrap_or_default();
            let text = String::from_utf8_lossy(&err);
            let tail: Vec<&str> = text.lines().rev().take(3).collect();
            Err(format!(
                "installing {distribution} exited with {}: {}",
                status.code().unwrap_or(-1),
                tail.into_iter().rev().collect::<Vec<_>>().join(" | ")
            ))
        }
        None => {
            let _ = child.kill();
            let _ = child.wait();
            Err(format!("installing {distribution} timed out after {}s", timeout.as_secs()))
        }
    }
}
