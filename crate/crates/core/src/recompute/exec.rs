//! Running one script inside its package environment.

use std::io::Read;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::doi::Doi;
use crate::error::{Error, Result};

use super::env::{expand, EnvironmentPlan, Preparation};
use super::RecomputeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok,
    Failed,
    Timeout,
    NeedsHuman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub script_path: String,
    /// Process exit code; -1 when the process was killed or never started.
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
    pub stdout_truncated: bool,
    pub stderr_truncated: bool,
    /// Wall-clock seconds. Not serialized: it would make otherwise identical
    /// artifacts differ between runs.
    #[serde(skip)]
    pub duration: f64,
    pub status: ExecutionStatus,
    /// Why a human is needed (or why the run failed), if applicable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ExecutionResult {
    /// Result for a script that was never run because its environment could
    /// not be prepared.
    pub fn needs_human(script_path: &str, reason: impl Into<String>) -> Self {
        Self {
            script_path: script_path.to_string(),
            exit_code: -1,
            stdout: String::new(),
            stderr: String::new(),
            stdout_truncated: false,
            stderr_truncated: false,
            duration: 0.0,
            status: ExecutionStatus::NeedsHuman,
            reason: Some(reason.into()),
        }
    }
}

/// One line of the needs-human queue.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeedsHuman {
    pub package_doi: Doi,
    pub script_path: String,
    pub reason: String,
}

/// Run `{env_interpreter} {script}` with the package root as working
/// directory. A preparation with install failures short-circuits to
/// `needs_human` without running anything.
pub fn execute_script(
    plan: &EnvironmentPlan,
    preparation: &Preparation,
    script: &str,
    timeout: Duration,
    config: &RecomputeConfig,
) -> Result<ExecutionResult> {
    if !preparation.ready() {
        let reasons: Vec<String> = preparation.failures.iter().map(|(d, r)| format!("{d}: {r}")).collect();
        return Ok(ExecutionResult::needs_human(script, format!("install failed: {}", reasons.join("; "))));
    }
    let interpreter = expand(&config.env_interpreter, &plan.env_path, config);
    let started = Instant::now();
    let mut child = Command::new(&interpreter)
        .arg(script)
        .current_dir(&plan.package_root)
        .env("PROVEX_SANDBOX", "1")
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("MPLBACKEND", "Agg")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::InterpreterMissing(format!("{interpreter}: {e}")))?;
    let cap = config.output_cap_bytes;
    let out = capture(child.stdout.take(), cap);
    let err = capture(child.stderr.take(), cap);
    let waited = child.wait_timeout(timeout)?;
    let (exit_code, timed_out) = match waited {
        Some(status) => (status.code().unwrap_or(-1), false),
        None => {
            kill(&mut child);
            (-1, true)
        }
    };
    let (stdout, stdout_truncated) = out.join().unwrap_or_default();
    let (stderr, stderr_truncated) = err.join().unwrap_or_default();
    let status = match (timed_out, exit_code) {
        (true, _) => ExecutionStatus::Timeout,
        (false, 0) => ExecutionStatus::Ok,
        _ => ExecutionStatus::Failed,
    };
    let reason = match status {
        ExecutionStatus::Timeout => Some(format!("timed out after {}s", timeout.as_secs_f64())),
        ExecutionStatus::Failed => Some(last_line(&stderr).unwrap_or_else(|| format!("exit code {exit_code}"))),
        _ => None,
    };
    Ok(ExecutionResult {
        script_path: script.to_string(),
        exit_code,
        stdout,
        stderr,
        stdout_truncated,
        stderr_truncated,
        duration: started.elapsed().as_secs_f64(),
        status,
        reason,
    })
}

fn kill(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}

fn last_line(text: &str) -> Option<String> {
    text.lines().rev().find(|l| !l.trim().is_empty()).map(|l| l.trim().to_string())
}

/// Read a pipe to the end, keeping at most `cap` bytes.
fn capture<R: Read + Send + 'static>(pipe: Option<R>, cap: usize) -> JoinHandle<(String, bool)> {
    std::thread::spawn(move || {
        let Some(mut pipe) = pipe else { return (String::new(), false) };
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        (String::from_utf8_lossy(&kept).into_owned(), truncated)
    })
}

/// Write the queue as sorted JSON Lines (stable across runs).
pub fn write_needs_human(path: &Path, entries: &[NeedsHuman]) -> Result<()> {
    let mut sorted = entries.to_vec();
    sorted.sort();
    let mut out = String::new();
    for e in &sorted {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}
