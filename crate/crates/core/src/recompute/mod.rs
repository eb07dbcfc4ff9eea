//! Re-run scholarly scripts in per-package environments and confirm that the
//! numbers they print are the ones the linked article reports.
//!
//! The interpreter is an external program driven through a small subprocess
//! contract; every program name and argument is configurable.

mod confirm;
mod env;
mod exec;

use serde::{Deserialize, Serialize};

pub use confirm::{check_claim, confirm_outputs, confirm_value, harvest_values, ClaimKind, OutputConfirmation};
pub use env::{
    plan_environment, prepare_environment, EnvironmentPlan, ModuleDistributionTable, Preparation,
    Requirement, StdlibAllowlist,
};
pub use exec::{execute_script, write_needs_human, ExecutionResult, ExecutionStatus, NeedsHuman};

pub(crate) use confirm::parse_decimal;

/// Subprocess contract. `{env}` expands to the environment directory and
/// `{base}` to `base_interpreter`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecomputeConfig {
    pub base_interpreter: String,
    pub interpreter_version: String,
    pub create_env: Vec<String>,
    pub env_interpreter: String,
    pub env_installer: String,
    pub timeout_secs: u64,
    pub install_timeout_secs: u64,
    pub output_cap_bytes: usize,
}

impl Default for RecomputeConfig {
    fn default() -> Self {
        Self {
            base_interpreter: "python3".into(),
            interpreter_version: "3.10".into(),
            create_env: ["{base}", "-m", "venv", "--system-site-packages", "{env}"]
                .map(String::from)
                .to_vec(),
            env_interpreter: "{env}/bin/python".into(),
            env_installer: "{env}/bin/pip".into(),
            timeout_secs: 300,
            install_timeout_secs: 600,
            output_cap_bytes: 1 << 20,
        }
    }
}
