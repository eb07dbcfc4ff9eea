//! Static dataflow over Python scripts and notebooks.
//!
//! A script is parsed once; every call to a configured loader becomes a
//! [`DataSource`], and a single forward pass over the enclosing scope
//! collects the calls that consume data derived from it. Matching is by the
//! final name segment of the callee (`pd.read_csv` and `read_csv` are the
//! same loader).

mod imports;
mod parse;
mod sources;
mod trace;
mod walk;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::doi::Doi;

pub use imports::{find_imports, ImportRef};
pub use parse::{parse_script, CellStart, LineIndex, ParsedScript, ScriptKind};
pub use sources::find_data_sources;
pub use trace::trace_operations;

/// Default loaders: functions whose call loads a dataset.
pub const DEFAULT_LOADERS: &[&str] = &["read_csv", "loadtxt", "genfromtxt", "read_json", "open"];

/// Callees that only emit data (recorded as sinks, never as operations).
pub const DEFAULT_SINKS: &[&str] = &["print", "write", "writelines"];

pub type LoaderSet = BTreeSet<String>;

/// Loader and sink names used by the analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub loaders: LoaderSet,
    pub sinks: BTreeSet<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            loaders: DEFAULT_LOADERS.iter().map(|s| s.to_string()).collect(),
            sinks: DEFAULT_SINKS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// 1-based line, 0-based byte column (CPython's convention).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub line: u32,
    pub column: u32,
}

/// Byte range of a node in the analysed source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceArgument {
    Literal(String),
    NonLiteral,
}

impl SourceArgument {
    pub fn literal(&self) -> Option<&str> {
        match self {
            SourceArgument::Literal(s) => Some(s),
            SourceArgument::NonLiteral => None,
        }
    }
}

/// A call that loads a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSource {
    /// Name bound directly to the load result, if any.
    pub variable: Option<String>,
    pub loader: String,
    pub argument: SourceArgument,
    pub location: Location,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationRole {
    MethodOnTainted,
    TaintedAsArgument,
}

/// Marker used as justification when taint comes straight from the load
/// call rather than from a named variable.
pub const SOURCE_JUSTIFICATION: &str = "@source";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationEvent {
    /// Final segment of the callee, e.g. `ttest_ind`.
    pub name: String,
    /// Callee as written, e.g. `stats.ttest_ind`.
    pub qualified_name: String,
    pub role: OperationRole,
    /// Start of the callee's final name segment.
    pub location: Location,
    /// Position just past the call's closing parenthesis. Chains are ordered
    /// by this key, which puts inner calls before the calls enclosing them.
    pub end: Location,
    pub result_variable: Option<String>,
    /// Tainted variable (or [`SOURCE_JUSTIFICATION`]) that made this call an
    /// operation on the dataset.
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkEvent {
    /// `print`, `write`, ... or `return`.
    pub kind: String,
    pub location: Location,
    pub justification: String,
}

/// One data source and the ordered operations applied to data derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceChain {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package_doi: Option<Doi>,
    pub script_path: String,
    pub source: DataSource,
    pub operations: Vec<OperationEvent>,
    pub sink_outputs: Vec<SinkEvent>,
}

impl ProvenanceChain {
    pub fn operation_names(&self) -> Vec<&str> {
        self.operations.iter().map(|o| o.name.as_str()).collect()
    }
}

/// Parse-independent convenience: every chain of an already parsed script.
pub fn analyze(script: &ParsedScript, config: &AnalysisConfig) -> Vec<ProvenanceChain> {
    if !script.parse_ok {
        return Vec::new();
    }
    find_data_sources(script, &config.loaders)
        .into_iter()
        .map(|source| trace_operations(script, &source, config))
        .collect()
}
