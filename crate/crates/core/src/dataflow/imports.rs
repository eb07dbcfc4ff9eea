//! Top-level module names a script imports.

use serde::{Deserialize, Serialize};

use rustpython_parser::ast::Stmt;

use super::parse::ParsedScript;
use super::walk;

/// `import numpy.linalg as la` gives `module_root = "numpy"`, `alias = Some("la")`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ImportRef {
    pub module_root: String,
    pub alias: Option<String>,
}

/// Absolute imports anywhere in the script, deduplicated and sorted.
/// Relative imports refer to the package itself and are skipped.
pub fn find_imports(script: &ParsedScript) -> Vec<ImportRef> {
    let mut out = Vec::new();
    walk::for_each_stmt(script.statements(), &mut |stmt| match stmt {
        Stmt::Import(i) => {
            for a in &i.names {
                out.push(ImportRef {
                    module_root: root(a.name.as_str()),
                    alias: a.asname.as_ref().map(|n| n.to_string()),
                });
            }
        }
        Stmt::ImportFrom(i) => {
            let relative = i.level.map_or(false, |l| l.to_u32() > 0);
            if let (false, Some(m)) = (relative, &i.module) {
                out.push(ImportRef { module_root: root(m.as_str()), alias: None });
            }
        }
        _ => {}
    });
    out.sort();
    out.dedup();
    out
}

fn root(dotted: &str) -> String {
    dotted.split('.').next().unwrap_or(dotted).to_string()
}
