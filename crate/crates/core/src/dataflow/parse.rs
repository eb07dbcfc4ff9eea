use rustpython_parser::ast::{self, Ranged};
use rustpython_parser::{parse, Mode};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Location, Span};
use crate::doi::Doi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptKind {
    Script,
    Notebook,
}

/// First line (1-based) of a notebook code cell in the concatenated source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStart {
    pub cell_index: usize,
    pub first_line: u32,
}

/// Byte offsets of line starts.
#[derive(Debug, Clone, Default)]
pub struct LineIndex {
    starts: Vec<u32>,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i as u32 + 1));
        Self { starts }
    }

    pub fn locate(&self, offset: u32) -> Location {
        let line = self.starts.partition_point(|&s| s <= offset).max(1);
        Location {
            line: line as u32,
            column: offset - self.starts[line - 1],
        }
    }
}

/// A script or notebook after parsing. Scripts that fail to parse are kept
/// (with `parse_ok = false`) so they can be counted in reports.
#[derive(Debug, Clone)]
pub struct ParsedScript {
    pub package_doi: Option<Doi>,
    pub script_path: String,
    pub kind: ScriptKind,
    pub line_count: u32,
    pub parse_ok: bool,
    pub parse_error: Option<String>,
    /// Notebook only: where each code cell starts.
    pub cells: Vec<CellStart>,
    pub(crate) source: String,
    pub(crate) body: Vec<ast::Stmt>,
    pub(crate) lines: LineIndex,
}

impl ParsedScript {
    pub fn with_origin(mut self, package_doi: Option<Doi>, script_path: impl Into<String>) -> Self {
        self.package_doi = package_doi;
        self.script_path = script_path.into();
        self
    }

    /// The analysed source text (notebook cells already concatenated).
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn statements(&self) -> &[ast::Stmt] {
        &self.body
    }

    pub fn locate(&self, offset: u32) -> Location {
        self.lines.locate(offset)
    }

    pub(crate) fn span_of<T: Ranged>(node: &T) -> Span {
        let r = node.range();
        Span {
            start: r.start().to_u32(),
            end: r.end().to_u32(),
        }
    }

    /// Cell and 1-based line within the cell for a line of the concatenated
    /// notebook source.
    pub fn cell_of_line(&self, line: u32) -> Option<(usize, u32)> {
        let idx = self.cells.partition_point(|c| c.first_line <= line);
        let cell = self.cells.get(idx.checked_sub(1)?)?;
        Some((cell.cell_index, line - cell.first_line + 1))
    }

    fn failed(kind: ScriptKind, source: String, reason: String, cells: Vec<CellStart>) -> Self {
        let lines = LineIndex::new(&source);
        ParsedScript {
            package_doi: None,
            script_path: String::new(),
            kind,
            line_count: count_lines(&source),
            parse_ok: false,
            parse_error: Some(reason),
            cells,
            source,
            body: Vec::new(),
            lines,
        }
    }
}

fn count_lines(source: &str) -> u32 {
    source.lines().count() as u32
}

/// Parse file bytes. Never fails: syntax errors and malformed notebooks yield
/// `parse_ok = false` with a reason.
pub fn parse_script(bytes: &[u8], kind: ScriptKind) -> ParsedScript {
    let text = String::from_utf8_lossy(bytes);
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let (source, cells) = match kind {
        ScriptKind::Script => (text.replace("\r\n", "\n"), Vec::new()),
        ScriptKind::Notebook => match notebook_source(text) {
            Ok(pair) => pair,
            Err(reason) => return ParsedScript::failed(kind, String::new(), reason, Vec::new()),
        },
    };
    match parse(&source, Mode::Module, "<script>") {
        Ok(ast::Mod::Module(module)) => {
            let lines = LineIndex::new(&source);
            ParsedScript {
                package_doi: None,
                script_path: String::new(),
                kind,
                line_count: count_lines(&source),
                parse_ok: true,
                parse_error: None,
                cells,
                source,
                body: module.body,
                lines,
            }
        }
        Ok(_) => ParsedScript::failed(kind, source, "not a module".into(), cells),
        Err(e) => {
            let at = LineIndex::new(&source).locate(e.offset.to_u32());
            let reason = format!("line {}: {}", at.line, e.error);
            ParsedScript::failed(kind, source, reason, cells)
        }
    }
}

/// Concatenate code cells in document order. IPython magics and shell
/// escapes (lines starting with `%` or `!`) become comments.
fn notebook_source(text: &str) -> Result<(String, Vec<CellStart>), String> {
    let doc: Value = serde_json::from_str(text).map_err(|e| format!("notebook JSON: {e}"))?;
    let major = doc.get("nbformat").and_then(Value::as_u64).unwrap_or(4);
    if major < 4 {
        return Err(format!("nbformat {major} is not supported (need >= 4)"));
    }
    let cells = doc
        .get("cells")
        .and_then(Value::as_array)
        .ok_or_else(|| "notebook has no `cells` array".to_string())?;
    let mut source = String::new();
    let mut starts = Vec::new();
    let mut line = 1u32;
    for (index, cell) in cells.iter().enumerate() {
        if cell.get("cell_type").and_then(Value::as_str) != Some("code") {
            continue;
        }
        let text = match cell.get("source") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Array(parts)) => parts.iter().filter_map(Value::as_str).collect(),
            None | Some(Value::Null) => String::new(),
            Some(_) => return Err(format!("cell {index}: `source` is neither string nor list")),
        };
        starts.push(CellStart {
            cell_index: index,
            first_line: line,
        });
        for l in text.replace("\r\n", "\n").lines() {
            let trimmed = l.trim_start();
            if trimmed.starts_with('%') || trimmed.starts_with('!') {
                let indent = &l[..l.len() - trimmed.len()];
                source.push_str(indent);
                source.push('#');
                source.push_str(trimmed);
            } else {
                source.push_str(l);
            }
            source.push('\n');
            line += 1;
        }
    }
    Ok((source, starts))
}
