//! Template registry: one JSON file per template.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TEMPLATE_SCHEMA: &str = "provex.template/1";

const BUNDLED: &[(&str, &str)] = &[
    ("student-t-test.json", include_str!("../../data/templates/student-t-test.json")),
    ("pearson-correlation.json", include_str!("../../data/templates/pearson-correlation.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyRange {
    Resource,
    LiteralText,
    LiteralNumber,
}

/// What a property is filled from during instantiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyRole {
    Input,
    Output,
    DependentVariable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateProperty {
    pub property_id: String,
    pub label: String,
    pub range: PropertyRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<PropertyRole>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub label: String,
    pub properties: Vec<TemplateProperty>,
    /// Normalized operation names this template describes.
    pub match_keys: Vec<String>,
}

impl Template {
    pub fn property(&self, role: PropertyRole) -> Option<&TemplateProperty> {
        self.properties.iter().find(|p| p.role == Some(role))
    }

    pub fn declares(&self, property_id: &str) -> bool {
        self.properties.iter().any(|p| p.property_id == property_id)
    }
}

#[derive(Deserialize)]
struct TemplateFile {
    schema: String,
    #[serde(flatten)]
    template: Template,
}

fn parse_template(path: &Path, text: &str) -> Result<Template> {
    let file: TemplateFile = serde_json::from_str(text)
        .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
    if file.schema != TEMPLATE_SCHEMA {
        return Err(Error::SchemaMismatch {
            path: path.to_path_buf(),
            expected: TEMPLATE_SCHEMA.into(),
            found: file.schema,
        });
    }
    let t = file.template;
    let mut labels = HashSet::new();
    let mut ids = HashSet::new();
    for p in &t.properties {
        if !labels.insert(p.label.as_str()) || !ids.insert(p.property_id.as_str()) {
            return Err(Error::Malformed(format!(
                "{}: duplicate property `{}` in template {}",
                path.display(),
                p.label,
                t.id
            )));
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplateRegistry {
    templates: Vec<Template>,
}

impl TemplateRegistry {
    /// The templates shipped with the crate.
    pub fn bundled() -> Self {
        let templates = BUNDLED
            .iter()
            .map(|(name, text)| parse_template(Path::new(name), text).expect("bundled template is valid"))
            .collect();
        Self::from_templates(templates)
    }

    /// Every `*.json` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let templates = paths
            .iter()
            .map(|p| parse_template(p, &std::fs::read_to_string(p)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_templates(templates))
    }

    pub fn from_templates(mut templates: Vec<Template>) -> Self {
        templates.sort_by(|a, b| a.id.cmp(&b.id));
        Self { templates }
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn get(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.id == id)
    }
}

/// The template whose match keys contain `operation_name`. Several
/// candidates resolve to the smallest id, with a warning.
pub fn find_template<'a>(operation_name: &str, registry: &'a TemplateRegistry) -> Option<&'a Template> {
    if operation_name.is_empty() {
        return None;
    }
    let mut hits = registry
        .templates
        .iter()
        .filter(|t| t.match_keys.iter().any(|k| k == operation_name));
    let first = hits.next()?;
    let others: Vec<&str> = hits.map(|t| t.id.as_str()).collect();
    if !others.is_empty() {
        log::warn!("`{operation_name}` matches templates {} and {:?}; using {}", first.id, others, first.id);
    }
    Some(first)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        let r = TemplateRegistry::bundled();
        let t = find_template("t test", &r).unwrap();
        assert_eq!(t.label, "Student t-test");
        let labels: Vec<_> = t.properties.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(labels, ["has specified input", "has specified output", "has dependent variable"]);
        assert!(find_template("", &r).is_none());
        assert_eq!(find_template("pearsonr", &r).unwrap().id, "pearson-correlation");
        assert!(find_template("groupby", &r).is_none());
    }

    #[test]
    fn ties_resolve_to_smallest_id() {
        let mk = |id: &str| Template {
            id: id.into(),
            label: id.into(),
            properties: vec![],
            match_keys: vec!["x".into()],
        };
        let r = TemplateRegistry::from_templates(vec![mk("b"), mk("a")]);
        assert_eq!(find_template("x", &r).unwrap().id, "a");
    }

    #[test]
    fn rejects_bad_files() {
        let wrong = r#"{"schema":"other/1","id":"a","label":"a","properties":[],"match_keys":[]}"#;
        assert!(matches!(parse_template(Path::new("a.json"), wrong), Err(Error::SchemaMismatch { .. })));
        let dup = r#"{"schema":"provex.template/1","id":"a","label":"a","match_keys":[],"properties":[
            {"property_id":"p","label":"l","range":"resource"},{"property_id":"q","label":"l","range":"resource"}]}"#;
        assert!(parse_template(Path::new("a.json"), dup).is_err());
    }

    #[test]
    fn load_dir_reads_json_files() {
        let dir = tempfile::tempdir().unwrap();
        for (name, text) in BUNDLED {
            std::fs::write(dir.path().join(name), text).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        assert_eq!(TemplateRegistry::load_dir(dir.path()).unwrap(), TemplateRegistry::bundled());
    }
}
