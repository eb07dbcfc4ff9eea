//! Idempotent ingestion over an ORKG-style REST contract.
//!
//! `POST /papers`, `POST /resources` and `POST /statements` each carry a
//! `natural_key`; the service answers `{"id": ..., "created": bool}` and
//! returns the existing id when it has seen the key before. Keys are derived
//! from graph content only, so re-ingesting a graph creates nothing new.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ingest::HttpClient;

use super::graph::{ContributionGraph, Node, HAS_INPUT_DATASET};
use super::template::{PropertyRole, TemplateRegistry};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    /// Natural key -> remote id. Empty for dry runs.
    pub remote_ids: BTreeMap<String, String>,
    /// Resources the service reported as newly created.
    pub created: usize,
    pub dry_run: bool,
    /// Every request body, in send order.
    pub payloads: Vec<Value>,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub endpoint: String,
    pub token: Option<String>,
    pub dry_run: bool,
}

struct Request {
    path: &'static str,
    key: String,
    body: Value,
}

/// Natural key of a contribution: paper, software, template, input, outputs.
fn contribution_key(g: &ContributionGraph, node: &str, registry: &TemplateRegistry) -> String {
    let c = g.contributions.iter().find(|c| c.node == node);
    let template = c.and_then(|c| c.template_id.clone()).unwrap_or_else(|| "generic".into());
    let props = registry.get(&template);
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for t in g.triples.iter().filter(|t| t.subject == Node::Blank(node.to_string())) {
        let v = literal(&t.object);
        let is_input = t.predicate == HAS_INPUT_DATASET
            || props.and_then(|p| p.property(PropertyRole::Input)).is_some_and(|p| p.property_id == t.predicate);
        if is_input {
            inputs.push(v);
        } else if matches!(t.object, Node::Number(_)) {
            outputs.push(v);
        }
    }
    format!(
        "contribution:{}|{}|{}|{}|{}",
        g.paper_doi.key(),
        g.software_doi.key(),
        template,
        inputs.join(","),
        outputs.join(",")
    )
}

fn literal(n: &Node) -> String {
    match n {
        Node::Iri(s) | Node::Text(s) | Node::Number(s) => s.clone(),
        Node::Blank(b) => format!("_:{b}"),
    }
}

fn plan(g: &ContributionGraph, registry: &TemplateRegistry) -> Vec<Request> {
    let paper_key = format!("paper:{}", g.paper_doi.key());
    let software_key = format!("software:{}", g.software_doi.key());
    let mut reqs = vec![
        Request {
            path: "/papers",
            key: paper_key.clone(),
            body: json!({ "doi": g.paper_doi.as_str(), "natural_key": paper_key }),
        },
        Request {
            path: "/resources",
            key: software_key.clone(),
            body: json!({ "label": g.software_doi.as_str(), "classes": ["Software"], "natural_key": software_key }),
        },
    ];
    let mut node_keys: BTreeMap<String, String> = BTreeMap::new();
    node_keys.insert(literal(&Node::doi(&g.paper_doi)), paper_key);
    node_keys.insert(literal(&Node::doi(&g.software_doi)), software_key);
    for c in &g.contributions {
        let key = contribution_key(g, &c.node, registry);
        node_keys.insert(format!("_:{}", c.node), key.clone());
        reqs.push(Request {
            path: "/resources",
            key: key.clone(),
            body: json!({
                "label": c.label,
                "classes": ["Contribution"],
                "template_id": c.template_id,
                "natural_key": key,
            }),
        });
    }
    for t in &g.triples {
        let subject = node_keys.get(&literal(&t.subject)).cloned().unwrap_or_else(|| literal(&t.subject));
        let (object, object_key) = match &t.object {
            Node::Iri(_) | Node::Blank(_) => {
                let k = node_keys.get(&literal(&t.object)).cloned().unwrap_or_else(|| literal(&t.object));
                (json!({ "resource_key": k }), k)
            }
            Node::Text(s) => (json!({ "literal": s, "datatype": "text" }), format!("\"{s}\"")),
            Node::Number(s) => (json!({ "literal": s, "datatype": "decimal" }), format!("{s}^^decimal")),
        };
        let key = format!("statement:{subject}|{}|{object_key}", t.predicate);
        reqs.push(Request {
            path: "/statements",
            key: key.clone(),
            body: json!({
                "subject_key": subject,
                "predicate": t.predicate,
                "object": object,
                "natural_key": key,
            }),
        });
    }
    reqs
}

/// Send the graph. Resource references in statement bodies are resolved to
/// the remote ids returned earlier in the same ingest.
pub fn ingest(
    graph: &ContributionGraph,
    registry: &TemplateRegistry,
    options: &IngestOptions,
    client: &HttpClient,
) -> Result<Receipt> {
    let mut receipt = Receipt { dry_run: options.dry_run, ..Receipt::default() };
    let base = options.endpoint.trim_end_matches('/');
    for mut req in plan(graph, registry) {
        if req.path == "/statements" {
            resolve_ids(&mut req.body, &receipt.remote_ids);
        }
        receipt.payloads.push(req.body.clone());
        if options.dry_run {
            log::info!("dry run: POST {}{} {}", base, req.path, req.body);
            continue;
        }
        let url = format!("{base}{}", req.path);
        let resp = client.post_json(&url, &req.body, options.token.as_deref())?;
        if !resp.is_success() {
            return Err(Error::HttpStatus {
                url,
                status: resp.status,
                body: format!("{}; payload: {}", resp.text(), req.body),
            });
        }
        let v = resp.json()?;
        let id = v
            .get("id")
            .and_then(|i| i.as_str().map(String::from).or_else(|| i.as_u64().map(|n| n.to_string())))
            .ok_or_else(|| Error::Malformed(format!("{url}: response lacks `id`")))?;
        if v.get("created").and_then(Value::as_bool).unwrap_or(false) {
            receipt.created += 1;
        }
        receipt.remote_ids.insert(req.key, id);
    }
    Ok(receipt)
}

fn resolve_ids(body: &mut Value, ids: &BTreeMap<String, String>) {
    if let Some(k) = body.get("subject_key").and_then(Value::as_str).map(String::from) {
        if let Some(id) = ids.get(&k) {
            body["subject"] = json!(id);
        }
    }
    if let Some(k) = body["object"].get("resource_key").and_then(Value::as_str).map(String::from) {
        if let Some(id) = ids.get(&k) {
            body["object"]["resource"] = json!(id);
        }
    }
}
