//! Canonical byte forms of a contribution graph, and their parsers.

use serde::{Deserialize, Serialize};

use crate::doi::Doi;
use crate::error::{Error, Result};

use super::graph::{canonicalize, Contribution, ContributionGraph, Node, Triple};

pub const GRAPH_SCHEMA: &str = "provex.graph/1";

const NUMBER_TYPE: &str = "^^<number>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFormat {
    CanonicalJson,
    NtriplesLike,
}

impl std::str::FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical-json" => Ok(Self::CanonicalJson),
            "ntriples-like" => Ok(Self::NtriplesLike),
            other => Err(Error::Config(format!("unknown graph format `{other}`"))),
        }
    }
}

impl GraphFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::CanonicalJson => "json",
            Self::NtriplesLike => "nt",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    schema: String,
    #[serde(flatten)]
    graph: ContributionGraph,
}

/// Serialize after canonicalization; equal graphs give equal bytes.
pub fn serialize(graph: &ContributionGraph, format: GraphFormat) -> Vec<u8> {
    let g = canonicalize(graph.clone());
    match format {
        GraphFormat::CanonicalJson => {
            let env = Envelope { schema: GRAPH_SCHEMA.into(), graph: g };
            let mut out = serde_json::to_vec_pretty(&env).expect("graph serializes");
            out.push(b'\n');
            out
        }
        GraphFormat::NtriplesLike => ntriples(&g).into_bytes(),
    }
}

pub fn parse(bytes: &[u8], format: GraphFormat) -> Result<ContributionGraph> {
    let g = match format {
        GraphFormat::CanonicalJson => {
            let env: Envelope = serde_json::from_slice(bytes)?;
            if env.schema != GRAPH_SCHEMA {
                return Err(Error::Malformed(format!("graph schema `{}`, expected {GRAPH_SCHEMA}", env.schema)));
            }
            env.graph
        }
        GraphFormat::NtriplesLike => parse_ntriples(std::str::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))?)?,
    };
    Ok(canonicalize(g))
}

pub(crate) fn node_text(n: &Node) -> String {
    match n {
        Node::Iri(s) => format!("<{s}>"),
        Node::Blank(b) => format!("_:{b}"),
        Node::Text(s) => serde_json::to_string(s).expect("string"),
        Node::Number(s) => format!("{}{NUMBER_TYPE}", serde_json::to_string(s).expect("string")),
    }
}

#[derive(Serialize, Deserialize)]
struct ContributionHeader {
    template_id: Option<String>,
    label: String,
    chain_ref: String,
    unfilled: Vec<String>,
}

fn ntriples(g: &ContributionGraph) -> String {
    let mut out = format!("# {GRAPH_SCHEMA}\n# paper_doi {}\n# software_doi {}\n", g.paper_doi, g.software_doi);
    for t in &g.template_ids_used {
        out.push_str(&format!("# template {t}\n"));
    }
    for c in &g.contributions {
        let h = ContributionHeader {
            template_id: c.template_id.clone(),
            label: c.label.clone(),
            chain_ref: c.chain_ref.clone(),
            unfilled: c.unfilled.clone(),
        };
        out.push_str(&format!("# contribution _:{} {}\n", c.node, serde_json::to_string(&h).expect("header")));
    }
    for t in &g.triples {
        out.push_str(&format!("{} <{}> {} .\n", node_text(&t.subject), t.predicate, node_text(&t.object)));
    }
    out
}

fn parse_ntriples(text: &str) -> Result<ContributionGraph> {
    let bad = |line: usize, what: &str| Error::Malformed(format!("graph line {}: {what}", line + 1));
    let mut schema_seen = false;
    let (mut paper, mut software) = (None, None);
    let mut templates = Vec::new();
    let mut contributions = Vec::new();
    let mut triples = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix("# ") {
            let (key, rest) = comment.split_once(' ').unwrap_or((comment, ""));
            match key {
                GRAPH_SCHEMA => schema_seen = true,
                "paper_doi" => paper = Some(Doi::parse(rest)?),
                "software_doi" => software = Some(Doi::parse(rest)?),
                "template" => templates.push(rest.to_string()),
                "contribution" => {
                    let (node, json) = rest.split_once(' ').ok_or_else(|| bad(no, "contribution header"))?;
                    let node = node.strip_prefix("_:").ok_or_else(|| bad(no, "contribution node"))?;
                    let h: ContributionHeader = serde_json::from_str(json)?;
                    contributions.push(Contribution {
                        node: node.to_string(),
                        template_id: h.template_id,
                        label: h.label,
                        chain_ref: h.chain_ref,
                        unfilled: h.unfilled,
                    });
                }
                _ => return Err(bad(no, "unknown header")),
            }
            continue;
        }
        let (subject, rest) = read_node(line).ok_or_else(|| bad(no, "subject"))?;
        let rest = rest.trim_start();
        let rest = rest.strip_prefix('<').ok_or_else(|| bad(no, "predicate"))?;
        let (predicate, rest) = rest.split_once('>').ok_or_else(|| bad(no, "predicate"))?;
        let (object, rest) = read_node(rest.trim_start()).ok_or_else(|| bad(no, "object"))?;
        if rest.trim() != "." {
            return Err(bad(no, "missing terminating ` .`"));
        }
        triples.push(Triple { subject, predicate: predicate.to_string(), object });
    }
    if !schema_seen {
        return Err(Error::Malformed(format!("missing `# {GRAPH_SCHEMA}` header")));
    }
    Ok(ContributionGraph {
        paper_doi: paper.ok_or_else(|| Error::Malformed("missing paper_doi header".into()))?,
        software_doi: software.ok_or_else(|| Error::Malformed("missing software_doi header".into()))?,
        triples,
        template_ids_used: templates,
        contributions,
    })
}

fn read_node(s: &str) -> Option<(Node, &str)> {
    if let Some(rest) = s.strip_prefix('<') {
        let (iri, rest) = rest.split_once('>')?;
        return Some((Node::Iri(iri.to_string()), rest));
    }
    if let Some(rest) = s.strip_prefix("_:") {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        return Some((Node::Blank(rest[..end].to_string()), &rest[end..]));
    }
    if s.starts_with('"') {
        let mut it = serde_json::Deserializer::from_str(s).into_iter::<String>();
        let value = it.next()?.ok()?;
        let rest = &s[it.byte_offset()..];
        return Some(match rest.strip_prefix(NUMBER_TYPE) {
            Some(r) => (Node::Number(value), r),
            None => (Node::Text(value), rest),
        });
    }
    None
}
