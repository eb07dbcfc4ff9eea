//! Contribution graphs and their construction from scholarly chains.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataflow::ProvenanceChain;
use crate::doi::Doi;
use crate::error::{Error, Result};
use crate::matcher::{is_scholarly, MatchResult, TermOrigin};
use crate::recompute::{parse_decimal, OutputConfirmation};

use super::template::{find_template, PropertyRange, PropertyRole, Template, TemplateRegistry};

pub const HAS_CONTRIBUTION: &str = "has_contribution";
pub const HAS_SOFTWARE: &str = "has_software";
pub const HAS_INPUT_DATASET: &str = "has_input_dataset";
pub const PLUMBING: &[&str] = &[HAS_CONTRIBUTION, HAS_SOFTWARE, HAS_INPUT_DATASET];

/// Label of contributions no template describes.
pub const GENERIC_ACTIVITY: &str = "computational activity";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Iri(String),
    Blank(String),
    Text(String),
    /// Decimal literal, kept as printed.
    Number(String),
}

impl Node {
    pub fn doi(doi: &Doi) -> Self {
        Node::Iri(format!("https://doi.org/{}", doi.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Node,
    pub predicate: String,
    pub object: Node,
}

/// Bookkeeping for one contribution node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Contribution {
    /// Blank-node label of the contribution.
    pub node: String,
    pub template_id: Option<String>,
    pub label: String,
    pub chain_ref: String,
    /// Template properties left empty because nothing supplied a value.
    pub unfilled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContributionGraph {
    pub paper_doi: Doi,
    pub software_doi: Doi,
    pub triples: Vec<Triple>,
    pub template_ids_used: Vec<String>,
    pub contributions: Vec<Contribution>,
}

/// A contribution before it is attached to a paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub template_id: Option<String>,
    pub label: String,
    pub chain_ref: String,
    /// `(predicate, object)` pairs on the contribution node.
    pub properties: Vec<(String, Node)>,
    pub unfilled: Vec<String>,
}

/// The template for a chain: that of the last accepted operation term that
/// has one (the final statistical step is the one a result describes).
pub fn choose_template<'a>(matches: &[MatchResult], registry: &'a TemplateRegistry) -> Option<&'a Template> {
    matches
        .iter()
        .filter(|m| m.accepted && m.term.origin == TermOrigin::OperationName)
        .filter_map(|m| find_template(&m.term.normalized, registry))
        .last()
}

/// Fill a template from a scholarly chain. Input comes from the literal
/// source argument, output from confirmed printed values; nothing else is
/// invented. Without a template the chain gets a generic stub that only
/// names its input dataset.
pub fn instantiate(
    template: Option<&Template>,
    chain: &ProvenanceChain,
    matches: &[MatchResult],
    confirmations: &[OutputConfirmation],
) -> Result<Fragment> {
    if !is_scholarly(matches) {
        return Err(Error::Malformed(format!("chain {} is not scholarly", chain.id)));
    }
    let input = chain.source.argument.literal().map(str::to_string);
    let mut outputs: Vec<String> = Vec::new();
    for c in confirmations.iter().filter(|c| c.confirmed) {
        if !outputs.contains(&c.value) {
            outputs.push(c.value.clone());
        }
    }
    let Some(t) = template else {
        return Ok(Fragment {
            template_id: None,
            label: GENERIC_ACTIVITY.into(),
            chain_ref: chain.id.clone(),
            properties: input.map(|i| (HAS_INPUT_DATASET.to_string(), Node::Text(i))).into_iter().collect(),
            unfilled: Vec::new(),
        });
    };
    let mut properties = Vec::new();
    let mut unfilled = Vec::new();
    for p in &t.properties {
        let values: Vec<String> = match p.role {
            Some(PropertyRole::Input) => input.iter().cloned().collect(),
            Some(PropertyRole::Output) => outputs.clone(),
            Some(PropertyRole::DependentVariable) | None => Vec::new(),
        };
        if values.is_empty() {
            unfilled.push(p.property_id.clone());
        }
        for v in values {
            let node = match p.range {
                PropertyRange::LiteralNumber => {
                    if parse_decimal(&v).is_none() {
                        return Err(Error::NonNumericLiteral {
                            template: t.id.clone(),
                            property: p.property_id.clone(),
                            value: v,
                        });
                    }
                    Node::Number(v)
                }
                PropertyRange::LiteralText => Node::Text(v),
                PropertyRange::Resource => Node::Text(v),
            };
            properties.push((p.property_id.clone(), node));
        }
    }
    Ok(Fragment {
        template_id: Some(t.id.clone()),
        label: t.label.clone(),
        chain_ref: chain.id.clone(),
        properties,
        unfilled,
    })
}

/// One paper node, linked to the software and to each contribution.
pub fn assemble(paper_doi: &Doi, software_doi: &Doi, fragments: Vec<Fragment>) -> ContributionGraph {
    let paper = Node::doi(paper_doi);
    let mut triples = vec![Triple {
        subject: paper.clone(),
        predicate: HAS_SOFTWARE.into(),
        object: Node::doi(software_doi),
    }];
    let mut contributions = Vec::new();
    let mut template_ids = BTreeSet::new();
    for (i, f) in fragments.into_iter().enumerate() {
        let node = format!("tmp{i}");
        triples.push(Triple {
            subject: paper.clone(),
            predicate: HAS_CONTRIBUTION.into(),
            object: Node::Blank(node.clone()),
        });
        for (p, o) in f.properties {
            triples.push(Triple { subject: Node::Blank(node.clone()), predicate: p, object: o });
        }
        template_ids.extend(f.template_id.clone());
        contributions.push(Contribution {
            node,
            template_id: f.template_id,
            label: f.label,
            chain_ref: f.chain_ref,
            unfilled: f.unfilled,
        });
    }
    canonicalize(ContributionGraph {
        paper_doi: paper_doi.clone(),
        software_doi: software_doi.clone(),
        triples,
        template_ids_used: template_ids.into_iter().collect(),
        contributions,
    })
}

/// Relabel blank nodes by content and sort everything, so equal graphs
/// have equal representations.
pub fn canonicalize(mut g: ContributionGraph) -> ContributionGraph {
    // Signature of a blank node: its outgoing edges to non-blank objects,
    // its template and its chain reference.
    let mut sig: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for t in &g.triples {
        if let (Node::Blank(b), o) = (&t.subject, &t.object) {
            if !matches!(o, Node::Blank(_)) {
                sig.entry(b.clone()).or_default().push(format!("{} {:?}", t.predicate, o));
            }
        }
        if let Node::Blank(b) = &t.object {
            sig.entry(b.clone()).or_default();
        }
    }
    for c in &g.contributions {
        sig.entry(c.node.clone()).or_default();
    }
    let meta: BTreeMap<&str, (&Option<String>, &str)> = g
        .contributions
        .iter()
        .map(|c| (c.node.as_str(), (&c.template_id, c.chain_ref.as_str())))
        .collect();
    let mut keyed: Vec<(Vec<String>, Option<String>, String, String)> = sig
        .into_iter()
        .map(|(b, mut s)| {
            s.sort();
            let (tid, chain) = meta.get(b.as_str()).map_or((None, ""), |(t, c)| ((*t).clone(), *c));
            (s, tid, chain.to_string(), b)
        })
        .collect();
    keyed.sort();
    let relabel: BTreeMap<String, String> = keyed
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, _, old))| (old, format!("b{i}")))
        .collect();
    let map = |n: &mut Node| {
        if let Node::Blank(b) = n {
            *b = relabel[b.as_str()].clone();
        }
    };
    for t in &mut g.triples {
        map(&mut t.subject);
        map(&mut t.object);
    }
    for c in &mut g.contributions {
        c.node = relabel[c.node.as_str()].clone();
    }
    g.triples.sort_by(|a, b| triple_key(a).cmp(&triple_key(b)));
    g.triples.dedup();
    g.contributions.sort_by(|a, b| blank_index(&a.node).cmp(&blank_index(&b.node)));
    g.template_ids_used.sort();
    g.template_ids_used.dedup();
    g
}

fn blank_index(label: &str) -> u64 {
    label.trim_start_matches('b').parse().unwrap_or(u64::MAX)
}

type NodeKey<'a> = (u8, u64, &'a str);

/// Nodes order by kind, then blank nodes by number, then text; so blank
/// labels follow their first appearance in the sorted triple list.
fn node_key(n: &Node) -> NodeKey<'_> {
    match n {
        Node::Iri(s) => (0, 0, s),
        Node::Blank(b) => (1, blank_index(b), ""),
        Node::Text(s) => (2, 0, s),
        Node::Number(s) => (3, 0, s),
    }
}

fn triple_key(t: &Triple) -> (NodeKey<'_>, &str, NodeKey<'_>) {
    (node_key(&t.subject), t.predicate.as_str(), node_key(&t.object))
}

/// Every predicate must be plumbing or declared by a template the graph
/// uses; returns the offending triples.
pub fn validate_graph(g: &ContributionGraph, registry: &TemplateRegistry) -> Vec<Triple> {
    let used: Vec<&Template> = g.template_ids_used.iter().filter_map(|id| registry.get(id)).collect();
    g.triples
        .iter()
        .filter(|t| !PLUMBING.contains(&t.predicate.as_str()) && !used.iter().any(|tpl| tpl.declares(&t.predicate)))
        .cloned()
        .collect()
}
