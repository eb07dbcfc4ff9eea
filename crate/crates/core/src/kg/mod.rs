//! Template-conformant contribution graphs.
//!
//! Each scholarly chain becomes one contribution node under its paper. The
//! contribution instantiates the template found for the chain's final
//! accepted operation, or a generic stub when no template applies.

mod graph;
mod ingest;
mod serialize;
mod template;

pub use graph::{
    assemble, canonicalize, choose_template, instantiate, validate_graph, Contribution, ContributionGraph,
    Fragment, Node, Triple, GENERIC_ACTIVITY, HAS_CONTRIBUTION, HAS_INPUT_DATASET, HAS_SOFTWARE, PLUMBING,
};
pub use ingest::{ingest, IngestOptions, Receipt};
pub use serialize::{parse, serialize, GraphFormat, GRAPH_SCHEMA};
pub use template::{
    find_template, PropertyRange, PropertyRole, Template, TemplateProperty, TemplateRegistry, TEMPLATE_SCHEMA,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::{analyze, parse_script, AnalysisConfig, ProvenanceChain, ScriptKind};
    use crate::doi::Doi;
    use crate::matcher::{build_article_index, match_chain, Normalizer, StopwordList, TrigramCosine};
    use crate::recompute::{confirm_value, OutputConfirmation};

    const ARTICLE: &str = "We applied a t-test and a Pearson correlation to fMRI data (p < 0.001).";

    fn chain(src: &str) -> ProvenanceChain {
        let s = parse_script(src.as_bytes(), ScriptKind::Script).with_origin(None, "a.py");
        analyze(&s, &AnalysisConfig::default()).remove(0)
    }

    fn doi(s: &str) -> Doi {
        Doi::parse(s).unwrap()
    }

    fn fragment(src: &str, confirmations: &[OutputConfirmation]) -> Fragment {
        let c = chain(src);
        let idx = build_article_index(ARTICLE, &doi("10.1234/paper"), &StopwordList::default());
        let m = match_chain(&c, &idx, &Normalizer::default(), &TrigramCosine, 0.82).unwrap();
        let registry = TemplateRegistry::bundled();
        let t = choose_template(&m.results, &registry);
        instantiate(t, &c, &m.results, confirmations).unwrap()
    }

    const SCRIPT: &str = "d = read_csv('data.csv')\nr = pearsonr(d.a, d.b)\nt = ttest_ind(d.a, d.b)\n";

    #[test]
    fn t_test_instantiation() {
        let f = fragment(SCRIPT, &[confirm_value("0.00088388", ARTICLE), confirm_value("0.961", ARTICLE)]);
        assert_eq!(f.template_id.as_deref(), Some("student-t-test"));
        assert_eq!(
            f.properties,
            [
                ("has_specified_input".to_string(), Node::Text("data.csv".into())),
                ("has_specified_output".to_string(), Node::Number("0.00088388".into())),
            ]
        );
        assert_eq!(f.unfilled, ["has_dependent_variable"]);
    }

    #[test]
    fn no_confirmations_leaves_output_absent() {
        let f = fragment(SCRIPT, &[]);
        assert_eq!(f.properties.len(), 1);
        assert_eq!(f.unfilled, ["has_specified_output", "has_dependent_variable"]);
    }

    #[test]
    fn generic_stub_without_template() {
        let f = fragment("d = read_csv('fmri.csv')\nd.describe()\n", &[]);
        assert_eq!(f.template_id, None);
        assert_eq!(f.label, GENERIC_ACTIVITY);
        assert_eq!(f.properties, [(HAS_INPUT_DATASET.to_string(), Node::Text("fmri.csv".into()))]);
    }

    #[test]
    fn non_numeric_output_is_a_hard_error() {
        let c = chain(SCRIPT);
        let idx = build_article_index(ARTICLE, &doi("10.1234/paper"), &StopwordList::default());
        let m = match_chain(&c, &idx, &Normalizer::default(), &TrigramCosine, 0.82).unwrap();
        let registry = TemplateRegistry::bundled();
        let bogus = OutputConfirmation {
            value: "abc".into(),
            claim_span: None,
            claim_text: None,
            claim_kind: None,
            confirmed: true,
        };
        let err = instantiate(choose_template(&m.results, &registry), &c, &m.results, &[bogus]);
        assert!(matches!(err, Err(crate::Error::NonNumericLiteral { .. })));
    }

    #[test]
    fn two_chains_one_paper() {
        let a = fragment(SCRIPT, &[]);
        let mut b = fragment("d = read_csv('other.csv')\nttest_ind(d, d)\n", &[]);
        b.chain_ref = "b.py:1:4".into();
        let g = assemble(&doi("10.1234/paper"), &doi("10.5555/sw"), vec![a, b]);
        let paper = Node::doi(&doi("10.1234/paper"));
        let links: Vec<_> = g.triples.iter().filter(|t| t.predicate == HAS_CONTRIBUTION).collect();
        assert_eq!(links.len(), 2);
        assert!(links.iter().all(|t| t.subject == paper));
        let subjects: std::collections::BTreeSet<_> =
            g.triples.iter().filter(|t| matches!(t.subject, Node::Iri(_))).map(|t| &t.subject).collect();
        assert_eq!(subjects.len(), 1);
        assert!(validate_graph(&g, &TemplateRegistry::bundled()).is_empty());
    }

    #[test]
    fn serialization_round_trips_and_is_order_independent() {
        let a = fragment(SCRIPT, &[confirm_value("0.00088388", ARTICLE)]);
        let mut b = fragment("d = read_csv('other.csv')\nttest_ind(d, d)\n", &[]);
        b.chain_ref = "b.py:1:4".into();
        let g1 = assemble(&doi("10.1234/paper"), &doi("10.5555/sw"), vec![a.clone(), b.clone()]);
        let g2 = assemble(&doi("10.1234/paper"), &doi("10.5555/sw"), vec![b, a]);
        for f in [GraphFormat::CanonicalJson, GraphFormat::NtriplesLike] {
            let bytes = serialize(&g1, f);
            assert_eq!(bytes, serialize(&g2, f));
            assert_eq!(parse(&bytes, f).unwrap(), g1);
        }
    }

    #[test]
    fn empty_graph_serializes() {
        let g = ContributionGraph {
            paper_doi: doi("10.1234/p"),
            software_doi: doi("10.5555/s"),
            triples: vec![],
            template_ids_used: vec![],
            contributions: vec![],
        };
        let nt = serialize(&g, GraphFormat::NtriplesLike);
        assert_eq!(
            String::from_utf8(nt.clone()).unwrap(),
            "# provex.graph/1\n# paper_doi 10.1234/p\n# software_doi 10.5555/s\n"
        );
        assert_eq!(parse(&nt, GraphFormat::NtriplesLike).unwrap(), g);
    }

    #[test]
    fn dry_run_ingest() {
        let g = assemble(&doi("10.1234/paper"), &doi("10.5555/sw"), vec![fragment(SCRIPT, &[])]);
        let client = crate::ingest::HttpClient::new(crate::ingest::HttpOptions { offline: true, ..Default::default() });
        let opts = IngestOptions { endpoint: "http://127.0.0.1:9".into(), token: None, dry_run: true };
        let r = ingest(&g, &TemplateRegistry::bundled(), &opts, &client).unwrap();
        assert!(r.remote_ids.is_empty() && r.dry_run);
        assert_eq!(r.payloads.len(), 3 + g.triples.len());
    }
}
