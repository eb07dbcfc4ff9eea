//! Property tests over the public API.

use proptest::prelude::*;
use provex_core::dataflow::{analyze, parse_script, AnalysisConfig, ScriptKind};
use provex_core::doi::Doi;
use provex_core::fixtures::synth::synth_script;
use provex_core::kg::{self, assemble, canonicalize, validate_graph, Fragment, GraphFormat, Node, TemplateRegistry};
use provex_core::recompute::{check_claim, confirm_value};

fn fragment() -> impl Strategy<Value = Fragment> {
    (
        prop::sample::select(vec!["student-t-test", "pearson-correlation"]),
        "[a-z_]{1,12}\\.csv",
        prop::collection::vec("0\\.[0-9]{1,8}", 0..3),
        "[a-z]{1,6}\\.py:[1-9]:[0-9]",
    )
        .prop_map(|(template, input, outputs, chain_ref)| {
            let registry = TemplateRegistry::bundled();
            let t = registry.get(template).unwrap().clone();
            let mut properties = vec![("has_specified_input".to_string(), Node::Text(input))];
            properties.extend(outputs.into_iter().map(|o| ("has_specified_output".to_string(), Node::Number(o))));
            properties.retain(|(p, _)| t.declares(p));
            Fragment { template_id: Some(t.id.clone()), label: t.label.clone(), chain_ref, properties, unfilled: vec![] }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graphs_round_trip_and_are_order_independent(mut frags in prop::collection::vec(fragment(), 1..4), seed in any::<u64>()) {
        let paper = Doi::parse("10.1234/paper.1").unwrap();
        let sw = Doi::parse("10.5281/zenodo.1").unwrap();
        let g = assemble(&paper, &sw, frags.clone());
        prop_assert!(validate_graph(&g, &TemplateRegistry::bundled()).is_empty());
        for fmt in [GraphFormat::CanonicalJson, GraphFormat::NtriplesLike] {
            let bytes = kg::serialize(&g, fmt);
            let back = kg::parse(&bytes, fmt).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(kg::serialize(&back, fmt), bytes);
        }
        // Fragment order does not change the canonical form.
        let n = frags.len();
        frags.rotate_left((seed as usize) % n);
        let h = assemble(&paper, &sw, frags);
        prop_assert_eq!(kg::serialize(&h, GraphFormat::CanonicalJson), kg::serialize(&g, GraphFormat::CanonicalJson));
        prop_assert_eq!(canonicalize(g.clone()), g);
    }

    #[test]
    fn parsing_arbitrary_text_never_panics(src in "\\PC{0,200}") {
        let p = parse_script(src.as_bytes(), ScriptKind::Script);
        let chains = analyze(&p, &AnalysisConfig::default());
        prop_assert!(p.parse_ok || chains.is_empty());
    }

    #[test]
    fn chains_are_ordered_and_never_report_loaders(seed in 0u64..10_000) {
        let s = synth_script(seed, 15, seed % 3 == 0);
        let p = parse_script(s.source.as_bytes(), ScriptKind::Script);
        let config = AnalysisConfig::default();
        for c in analyze(&p, &config) {
            prop_assert!(c.operations.windows(2).all(|w| (w[0].end, w[0].location) <= (w[1].end, w[1].location)));
            prop_assert!(c.operations.iter().all(|o| !config.loaders.contains(&o.name)));
            prop_assert!(c.operations.iter().all(|o| !config.sinks.contains(&o.name) || o.qualified_name.contains('.')));
        }
    }

    #[test]
    fn confirmation_agrees_with_the_claim_predicate(int in 0u32..100, frac in "[0-9]{1,6}", claim in "[0-9]\\.[0-9]{1,4}") {
        let value = format!("{int}.{frac}");
        for text in [format!("we obtained {claim} overall"), format!("significant (p < {claim})")] {
            let c = confirm_value(&value, &text);
            if c.confirmed {
                let kind = c.claim_kind.unwrap();
                prop_assert!(check_claim(&value, c.claim_text.as_deref().unwrap(), kind));
            }
        }
    }
}
