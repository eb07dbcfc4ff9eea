//! Writing contribution graphs to the fixture knowledge-graph service.

use provex_core::doi::Doi;
use provex_core::fixtures::FixtureServer;
use provex_core::ingest::{HttpClient, HttpOptions};
use provex_core::kg::{assemble, ingest, ContributionGraph, Fragment, IngestOptions, Node, TemplateRegistry};
use provex_core::Error;

fn graph(output: &str) -> ContributionGraph {
    let registry = TemplateRegistry::bundled();
    let t = registry.get("student-t-test").unwrap();
    assemble(
        &Doi::parse("10.1101/2021.10.21.465270").unwrap(),
        &Doi::parse("10.5281/zenodo.6997897").unwrap(),
        vec![Fragment {
            template_id: Some(t.id.clone()),
            label: t.label.clone(),
            chain_ref: "fig2.py:5:8".into(),
            properties: vec![
                ("has_specified_input".into(), Node::Text("fmri_behavioural_new.csv".into())),
                ("has_specified_output".into(), Node::Number(output.into())),
            ],
            unfilled: vec!["has_dependent_variable".into()],
        }],
    )
}

fn client() -> HttpClient {
    HttpClient::new(HttpOptions { requests_per_second: 0.0, ..Default::default() })
}

fn options(srv: &FixtureServer, token: Option<&str>, dry_run: bool) -> IngestOptions {
    IngestOptions { endpoint: srv.base_url().into(), token: token.map(String::from), dry_run }
}

#[test]
fn statements_reference_remote_ids() {
    let srv = FixtureServer::start();
    srv.with_graph_store();
    let receipt = ingest(&graph("0.00088388"), &TemplateRegistry::bundled(), &options(&srv, None, false), &client())
        .unwrap();
    let store = srv.graph_store();
    let statements: Vec<_> = store.resources.values().filter(|(c, _, _)| c == "/statements").collect();
    assert_eq!(statements.len(), 4);
    for (_, _, body) in statements {
        let subject = body["subject"].as_str().unwrap();
        assert!(receipt.remote_ids.values().any(|id| id == subject), "{body}");
    }
    assert_eq!(receipt.created, store.created);
}

#[test]
fn changed_output_creates_only_new_resources() {
    let srv = FixtureServer::start();
    srv.with_graph_store();
    let reg = TemplateRegistry::bundled();
    let opts = options(&srv, None, false);
    let first = ingest(&graph("0.00088388"), &reg, &opts, &client()).unwrap();
    let second = ingest(&graph("0.0009"), &reg, &opts, &client()).unwrap();
    // Paper and software are shared; the contribution and its statements are new.
    assert!(second.created > 0 && second.created < first.created);
}

#[test]
fn dry_run_sends_nothing() {
    let srv = FixtureServer::start();
    srv.with_graph_store();
    let receipt =
        ingest(&graph("0.00088388"), &TemplateRegistry::bundled(), &options(&srv, None, true), &client()).unwrap();
    assert!(receipt.dry_run);
    assert_eq!(receipt.payloads.len(), 7); // paper, software, contribution, 4 statements
    assert_eq!(srv.total_hits(), 0);
}

#[test]
fn rejected_token_is_reported_with_payload() {
    let srv = FixtureServer::start();
    srv.with_graph_store().require_token("s3cret");
    let reg = TemplateRegistry::bundled();
    let err = ingest(&graph("0.00088388"), &reg, &options(&srv, Some("wrong"), false), &client()).unwrap_err();
    match err {
        Error::HttpStatus { status, body, .. } => {
            assert_eq!(status, 401);
            assert!(body.contains("payload"), "{body}");
        }
        other => panic!("{other:?}"),
    }
    ingest(&graph("0.00088388"), &reg, &options(&srv, Some("s3cret"), false), &client()).unwrap();
}
