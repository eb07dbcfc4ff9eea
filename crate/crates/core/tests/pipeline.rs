//! Stage orchestration over the bundled three-package corpus.

mod support;

use provex_core::config::{IngestConfig, ScorerChoice};
use provex_core::fixtures::FixtureServer;
use provex_core::pipeline::{Pipeline, Stage};
use provex_core::Error;
use support::*;

fn pipeline(work: &std::path::Path, edit: impl FnOnce(&mut provex_core::config::RunConfig)) -> Pipeline {
    let mut c = fixture_config(work);
    stub_recompute(&mut c);
    edit(&mut c);
    Pipeline::new(c).unwrap()
}

fn run_until(p: &Pipeline, last: Stage) {
    for s in Stage::ALL {
        p.run_stage(s).unwrap();
        if s == last {
            break;
        }
    }
}

#[test]
fn missing_prior_artifact_names_the_stage_to_run() {
    let work = tempfile::tempdir().unwrap();
    let p = pipeline(work.path(), |_| {});
    let err = p.run_stage(Stage::Analyze).unwrap_err();
    match &err {
        Error::MissingArtifact { stage, .. } => assert_eq!(stage, "fetch"),
        other => panic!("{other:?}"),
    }
    assert!(err.to_string().contains("run `provex fetch` first"));
}

#[test]
fn mismatched_schema_is_rejected() {
    let work = tempfile::tempdir().unwrap();
    let p = pipeline(work.path(), |_| {});
    run_until(&p, Stage::Analyze);
    let chains = p.run_dir().join("chains.jsonl");
    let text = std::fs::read_to_string(&chains).unwrap().replace("provex.chain/1", "provex.chain/0");
    std::fs::write(&chains, text).unwrap();
    let err = p.run_stage(Stage::Match).unwrap_err();
    assert!(matches!(err, Error::SchemaMismatch { ref found, .. } if found == "provex.chain/0"), "{err:?}");
}

#[test]
fn rerunning_a_stage_reproduces_its_artifacts() {
    let work = tempfile::tempdir().unwrap();
    let p = pipeline(work.path(), |_| {});
    run_until(&p, Stage::Match);
    let before = snapshot(p.run_dir());
    p.run_stage(Stage::Analyze).unwrap();
    p.run_stage(Stage::Match).unwrap();
    assert_eq!(snapshot(p.run_dir()), before);
}

#[test]
fn summary_counts_follow_the_corpus() {
    let work = tempfile::tempdir().unwrap();
    let p = pipeline(work.path(), |c| c.recompute.enabled = false);
    let reports = p.run_all().unwrap();
    let get = |stage: &str, row: &str| {
        reports.iter().find(|r| r.stage == stage).and_then(|r| r.get(row)).map(str::to_string)
    };
    assert_eq!(get("harvest", "software packages").as_deref(), Some("3"));
    assert_eq!(get("fetch", "linked articles").as_deref(), Some("3"));
    assert_eq!(get("fetch", "articles with text").as_deref(), Some("2"));
    assert_eq!(get("analyze", "data sources").as_deref(), Some("3"));
    assert_eq!(get("match", "scholarly packages").as_deref(), Some("1"));
    assert_eq!(get("build-kg", "graphs").as_deref(), Some("1"));
    assert!(reports.iter().any(|r| r.to_string().contains("pooled IA")));
}

#[test]
fn graph_without_recompute_leaves_output_unfilled() {
    let work = tempfile::tempdir().unwrap();
    let p = pipeline(work.path(), |c| c.recompute.enabled = false);
    run_until(&p, Stage::BuildKg);
    let nt = std::fs::read_to_string(
        p.run_dir().join("graphs/10.1101%2F2021.10.21.465270__10.5281%2Fzenodo.6997897.nt"),
    )
    .unwrap();
    assert!(nt.contains("<has_specified_input> \"fmri_behavioural_new.csv\""));
    assert!(!nt.contains("has_specified_output>"));
    assert!(nt.contains("\"unfilled\":[\"has_specified_output\",\"has_dependent_variable\"]"), "{nt}");
}

#[test]
fn recompute_confirms_the_running_example() {
    if !python_available() {
        return;
    }
    let work = tempfile::tempdir().unwrap();
    let p = pipeline(work.path(), |_| {});
    run_until(&p, Stage::Recompute);
    let executions = std::fs::read_to_string(p.run_dir().join("executions.jsonl")).unwrap();
    assert_eq!(executions.lines().count(), 1, "only the scholarly script runs");
    assert!(executions.contains("\"claim_kind\":\"inequality\",\"confirmed\":true"));
    assert_eq!(std::fs::read_to_string(p.run_dir().join("needs_human.jsonl")).unwrap(), "");
}

#[test]
fn embedding_scorer_is_recorded_in_match_artifacts() {
    let srv = FixtureServer::start();
    srv.with_embeddings();
    let work = tempfile::tempdir().unwrap();
    let p = pipeline(work.path(), |c| {
        c.offline = false;
        c.matcher.scorer = ScorerChoice::Embedding { endpoint: srv.base_url().into() };
    });
    run_until(&p, Stage::Match);
    let matches = std::fs::read_to_string(p.run_dir().join("matches.jsonl")).unwrap();
    assert!(matches.contains(&format!("\"scorer\":\"embedding:{}\"", srv.base_url())));
    assert!(srv.hits("/embed") > 0);
}

#[test]
fn ingest_through_pipeline_is_idempotent() {
    let srv = FixtureServer::start();
    srv.with_graph_store();
    let work = tempfile::tempdir().unwrap();
    let p = pipeline(work.path(), |c| {
        c.offline = false;
        c.recompute.enabled = false;
        c.kg.ingest = Some(IngestConfig { endpoint: srv.base_url().into(), token_env: None, dry_run: false });
    });
    run_until(&p, Stage::BuildKg);
    let first = p.run_stage(Stage::BuildKg).unwrap();
    assert_eq!(first.get("resources created"), Some("0"));
    assert!(srv.graph_store().created > 0);
}

#[test]
fn offline_run_with_remote_source_fails_hard() {
    let work = tempfile::tempdir().unwrap();
    let p = pipeline(work.path(), |c| {
        c.sources = vec![provex_core::ingest::Source::Zenodo { base_url: "http://127.0.0.1:9".into() }];
    });
    assert!(matches!(p.run_stage(Stage::Harvest), Err(Error::Offline(_))));
}
