//! Resumable pipeline stages over versioned JSON Lines artifacts.
//!
//! Every stage reads the artifacts of earlier stages from the run directory
//! and writes its own. Each artifact line carries `schema` and
//! `config_hash`; records are sorted before writing so a replay over
//! unchanged inputs reproduces the files byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, ScorerChoice};
use crate::dataflow::{analyze, find_imports, parse_script, ProvenanceChain, ScriptKind};
use crate::doi::Doi;
use crate::error::{Error, Result};
use crate::ingest::{
    fetch_archive, harvest_records, Cache, FetchOptions, FileKind, HttpClient, LocalPackage, PackageRecord,
};
use crate::kg::{
    assemble, choose_template, ingest, instantiate, serialize, validate_graph, IngestOptions, Receipt,
    TemplateRegistry,
};
use crate::matcher::{
    build_article_index, match_chain, ChainMatch, EmbeddingScorer, Normalizer, SimilarityScorer, StopwordList,
    SynonymTable, TrigramCosine,
};
use crate::metadata::{extract_metadata, resolve_article, sidecar_path, ArticleRecord, PackageMetadata};
use crate::recompute::{
    confirm_outputs, execute_script, plan_environment, prepare_environment, write_needs_human, ExecutionStatus,
    ModuleDistributionTable, NeedsHuman, OutputConfirmation, StdlibAllowlist,
};
use crate::validation::{
    encode_vectors, load_truth, render_table, scan_candidates, AgreementReport, ExtractedItems, ScriptRef,
};

pub const RECORD_SCHEMA: &str = "provex.record/1";
pub const PACKAGE_SCHEMA: &str = "provex.package/1";
pub const SCRIPT_SCHEMA: &str = "provex.script/1";
pub const CHAIN_SCHEMA: &str = "provex.chain/1";
pub const MATCH_SCHEMA: &str = "provex.match/1";
pub const EXECUTION_SCHEMA: &str = "provex.execution/1";
pub const GRAPH_INDEX_SCHEMA: &str = "provex.graph-index/1";
pub const RECEIPT_SCHEMA: &str = "provex.receipt/1";
pub const AGREEMENT_SCHEMA: &str = "provex.agreement/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Harvest,
    Fetch,
    Analyze,
    Match,
    Recompute,
    BuildKg,
    Validate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Harvest,
        Stage::Fetch,
        Stage::Analyze,
        Stage::Match,
        Stage::Recompute,
        Stage::BuildKg,
        Stage::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Harvest => "harvest",
            Stage::Fetch => "fetch",
            Stage::Analyze => "analyze",
            Stage::Match => "match",
            Stage::Recompute => "recompute",
            Stage::BuildKg => "build-kg",
            Stage::Validate => "validate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Counts printed after a stage, in the shape of a corpus summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub rows: Vec<(String, String)>,
    /// Soft failures: logged and counted, never fatal.
    pub warnings: Vec<String>,
}

impl StageReport {
    fn new(stage: Stage) -> Self {
        Self { stage: stage.name().into(), rows: Vec::new(), warnings: Vec::new() }
    }

    fn row(&mut self, label: &str, value: impl fmt::Display) {
        self.rows.push((label.to_string(), value.to_string()));
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.rows.iter().find(|(l, _)| l == label).map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for StageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        writeln!(f, "[{}]", self.stage)?;
        for (l, v) in &self.rows {
            writeln!(f, "  {l:<width$}  {v:>8}")?;
        }
        for w in &self.warnings {
            writeln!(f, "  warning: {w}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Line<T> {
    schema: String,
    config_hash: String,
    #[serde(flatten)]
    record: T,
}

/// A fetched package with its mined metadata and linked articles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageEntry {
    pub package: LocalPackage,
    pub metadata: PackageMetadata,
    pub articles: Vec<ArticleRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub package_doi: Doi,
    pub script_path: String,
    pub kind: ScriptKind,
    pub line_count: u32,
    pub parse_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    pub chains: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleConfirmations {
    pub article_doi: Doi,
    pub confirmations: Vec<OutputConfirmation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionEntry {
    pub package_doi: Doi,
    pub script_path: String,
    pub distributions: Vec<String>,
    pub unmapped: Vec<String>,
    pub installed: Vec<String>,
    pub status: ExecutionStatus,
    pub exit_code: i32,
    pub stdout: String,
    pub stdout_truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub confirmations: Vec<ArticleConfirmations>,
}

impl ExecutionEntry {
    fn confirmed_for(&self, article: &Doi) -> &[OutputConfirmation] {
        self.confirmations
            .iter()
            .find(|c| &c.article_doi == article)
            .map_or(&[], |c| c.confirmations.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEntry {
    pub paper_doi: Doi,
    pub software_doi: Doi,
    pub files: Vec<String>,
    pub sha256: Vec<String>,
    pub template_ids_used: Vec<String>,
    pub contributions: usize,
    pub chain_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiptEntry {
    pub paper_doi: Doi,
    pub software_doi: Doi,
    pub receipt: Receipt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementArtifact {
    pub schema: String,
    pub config_hash: String,
    pub candidates: Vec<ScriptRef>,
    pub report: AgreementReport,
}

pub struct Pipeline {
    config: RunConfig,
    client: HttpClient,
    cache: Cache,
    hash: String,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    /// Prepare the run directory and snapshot the configuration into it.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.check()?;
        fs::create_dir_all(&config.run_dir)?;
        let cache = Cache::new(config.effective_cache_dir());
        fs::create_dir_all(cache.root())?;
        fs::write(config.run_dir.join("config.toml"), config.to_toml()?)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            client: HttpClient::new(config.http_options()),
            hash: config.config_hash(),
            cache,
            pool,
            config,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn run_dir(&self) -> &Path {
        &self.config.run_dir
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageReport> {
        log::info!("stage {stage}");
        self.pool.install(|| match stage {
            Stage::Harvest => self.harvest(),
            Stage::Fetch => self.fetch(),
            Stage::Analyze => self.analyze(),
            Stage::Match => self.match_stage(),
            Stage::Recompute => self.recompute(),
            Stage::BuildKg => self.build_kg(),
            Stage::Validate => self.validate(),
        })
    }

    /// Every stage in order; validation only when ground truth is configured.
    pub fn run_all(&self) -> Result<Vec<StageReport>> {
        let mut reports = Vec::new();
        for stage in Stage::ALL {
            if stage == Stage::Validate && self.config.validation.truth.is_none() {
                continue;
            }
            reports.push(self.run_stage(stage)?);
        }
        Ok(reports)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.run_dir.join(name)
    }

    fn write_jsonl<T: Serialize>(&self, name: &str, schema: &str, records: &[T]) -> Result<()> {
        let mut out = Vec::new();
        for r in records {
            let line = Line { schema: schema.to_string(), config_hash: self.hash.clone(), record: r };
            serde_json::to_writer(&mut out, &line)?;
            out.push(b'\n');
        }
        fs::write(self.path(name), out)?;
        Ok(())
    }

    fn read_jsonl<T: DeserializeOwned>(&self, name: &str, schema: &str, producer: Stage) -> Result<Vec<T>> {
        let path = self.path(name);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingArtifact { path, stage: producer.name().into() })
            }
            Err(e) => return Err(e.into()),
        };
        let mut warned = false;
        let mut out = Vec::new();
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let head: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| Error::Malformed(format!("{}:{}: {e}", path.display(), no + 1)))?;
            let found = head.get("schema").and_then(|s| s.as_str()).unwrap_or("");
            if found != schema {
                return Err(Error::SchemaMismatch { path, expected: schema.into(), found: found.into() });
            }
            if !warned && head.get("config_hash").and_then(|s| s.as_str()) != Some(self.hash.as_str()) {
                log::warn!("{} was produced under a different configuration", path.display());
                warned = true;
            }
            let l: Line<T> = serde_json::from_value(head)
                .map_err(|e| Error::Malformed(format!("{}:{}: {e}", path.display(), no + 1)))?;
            out.push(l.record);
        }
        Ok(out)
    }

    fn harvest(&self) -> Result<StageReport> {
        let mut report = StageReport::new(Stage::Harvest);
        let mut records: Vec<PackageRecord> = Vec::new();
        let mut seen = BTreeSet::new();
        let (mut excluded, mut skipped, mut pages) = (0usize, 0usize, 0u64);
        for source in &self.config.sources {
            let mut cursor = None;
            let mut n = 0u64;
            loop {
                let page = harvest_records(source, &self.config.harvest.filter, cursor.as_ref(), &self.client, &self.cache)?;
                n += 1;
                excluded += page.excluded.len();
                skipped += page.skipped.len();
                for r in page.records {
                    if seen.insert(r.record_doi.key()) {
                        records.push(r);
                    }
                }
                match page.next_cursor {
                    Some(next) if self.config.harvest.max_pages.map_or(true, |m| n < m) => cursor = Some(next),
                    _ => break,
                }
            }
            pages += n;
        }
        self.write_jsonl("records.jsonl", RECORD_SCHEMA, &records)?;
        report.row("sources", self.config.sources.len());
        report.row("pages", pages);
        report.row("software packages", records.len());
        report.row("excluded by size cap", excluded);
        report.row("unreadable entries", skipped);
        Ok(report)
    }

    fn text_dir(&self) -> PathBuf {
        self.config
            .articles
            .text_dir
            .clone()
            .unwrap_or_else(|| self.cache.root().join("articles"))
    }

    fn article(&self, doi: &Doi) -> ArticleRecord {
        let dir = self.text_dir();
        if let Some(resolver) = &self.config.articles.resolver {
            match resolve_article(doi, resolver, &dir, &self.client, &self.cache) {
                Ok(a) => return a,
                Err(e) => log::warn!("resolving {doi}: {e}"),
            }
        }
        // No resolver (or it failed): the text sidecar alone decides.
        let sidecar = sidecar_path(&dir, doi);
        let available = fs::metadata(&sidecar).map(|m| m.is_file() && m.len() > 0).unwrap_or(false);
        ArticleRecord {
            doi: doi.clone(),
            open_access: available,
            pdf_url: None,
            text_path: available.then_some(sidecar),
            text_available: available,
            unresolved: self.config.articles.resolver.is_some(),
        }
    }

    fn fetch(&self) -> Result<StageReport> {
        let mut report = StageReport::new(Stage::Fetch);
        let records: Vec<PackageRecord> = self.read_jsonl("records.jsonl", RECORD_SCHEMA, Stage::Harvest)?;
        let options = FetchOptions { max_archive_bytes: self.config.harvest.filter.max_archive_bytes };
        let results: Vec<std::result::Result<PackageEntry, String>> = records
            .par_iter()
            .map(|r| {
                let pkg = fetch_archive(r, &self.cache.record_dir(&r.record_doi), &self.client, &options)
                    .map_err(|e| format!("{}: {e}", r.record_doi))?;
                let metadata = extract_metadata(&pkg);
                let articles = metadata.article_dois().iter().map(|d| self.article(d)).collect();
                Ok(PackageEntry { package: pkg, metadata, articles })
            })
            .collect();
        let mut entries = Vec::new();
        for r in results {
            match r {
                Ok(e) => entries.push(e),
                Err(w) => report.warnings.push(w),
            }
        }
        self.write_jsonl("packages.jsonl", PACKAGE_SCHEMA, &entries)?;
        let linked = entries.iter().filter(|e| !e.articles.is_empty()).count();
        let articles: BTreeSet<String> = entries.iter().flat_map(|e| e.articles.iter().map(|a| a.doi.key())).collect();
        let oa: BTreeSet<String> = entries
            .iter()
            .flat_map(|e| e.articles.iter().filter(|a| a.open_access).map(|a| a.doi.key()))
            .collect();
        let text: BTreeSet<String> = entries
            .iter()
            .flat_map(|e| e.articles.iter().filter(|a| a.text_available).map(|a| a.doi.key()))
            .collect();
        report.row("packages fetched", entries.len());
        report.row("fetch failures", report.warnings.len());
        report.row("packages with python", entries.iter().filter(|e| e.metadata.languages.iter().any(|l| l == "python")).count());
        report.row("packages linked to articles", linked);
        report.row("linked articles", articles.len());
        report.row("open-access articles", oa.len());
        report.row("articles with text", text.len());
        Ok(report)
    }

    fn packages(&self) -> Result<Vec<PackageEntry>> {
        self.read_jsonl("packages.jsonl", PACKAGE_SCHEMA, Stage::Fetch)
    }

    fn chains(&self) -> Result<Vec<ProvenanceChain>> {
        self.read_jsonl("chains.jsonl", CHAIN_SCHEMA, Stage::Analyze)
    }

    fn analyze(&self) -> Result<StageReport> {
        let mut report = StageReport::new(Stage::Analyze);
        let packages = self.packages()?;
        let per_package: Vec<Vec<(ScriptEntry, Vec<ProvenanceChain>)>> = packages
            .par_iter()
            .map(|e| {
                let pkg = &e.package;
                let scripts: Vec<_> = pkg
                    .files
                    .entries
                    .iter()
                    .filter_map(|f| match f.kind {
                        FileKind::Script => Some((f, ScriptKind::Script)),
                        FileKind::Notebook => Some((f, ScriptKind::Notebook)),
                        _ => None,
                    })
                    .collect();
                scripts
                    .par_iter()
                    .map(|(f, kind)| {
                        let bytes = fs::read(pkg.root_path.join(&f.relative_path)).unwrap_or_default();
                        let parsed = parse_script(&bytes, *kind).with_origin(Some(pkg.doi().clone()), f.relative_path.clone());
                        let chains = analyze(&parsed, &self.config.analysis);
                        let entry = ScriptEntry {
                            package_doi: pkg.doi().clone(),
                            script_path: f.relative_path.clone(),
                            kind: *kind,
                            line_count: parsed.line_count,
                            parse_ok: parsed.parse_ok,
                            parse_error: parsed.parse_error.clone(),
                            chains: chains.len(),
                        };
                        (entry, chains)
                    })
                    .collect()
            })
            .collect();
        let mut scripts = Vec::new();
        let mut chains = Vec::new();
        for pkg in per_package {
            for (entry, cs) in pkg {
                scripts.push(entry);
                chains.extend(cs);
            }
        }
        self.write_jsonl("scripts.jsonl", SCRIPT_SCHEMA, &scripts)?;
        self.write_jsonl("chains.jsonl", CHAIN_SCHEMA, &chains)?;
        let with_chains: BTreeSet<_> = chains.iter().filter_map(|c| c.package_doi.as_ref().map(Doi::key)).collect();
        report.row("scripts", scripts.len());
        report.row("unparsable scripts", scripts.iter().filter(|s| !s.parse_ok).count());
        report.row("data sources", chains.len());
        report.row("operations", chains.iter().map(|c| c.operations.len()).sum::<usize>());
        report.row("packages with chains", with_chains.len());
        Ok(report)
    }

    fn normalizer(&self) -> Result<Normalizer> {
        Ok(Normalizer::new(match &self.config.matcher.synonyms_file {
            Some(p) => SynonymTable::load(p)?,
            None => SynonymTable::default(),
        }))
    }

    fn stopwords(&self) -> Result<StopwordList> {
        let m = &self.config.matcher;
        match &m.stopword_file {
            Some(p) => Ok(StopwordList::parse(m.stopword_list_id.clone(), &fs::read_to_string(p)?)),
            None => StopwordList::bundled(&m.stopword_list_id),
        }
    }

    fn scorer(&self) -> Box<dyn SimilarityScorer> {
        match &self.config.matcher.scorer {
            ScorerChoice::TrigramCosine => Box::new(TrigramCosine),
            ScorerChoice::Embedding { endpoint } => {
                Box::new(EmbeddingScorer::new(endpoint.clone(), HttpClient::new(self.config.http_options())))
            }
        }
    }

    fn match_stage(&self) -> Result<StageReport> {
        let mut report = StageReport::new(Stage::Match);
        let packages = self.packages()?;
        let chains = self.chains()?;
        let normalizer = self.normalizer()?;
        let stopwords = self.stopwords()?;
        let scorer = self.scorer();
        let threshold = self.config.matcher.threshold;
        let per_package: Vec<Result<Vec<ChainMatch>>> = packages
            .par_iter()
            .map(|e| {
                let own: Vec<&ProvenanceChain> = chains
                    .iter()
                    .filter(|c| c.package_doi.as_ref() == Some(e.package.doi()))
                    .collect();
                let mut out = Vec::new();
                if own.is_empty() {
                    return Ok(out);
                }
                for article in e.articles.iter().filter(|a| a.text_available) {
                    let Some(text) = article.read_text() else { continue };
                    let index = build_article_index(&text, &article.doi, &stopwords);
                    for c in &own {
                        out.push(match_chain(c, &index, &normalizer, scorer.as_ref(), threshold)?);
                    }
                }
                Ok(out)
            })
            .collect();
        let mut matches = Vec::new();
        for r in per_package {
            matches.extend(r?);
        }
        self.write_jsonl("matches.jsonl", MATCH_SCHEMA, &matches)?;
        let scholarly: Vec<&ChainMatch> = matches.iter().filter(|m| m.scholarly).collect();
        let pkgs: BTreeSet<_> = scholarly.iter().filter_map(|m| m.package_doi.as_ref().map(Doi::key)).collect();
        report.row("chain/article pairs", matches.len());
        report.row("accepted terms", matches.iter().flat_map(|m| &m.results).filter(|r| r.accepted).count());
        report.row("scholarly chains", scholarly.len());
        report.row("scholarly packages", pkgs.len());
        Ok(report)
    }

    fn matches(&self) -> Result<Vec<ChainMatch>> {
        self.read_jsonl("matches.jsonl", MATCH_SCHEMA, Stage::Match)
    }

    fn recompute(&self) -> Result<StageReport> {
        let mut report = StageReport::new(Stage::Recompute);
        if !self.config.recompute.enabled {
            self.write_jsonl::<ExecutionEntry>("executions.jsonl", EXECUTION_SCHEMA, &[])?;
            write_needs_human(&self.path("needs_human.jsonl"), &[])?;
            report.row("disabled", "yes");
            return Ok(report);
        }
        let packages = self.packages()?;
        let chains = self.chains()?;
        let matches = self.matches()?;
        let cfg = &self.config.recompute.config;
        let table = ModuleDistributionTable::default();
        let stdlib = StdlibAllowlist::bundled(&cfg.interpreter_version);
        // (package, script) -> articles under which one of its chains is scholarly.
        let mut scholarly: BTreeMap<(String, String), Vec<Doi>> = BTreeMap::new();
        let chain_script: BTreeMap<(String, &str), &str> = chains
            .iter()
            .filter_map(|c| Some(((c.package_doi.as_ref()?.key(), c.id.as_str()), c.script_path.as_str())))
            .collect();
        for m in matches.iter().filter(|m| m.scholarly) {
            let Some(pkg) = m.package_doi.as_ref() else { continue };
            if let Some(script) = chain_script.get(&(pkg.key(), m.chain_id.as_str())) {
                let arts = scholarly.entry((pkg.key(), script.to_string())).or_default();
                if !arts.contains(&m.article_doi) {
                    arts.push(m.article_doi.clone());
                }
            }
        }
        let results: Vec<Result<Vec<ExecutionEntry>>> = packages
            .par_iter()
            .map(|e| {
                let pkg = &e.package;
                let scripts: Vec<(&String, &Vec<Doi>)> = scholarly
                    .iter()
                    .filter(|((p, _), _)| *p == pkg.doi().key())
                    .map(|((_, s), a)| (s, a))
                    .collect();
                if scripts.is_empty() {
                    return Ok(Vec::new());
                }
                let mut imports = Vec::new();
                for (script, _) in &scripts {
                    let kind = if script.ends_with(".ipynb") { ScriptKind::Notebook } else { ScriptKind::Script };
                    let bytes = fs::read(pkg.root_path.join(script))?;
                    imports.extend(find_imports(&parse_script(&bytes, kind)));
                }
                let plan = plan_environment(pkg, &imports, &table, &stdlib, self.cache.env_dir(pkg.doi()));
                let prep = prepare_environment(&plan, cfg)?;
                let mut out = Vec::new();
                for (script, articles) in scripts {
                    if script.ends_with(".ipynb") {
                        out.push(self.not_run(pkg, &plan, script, "notebooks are not executed automatically"));
                        continue;
                    }
                    let result = execute_script(&plan, &prep, script, Duration::from_secs(cfg.timeout_secs), cfg)?;
                    log::info!("{}:{} {:?} in {:.2}s", pkg.doi(), script, result.status, result.duration);
                    let confirmations = articles
                        .iter()
                        .map(|doi| {
                            let text = e
                                .articles
                                .iter()
                                .find(|a| &a.doi == doi)
                                .and_then(ArticleRecord::read_text)
                                .unwrap_or_default();
                            ArticleConfirmations { article_doi: doi.clone(), confirmations: confirm_outputs(&result, &text) }
                        })
                        .collect();
                    out.push(ExecutionEntry {
                        package_doi: pkg.doi().clone(),
                        script_path: script.clone(),
                        distributions: plan.distributions.clone(),
                        unmapped: plan.requirements.iter().filter(|r| r.unmapped).map(|r| r.module_root.clone()).collect(),
                        installed: prep.installed.clone(),
                        status: result.status,
                        exit_code: result.exit_code,
                        stdout: result.stdout,
                        stdout_truncated: result.stdout_truncated,
                        reason: result.reason,
                        confirmations,
                    });
                }
                Ok(out)
            })
            .collect();
        let mut entries = Vec::new();
        for r in results {
            entries.extend(r?);
        }
        let queue: Vec<NeedsHuman> = entries
            .iter()
            .filter(|e| e.status != ExecutionStatus::Ok)
            .map(|e| NeedsHuman {
                package_doi: e.package_doi.clone(),
                script_path: e.script_path.clone(),
                reason: format!("{:?}: {}", e.status, e.reason.clone().unwrap_or_default()).to_lowercase(),
            })
            .collect();
        self.write_jsonl("executions.jsonl", EXECUTION_SCHEMA, &entries)?;
        write_needs_human(&self.path("needs_human.jsonl"), &queue)?;
        let count = |s: ExecutionStatus| entries.iter().filter(|e| e.status == s).count();
        let confirmed = entries
            .iter()
            .filter(|e| e.confirmations.iter().any(|a| a.confirmations.iter().any(|c| c.confirmed)))
            .count();
        report.row("scripts executed", entries.len());
        report.row("ok", count(ExecutionStatus::Ok));
        report.row("failed", count(ExecutionStatus::Failed));
        report.row("timeout", count(ExecutionStatus::Timeout));
        report.row("needs human", count(ExecutionStatus::NeedsHuman));
        report.row("scripts with confirmed outputs", confirmed);
        Ok(report)
    }

    fn not_run(&self, pkg: &LocalPackage, plan: &crate::recompute::EnvironmentPlan, script: &str, reason: &str) -> ExecutionEntry {
        ExecutionEntry {
            package_doi: pkg.doi().clone(),
            script_path: script.to_string(),
            distributions: plan.distributions.clone(),
            unmapped: Vec::new(),
            installed: Vec::new(),
            status: ExecutionStatus::NeedsHuman,
            exit_code: -1,
            stdout: String::new(),
            stdout_truncated: false,
            reason: Some(reason.to_string()),
            confirmations: Vec::new(),
        }
    }

    fn executions(&self) -> Result<Vec<ExecutionEntry>> {
        match self.read_jsonl("executions.jsonl", EXECUTION_SCHEMA, Stage::Recompute) {
            Err(Error::MissingArtifact { .. }) if !self.config.recompute.enabled => Ok(Vec::new()),
            other => other,
        }
    }

    fn registry(&self) -> Result<TemplateRegistry> {
        match &self.config.kg.template_dir {
            Some(dir) => TemplateRegistry::load_dir(dir),
            None => Ok(TemplateRegistry::bundled()),
        }
    }

    fn build_kg(&self) -> Result<StageReport> {
        let mut report = StageReport::new(Stage::BuildKg);
        let packages = self.packages()?;
        let chains = self.chains()?;
        let matches = self.matches()?;
        let executions = self.executions()?;
        let registry = self.registry()?;
        let graphs_dir = self.path("graphs");
        if graphs_dir.exists() {
            fs::remove_dir_all(&graphs_dir)?;
        }
        fs::create_dir_all(&graphs_dir)?;
        let mut index = Vec::new();
        let mut graphs = Vec::new();
        for e in &packages {
            let pkg_doi = e.package.doi();
            let own: Vec<&ProvenanceChain> = chains.iter().filter(|c| c.package_doi.as_ref() == Some(pkg_doi)).collect();
            for article in &e.articles {
                let mut fragments = Vec::new();
                for c in &own {
                    let Some(m) = matches.iter().find(|m| {
                        m.package_doi.as_ref() == Some(pkg_doi) && m.chain_id == c.id && m.article_doi == article.doi
                    }) else {
                        continue;
                    };
                    if !m.scholarly {
                        continue;
                    }
                    let confirmations = executions
                        .iter()
                        .find(|x| &x.package_doi == pkg_doi && x.script_path == c.script_path)
                        .map_or(&[][..], |x| x.confirmed_for(&article.doi));
                    let template = choose_template(&m.results, &registry);
                    fragments.push(instantiate(template, c, &m.results, confirmations)?);
                }
                if fragments.is_empty() {
                    continue;
                }
                let graph = assemble(&article.doi, pkg_doi, fragments);
                let violations = validate_graph(&graph, &registry);
                if !violations.is_empty() {
                    return Err(Error::Malformed(format!(
                        "graph for {} uses undeclared predicates: {:?}",
                        article.doi,
                        violations.iter().map(|t| &t.predicate).collect::<Vec<_>>()
                    )));
                }
                let stem = format!("{}__{}", article.doi.file_stem(), pkg_doi.file_stem());
                let mut files = Vec::new();
                let mut digests = Vec::new();
                for format in &self.config.kg.formats {
                    let bytes = serialize(&graph, *format);
                    let name = format!("{stem}.{}", format.extension());
                    fs::write(graphs_dir.join(&name), &bytes)?;
                    digests.push(hex::encode(Sha256::digest(&bytes)));
                    files.push(format!("graphs/{name}"));
                }
                index.push(GraphEntry {
                    paper_doi: article.doi.clone(),
                    software_doi: pkg_doi.clone(),
                    files,
                    sha256: digests,
                    template_ids_used: graph.template_ids_used.clone(),
                    contributions: graph.contributions.len(),
                    chain_refs: graph.contributions.iter().map(|c| c.chain_ref.clone()).collect(),
                });
                graphs.push(graph);
            }
        }
        self.write_jsonl("graphs.jsonl", GRAPH_INDEX_SCHEMA, &index)?;
        report.row("graphs", index.len());
        report.row("papers with contributions", index.iter().map(|g| g.paper_doi.key()).collect::<BTreeSet<_>>().len());
        report.row("contributions", index.iter().map(|g| g.contributions).sum::<usize>());
        report.row(
            "templated contributions",
            graphs.iter().flat_map(|g| &g.contributions).filter(|c| c.template_id.is_some()).count(),
        );
        if let Some(ing) = &self.config.kg.ingest {
            let token = ing.token_env.as_ref().and_then(|v| std::env::var(v).ok());
            let options = IngestOptions { endpoint: ing.endpoint.clone(), token, dry_run: ing.dry_run };
            let mut receipts = Vec::new();
            for g in &graphs {
                let receipt = ingest(g, &registry, &options, &self.client)?;
                receipts.push(ReceiptEntry {
                    paper_doi: g.paper_doi.clone(),
                    software_doi: g.software_doi.clone(),
                    receipt,
                });
            }
            self.write_jsonl("receipts.jsonl", RECEIPT_SCHEMA, &receipts)?;
            report.row("resources created", receipts.iter().map(|r| r.receipt.created).sum::<usize>());
        }
        Ok(report)
    }

    fn validate(&self) -> Result<StageReport> {
        let mut report = StageReport::new(Stage::Validate);
        let truth_path = self
            .config
            .validation
            .truth
            .clone()
            .ok_or_else(|| Error::Config("validation.truth is not set".into()))?;
        let normalizer = self.normalizer()?;
        let truth = load_truth(&truth_path, &normalizer)?;
        let packages = self.packages()?;
        let chains = self.chains()?;
        let executions = self.executions()?;
        let corpus: Vec<LocalPackage> = packages.iter().map(|e| e.package.clone()).collect();
        let candidates = scan_candidates(&corpus, &self.config.analysis.loaders);
        let mut scripts = Vec::new();
        for t in &truth {
            let own: Vec<&ProvenanceChain> = chains
                .iter()
                .filter(|c| c.package_doi.as_ref() == Some(&t.package_doi) && c.script_path == t.script_path)
                .collect();
            let confirmed: Vec<OutputConfirmation> = executions
                .iter()
                .filter(|x| x.package_doi == t.package_doi && x.script_path == t.script_path)
                .flat_map(|x| x.confirmations.iter().flat_map(|a| a.confirmations.iter().cloned()))
                .collect();
            let extracted = ExtractedItems::from_results(&own, &confirmed, &normalizer);
            scripts.push((t.script_id(), t.package_doi.clone(), encode_vectors(t, &extracted)));
        }
        let agreement = crate::validation::report(scripts)?;
        let table = render_table(&agreement);
        let artifact = AgreementArtifact {
            schema: AGREEMENT_SCHEMA.into(),
            config_hash: self.hash.clone(),
            candidates: candidates.clone(),
            report: agreement.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&artifact)?;
        bytes.push(b'\n');
        fs::write(self.path("agreement.json"), bytes)?;
        fs::write(self.path("agreement.txt"), &table)?;
        report.row("candidate scripts", candidates.len());
        report.row("annotated scripts", agreement.n_scripts);
        report.row("annotated packages", agreement.n_packages);
        report.row("pooled IA", format!("{:.4}", agreement.ia));
        Ok(report)
    }
}
