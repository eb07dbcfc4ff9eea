//! Run configuration, loaded from TOML and snapshotted into each run.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataflow::AnalysisConfig;
use crate::error::{Error, Result};
use crate::ingest::{HarvestFilter, HttpOptions, Source};
use crate::kg::GraphFormat;
use crate::matcher::{DEFAULT_STOPWORD_LIST, DEFAULT_THRESHOLD};
use crate::metadata::ResolverConfig;
use crate::recompute::RecomputeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sources: Vec<Source>,
    /// Where stage artifacts are written.
    pub run_dir: PathBuf,
    /// Falls back to `PROVEX_CACHE`, then `<run_dir>/cache`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub offline: bool,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub http: HttpConfig,
    pub harvest: HarvestConfig,
    pub articles: ArticleConfig,
    pub analysis: AnalysisConfig,
    pub matcher: MatcherConfig,
    pub recompute: RecomputeSection,
    pub kg: KgConfig,
    pub validation: ValidationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            run_dir: PathBuf::from("provex-run"),
            cache_dir: None,
            offline: false,
            threads: 0,
            http: HttpConfig::default(),
            harvest: HarvestConfig::default(),
            articles: ArticleConfig::default(),
            analysis: AnalysisConfig::default(),
            matcher: MatcherConfig::default(),
            recompute: RecomputeSection::default(),
            kg: KgConfig::default(),
            validation: ValidationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub requests_per_second: f64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        let d = HttpOptions::default();
        Self {
            max_attempts: d.max_attempts,
            backoff_ms: d.backoff.as_millis() as u64,
            timeout_secs: d.timeout.as_secs(),
            requests_per_second: d.requests_per_second,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarvestConfig {
    #[serde(flatten)]
    pub filter: HarvestFilter,
    /// Stop after this many pages per source.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_pages: Option<u64>,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self { filter: HarvestFilter::default(), max_pages: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArticleConfig {
    /// Open-access resolver; without one, articles are judged by their
    /// text sidecars alone.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolver: Option<ResolverConfig>,
    /// Directory of pre-extracted article texts named `<doi-stem>.txt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScorerChoice {
    TrigramCosine,
    Embedding { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    pub threshold: f64,
    pub scorer: ScorerChoice,
    pub stopword_list_id: String,
    /// Custom stop-word file; its contents are recorded under
    /// `stopword_list_id`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopword_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synonyms_file: Option<PathBuf>,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            scorer: ScorerChoice::TrigramCosine,
            stopword_list_id: DEFAULT_STOPWORD_LIST.into(),
            stopword_file: None,
            synonyms_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecomputeSection {
    pub enabled: bool,
    #[serde(flatten)]
    pub config: RecomputeConfig,
}

impl Default for RecomputeSection {
    fn default() -> Self {
        Self { enabled: true, config: RecomputeConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgConfig {
    /// Template directory; the bundled registry when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
    pub formats: Vec<GraphFormat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestConfig>,
}

impl Default for KgConfig {
    fn default() -> Self {
        Self {
            template_dir: None,
            formats: vec![GraphFormat::CanonicalJson, GraphFormat::NtriplesLike],
            ingest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub endpoint: String,
    /// Environment variable holding a bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
    #[serde(default)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    /// Ground-truth annotations (`provex.truth/1` JSON Lines).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

impl RunConfig {
    /// Parse TOML; relative input paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.resolve_inputs(base);
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_inputs(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut self.sources {
            if let Source::Local { root } = s {
                fix(root);
            }
        }
        self.articles.text_dir.as_mut().map(fix);
        self.matcher.stopword_file.as_mut().map(fix);
        self.matcher.synonyms_file.as_mut().map(fix);
        self.kg.template_dir.as_mut().map(fix);
        self.validation.truth.as_mut().map(fix);
    }

    pub fn check(&self) -> Result<()> {
        let t = self.matcher.threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Config(format!("matcher.threshold {t} outside (0, 1]")));
        }
        if self.analysis.loaders.is_empty() {
            return Err(Error::Config("analysis.loaders is empty".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Cache directory: explicit setting, then `PROVEX_CACHE`, then
    /// `<run_dir>/cache`.
    pub fn effective_cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var_os("PROVEX_CACHE").map(PathBuf::from))
            .unwrap_or_else(|| self.run_dir.join("cache"))
    }

    pub fn http_options(&self) -> HttpOptions {
        HttpOptions {
            offline: self.offline,
            max_attempts: self.http.max_attempts,
            backoff: Duration::from_millis(self.http.backoff_ms),
            timeout: Duration::from_secs(self.http.timeout_secs),
            requests_per_second: self.http.requests_per_second,
            ..HttpOptions::default()
        }
    }

    /// Digest of every setting that can change artifact contents. Output
    /// locations and the thread count are excluded.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.run_dir = PathBuf::new();
        c.cache_dir = None;
        c.threads = 0;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_relative_paths() {
        let text = r#"
            run_dir = "out"
            threads = 2
            [[sources]]
            kind = "local"
            root = "corpus"
            [matcher]
            threshold = 0.9
            [recompute]
            timeout_secs = 5
            [kg]
            formats = ["ntriples-like"]
        "#;
        let c = RunConfig::from_toml(text, Path::new("/etc/provex")).unwrap();
        assert_eq!(c.sources, [Source::Local { root: "/etc/provex/corpus".into() }]);
        assert_eq!(c.recompute.config.timeout_secs, 5);
        assert!(c.recompute.enabled);
        let again = RunConfig::from_toml(&c.to_toml().unwrap(), Path::new("/")).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn hash_ignores_locations_and_threads() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.run_dir = "elsewhere".into();
        b.cache_dir = Some("/tmp/c".into());
        b.threads = 7;
        assert_eq!(a.config_hash(), b.config_hash());
        b.matcher.threshold = 0.5;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[matcher]\nthreshold = 0.0\n", Path::new(".")).is_err());
        assert!(RunConfig::from_toml("bogus = 1\n", Path::new(".")).is_err());
    }
}
