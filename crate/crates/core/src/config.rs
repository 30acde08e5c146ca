//! TOML run configuration and provider assembly.
//!
//! Relative paths resolve against the configuration file's directory.
//! Remote endpoints and models come from the environment when set, else from
//! the file; API keys only ever come from the environment. In mock mode every
//! remote provider is refused.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use crate::embedding::{
    EmbeddingProvider, FixtureEmbedder, HashedBowEmbedder, RemoteEmbedder, RemoteEmbeddingSettings,
    DEFAULT_HASHED_DIM,
};
use crate::error::ConfigError;
use crate::evaluation::{Condition, DatasetDescriptor, Providers};
use crate::http::{env_var, ClientOptions};
use crate::negation::{
    FixtureNegator, NegationProvider, Negator, RemoteNegationSettings, RemoteNegator,
    RuleBasedNegator, DEFAULT_NEGATION_TEMPLATE,
};
use crate::retrieval::{
    BiomedicalSource, KnowledgeSource, LocalIndex, LocalIndexSource, WebSearchSettings,
    WebSearchSource,
};
use crate::types::{LabelScheme, PipelineConfig, SourceKind};
use crate::verdict::{
    MockVerdictProvider, PromptTemplate, RemoteVerdictProvider, RemoteVerdictSettings,
    VerdictProvider, VerdictSource, DEFAULT_LOGPROB_FLOOR,
};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub pipeline: PipelineConfig,
    pub dataset: Option<DatasetSection>,
    pub sources: BTreeMap<String, SourceSection>,
    pub negation: NegationSection,
    pub verdict: VerdictSection,
    pub embedding: EmbeddingSection,
    pub runtime: RuntimeSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: Option<String>,
    pub path: PathBuf,
    /// Built-in scheme name or a path to a scheme JSON file.
    pub scheme: String,
    #[serde(default = "default_claim_field")]
    pub claim_field: String,
    #[serde(default = "default_label_field")]
    pub label_field: String,
    #[serde(default = "default_id_field")]
    pub id_field: String,
}

fn default_claim_field() -> String {
    "claim".into()
}
fn default_label_field() -> String {
    "label".into()
}
fn default_id_field() -> String {
    "id".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// BM25 over a local corpus or saved index.
    #[default]
    Bm25,
    /// BM25 over an abstract corpus (biomedical adapter).
    Biomedical,
    /// Biomedical adapter with dense reciprocal-rank fusion.
    Hybrid,
    /// Remote web-search API.
    Web,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub backend: Backend,
    pub corpus: Option<PathBuf>,
    /// Fusion candidate depth for the hybrid backend.
    pub pool: Option<usize>,
    /// Web-search endpoint override.
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegationBackend {
    Rule,
    Fixture,
    Remote,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NegationSection {
    pub provider: NegationBackend,
    pub fixture: Option<PathBuf>,
    /// Consulted when the primary fails; `rule` unless the primary is.
    pub fallback: Option<NegationBackend>,
    pub url: Option<String>,
    pub model: Option<String>,
    pub template: Option<PathBuf>,
}

impl Default for NegationSection {
    fn default() -> Self {
        Self {
            provider: NegationBackend::Rule,
            fixture: None,
            fallback: None,
            url: None,
            model: None,
            template: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictBackend {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerdictSection {
    /// Defaults to `mock` in mock mode and `remote` otherwise.
    pub provider: Option<VerdictBackend>,
    pub fixture: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub logprob_floor: f64,
    pub url: Option<String>,
    pub model: Option<String>,
    pub top_logprobs: u32,
}

impl Default for VerdictSection {
    fn default() -> Self {
        Self {
            provider: None,
            fixture: None,
            template: None,
            logprob_floor: DEFAULT_LOGPROB_FLOOR,
            url: None,
            model: None,
            top_logprobs: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingBackend {
    Hashed,
    Fixture,
    Remote,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: EmbeddingBackend,
    pub dim: usize,
    pub fixture: Option<PathBuf>,
    pub url: Option<String>,
    pub model: Option<String>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            provider: EmbeddingBackend::Hashed,
            dim: DEFAULT_HASHED_DIM,
            fixture: None,
            url: None,
            model: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeSection {
    pub workers: usize,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    /// Verdict sources, e.g. `["wikipedia", "pubmed", "web", "merged"]`.
    pub sources: Option<Vec<String>>,
    pub condition: Option<Condition>,
    pub limit: Option<usize>,
}

impl Default for RuntimeSection {
    fn default() -> Self {
        Self {
            workers: 4,
            max_in_flight: 4,
            timeout_secs: 60,
            sources: None,
            condition: None,
            limit: None,
        }
    }
}

/// A parsed configuration file together with the directory its relative
/// paths are resolved against.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub file: FileConfig,
    pub base_dir: PathBuf,
}

fn read_file(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Parses a comma-separated verdict-source list such as `wikipedia,web,merged`.
pub fn parse_targets(list: &str) -> Result<Vec<VerdictSource>, ConfigError> {
    let targets = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<VerdictSource>, _>>()?;
    if targets.is_empty() {
        return Err(ConfigError::UnknownSource(list.to_owned()));
    }
    Ok(targets)
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = read_file(path)?;
        let file: FileConfig = toml::from_str(&raw)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        let base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        let config = Self { file, base_dir };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file_config(
        file: FileConfig,
        base_dir: impl Into<PathBuf>,
    ) -> Result<Self, ConfigError> {
        let config = Self {
            file,
            base_dir: base_dir.into(),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.file.pipeline.validate()?;
        for name in self.file.sources.keys() {
            name.parse::<SourceKind>()?;
        }
        if let Some(list) = &self.file.runtime.sources {
            parse_targets(&list.join(","))?;
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_owned()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn pipeline(&self) -> &PipelineConfig {
        &self.file.pipeline
    }

    fn client(&self) -> ClientOptions {
        ClientOptions {
            max_in_flight: self.file.runtime.max_in_flight.max(1),
            timeout: Duration::from_secs(self.file.runtime.timeout_secs.max(1)),
            ..ClientOptions::default()
        }
    }

    pub fn dataset_descriptor(&self) -> Result<DatasetDescriptor, ConfigError> {
        let section = self
            .file
            .dataset
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("[dataset]".into()))?;
        let scheme = match LabelScheme::builtin(&section.scheme) {
            Ok(s) => s,
            Err(_) => {
                let path = self.resolve(Path::new(&section.scheme));
                serde_json::from_str(&read_file(&path)?)
                    .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?
            }
        };
        let path = self.resolve(&section.path);
        let name = section.name.clone().unwrap_or_else(|| {
            path.file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
        });
        Ok(DatasetDescriptor {
            name,
            scheme,
            path,
            claim_field: section.claim_field.clone(),
            label_field: section.label_field.clone(),
            id_field: section.id_field.clone(),
        })
    }

    /// Configured sources in provenance order.
    pub fn source_kinds(&self) -> Vec<SourceKind> {
        let mut kinds: Vec<SourceKind> = self
            .file
            .sources
            .keys()
            .filter_map(|k| k.parse().ok())
            .collect();
        kinds.sort();
        kinds
    }

    /// The runtime source list if given, else every configured source plus merged.
    pub fn default_targets(&self) -> Vec<VerdictSource> {
        if let Some(list) = &self.file.runtime.sources {
            if let Ok(t) = parse_targets(&list.join(",")) {
                return t;
            }
        }
        self.source_kinds()
            .into_iter()
            .map(VerdictSource::Source)
            .chain(std::iter::once(VerdictSource::Merged))
            .collect()
    }

    fn source_section(&self, kind: &SourceKind) -> Option<&SourceSection> {
        self.file
            .sources
            .iter()
            .find(|(name, _)| name.parse::<SourceKind>().ok().as_ref() == Some(kind))
            .map(|(_, s)| s)
    }

    pub fn build_embedder(&self, mock: bool) -> Result<Arc<dyn EmbeddingProvider>, ConfigError> {
        let section = &self.file.embedding;
        Ok(match section.provider {
            EmbeddingBackend::Hashed => Arc::new(HashedBowEmbedder::new(section.dim)?),
            EmbeddingBackend::Fixture => {
                let path = section
                    .fixture
                    .as_ref()
                    .ok_or_else(|| ConfigError::Missing("embedding.fixture".into()))?;
                Arc::new(FixtureEmbedder::from_file(&self.resolve(path))?)
            }
            EmbeddingBackend::Remote => {
                if mock {
                    return Err(ConfigError::NetworkForbidden("embedding"));
                }
                let url = env_var("EMBED_API_URL")
                    .or_else(|| section.url.clone())
                    .ok_or_else(|| ConfigError::Missing("EMBED_API_URL".into()))?;
                Arc::new(RemoteEmbedder::new(RemoteEmbeddingSettings {
                    url,
                    api_key: env_var("EMBED_API_KEY"),
                    model: env_var("EMBED_MODEL").or_else(|| section.model.clone()),
                    client: self.client(),
                }))
            }
        })
    }

    fn open_index(
        &self,
        kind: &SourceKind,
        section: &SourceSection,
    ) -> Result<Arc<LocalIndex>, ConfigError> {
        let corpus = section
            .corpus
            .as_ref()
            .ok_or_else(|| ConfigError::Missing(format!("sources.{kind}.corpus")))?;
        LocalIndex::open(&self.resolve(corpus))
            .map(Arc::new)
            .map_err(|source| ConfigError::Index {
                name: kind.to_string(),
                source,
            })
    }

    pub fn build_source(
        &self,
        kind: &SourceKind,
        embedder: &Arc<dyn EmbeddingProvider>,
        mock: bool,
    ) -> Result<Arc<dyn KnowledgeSource>, ConfigError> {
        let section = self
            .source_section(kind)
            .ok_or_else(|| ConfigError::UnknownSource(format!("{kind} (not configured)")))?;
        Ok(match section.backend {
            Backend::Bm25 => Arc::new(LocalIndexSource::new(
                kind.clone(),
                self.open_index(kind, section)?,
            )),
            Backend::Biomedical => Arc::new(
                BiomedicalSource::lexical(self.open_index(kind, section)?).with_kind(kind.clone()),
            ),
            Backend::Hybrid => {
                let source = BiomedicalSource::hybrid(
                    self.open_index(kind, section)?,
                    Arc::clone(embedder),
                )?
                .with_kind(kind.clone());
                Arc::new(match section.pool {
                    Some(pool) => source.with_pool(pool),
                    None => source,
                })
            }
            Backend::Web => {
                if mock {
                    return Err(ConfigError::NetworkForbidden("web-search"));
                }
                let endpoint = env_var("SEARCH_API_URL")
                    .or_else(|| section.endpoint.clone())
                    .unwrap_or_else(|| WebSearchSettings::DEFAULT_ENDPOINT.into());
                Arc::new(WebSearchSource::new(WebSearchSettings {
                    endpoint,
                    api_key: env_var("SEARCH_API_KEY")
                        .ok_or_else(|| ConfigError::Missing("SEARCH_API_KEY".into()))?,
                    engine_id: env_var("SEARCH_ENGINE_ID")
                        .ok_or_else(|| ConfigError::Missing("SEARCH_ENGINE_ID".into()))?,
                    client: self.client(),
                }))
            }
        })
    }

    fn negation_provider(
        &self,
        backend: NegationBackend,
        mock: bool,
    ) -> Result<Box<dyn NegationProvider>, ConfigError> {
        let section = &self.file.negation;
        Ok(match backend {
            NegationBackend::Rule => Box::new(RuleBasedNegator),
            NegationBackend::Fixture => {
                let path = section
                    .fixture
                    .as_ref()
                    .ok_or_else(|| ConfigError::Missing("negation.fixture".into()))?;
                Box::new(FixtureNegator::from_file(&self.resolve(path))?)
            }
            NegationBackend::Remote => {
                if mock {
                    return Err(ConfigError::NetworkForbidden("negation"));
                }
                let template = match &section.template {
                    Some(p) => read_file(&self.resolve(p))?,
                    None => DEFAULT_NEGATION_TEMPLATE.to_owned(),
                };
                Box::new(RemoteNegator::new(RemoteNegationSettings {
                    url: env_var("NEGATION_API_URL")
                        .or_else(|| section.url.clone())
                        .ok_or_else(|| ConfigError::Missing("NEGATION_API_URL".into()))?,
                    api_key: env_var("NEGATION_API_KEY"),
                    model: env_var("NEGATION_MODEL")
                        .or_else(|| section.model.clone())
                        .ok_or_else(|| ConfigError::Missing("NEGATION_MODEL".into()))?,
                    template,
                    temperature: 0.0,
                    client: self.client(),
                })?)
            }
        })
    }

    pub fn build_negator(&self, mock: bool) -> Result<Negator, ConfigError> {
        let section = &self.file.negation;
        let mut negator = Negator::new(self.negation_provider(section.provider, mock)?);
        let fallback = section.fallback.or(match section.provider {
            NegationBackend::Rule => None,
            _ => Some(NegationBackend::Rule),
        });
        if let Some(fb) = fallback.filter(|fb| *fb != section.provider) {
            negator = negator.with_fallback(self.negation_provider(fb, mock)?);
        }
        Ok(negator)
    }

    pub fn build_verifier(&self, mock: bool) -> Result<Arc<dyn VerdictProvider>, ConfigError> {
        let section = &self.file.verdict;
        let backend = section.provider.unwrap_or(if mock {
            VerdictBackend::Mock
        } else {
            VerdictBackend::Remote
        });
        Ok(match backend {
            VerdictBackend::Mock => match &section.fixture {
                Some(path) => Arc::new(MockVerdictProvider::from_file(&self.resolve(path))?),
                None => Arc::new(MockVerdictProvider::new()),
            },
            VerdictBackend::Remote => {
                if mock {
                    return Err(ConfigError::NetworkForbidden("verdict"));
                }
                Arc::new(RemoteVerdictProvider::new(RemoteVerdictSettings {
                    url: env_var("LLM_API_URL")
                        .or_else(|| section.url.clone())
                        .ok_or_else(|| ConfigError::Missing("LLM_API_URL".into()))?,
                    api_key: env_var("LLM_API_KEY"),
                    model: env_var("LLM_MODEL")
                        .or_else(|| section.model.clone())
                        .ok_or_else(|| ConfigError::Missing("LLM_MODEL".into()))?,
                    top_logprobs: section.top_logprobs,
                    client: self.client(),
                }))
            }
        })
    }

    pub fn prompt_template(&self) -> Result<PromptTemplate, ConfigError> {
        match &self.file.verdict.template {
            Some(p) => PromptTemplate::new(read_file(&self.resolve(p))?)
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(PromptTemplate::default()),
        }
    }

    /// Builds exactly the providers `targets` under `condition` need: no
    /// negator for the claim-only condition, and only the listed sources.
    pub fn build_providers(
        &self,
        targets: &[VerdictSource],
        condition: Condition,
        mock: bool,
    ) -> Result<Providers, ConfigError> {
        let embedder = self.build_embedder(mock)?;
        let mut sources = BTreeMap::new();
        for target in targets {
            if let VerdictSource::Source(kind) = target {
                sources.insert(kind.clone(), self.build_source(kind, &embedder, mock)?);
            }
        }
        let negator = if condition.is_dual() {
            Some(self.build_negator(mock)?)
        } else {
            None
        };
        Ok(Providers {
            sources,
            negator,
            embedder,
            verifier: self.build_verifier(mock)?,
            template: self.prompt_template()?,
            logprob_floor: self.file.verdict.logprob_floor,
        })
    }
}
