//! Sentence embedding providers and cosine similarity.

use std::collections::HashMap;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{ConfigError, ProviderError, SelectionError};
use crate::http::{env_var, ClientOptions, HttpClient};
use crate::text::{fnv1a64, normalize_sentence, tokenize};

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Embeds a batch. Every returned vector has the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, SelectionError>;
}

/// `u·v / (‖u‖‖v‖)`, clamped to [-1, 1].
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, SelectionError> {
    if u.len() != v.len() {
        return Err(SelectionError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(SelectionError::ZeroVector);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

pub const DEFAULT_HASHED_DIM: usize = 256;

/// Bag-of-words counts over `dim` buckets, bucket = FNV-1a(token) mod dim.
#[derive(Debug, Clone)]
pub struct HashedBowEmbedder {
    dim: usize,
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_HASHED_DIM,
        }
    }
}

impl HashedBowEmbedder {
    pub fn new(dim: usize) -> Result<Self, ConfigError> {
        if dim == 0 {
            return Err(ConfigError::Invalid(
                "embedding dimension must be at least 1".into(),
            ));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dim as u64) as usize
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in tokenize(text) {
            v[self.bucket(&token)] += 1.0;
        }
        v
    }
}

impl EmbeddingProvider for HashedBowEmbedder {
    fn name(&self) -> &str {
        "hashed-bow"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, SelectionError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Fixed vectors keyed by normalized text.
#[derive(Debug, Clone, Default)]
pub struct FixtureEmbedder {
    table: HashMap<String, Vec<f64>>,
}

impl FixtureEmbedder {
    pub fn new(table: HashMap<String, Vec<f64>>) -> Result<Self, ConfigError> {
        let mut dims = table.values().map(Vec::len);
        if let Some(first) = dims.next() {
            if first == 0 || dims.any(|d| d != first) {
                return Err(ConfigError::Invalid(
                    "fixture vectors must share one nonzero dimension".into(),
                ));
            }
        }
        Ok(Self {
            table: table
                .into_iter()
                .map(|(k, v)| (normalize_sentence(&k), v))
                .collect(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let table = serde_json::from_str(&raw)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::new(table)
    }
}

impl EmbeddingProvider for FixtureEmbedder {
    fn name(&self) -> &str {
        "fixture"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, SelectionError> {
        texts
            .iter()
            .map(|t| {
                self.table
                    .get(&normalize_sentence(t))
                    .cloned()
                    .ok_or_else(|| {
                        SelectionError::EmbeddingFailed(format!("no fixture vector for {t:?}"))
                    })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RemoteEmbeddingSettings {
    pub url: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub client: ClientOptions,
}

impl RemoteEmbeddingSettings {
    /// Reads EMBED_API_URL, EMBED_API_KEY and the optional EMBED_MODEL.
    pub fn from_env() -> Option<Self> {
        Some(Self {
            url: env_var("EMBED_API_URL")?,
            api_key: env_var("EMBED_API_KEY"),
            model: env_var("EMBED_MODEL"),
            client: ClientOptions::default(),
        })
    }
}

/// POSTs `{"input": [texts...]}` and accepts either a bare list of float
/// arrays or an OpenAI-style `{"data": [{"embedding": [...]}, ...]}` body.
#[derive(Debug)]
pub struct RemoteEmbedder {
    settings: RemoteEmbeddingSettings,
    http: HttpClient,
}

impl RemoteEmbedder {
    pub fn new(settings: RemoteEmbeddingSettings) -> Self {
        let http = HttpClient::new(settings.client.clone());
        Self { settings, http }
    }
}

fn parse_vector(value: &Value) -> Result<Vec<f64>, ProviderError> {
    value
        .as_array()
        .ok_or_else(|| ProviderError::Decode("embedding is not an array".into()))?
        .iter()
        .map(|x| {
            x.as_f64().filter(|f| f.is_finite()).ok_or_else(|| {
                ProviderError::Decode("embedding component is not a finite number".into())
            })
        })
        .collect()
}

pub(crate) fn parse_embedding_response(body: &Value) -> Result<Vec<Vec<f64>>, ProviderError> {
    let rows: Vec<&Value> = if let Some(list) = body.as_array() {
        list.iter().collect()
    } else if let Some(data) = body.get("data").and_then(Value::as_array) {
        data.iter()
            .map(|d| d.get("embedding").unwrap_or(&Value::Null))
            .collect()
    } else if let Some(list) = body.get("embeddings").and_then(Value::as_array) {
        list.iter().collect()
    } else {
        return Err(ProviderError::Decode("no embeddings in response".into()));
    };
    rows.into_iter().map(parse_vector).collect()
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        self.settings.model.as_deref().unwrap_or("remote-embedder")
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, SelectionError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut body = json!({ "input": texts });
        if let Some(model) = &self.settings.model {
            body["model"] = json!(model);
        }
        let fail = |e: ProviderError| SelectionError::EmbeddingFailed(e.to_string());
        let response = self
            .http
            .post_json(&self.settings.url, self.settings.api_key.as_deref(), &body)
            .map_err(fail)?;
        let vectors = parse_embedding_response(&response).map_err(fail)?;
        if vectors.len() != texts.len() {
            return Err(SelectionError::EmbeddingFailed(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        if let Some(first) = vectors.first() {
            if first.is_empty() || vectors.iter().any(|v| v.len() != first.len()) {
                return Err(SelectionError::EmbeddingFailed(
                    "inconsistent embedding dimensions".into(),
                ));
            }
        }
        Ok(vectors)
    }
}
