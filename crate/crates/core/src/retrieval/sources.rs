use std::collections::HashMap;
use std::sync::Arc;

use serde_json::Value;

use super::index::LocalIndex;
use super::{KnowledgeSource, RetrievedDocument};
use crate::embedding::{cosine_similarity, EmbeddingProvider};
use crate::error::{ConfigError, ProviderError, RetrievalError};
use crate::http::{env_var, ClientOptions, HttpClient};
use crate::text::normalize_sentence;
use crate::types::SourceKind;

pub const RRF_CONSTANT: f64 = 60.0;

fn unavailable(kind: &SourceKind, reason: impl ToString) -> RetrievalError {
    RetrievalError::SourceUnavailable {
        source_name: kind.to_string(),
        reason: reason.to_string(),
    }
}

/// BM25 over a [`LocalIndex`], read-only and shareable across threads.
#[derive(Debug, Clone)]
pub struct LocalIndexSource {
    kind: SourceKind,
    index: Arc<LocalIndex>,
}

impl LocalIndexSource {
    pub fn new(kind: SourceKind, index: Arc<LocalIndex>) -> Self {
        Self { kind, index }
    }

    pub fn index(&self) -> &LocalIndex {
        &self.index
    }
}

fn to_documents(
    kind: &SourceKind,
    index: &LocalIndex,
    ranked: Vec<(usize, f64)>,
) -> Vec<RetrievedDocument> {
    ranked
        .into_iter()
        .enumerate()
        .map(|(i, (doc, score))| {
            let d = index.document(doc).expect("ranked document exists");
            RetrievedDocument {
                doc_id: d.doc_id,
                source: kind.clone(),
                title: d.title,
                body: d.body,
                rank: i + 1,
                score,
                url: None,
            }
        })
        .collect()
}

impl KnowledgeSource for LocalIndexSource {
    fn kind(&self) -> SourceKind {
        self.kind.clone()
    }

    fn describe(&self) -> String {
        format!("{} (local BM25, {} docs)", self.kind, self.index.len())
    }

    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        Ok(to_documents(
            &self.kind,
            &self.index,
            self.index.search(query, k),
        ))
    }
}

/// Abstract corpus ranked lexically by BM25, optionally fused with a dense
/// cosine ranking by reciprocal-rank fusion:
/// `score(d) = 1/(60 + rank_bm25(d)) + 1/(60 + rank_dense(d))`, where a
/// document absent from one ranking contributes nothing for it.
pub struct BiomedicalSource {
    kind: SourceKind,
    index: Arc<LocalIndex>,
    dense: Option<DenseRanker>,
    pool: usize,
}

struct DenseRanker {
    embedder: Arc<dyn EmbeddingProvider>,
    vectors: Vec<Vec<f64>>,
}

impl BiomedicalSource {
    pub fn lexical(index: Arc<LocalIndex>) -> Self {
        Self {
            kind: SourceKind::PubMedLike,
            index,
            dense: None,
            pool: 100,
        }
    }

    /// Embeds every document up front; the dense ranking is then a scan.
    pub fn hybrid(
        index: Arc<LocalIndex>,
        embedder: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, ConfigError> {
        let texts: Vec<String> = (0..index.len())
            .map(|i| index.document(i).expect("in range").indexed_text())
            .collect();
        let vectors = embedder
            .embed(&texts)
            .map_err(|e| ConfigError::Invalid(format!("embedding biomedical corpus: {e}")))?;
        Ok(Self {
            kind: SourceKind::PubMedLike,
            index,
            dense: Some(DenseRanker { embedder, vectors }),
            pool: 100,
        })
    }

    /// Candidate depth of each ranking before fusion. Independent of `k` so
    /// that shorter result lists are prefixes of longer ones.
    pub fn with_pool(mut self, pool: usize) -> Self {
        self.pool = pool.max(1);
        self
    }

    pub fn with_kind(mut self, kind: SourceKind) -> Self {
        self.kind = kind;
        self
    }

    fn dense_ranking(
        &self,
        dense: &DenseRanker,
        query: &str,
    ) -> Result<Vec<(usize, f64)>, RetrievalError> {
        let q = dense
            .embedder
            .embed(&[query.to_owned()])
            .map_err(|e| unavailable(&self.kind, e))?
            .pop()
            .ok_or_else(|| unavailable(&self.kind, "embedder returned nothing"))?;
        let mut ranked: Vec<(usize, f64)> = dense
            .vectors
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                cosine_similarity(&q, v)
                    .ok()
                    .filter(|c| *c > 0.0)
                    .map(|c| (i, c))
            })
            .collect();
        self.index.sort_ranked(&mut ranked);
        ranked.truncate(self.pool);
        Ok(ranked)
    }
}

impl KnowledgeSource for BiomedicalSource {
    fn kind(&self) -> SourceKind {
        self.kind.clone()
    }

    fn describe(&self) -> String {
        let mode = if self.dense.is_some() {
            "BM25 + dense RRF"
        } else {
            "BM25"
        };
        format!("{} ({mode}, {} docs)", self.kind, self.index.len())
    }

    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        let Some(dense) = &self.dense else {
            return Ok(to_documents(
                &self.kind,
                &self.index,
                self.index.search(query, k),
            ));
        };
        let lexical = self.index.search(query, self.pool);
        let semantic = self.dense_ranking(dense, query)?;
        let mut fused: HashMap<usize, f64> = HashMap::new();
        for ranking in [&lexical, &semantic] {
            for (rank, (doc, _)) in ranking.iter().enumerate() {
                *fused.entry(*doc).or_insert(0.0) += 1.0 / (RRF_CONSTANT + (rank + 1) as f64);
            }
        }
        let mut ranked: Vec<(usize, f64)> = fused.into_iter().collect();
        self.index.sort_ranked(&mut ranked);
        ranked.truncate(k);
        Ok(to_documents(&self.kind, &self.index, ranked))
    }
}

#[derive(Debug, Clone)]
pub struct WebSearchSettings {
    pub endpoint: String,
    pub api_key: String,
    pub engine_id: String,
    pub client: ClientOptions,
}

impl WebSearchSettings {
    pub const DEFAULT_ENDPOINT: &'static str = "https://www.googleapis.com/customsearch/v1";

    /// Reads SEARCH_API_KEY and SEARCH_ENGINE_ID (plus optional SEARCH_API_URL).
    pub fn from_env() -> Option<Self> {
        Some(Self {
            endpoint: env_var("SEARCH_API_URL").unwrap_or_else(|| Self::DEFAULT_ENDPOINT.into()),
            api_key: env_var("SEARCH_API_KEY")?,
            engine_id: env_var("SEARCH_ENGINE_ID")?,
            client: ClientOptions::default(),
        })
    }
}

/// Custom-search style web adapter: `GET endpoint?key=&cx=&q=&num=`,
/// reading `items[].title`, `items[].snippet` and `items[].link`.
#[derive(Debug)]
pub struct WebSearchSource {
    settings: WebSearchSettings,
    http: HttpClient,
}

/// The API serves at most this many results per request.
const WEB_PAGE_SIZE: usize = 10;

impl WebSearchSource {
    pub fn new(settings: WebSearchSettings) -> Self {
        let http = HttpClient::new(settings.client.clone());
        Self { settings, http }
    }

    /// Title and snippet joined as the document body.
    pub fn compose_body(title: &str, snippet: &str) -> String {
        let title = title.trim();
        let snippet = snippet.split_whitespace().collect::<Vec<_>>().join(" ");
        if title.is_empty() {
            return snippet;
        }
        if title.ends_with(['.', '!', '?']) {
            format!("{title} {snippet}")
        } else {
            format!("{title}. {snippet}")
        }
    }

    pub fn parse_items(body: &Value, k: usize) -> Result<Vec<RetrievedDocument>, ProviderError> {
        let Some(items) = body.get("items") else {
            // No "items" key means zero results.
            return Ok(Vec::new());
        };
        let items = items
            .as_array()
            .ok_or_else(|| ProviderError::Decode("items is not an array".into()))?;
        let field = |item: &Value, name: &str| {
            item.get(name)
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_owned()
        };
        Ok(items
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, item)| {
                let title = field(item, "title");
                let snippet = field(item, "snippet");
                let link = field(item, "link");
                let rank = i + 1;
                RetrievedDocument {
                    doc_id: if link.is_empty() {
                        format!("web-{rank}")
                    } else {
                        link.clone()
                    },
                    source: SourceKind::WebSearch,
                    body: Self::compose_body(&title, &snippet),
                    title,
                    rank,
                    score: 1.0 / rank as f64,
                    url: (!link.is_empty()).then_some(link),
                }
            })
            .collect())
    }
}

impl KnowledgeSource for WebSearchSource {
    fn kind(&self) -> SourceKind {
        SourceKind::WebSearch
    }

    fn describe(&self) -> String {
        format!("web ({})", self.settings.endpoint)
    }

    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let num = k.min(WEB_PAGE_SIZE).to_string();
        let response = self
            .http
            .get_json(
                &self.settings.endpoint,
                &[
                    ("key", &self.settings.api_key),
                    ("cx", &self.settings.engine_id),
                    ("q", query),
                    ("num", &num),
                ],
            )
            .map_err(|e| unavailable(&SourceKind::WebSearch, e))?;
        Self::parse_items(&response, k).map_err(|e| unavailable(&SourceKind::WebSearch, e))
    }
}

/// Returns canned result lists keyed by normalized query text.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    kind: SourceKind,
    results: HashMap<String, Vec<RetrievedDocument>>,
}

impl FixtureSource {
    pub fn new(kind: SourceKind) -> Self {
        Self {
            kind,
            results: HashMap::new(),
        }
    }

    pub fn with(mut self, query: &str, docs: Vec<RetrievedDocument>) -> Self {
        self.results.insert(normalize_sentence(query), docs);
        self
    }
}

impl KnowledgeSource for FixtureSource {
    fn kind(&self) -> SourceKind {
        self.kind.clone()
    }

    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError> {
        let mut docs = self
            .results
            .get(&normalize_sentence(query))
            .cloned()
            .unwrap_or_default();
        docs.truncate(k);
        Ok(docs)
    }
}
