//! Evidence retrieval: knowledge-source adapters and dual (claim + negation)
//! retrieval.

pub mod bm25;
pub mod index;
mod sources;

use serde::{Deserialize, Serialize};

pub use bm25::{bm25_score, Bm25Params, CorpusStats, DocTerms};
pub use index::{
    build_local_index, Document, IndexBuild, IndexManifest, LocalIndex, MalformedDocument,
};
pub use sources::{
    BiomedicalSource, FixtureSource, LocalIndexSource, WebSearchSettings, WebSearchSource,
    RRF_CONSTANT,
};

use crate::error::RetrievalError;
use crate::types::{ClaimPair, PipelineConfig, SourceKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDocument {
    pub doc_id: String,
    pub source: SourceKind,
    pub title: String,
    pub body: String,
    /// 1-based, contiguous within one result list.
    pub rank: usize,
    /// Adapter-native relevance; non-increasing with rank.
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

pub trait KnowledgeSource: Send + Sync {
    fn kind(&self) -> SourceKind;

    fn describe(&self) -> String {
        self.kind().to_string()
    }

    /// At most `k` documents in rank order.
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievedDocument>, RetrievalError>;
}

/// Retrieval results for the claim and for its negation, kept apart.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DualRetrieval {
    pub positive: Vec<RetrievedDocument>,
    pub negative: Vec<RetrievedDocument>,
}

/// Retrieves `k` documents for the claim and for its negation, concurrently.
pub fn retrieve_dual(
    claim: &ClaimPair,
    source: &dyn KnowledgeSource,
    cfg: &PipelineConfig,
) -> Result<DualRetrieval, RetrievalError> {
    let negated = claim
        .negated_text
        .as_deref()
        .ok_or_else(|| RetrievalError::MissingNegation(claim.id.clone()))?;
    let k = cfg.retrieval_depth;
    let (positive, negative) = rayon::join(
        || source.retrieve(&claim.text, k),
        || source.retrieve(negated, k),
    );
    Ok(DualRetrieval {
        positive: positive?,
        negative: negative?,
    })
}

/// Claim-only retrieval; the negative list stays empty.
pub fn retrieve_original(
    claim: &ClaimPair,
    source: &dyn KnowledgeSource,
    cfg: &PipelineConfig,
) -> Result<DualRetrieval, RetrievalError> {
    Ok(DualRetrieval {
        positive: source.retrieve(&claim.text, cfg.retrieval_depth)?,
        negative: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, rank: usize) -> RetrievedDocument {
        RetrievedDocument {
            doc_id: id.into(),
            source: SourceKind::WikipediaLike,
            title: String::new(),
            body: format!("body of {id}."),
            rank,
            score: 1.0 / rank as f64,
            url: None,
        }
    }

    #[test]
    fn dual_retrieval_returns_fixture_lists_in_order() {
        let claim = ClaimPair::new("c", "The sky is blue")
            .unwrap()
            .with_negation("The sky is not blue")
            .unwrap();
        let source = FixtureSource::new(SourceKind::WikipediaLike)
            .with("The sky is blue", vec![doc("p1", 1), doc("p2", 2)])
            .with("The sky is not blue", vec![doc("n1", 1)]);
        let out = retrieve_dual(&claim, &source, &PipelineConfig::default()).unwrap();
        assert_eq!(out.positive, vec![doc("p1", 1), doc("p2", 2)]);
        assert_eq!(out.negative, vec![doc("n1", 1)]);
    }

    #[test]
    fn dual_retrieval_requires_negation() {
        let claim = ClaimPair::new("c", "The sky is blue").unwrap();
        let source = FixtureSource::new(SourceKind::WikipediaLike);
        assert!(matches!(
            retrieve_dual(&claim, &source, &PipelineConfig::default()),
            Err(RetrievalError::MissingNegation(_))
        ));
    }

    #[test]
    fn empty_fixture_gives_empty_lists() {
        let claim = ClaimPair::new("c", "a b")
            .unwrap()
            .with_negation("not a b")
            .unwrap();
        let source = FixtureSource::new(SourceKind::PubMedLike);
        let out = retrieve_dual(&claim, &source, &PipelineConfig::default()).unwrap();
        assert!(out.positive.is_empty() && out.negative.is_empty());
    }
}
