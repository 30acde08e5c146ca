//! Open-domain claim verification: dual retrieval with the claim and its
//! negation, sentence-level evidence selection, multi-source aggregation and
//! single-token verdicts with log-probability confidence.

pub mod aggregation;
pub mod analysis;
pub mod config;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod http;
pub mod negation;
pub mod retrieval;
pub mod selection;
pub mod text;
pub mod types;
pub mod verdict;

pub use error::{
    AggregationError, AnalysisError, ConfigError, EvaluationError, IndexError, NegationError,
    ProviderError, RetrievalError, SelectionError, VerdictError,
};
pub use types::{ClaimPair, LabelScheme, PipelineConfig, SourceKind};
