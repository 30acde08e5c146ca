use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown source name: {0:?}")]
    UnknownSource(String),
    #[error("mock mode forbids the remote {0} provider")]
    NetworkForbidden(&'static str),
    #[error("missing setting {0} (set it in the config file or environment)")]
    Missing(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("source {name}: {source}")]
    Index {
        name: String,
        #[source]
        source: IndexError,
    },
}

/// Failure talking to a remote endpoint.
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("request failed: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {0}")]
    Status(u16),
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum NegationError {
    #[error("negation provider unavailable: {0}")]
    ProviderUnavailable(#[from] ProviderError),
    #[error("provider returned a degenerate negation for {claim:?}: {output:?}")]
    DegenerateNegation { claim: String, output: String },
    #[error("claim text is empty")]
    EmptyClaim,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("corpus contains no valid documents")]
    EmptyCorpus,
    #[error("corpus path {0} does not exist")]
    MissingPath(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("index at {path} is corrupt: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("source {source_name} unavailable: {reason}")]
    SourceUnavailable { source_name: String, reason: String },
    #[error("claim {0} has no negated text")]
    MissingNegation(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SelectionError {
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding failed: {0}")]
    EmbeddingFailed(String),
    #[error("selection failed for document {doc_id}: {reason}")]
    SelectionFailed { doc_id: String, reason: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("ranking failed: {0}")]
    RankingFailed(String),
}

#[derive(Debug, Error)]
pub enum VerdictError {
    #[error("prompt template is missing placeholder {0}")]
    TemplateMissingPlaceholder(&'static str),
    #[error("verdict provider unavailable: {0}")]
    ProviderUnavailable(#[from] ProviderError),
    #[error("no option letter received any probability")]
    NoValidOption,
    #[error("label logits must be finite and match the scheme size")]
    InvalidLogits,
}

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("expected {expected} labels, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples have no spread")]
    DegenerateSamples,
    #[error("gold label {0:?} is not in the label scheme")]
    UnknownGoldLabel(String),
    #[error("non-finite input value")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("dataset file {0} not found")]
    FileMissing(PathBuf),
    #[error("dataset {0} has no valid records")]
    EmptyDataset(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> EvaluationError {
    let path = path.into();
    move |source| EvaluationError::Io { path, source }
}
