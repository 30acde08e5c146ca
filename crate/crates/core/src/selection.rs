//! Sentence-level evidence selection from retrieved documents.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingProvider};
use crate::error::SelectionError;
use crate::retrieval::RetrievedDocument;
use crate::text::normalize_sentence;
use crate::types::{PipelineConfig, SourceKind};

/// Which query surfaced a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    FromClaim,
    FromNegation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSentence {
    pub text: String,
    pub normalized: String,
    pub source: SourceKind,
    pub doc_id: String,
    pub polarity: Polarity,
    pub similarity: f64,
    pub doc_rank: usize,
    /// Sentence index within its document.
    pub position: usize,
}

impl EvidenceSentence {
    pub fn new(
        text: impl Into<String>,
        source: SourceKind,
        doc_id: impl Into<String>,
        polarity: Polarity,
        similarity: f64,
    ) -> Self {
        let text = text.into();
        Self {
            normalized: normalize_sentence(&text),
            text,
            source,
            doc_id: doc_id.into(),
            polarity,
            similarity,
            doc_rank: 0,
            position: 0,
        }
    }
}

const MIN_SENTENCE_CHARS: usize = 3;

/// Splits after `.`, `!` or `?` when followed by whitespace or end of text.
/// No split after a lone capital initial (`J. Smith`). Segments shorter than
/// three characters after trimming are dropped.
pub fn split_sentences(body: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = body.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut push = |segment: &str| {
        let s = segment.trim();
        if s.chars().count() >= MIN_SENTENCE_CHARS {
            out.push(s.to_owned());
        }
    };
    for (i, &(byte, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let at_boundary = chars
            .get(i + 1)
            .is_none_or(|(_, next)| next.is_whitespace());
        if !at_boundary {
            continue;
        }
        if c == '.' && is_initial(&chars[..i]) {
            continue;
        }
        let end = byte + c.len_utf8();
        push(&body[start..end]);
        start = end;
    }
    push(&body[start..]);
    out
}

/// True when the token ending right before a period is a single uppercase letter.
fn is_initial(before: &[(usize, char)]) -> bool {
    match before {
        [] => false,
        [.., (_, prev)] if !prev.is_uppercase() => false,
        [(_, _)] => true,
        [.., (_, prev2), (_, _)] => prev2.is_whitespace() || matches!(prev2, '(' | '"' | '\''),
    }
}

/// Sentences picked for one query, plus per-document failures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    pub sentences: Vec<EvidenceSentence>,
    pub failures: Vec<SelectionError>,
}

fn select_from_document(
    query_vec: &[f64],
    doc: &RetrievedDocument,
    embedder: &dyn EmbeddingProvider,
    polarity: Polarity,
    keep: usize,
) -> Result<Vec<EvidenceSentence>, SelectionError> {
    let sentences = split_sentences(&doc.body);
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    let fail = |reason: String| SelectionError::SelectionFailed {
        doc_id: doc.doc_id.clone(),
        reason,
    };
    let vectors = embedder
        .embed(&sentences)
        .map_err(|e| fail(e.to_string()))?;
    if vectors.len() != sentences.len() {
        return Err(fail(format!(
            "embedder returned {} vectors for {} sentences",
            vectors.len(),
            sentences.len()
        )));
    }
    let mut scored = Vec::with_capacity(sentences.len());
    for (position, (text, vector)) in sentences.into_iter().zip(vectors).enumerate() {
        let similarity = match cosine_similarity(query_vec, &vector) {
            Ok(s) => s,
            Err(SelectionError::ZeroVector) => continue,
            Err(e) => return Err(fail(e.to_string())),
        };
        let mut sentence = EvidenceSentence::new(
            text,
            doc.source.clone(),
            doc.doc_id.clone(),
            polarity,
            similarity,
        );
        sentence.doc_rank = doc.rank;
        sentence.position = position;
        scored.push(sentence);
    }
    scored.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.position.cmp(&b.position))
    });
    scored.truncate(keep);
    Ok(scored)
}

/// Picks the `sentences_per_doc` sentences most similar to `query` from
/// each of the first `selection_docs` documents and returns their union,
/// ordered by similarity (ties: earlier document rank, then earlier position).
pub fn select_evidence(
    query: &str,
    docs: &[RetrievedDocument],
    embedder: &dyn EmbeddingProvider,
    cfg: &PipelineConfig,
    polarity: Polarity,
) -> Result<Selection, SelectionError> {
    let considered = &docs[..docs.len().min(cfg.selection_docs)];
    if considered.is_empty() {
        return Ok(Selection::default());
    }
    let query_vec = embedder
        .embed(&[query.to_owned()])?
        .pop()
        .ok_or_else(|| SelectionError::EmbeddingFailed("no vector for query".into()))?;
    if query_vec.iter().all(|x| *x == 0.0) {
        return Ok(Selection::default());
    }
    let per_doc: Vec<Result<Vec<EvidenceSentence>, SelectionError>> = considered
        .par_iter()
        .map(|doc| select_from_document(&query_vec, doc, embedder, polarity, cfg.sentences_per_doc))
        .collect();

    let mut selection = Selection::default();
    for result in per_doc {
        match result {
            Ok(scored) => selection.sentences.extend(scored),
            Err(e) => {
                log::warn!("{e}");
                selection.failures.push(e);
            }
        }
    }
    selection.sentences.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.doc_rank.cmp(&b.doc_rank))
            .then(a.position.cmp(&b.position))
    });
    Ok(selection)
}
