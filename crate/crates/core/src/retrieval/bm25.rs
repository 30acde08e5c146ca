//! Okapi BM25.
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q} IDF(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! IDF(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// Collection-level statistics needed to score any document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub doc_count: usize,
    pub total_len: usize,
    pub doc_freq: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn avg_doc_len(&self) -> f64 {
        if self.doc_count == 0 {
            0.0
        } else {
            self.total_len as f64 / self.doc_count as f64
        }
    }

    pub fn df(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }
}

/// Term frequencies and length of one tokenized document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DocTerms {
    pub len: usize,
    pub tf: HashMap<String, usize>,
}

impl DocTerms {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut doc = DocTerms::default();
        for t in tokens {
            *doc.tf.entry(t.into()).or_insert(0) += 1;
            doc.len += 1;
        }
        doc
    }
}

pub fn idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Contribution of a single query term. Zero when `tf == 0`.
pub fn term_score(
    tf: usize,
    doc_len: usize,
    avg_doc_len: f64,
    idf: f64,
    params: Bm25Params,
) -> f64 {
    if tf == 0 {
        return 0.0;
    }
    let tf = tf as f64;
    let norm = if avg_doc_len > 0.0 {
        doc_len as f64 / avg_doc_len
    } else {
        0.0
    };
    idf * (tf * (params.k1 + 1.0)) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}

/// Sums term contributions in query order; repeated query terms count repeatedly.
pub fn bm25_score(
    query_terms: &[String],
    doc: &DocTerms,
    stats: &CorpusStats,
    params: Bm25Params,
) -> f64 {
    let avgdl = stats.avg_doc_len();
    query_terms
        .iter()
        .map(|t| {
            let tf = doc.tf.get(t).copied().unwrap_or(0);
            term_score(
                tf,
                doc.len,
                avgdl,
                idf(stats.doc_count, stats.df(t)),
                params,
            )
        })
        .fold(0.0, |acc, s| acc + s)
}
