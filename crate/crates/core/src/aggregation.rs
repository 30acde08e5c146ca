//! Evidence deduplication, final ranking and cross-source aggregation.
//!
//! Per source, the sentences found for the claim (`positive`) and for its
//! negation (`negative`) are reduced to their symmetric difference under
//! normalization, split segments are merged, the survivors are ranked by
//! similarity to the original claim and truncated to `p`. The per-source
//! finals are then unioned into the evidence set given to the verifier.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingProvider};
use crate::error::{AggregationError, SelectionError};
use crate::selection::EvidenceSentence;
use crate::text::normalize_sentence;
use crate::types::SourceKind;

pub const SEGMENT_MARKER: &str = "[SEP]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub claim_id: String,
    pub source: SourceKind,
    pub positive: Vec<EvidenceSentence>,
    pub negative: Vec<EvidenceSentence>,
    pub candidates: Vec<EvidenceSentence>,
    #[serde(rename = "final")]
    pub final_evidence: Vec<EvidenceSentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedEvidence {
    pub claim_id: String,
    pub sentences: Vec<EvidenceSentence>,
    pub per_source: BTreeMap<SourceKind, EvidenceBundle>,
}

/// Keeps the first occurrence of each normalized text.
pub fn dedup_by_normalized(items: &[EvidenceSentence]) -> Vec<EvidenceSentence> {
    let mut seen = HashSet::new();
    items
        .iter()
        .filter(|s| seen.insert(s.normalized.as_str()))
        .cloned()
        .collect()
}

/// Symmetric difference keyed by normalized text. A sentence whose key
/// appears in both lists is dropped from both; duplicates within a list
/// collapse to their first occurrence. Positives come first, then negatives,
/// each in input order.
pub fn symmetric_difference_dedup(
    positive: &[EvidenceSentence],
    negative: &[EvidenceSentence],
) -> Vec<EvidenceSentence> {
    let pos_keys: HashSet<&str> = positive.iter().map(|s| s.normalized.as_str()).collect();
    let neg_keys: HashSet<&str> = negative.iter().map(|s| s.normalized.as_str()).collect();
    let mut out = dedup_by_normalized(positive);
    out.retain(|s| !neg_keys.contains(s.normalized.as_str()));
    let mut negatives = dedup_by_normalized(negative);
    negatives.retain(|s| !pos_keys.contains(s.normalized.as_str()));
    out.extend(negatives);
    out
}

fn ends_with_terminal(text: &str) -> bool {
    text.trim_end()
        .trim_end_matches(['"', '\'', ')', '”', '’'])
        .ends_with(['.', '!', '?'])
}

fn starts_lowercase(text: &str) -> bool {
    text.trim_start()
        .chars()
        .next()
        .is_some_and(char::is_lowercase)
}

fn should_join(first: &str, second: &str, heuristic: bool) -> bool {
    first.trim_end().ends_with(SEGMENT_MARKER)
        || second.trim_start().starts_with(SEGMENT_MARKER)
        || (heuristic && !ends_with_terminal(first) && starts_lowercase(second))
}

fn join_segments(first: &str, second: &str) -> String {
    let a = first.trim_end();
    let a = a.strip_suffix(SEGMENT_MARKER).unwrap_or(a).trim_end();
    let b = second.trim_start();
    let b = b.strip_prefix(SEGMENT_MARKER).unwrap_or(b).trim_start();
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.to_owned(),
        (_, true) => a.to_owned(),
        _ => format!("{a} {b}"),
    }
}

/// Fuses adjacent same-document candidates split at a `[SEP]` marker, or,
/// with `heuristic`, where the first lacks terminal punctuation and the next
/// starts lowercase. A fused sentence keeps the larger similarity.
pub fn merge_segments(candidates: &[EvidenceSentence], heuristic: bool) -> Vec<EvidenceSentence> {
    let mut out: Vec<EvidenceSentence> = Vec::with_capacity(candidates.len());
    for cand in candidates {
        if let Some(last) = out.last_mut() {
            if last.doc_id == cand.doc_id && should_join(&last.text, &cand.text, heuristic) {
                last.text = join_segments(&last.text, &cand.text);
                last.normalized = normalize_sentence(&last.text);
                last.similarity = last.similarity.max(cand.similarity);
                continue;
            }
        }
        out.push(cand.clone());
    }
    out
}

/// Re-scores candidates against the original claim, sorts by similarity
/// (ties: claim-side before negation-side, then input order) and keeps `p`.
/// Candidates whose embedding is all zeros cannot be scored and are dropped.
pub fn rank_and_truncate(
    candidates: &[EvidenceSentence],
    claim: &str,
    embedder: &dyn EmbeddingProvider,
    p: usize,
) -> Result<Vec<EvidenceSentence>, AggregationError> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let failed = |e: SelectionError| AggregationError::RankingFailed(e.to_string());
    let claim_vec = embedder
        .embed(&[claim.to_owned()])
        .map_err(failed)?
        .pop()
        .ok_or_else(|| AggregationError::RankingFailed("no vector for claim".into()))?;
    let texts: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
    let vectors = embedder.embed(&texts).map_err(failed)?;
    if vectors.len() != texts.len() {
        return Err(AggregationError::RankingFailed(format!(
            "embedder returned {} vectors for {} candidates",
            vectors.len(),
            texts.len()
        )));
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for (i, (cand, vector)) in candidates.iter().zip(&vectors).enumerate() {
        match cosine_similarity(&claim_vec, vector) {
            Ok(sim) => {
                let mut c = cand.clone();
                c.similarity = sim;
                scored.push((i, c));
            }
            Err(SelectionError::ZeroVector) => {}
            Err(e) => return Err(failed(e)),
        }
    }
    scored.sort_by(|(ia, a), (ib, b)| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.polarity.cmp(&b.polarity))
            .then(ia.cmp(ib))
    });
    Ok(scored.into_iter().take(p).map(|(_, c)| c).collect())
}

/// Runs dedup, merge and final ranking for one source.
///
/// With `dual == false` (claim-only condition) there is no negative side:
/// the positives are deduplicated on their own instead of differenced.
#[allow(clippy::too_many_arguments)]
pub fn build_bundle(
    claim_id: &str,
    source: SourceKind,
    positive: Vec<EvidenceSentence>,
    negative: Vec<EvidenceSentence>,
    claim: &str,
    embedder: &dyn EmbeddingProvider,
    p: usize,
    merge_heuristic: bool,
    dual: bool,
) -> Result<EvidenceBundle, AggregationError> {
    let differenced = if dual {
        symmetric_difference_dedup(&positive, &negative)
    } else {
        dedup_by_normalized(&positive)
    };
    let candidates = dedup_by_normalized(&merge_segments(&differenced, merge_heuristic));
    let final_evidence = rank_and_truncate(&candidates, claim, embedder, p)?;
    Ok(EvidenceBundle {
        claim_id: claim_id.to_owned(),
        source,
        positive,
        negative,
        candidates,
        final_evidence,
    })
}

/// Union of the per-source finals by normalized text. Sources are visited in
/// the fixed order wikipedia, pubmed, web, custom, so the first of those to
/// contribute a sentence supplies its provenance.
pub fn aggregate_sources(
    claim_id: &str,
    bundles: BTreeMap<SourceKind, EvidenceBundle>,
) -> AggregatedEvidence {
    let mut seen = HashSet::new();
    let mut sentences = Vec::new();
    for bundle in bundles.values() {
        for s in &bundle.final_evidence {
            if seen.insert(s.normalized.clone()) {
                sentences.push(s.clone());
            }
        }
    }
    AggregatedEvidence {
        claim_id: claim_id.to_owned(),
        sentences,
        per_source: bundles,
    }
}

/// One aggregated-evidence record per line.
pub fn write_evidence_jsonl(path: &Path, records: &[AggregatedEvidence]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_evidence_jsonl(path: &Path) -> std::io::Result<Vec<AggregatedEvidence>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: {e}", i + 1),
            )
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashedBowEmbedder;
    use crate::selection::Polarity;
    use proptest::prelude::*;

    fn s(text: &str, pol: Polarity) -> EvidenceSentence {
        EvidenceSentence::new(text, SourceKind::WikipediaLike, "d", pol, 0.0)
    }

    fn texts(v: &[EvidenceSentence]) -> Vec<&str> {
        v.iter().map(|s| s.text.as_str()).collect()
    }

    #[test]
    fn symmetric_difference_examples() {
        let a = s("A.", Polarity::FromClaim);
        let b = s("B.", Polarity::FromClaim);
        let c = s("C.", Polarity::FromNegation);
        let b_neg = s("b", Polarity::FromNegation);
        assert!(
            symmetric_difference_dedup(&[a.clone(), b.clone()], &[a.clone(), b.clone()]).is_empty()
        );
        assert_eq!(
            texts(&symmetric_difference_dedup(std::slice::from_ref(&a), std::slice::from_ref(&c))),
            ["A.", "C."]
        );
        assert_eq!(
            texts(&symmetric_difference_dedup(
                &[a.clone(), b.clone()],
                &[b_neg, c.clone()]
            )),
            ["A.", "C."]
        );
        assert_eq!(
            texts(&symmetric_difference_dedup(&[a.clone(), a.clone()], &[])),
            ["A."]
        );
    }

    #[test]
    fn merge_examples() {
        let mut first = s("the drug [SEP]", Polarity::FromClaim);
        first.similarity = 0.2;
        let mut second = s("reduces risk.", Polarity::FromClaim);
        second.similarity = 0.7;
        let merged = merge_segments(&[first, second], true);
        assert_eq!(texts(&merged), ["the drug reduces risk."]);
        assert_eq!(merged[0].similarity, 0.7);
        assert_eq!(merged[0].normalized, "the drug reduces risk");

        let mut x = s("One sentence.", Polarity::FromClaim);
        x.doc_id = "d1".into();
        let mut y = s("another one.", Polarity::FromClaim);
        y.doc_id = "d2".into();
        assert_eq!(merge_segments(&[x.clone(), y.clone()], true).len(), 2);
        assert!(merge_segments(&[], true).is_empty());
    }

    #[test]
    fn dangling_segment_heuristic_can_be_disabled() {
        let a = s("Patients treated with statins", Polarity::FromClaim);
        let b = s("showed fewer events.", Polarity::FromClaim);
        assert_eq!(
            texts(&merge_segments(&[a.clone(), b.clone()], true)),
            ["Patients treated with statins showed fewer events."]
        );
        assert_eq!(merge_segments(&[a.clone(), b.clone()], false).len(), 2);
        // A complete sentence never absorbs the next one.
        let c = s("Statins work.", Polarity::FromClaim);
        assert_eq!(merge_segments(&[c, b], true).len(), 2);
    }

    #[test]
    fn rank_and_truncate_orders_and_truncates() {
        let e = HashedBowEmbedder::default();
        let cands = vec![
            s("zebras run fast.", Polarity::FromClaim),
            s("vitamin b12 lowers homocysteine.", Polarity::FromNegation),
            s(
                "vitamin b12 lowers homocysteine levels.",
                Polarity::FromClaim,
            ),
        ];
        let out = rank_and_truncate(&cands, "Vitamin B12 lowers homocysteine", &e, 2).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].text, "vitamin b12 lowers homocysteine.");
        assert!((out[0].similarity - 1.0).abs() < 1e-12);
        assert!(out[0].similarity >= out[1].similarity);
        assert!(rank_and_truncate(&[], "x", &e, 3).unwrap().is_empty());
        let all = rank_and_truncate(&cands, "Vitamin B12 lowers homocysteine", &e, 10).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn rank_ties_prefer_claim_side_then_position() {
        let e = HashedBowEmbedder::default();
        let cands = vec![
            s("cats purr.", Polarity::FromNegation),
            s("Cats purr!", Polarity::FromClaim),
            s("cats, purr", Polarity::FromClaim),
        ];
        let out = rank_and_truncate(&cands, "cats purr", &e, 3).unwrap();
        assert_eq!(texts(&out), ["Cats purr!", "cats, purr", "cats purr."]);
    }

    #[test]
    fn aggregation_union_keeps_first_source_provenance() {
        let mk = |text: &str, src: SourceKind| {
            EvidenceSentence::new(text, src, "d", Polarity::FromClaim, 0.5)
        };
        let bundle = |src: SourceKind, finals: Vec<EvidenceSentence>| EvidenceBundle {
            claim_id: "c".into(),
            source: src,
            positive: vec![],
            negative: vec![],
            candidates: finals.clone(),
            final_evidence: finals,
        };
        let mut bundles = BTreeMap::new();
        bundles.insert(
            SourceKind::WebSearch,
            bundle(
                SourceKind::WebSearch,
                vec![
                    mk("Shared.", SourceKind::WebSearch),
                    mk("Web only.", SourceKind::WebSearch),
                ],
            ),
        );
        bundles.insert(
            SourceKind::WikipediaLike,
            bundle(
                SourceKind::WikipediaLike,
                vec![mk("shared", SourceKind::WikipediaLike)],
            ),
        );
        let agg = aggregate_sources("c", bundles);
        assert_eq!(texts(&agg.sentences), ["shared", "Web only."]);
        assert_eq!(agg.sentences[0].source, SourceKind::WikipediaLike);
        assert_eq!(agg.per_source.len(), 2);
    }

    #[test]
    fn evidence_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        let mut bundles = BTreeMap::new();
        let finals = vec![s("A fact.", Polarity::FromClaim)];
        bundles.insert(
            SourceKind::PubMedLike,
            EvidenceBundle {
                claim_id: "c1".into(),
                source: SourceKind::PubMedLike,
                positive: finals.clone(),
                negative: vec![],
                candidates: finals.clone(),
                final_evidence: finals,
            },
        );
        let record = aggregate_sources("c1", bundles);
        write_evidence_jsonl(&path, std::slice::from_ref(&record)).unwrap();
        let raw = fs::read_to_string(&path).unwrap();
        assert_eq!(raw.lines().count(), 1);
        assert!(raw.contains("\"final\":"));
        assert_eq!(read_evidence_jsonl(&path).unwrap(), vec![record]);
    }

    fn sentence_set() -> impl Strategy<Value = Vec<EvidenceSentence>> {
        prop::collection::vec(
            (
                prop::sample::select(vec!["a", "B", "c.", "a!", "d", "E e", "e, e"]),
                any::<bool>(),
            ),
            0..8,
        )
        .prop_map(|items| {
            items
                .into_iter()
                .map(|(t, neg)| {
                    s(
                        t,
                        if neg {
                            Polarity::FromNegation
                        } else {
                            Polarity::FromClaim
                        },
                    )
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn merge_never_grows(cands in sentence_set()) {
            prop_assert!(merge_segments(&cands, true).len() <= cands.len());
        }

        #[test]
        fn ranked_similarities_non_increasing(cands in sentence_set(), p in 1usize..6) {
            let out = rank_and_truncate(&cands, "a b c d e", &HashedBowEmbedder::default(), p).unwrap();
            prop_assert!(out.len() <= p);
            prop_assert!(out.windows(2).all(|w| w[0].similarity >= w[1].similarity));
        }
    }
}
