use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_sources, build_bundle, AggregatedEvidence, EvidenceBundle};
use crate::analysis::{profile_from_verdicts, AgreementRegime};
use crate::embedding::EmbeddingProvider;
use crate::error::ConfigError;
use crate::negation::Negator;
use crate::retrieval::{retrieve_dual, retrieve_original, KnowledgeSource, RetrievedDocument};
use crate::selection::{select_evidence, EvidenceSentence, Polarity};
use crate::types::{ClaimPair, LabelScheme, PipelineConfig, SourceKind};
use crate::verdict::{
    predict_verdict, PromptTemplate, VeracityVerdict, VerdictProvider, VerdictSource,
};

/// Whether evidence is gathered for the claim alone or for the claim and its negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    OriginalOnly,
    OriginalPlusNegated,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::OriginalOnly, Condition::OriginalPlusNegated];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::OriginalOnly => "original",
            Condition::OriginalPlusNegated => "original+negated",
        }
    }

    pub fn is_dual(self) -> bool {
        self == Condition::OriginalPlusNegated
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" | "original-only" | "original_only" => Ok(Condition::OriginalOnly),
            "original+negated"
            | "original-plus-negated"
            | "original_plus_negated"
            | "dual"
            | "negated" => Ok(Condition::OriginalPlusNegated),
            other => Err(ConfigError::Invalid(format!(
                "unknown condition {other:?} (expected \"original\" or \"original+negated\")"
            ))),
        }
    }
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Everything the per-claim pipeline calls out to.
pub struct Providers {
    pub sources: BTreeMap<SourceKind, Arc<dyn KnowledgeSource>>,
    /// Needed only when negations are not supplied with the claims.
    pub negator: Option<Negator>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub verifier: Arc<dyn VerdictProvider>,
    pub template: PromptTemplate,
    pub logprob_floor: f64,
}

impl Providers {
    /// Human-readable identity of every provider, for run manifests.
    pub fn identities(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for (kind, source) in &self.sources {
            out.insert(format!("source.{kind}"), source.describe());
        }
        out.insert(
            "negation".into(),
            self.negator
                .as_ref()
                .map_or_else(|| "none".into(), Negator::describe),
        );
        out.insert("embedding".into(), self.embedder.name().to_owned());
        out.insert("verdict".into(), self.verifier.name().to_owned());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Negation,
    Retrieval,
    Selection,
    Aggregation,
    Verdict,
}

/// A (claim, source) pair that produced no verdict, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abstention {
    pub source: VerdictSource,
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocRef {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

impl From<&RetrievedDocument> for DocRef {
    fn from(d: &RetrievedDocument) -> Self {
        Self {
            doc_id: d.doc_id.clone(),
            rank: d.rank,
            score: d.score,
        }
    }
}

/// What one source returned for the claim and its negation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub for_claim: Vec<DocRef>,
    pub for_negation: Vec<DocRef>,
    /// Documents whose sentences could not be scored.
    pub selection_failures: Vec<String>,
}

/// Full record of one claim's trip through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimTrace {
    pub claim: ClaimPair,
    pub condition: Condition,
    pub retrieval: BTreeMap<SourceKind, RetrievalTrace>,
    /// Per-source bundles and their union, the evidence set `E_i`.
    pub evidence: AggregatedEvidence,
    pub verdicts: Vec<VeracityVerdict>,
    pub abstentions: Vec<Abstention>,
    pub regime: Option<AgreementRegime>,
    pub dispersion: Option<f64>,
}

impl ClaimTrace {
    pub fn verdict(&self, source: &VerdictSource) -> Option<&VeracityVerdict> {
        self.verdicts.iter().find(|v| &v.source == source)
    }

    pub fn merged_evidence(&self) -> &[EvidenceSentence] {
        &self.evidence.sentences
    }
}

type SourceOutcome = Result<(RetrievalTrace, EvidenceBundle), (Stage, String, RetrievalTrace)>;

fn run_source(
    claim: &ClaimPair,
    source: &dyn KnowledgeSource,
    providers: &Providers,
    cfg: &PipelineConfig,
    dual: bool,
) -> SourceOutcome {
    let kind = source.kind();
    let retrieved = if dual {
        retrieve_dual(claim, source, cfg)
    } else {
        retrieve_original(claim, source, cfg)
    }
    .map_err(|e| (Stage::Retrieval, e.to_string(), RetrievalTrace::default()))?;

    let mut trace = RetrievalTrace {
        for_claim: retrieved.positive.iter().map(DocRef::from).collect(),
        for_negation: retrieved.negative.iter().map(DocRef::from).collect(),
        selection_failures: Vec::new(),
    };
    let embedder = providers.embedder.as_ref();
    let positive = select_evidence(
        &claim.text,
        &retrieved.positive,
        embedder,
        cfg,
        Polarity::FromClaim,
    );
    let negative = match (&claim.negated_text, dual) {
        (Some(neg), true) => select_evidence(
            neg,
            &retrieved.negative,
            embedder,
            cfg,
            Polarity::FromNegation,
        ),
        _ => Ok(Default::default()),
    };
    let (positive, negative) = match (positive, negative) {
        (Ok(p), Ok(n)) => (p, n),
        (Err(e), _) | (_, Err(e)) => return Err((Stage::Selection, e.to_string(), trace)),
    };
    trace.selection_failures = positive
        .failures
        .iter()
        .chain(&negative.failures)
        .map(ToString::to_string)
        .collect();

    match build_bundle(
        &claim.id,
        kind,
        positive.sentences,
        negative.sentences,
        &claim.text,
        embedder,
        cfg.final_top_p,
        cfg.merge_heuristic,
        dual,
    ) {
        Ok(bundle) => Ok((trace, bundle)),
        Err(e) => Err((Stage::Aggregation, e.to_string(), trace)),
    }
}

/// Runs negation (when the condition needs it), per-source retrieval,
/// selection and aggregation, then one verdict per requested source and,
/// if requested, one over the merged evidence.
///
/// Failures never abort: the affected (claim, source) pairs are recorded as
/// abstentions.
pub fn verify_claim(
    claim: &ClaimPair,
    targets: &[VerdictSource],
    condition: Condition,
    providers: &Providers,
    cfg: &PipelineConfig,
    scheme: &LabelScheme,
) -> ClaimTrace {
    let mut claim = claim.clone();
    let dual = condition.is_dual();
    if !dual {
        claim.negated_text = None;
    }

    let negation_failure = if dual && claim.negated_text.is_none() {
        match &providers.negator {
            Some(negator) => match negator.negate_claim(&claim) {
                Ok(negated) => {
                    claim = negated;
                    None
                }
                Err(e) => Some(e.to_string()),
            },
            None => Some("no negation provider configured".to_owned()),
        }
    } else {
        None
    };

    // The merged verdict needs evidence from every configured source, even
    // those without a verdict of their own.
    let mut kinds: Vec<SourceKind> = targets
        .iter()
        .filter_map(|t| match t {
            VerdictSource::Source(kind) => Some(kind.clone()),
            VerdictSource::Merged => None,
        })
        .collect();
    if targets.contains(&VerdictSource::Merged) {
        kinds.extend(providers.sources.keys().cloned());
    }
    kinds.sort();
    kinds.dedup();

    let mut failures: BTreeMap<VerdictSource, (Stage, String)> = BTreeMap::new();
    let mut retrieval = BTreeMap::new();
    let mut bundles = BTreeMap::new();

    if let Some(reason) = &negation_failure {
        for t in targets {
            failures.insert(t.clone(), (Stage::Negation, reason.clone()));
        }
    } else {
        let outcomes: Vec<(SourceKind, Option<SourceOutcome>)> = kinds
            .par_iter()
            .map(|kind| {
                let outcome = providers
                    .sources
                    .get(kind)
                    .map(|source| run_source(&claim, source.as_ref(), providers, cfg, dual));
                (kind.clone(), outcome)
            })
            .collect();
        for (kind, outcome) in outcomes {
            let target = VerdictSource::Source(kind.clone());
            match outcome {
                None => {
                    failures.insert(
                        target,
                        (Stage::Retrieval, format!("source {kind} is not configured")),
                    );
                }
                Some(Ok((trace, bundle))) => {
                    retrieval.insert(kind.clone(), trace);
                    bundles.insert(kind, bundle);
                }
                Some(Err((stage, reason, trace))) => {
                    log::warn!("claim {}: {kind} failed at {stage:?}: {reason}", claim.id);
                    retrieval.insert(kind, trace);
                    failures.insert(target, (stage, reason));
                }
            }
        }
    }

    let evidence = aggregate_sources(&claim.id, bundles);
    let empty: Vec<EvidenceSentence> = Vec::new();
    let results: Vec<Result<VeracityVerdict, Abstention>> = targets
        .par_iter()
        .map(|target| {
            if let Some((stage, reason)) = failures.get(target) {
                return Err(Abstention {
                    source: target.clone(),
                    stage: *stage,
                    reason: reason.clone(),
                });
            }
            let sentences = match target {
                VerdictSource::Source(kind) => evidence
                    .per_source
                    .get(kind)
                    .map_or(&empty, |b| &b.final_evidence),
                VerdictSource::Merged => &evidence.sentences,
            };
            predict_verdict(
                &claim,
                sentences,
                target.clone(),
                providers.verifier.as_ref(),
                scheme,
                &providers.template,
                providers.logprob_floor,
            )
            .map_err(|e| {
                log::warn!("claim {}: verdict for {target} failed: {e}", claim.id);
                Abstention {
                    source: target.clone(),
                    stage: Stage::Verdict,
                    reason: e.to_string(),
                }
            })
        })
        .collect();

    let mut verdicts = Vec::new();
    let mut abstentions = Vec::new();
    for r in results {
        match r {
            Ok(v) => verdicts.push(v),
            Err(a) => abstentions.push(a),
        }
    }
    verdicts.sort_by(|a, b| a.source.cmp(&b.source));
    abstentions.sort_by(|a, b| a.source.cmp(&b.source));
    let profile = profile_from_verdicts(&claim.id, &verdicts);

    ClaimTrace {
        claim,
        condition,
        retrieval,
        evidence,
        verdicts,
        abstentions,
        regime: profile.regime,
        dispersion: profile.dispersion,
    }
}
