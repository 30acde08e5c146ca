//! Zero-shot veracity prediction and label confidence.
//!
//! The verifier is prompted to answer with a single option letter. The
//! per-letter log-probabilities it reports form the label logits `z`; the
//! predicted label is `argmax z` and its confidence is the log-softmax at
//! that index, `z[argmax] − logsumexp(z)`.

mod prompt;
mod providers;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use prompt::{
    build_prompt, render_evidence, render_options, PromptTemplate, DEFAULT_VERDICT_TEMPLATE,
    NO_EVIDENCE,
};
pub use providers::{
    MockVerdictProvider, ProviderChoice, RemoteVerdictProvider, RemoteVerdictSettings,
    VerdictProvider, VerdictRequest,
};

use crate::error::{ConfigError, VerdictError};
use crate::selection::EvidenceSentence;
use crate::types::{ClaimPair, LabelScheme, SourceKind};

pub const DEFAULT_LOGPROB_FLOOR: f64 = -20.0;

/// Evidence condition a verdict was produced under.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VerdictSource {
    Source(SourceKind),
    Merged,
}

impl fmt::Display for VerdictSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerdictSource::Source(SourceKind::Custom(name)) => write!(f, "custom:{name}"),
            VerdictSource::Source(kind) => f.write_str(kind.as_str()),
            VerdictSource::Merged => f.write_str("merged"),
        }
    }
}

impl FromStr for VerdictSource {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("merged") {
            Ok(VerdictSource::Merged)
        } else {
            s.parse().map(VerdictSource::Source)
        }
    }
}

impl Serialize for VerdictSource {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VerdictSource {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Per-option logits in scheme order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLogits {
    pub scheme: LabelScheme,
    pub logits: Vec<f64>,
}

impl LabelLogits {
    pub fn new(scheme: LabelScheme, logits: Vec<f64>) -> Result<Self, VerdictError> {
        if logits.len() != scheme.len() || logits.iter().any(|z| !z.is_finite()) {
            return Err(VerdictError::InvalidLogits);
        }
        Ok(Self { scheme, logits })
    }

    /// Index of the largest logit; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.logits)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `ln Σ exp(z_i)` with the maximum subtracted first.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(values: &[f64]) -> Vec<f64> {
    let lse = logsumexp(values);
    values.iter().map(|v| v - lse).collect()
}

/// Predicted label and its log-probability under softmax.
pub fn confidence_from_logits(z: &LabelLogits) -> (String, f64) {
    let best = z.argmax();
    let confidence = z.logits[best] - logsumexp(&z.logits);
    (z.scheme.labels[best].clone(), confidence.min(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VeracityVerdict {
    pub claim_id: String,
    pub source: VerdictSource,
    pub label: String,
    /// Log-probability of `label`; always ≤ 0.
    pub confidence: f64,
    pub logits: LabelLogits,
}

impl VeracityVerdict {
    pub fn from_logits(claim_id: &str, source: VerdictSource, logits: LabelLogits) -> Self {
        let (label, confidence) = confidence_from_logits(&logits);
        Self {
            claim_id: claim_id.to_owned(),
            source,
            label,
            confidence,
            logits,
        }
    }
}

fn match_letter(token: &str, scheme: &LabelScheme) -> Option<usize> {
    let core = token
        .trim()
        .trim_matches(|c: char| matches!(c, '(' | ')' | '.' | ':' | '*' | '"' | '\'' | '[' | ']'));
    let mut chars = core.chars();
    let c = chars.next()?;
    if chars.next().is_some() {
        return None;
    }
    scheme
        .letter_index(c)
        .or_else(|| scheme.letter_index(c.to_ascii_uppercase()))
}

/// Maps a provider's token log-probabilities onto the scheme's letters.
///
/// Letters the provider did not report get `floor`. When no letter appears
/// among the log-probabilities but the emitted token is a valid letter, that
/// letter gets log-probability 0. Returns `None` when nothing maps.
pub fn letter_logits(
    choice: &ProviderChoice,
    scheme: &LabelScheme,
    floor: f64,
) -> Option<Vec<f64>> {
    let mut logits = vec![f64::NEG_INFINITY; scheme.len()];
    for (token, lp) in &choice.token_logprobs {
        if let Some(i) = match_letter(token, scheme) {
            if lp.is_finite() {
                logits[i] = logits[i].max(*lp);
            }
        }
    }
    if logits.iter().all(|z| *z == f64::NEG_INFINITY) {
        let i = choice
            .top_token
            .as_deref()
            .and_then(|t| match_letter(t, scheme))?;
        logits[i] = 0.0;
    }
    Some(
        logits
            .into_iter()
            .map(|z| {
                if z == f64::NEG_INFINITY {
                    floor
                } else {
                    z.max(floor)
                }
            })
            .collect(),
    )
}

/// Prompts `provider` with the claim and evidence and turns the answer into a verdict.
pub fn predict_verdict(
    claim: &ClaimPair,
    evidence: &[EvidenceSentence],
    source: VerdictSource,
    provider: &dyn VerdictProvider,
    scheme: &LabelScheme,
    template: &PromptTemplate,
    floor: f64,
) -> Result<VeracityVerdict, VerdictError> {
    let prompt = build_prompt(&claim.text, evidence, scheme, template)?;
    let request = VerdictRequest {
        claim_id: &claim.id,
        source: &source,
        prompt: &prompt,
        option_letters: &scheme.option_letters,
    };
    let choice = provider.choose(&request)?;
    let logits = letter_logits(&choice, scheme, floor).ok_or(VerdictError::NoValidOption)?;
    let logits = LabelLogits::new(scheme.clone(), logits)?;
    Ok(VeracityVerdict::from_logits(&claim.id, source, logits))
}
