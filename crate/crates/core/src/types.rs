//! Domain vocabulary shared by every pipeline stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ConfigError;
use crate::text::normalize_sentence;

/// A claim `c` and, once generated, its negated counterpart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimPair {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negated_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
}

impl ClaimPair {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, ConfigError> {
        let claim = Self {
            id: id.into(),
            text: text.into(),
            negated_text: None,
            gold_label: None,
        };
        claim.validate()?;
        Ok(claim)
    }

    pub fn with_negation(mut self, negated: impl Into<String>) -> Result<Self, ConfigError> {
        self.negated_text = Some(negated.into());
        self.validate()?;
        Ok(self)
    }

    pub fn with_gold_label(mut self, label: impl Into<String>) -> Self {
        self.gold_label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.text.trim().is_empty() {
            return Err(ConfigError::Invalid(format!(
                "claim {} has empty text",
                self.id
            )));
        }
        if let Some(neg) = &self.negated_text {
            if neg.trim().is_empty() {
                return Err(ConfigError::Invalid(format!(
                    "claim {} has empty negation",
                    self.id
                )));
            }
            if normalize_sentence(neg) == normalize_sentence(&self.text) {
                return Err(ConfigError::Invalid(format!(
                    "claim {} negation equals the claim after normalization",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// A knowledge source. Variant order is the fixed provenance order used when
/// evidence is unioned across sources.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceKind {
    WikipediaLike,
    PubMedLike,
    WebSearch,
    Custom(String),
}

impl SourceKind {
    pub const STANDARD: [SourceKind; 3] = [
        SourceKind::WikipediaLike,
        SourceKind::PubMedLike,
        SourceKind::WebSearch,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            SourceKind::WikipediaLike => "wikipedia",
            SourceKind::PubMedLike => "pubmed",
            SourceKind::WebSearch => "web",
            SourceKind::Custom(name) => name,
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wikipedia" | "wiki" => Ok(SourceKind::WikipediaLike),
            "pubmed" => Ok(SourceKind::PubMedLike),
            "web" | "google" => Ok(SourceKind::WebSearch),
            "" | "merged" => Err(ConfigError::UnknownSource(s.to_owned())),
            other if other.starts_with("custom:") && other.len() > 7 => {
                Ok(SourceKind::Custom(s.trim()[7..].to_owned()))
            }
            _ => Err(ConfigError::UnknownSource(s.to_owned())),
        }
    }
}

impl Serialize for SourceKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SourceKind::Custom(name) => serializer.serialize_str(&format!("custom:{name}")),
            other => serializer.serialize_str(other.as_str()),
        }
    }
}

impl<'de> Deserialize<'de> for SourceKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dataset label set with the single-character option tokens shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelScheme {
    pub name: String,
    pub labels: Vec<String>,
    pub option_letters: Vec<char>,
}

#[derive(Deserialize)]
struct RawScheme {
    name: String,
    labels: Vec<String>,
    #[serde(default)]
    option_letters: Option<Vec<char>>,
}

impl<'de> Deserialize<'de> for LabelScheme {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawScheme::deserialize(deserializer)?;
        match raw.option_letters {
            Some(letters) => LabelScheme::with_letters(raw.name, raw.labels, letters),
            None => LabelScheme::new(raw.name, raw.labels),
        }
        .map_err(serde::de::Error::custom)
    }
}

const BUILTIN_SCHEMES: [(&str, &str); 4] = [
    ("scifact", include_str!("../assets/schemes/scifact.json")),
    ("averitec", include_str!("../assets/schemes/averitec.json")),
    ("liar", include_str!("../assets/schemes/liar.json")),
    (
        "pubhealth",
        include_str!("../assets/schemes/pubhealth.json"),
    ),
];

impl LabelScheme {
    /// Letters default to A, B, C, ... in label order.
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Result<Self, ConfigError> {
        let letters = (0..labels.len())
            .map(|i| {
                u8::try_from(i)
                    .ok()
                    .filter(|i| *i < 26)
                    .map(|i| char::from(b'A' + i))
                    .ok_or_else(|| ConfigError::Invalid("more than 26 labels".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_letters(name, labels, letters)
    }

    pub fn with_letters(
        name: impl Into<String>,
        labels: Vec<String>,
        option_letters: Vec<char>,
    ) -> Result<Self, ConfigError> {
        let name = name.into();
        if labels.len() < 2 {
            return Err(ConfigError::Invalid(format!(
                "scheme {name} needs at least 2 labels"
            )));
        }
        if labels.len() != option_letters.len() {
            return Err(ConfigError::Invalid(format!(
                "scheme {name} has {} labels but {} option letters",
                labels.len(),
                option_letters.len()
            )));
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(ConfigError::Invalid(format!(
                    "scheme {name} repeats label {label}"
                )));
            }
            if option_letters[..i].contains(&option_letters[i]) {
                return Err(ConfigError::Invalid(format!(
                    "scheme {name} repeats option letter {}",
                    option_letters[i]
                )));
            }
            if option_letters[i].is_whitespace() {
                return Err(ConfigError::Invalid(format!(
                    "scheme {name} has a blank option letter"
                )));
            }
        }
        Ok(Self {
            name,
            labels,
            option_letters,
        })
    }

    /// One of the four shipped benchmark schemes (scifact, averitec, liar, pubhealth).
    pub fn builtin(name: &str) -> Result<Self, ConfigError> {
        let wanted = name.to_ascii_lowercase();
        let (_, json) = BUILTIN_SCHEMES
            .iter()
            .find(|(n, _)| *n == wanted)
            .ok_or_else(|| {
                ConfigError::Invalid(format!("no built-in label scheme named {name}"))
            })?;
        serde_json::from_str(json).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_SCHEMES.iter().map(|(n, _)| *n)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn letter_index(&self, letter: char) -> Option<usize> {
        self.option_letters.iter().position(|l| *l == letter)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Case-insensitive lookup returning the canonical spelling.
    pub fn canonical_label(&self, label: &str) -> Option<&str> {
        let wanted = label.trim();
        self.labels
            .iter()
            .find(|l| l.eq_ignore_ascii_case(wanted))
            .map(String::as_str)
    }
}

/// Stage sizes: `retrieval_depth` documents per source, the first
/// `selection_docs` of them mined for sentences, `sentences_per_doc` kept per
/// document and `final_top_p` kept per source after ranking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub retrieval_depth: usize,
    pub selection_docs: usize,
    pub sentences_per_doc: usize,
    pub final_top_p: usize,
    pub seed: u64,
    pub merge_heuristic: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            retrieval_depth: 5,
            selection_docs: 5,
            sentences_per_doc: 1,
            final_top_p: 5,
            seed: 0,
            merge_heuristic: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("retrieval_depth", self.retrieval_depth),
            ("selection_docs", self.selection_docs),
            ("sentences_per_doc", self.sentences_per_doc),
            ("final_top_p", self.final_top_p),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if self.selection_docs > self.retrieval_depth {
            return Err(ConfigError::Invalid(format!(
                "selection_docs ({}) exceeds retrieval_depth ({})",
                self.selection_docs, self.retrieval_depth
            )));
        }
        Ok(())
    }
}
