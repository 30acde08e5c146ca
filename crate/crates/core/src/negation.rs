//! Negated-claim generation.
//!
//! A [`NegationProvider`] turns a claim into a statement with inverted truth
//! conditions. The remote provider calls a chat-completion endpoint; the
//! rule-based provider exists so the pipeline runs without credentials.

use std::collections::HashMap;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{ConfigError, NegationError, ProviderError};
use crate::http::{env_var, ClientOptions, HttpClient};
use crate::text::normalize_sentence;
use crate::types::ClaimPair;

pub const DEFAULT_NEGATION_TEMPLATE: &str = include_str!("../assets/prompts/negation.txt");

pub trait NegationProvider: Send + Sync {
    fn name(&self) -> &str;
    fn negate(&self, claim: &str) -> Result<String, NegationError>;
}

const AUXILIARIES: [&str; 8] = ["is", "are", "was", "were", "can", "will", "does", "do"];

// Third-person singular verbs common in scientific and health claims, with
// their base forms. Used when the sentence has no auxiliary.
const THIRD_PERSON_VERBS: [(&str, &str); 24] = [
    ("increases", "increase"),
    ("decreases", "decrease"),
    ("reduces", "reduce"),
    ("causes", "cause"),
    ("prevents", "prevent"),
    ("improves", "improve"),
    ("inhibits", "inhibit"),
    ("promotes", "promote"),
    ("induces", "induce"),
    ("affects", "affect"),
    ("lowers", "lower"),
    ("raises", "raise"),
    ("contains", "contain"),
    ("requires", "require"),
    ("leads", "lead"),
    ("results", "result"),
    ("protects", "protect"),
    ("enhances", "enhance"),
    ("correlates", "correlate"),
    ("cures", "cure"),
    ("kills", "kill"),
    ("helps", "help"),
    ("has", "have"),
    ("worsens", "worsen"),
];

fn bare(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Offline negation by auxiliary toggling.
///
/// 1. If the sentence contains an auxiliary (`is are was were can will does
///    do`), insert `not` after the first one, or remove a `not` that already
///    follows it.
/// 2. Otherwise, if it contains a known third-person verb (`increases`),
///    rewrite it as `does not <base>`.
/// 3. Otherwise prefix `It is not the case that `.
///
/// Tokens are rejoined with single spaces.
pub fn rule_based_negate(text: &str) -> String {
    let mut tokens: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
    if tokens.is_empty() {
        return "It is not the case that".to_owned();
    }

    if let Some(pos) = tokens
        .iter()
        .position(|t| AUXILIARIES.contains(&bare(t).as_str()))
    {
        match tokens.get(pos + 1) {
            Some(next) if next.eq_ignore_ascii_case("not") => {
                tokens.remove(pos + 1);
            }
            // "not" carrying the sentence's final punctuation
            Some(next) if bare(next) == "not" => {
                let tail: String = next.chars().skip(3).collect();
                tokens.remove(pos + 1);
                tokens[pos].push_str(&tail);
            }
            _ => {
                let aux = &tokens[pos];
                let split = aux
                    .char_indices()
                    .rev()
                    .find(|(_, c)| c.is_alphanumeric())
                    .map(|(i, c)| i + c.len_utf8())
                    .unwrap_or(aux.len());
                let (word, punct) = aux.split_at(split);
                if punct.is_empty() {
                    tokens.insert(pos + 1, "not".to_owned());
                } else {
                    let (word, punct) = (word.to_owned(), punct.to_owned());
                    tokens[pos] = word;
                    tokens.insert(pos + 1, format!("not{punct}"));
                }
            }
        }
        let out = tokens.join(" ");
        if out != text {
            return out;
        }
        return format!("It is not the case that {text}");
    }

    if let Some((pos, base)) = tokens.iter().enumerate().skip(1).find_map(|(i, t)| {
        let word = bare(t);
        THIRD_PERSON_VERBS
            .iter()
            .find(|(third, _)| *third == word)
            .map(|(_, base)| (i, *base))
    }) {
        let original = &tokens[pos];
        let trailing: String = original
            .chars()
            .rev()
            .take_while(|c| !c.is_alphanumeric())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        tokens[pos] = format!("does not {base}{trailing}");
        return tokens.join(" ");
    }

    format!("It is not the case that {text}")
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RuleBasedNegator;

impl NegationProvider for RuleBasedNegator {
    fn name(&self) -> &str {
        "rule-based"
    }

    fn negate(&self, claim: &str) -> Result<String, NegationError> {
        if claim.trim().is_empty() {
            return Err(NegationError::EmptyClaim);
        }
        Ok(rule_based_negate(claim))
    }
}

/// Looks negations up in a fixture table keyed by claim text.
#[derive(Debug, Clone, Default)]
pub struct FixtureNegator {
    table: HashMap<String, String>,
}

impl FixtureNegator {
    pub fn new(table: HashMap<String, String>) -> Self {
        Self {
            table: table
                .into_iter()
                .map(|(k, v)| (normalize_sentence(&k), v))
                .collect(),
        }
    }

    /// Reads a JSON object mapping claim text to negated text.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let table: HashMap<String, String> = serde_json::from_str(&raw)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Ok(Self::new(table))
    }
}

impl NegationProvider for FixtureNegator {
    fn name(&self) -> &str {
        "fixture"
    }

    fn negate(&self, claim: &str) -> Result<String, NegationError> {
        self.table
            .get(&normalize_sentence(claim))
            .cloned()
            .ok_or_else(|| {
                NegationError::ProviderUnavailable(ProviderError::Other(format!(
                    "no fixture negation for {claim:?}"
                )))
            })
    }
}

#[derive(Debug, Clone)]
pub struct RemoteNegationSettings {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub template: String,
    pub temperature: f64,
    pub client: ClientOptions,
}

impl RemoteNegationSettings {
    /// Reads NEGATION_API_URL, NEGATION_API_KEY and NEGATION_MODEL.
    pub fn from_env() -> Option<Self> {
        let url = env_var("NEGATION_API_URL")?;
        Some(Self {
            url,
            api_key: env_var("NEGATION_API_KEY"),
            model: env_var("NEGATION_MODEL").unwrap_or_else(|| "mistral-large-latest".into()),
            template: DEFAULT_NEGATION_TEMPLATE.to_owned(),
            temperature: 0.0,
            client: ClientOptions::default(),
        })
    }
}

/// Chat-completion negation (`POST {url}` with an OpenAI-style body).
#[derive(Debug)]
pub struct RemoteNegator {
    settings: RemoteNegationSettings,
    http: HttpClient,
}

impl RemoteNegator {
    pub fn new(settings: RemoteNegationSettings) -> Result<Self, ConfigError> {
        if !settings.template.contains("{claim}") {
            return Err(ConfigError::Invalid(
                "negation template must contain {claim}".into(),
            ));
        }
        let http = HttpClient::new(settings.client.clone());
        Ok(Self { settings, http })
    }

    pub fn request_body(&self, claim: &str) -> Value {
        json!({
            "model": self.settings.model,
            "temperature": self.settings.temperature,
            "messages": [
                {"role": "user", "content": self.settings.template.replace("{claim}", claim)}
            ]
        })
    }
}

pub(crate) fn chat_content(response: &Value) -> Option<&str> {
    response
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
}

impl NegationProvider for RemoteNegator {
    fn name(&self) -> &str {
        &self.settings.model
    }

    fn negate(&self, claim: &str) -> Result<String, NegationError> {
        let response = self.http.post_json(
            &self.settings.url,
            self.settings.api_key.as_deref(),
            &self.request_body(claim),
        )?;
        let content = chat_content(&response)
            .ok_or_else(|| ProviderError::Decode("missing choices[0].message.content".into()))?;
        Ok(content
            .trim()
            .trim_matches(|c| c == '"' || c == '“' || c == '”')
            .trim()
            .to_owned())
    }
}

/// A primary provider with an optional fallback consulted when the primary
/// fails or degenerates.
pub struct Negator {
    primary: Box<dyn NegationProvider>,
    fallback: Option<Box<dyn NegationProvider>>,
}

impl Negator {
    pub fn new(primary: Box<dyn NegationProvider>) -> Self {
        Self {
            primary,
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, fallback: Box<dyn NegationProvider>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn describe(&self) -> String {
        match &self.fallback {
            Some(f) => format!("{} (fallback: {})", self.primary.name(), f.name()),
            None => self.primary.name().to_owned(),
        }
    }

    pub fn negate_claim(&self, claim: &ClaimPair) -> Result<ClaimPair, NegationError> {
        match negate_claim(claim, self.primary.as_ref()) {
            Ok(c) => Ok(c),
            Err(err) => match &self.fallback {
                Some(fallback) => {
                    log::warn!(
                        "negation via {} failed for claim {} ({err}); using {}",
                        self.primary.name(),
                        claim.id,
                        fallback.name()
                    );
                    negate_claim(claim, fallback.as_ref())
                }
                None => Err(err),
            },
        }
    }
}

/// Fills `negated_text` using `provider`, rejecting empty output and output
/// identical to the claim after normalization.
pub fn negate_claim(
    claim: &ClaimPair,
    provider: &dyn NegationProvider,
) -> Result<ClaimPair, NegationError> {
    if claim.text.trim().is_empty() {
        return Err(NegationError::EmptyClaim);
    }
    let output = provider.negate(&claim.text)?;
    if output.trim().is_empty() || normalize_sentence(&output) == normalize_sentence(&claim.text) {
        return Err(NegationError::DegenerateNegation {
            claim: claim.text.clone(),
            output,
        });
    }
    let mut negated = claim.clone();
    negated.negated_text = Some(output);
    Ok(negated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{testserver, RetryPolicy};
    use proptest::prelude::*;
    use std::time::Duration;

    #[test]
    fn rule_examples() {
        assert_eq!(rule_based_negate("The sky is blue"), "The sky is not blue");
        assert_eq!(rule_based_negate("The sky is not blue"), "The sky is blue");
        assert_eq!(
            rule_based_negate("Vaccines cause autism"),
            "It is not the case that Vaccines cause autism"
        );
        assert_eq!(rule_based_negate("X increases Y"), "X does not increase Y");
        assert_eq!(
            rule_based_negate("Smoking is harmful."),
            "Smoking is not harmful."
        );
        assert_eq!(
            rule_based_negate("Smoking is not harmful."),
            "Smoking is harmful."
        );
        assert_eq!(rule_based_negate("It is."), "It is not.");
        assert_eq!(rule_based_negate("It is not."), "It is.");
        assert_eq!(
            rule_based_negate("Aspirin reduces fever."),
            "Aspirin does not reduce fever."
        );
    }

    #[test]
    fn rule_based_provider_rejects_empty() {
        assert!(matches!(
            RuleBasedNegator.negate("  "),
            Err(NegationError::EmptyClaim)
        ));
    }

    struct Echo;
    impl NegationProvider for Echo {
        fn name(&self) -> &str {
            "echo"
        }
        fn negate(&self, claim: &str) -> Result<String, NegationError> {
            Ok(claim.to_uppercase())
        }
    }

    struct Down;
    impl NegationProvider for Down {
        fn name(&self) -> &str {
            "down"
        }
        fn negate(&self, _: &str) -> Result<String, NegationError> {
            Err(ProviderError::Transport("connection refused".into()).into())
        }
    }

    #[test]
    fn degenerate_and_unavailable() {
        let claim = ClaimPair::new("c1", "The sky is blue").unwrap();
        assert!(matches!(
            negate_claim(&claim, &Echo),
            Err(NegationError::DegenerateNegation { .. })
        ));
        let negator = Negator::new(Box::new(Down));
        assert!(matches!(
            negator.negate_claim(&claim),
            Err(NegationError::ProviderUnavailable(_))
        ));
        let negator = Negator::new(Box::new(Down)).with_fallback(Box::new(RuleBasedNegator));
        let out = negator.negate_claim(&claim).unwrap();
        assert_eq!(out.text, "The sky is blue");
        assert_eq!(out.negated_text.as_deref(), Some("The sky is not blue"));
    }

    #[test]
    fn fixture_negator_reproduces_reported_examples() {
        let mut table = HashMap::new();
        table.insert(
            "A deficiency of vitamin B12 increases homocysteine".to_owned(),
            "A surplus of vitamin B12 decreases homocysteine".to_owned(),
        );
        table.insert(
            "5% of perinatal mortality is due to low birth weight".to_owned(),
            "95% of perinatal mortality is not due to low birth weight".to_owned(),
        );
        let fixtures = FixtureNegator::new(table);
        let c =
            ClaimPair::new("b12", "A deficiency of vitamin B12 increases homocysteine").unwrap();
        assert_eq!(
            negate_claim(&c, &fixtures).unwrap().negated_text.as_deref(),
            Some("A surplus of vitamin B12 decreases homocysteine")
        );
        let c =
            ClaimPair::new("pm", "5% of perinatal mortality is due to low birth weight").unwrap();
        assert_eq!(
            negate_claim(&c, &fixtures).unwrap().negated_text.as_deref(),
            Some("95% of perinatal mortality is not due to low birth weight")
        );
        assert!(fixtures.negate("unknown claim").is_err());
    }

    #[test]
    fn remote_negator_wire_format() {
        let reply = r#"{"choices":[{"message":{"role":"assistant","content":" \"The sky is not blue\" "}}]}"#;
        let (url, log, handle) = testserver::serve(vec![(200, reply.into())]);
        let negator = RemoteNegator::new(RemoteNegationSettings {
            url: format!("{url}/v1/chat/completions"),
            api_key: Some("secret".into()),
            model: "test-model".into(),
            template: DEFAULT_NEGATION_TEMPLATE.into(),
            temperature: 0.0,
            client: ClientOptions {
                max_in_flight: 1,
                timeout: Duration::from_secs(5),
                retry: RetryPolicy {
                    max_retries: 0,
                    base_delay: Duration::from_millis(1),
                    max_delay: Duration::from_millis(1),
                },
            },
        })
        .unwrap();
        let out = negator.negate("The sky is blue").unwrap();
        handle.join().unwrap();
        assert_eq!(out, "The sky is not blue");
        let log = log.lock().unwrap();
        assert!(log[0].request_line.starts_with("POST /v1/chat/completions"));
        let body: Value = serde_json::from_str(&log[0].body).unwrap();
        assert_eq!(body["model"], "test-model");
        assert!(body["messages"][0]["content"]
            .as_str()
            .unwrap()
            .contains("Claim: The sky is blue"));
    }

    #[test]
    fn remote_template_requires_placeholder() {
        let settings = RemoteNegationSettings {
            url: "http://127.0.0.1:9".into(),
            api_key: None,
            model: "m".into(),
            template: "no placeholder".into(),
            temperature: 0.0,
            client: ClientOptions::default(),
        };
        assert!(RemoteNegator::new(settings).is_err());
    }

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec("[a-z]{1,8}", 1..8).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn never_returns_input(s in sentence()) {
            prop_assert_ne!(rule_based_negate(&s), s);
        }

        #[test]
        fn auxiliary_rule_is_an_involution(
            head in sentence(),
            aux in prop::sample::select(AUXILIARIES.to_vec()),
            tail in sentence(),
        ) {
            // Keep the auxiliary the first one in the sentence.
            prop_assume!(!head.split(' ').any(|t| AUXILIARIES.contains(&t)));
            let s = format!("{head} {aux} {tail}");
            let once = rule_based_negate(&s);
            prop_assert_ne!(&once, &s);
            prop_assert_eq!(rule_based_negate(&once), s);
        }
    }
}
