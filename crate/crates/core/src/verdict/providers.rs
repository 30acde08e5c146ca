use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Value};

use super::VerdictSource;
use crate::error::{ConfigError, ProviderError};
use crate::http::{env_var, ClientOptions, HttpClient};
use crate::negation::chat_content;
use crate::text::fnv1a64;

/// Everything a provider sees for one verdict call.
#[derive(Debug, Clone, Copy)]
pub struct VerdictRequest<'a> {
    pub claim_id: &'a str,
    pub source: &'a VerdictSource,
    pub prompt: &'a str,
    pub option_letters: &'a [char],
}

/// The emitted token and the top token log-probabilities at that position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProviderChoice {
    pub top_token: Option<String>,
    pub token_logprobs: Vec<(String, f64)>,
}

pub trait VerdictProvider: Send + Sync {
    fn name(&self) -> &str;
    fn choose(&self, request: &VerdictRequest<'_>) -> Result<ProviderChoice, ProviderError>;
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureEntry {
    claim_id: String,
    /// Absent means any source.
    #[serde(default)]
    source: Option<String>,
    logprobs: HashMap<String, f64>,
}

/// Deterministic offline verifier.
///
/// Log-probabilities come from a fixture table keyed by (claim id, source);
/// unlisted pairs get pseudo-random values in [-10, 0] derived from a stable
/// hash of the claim id, source and prompt.
#[derive(Debug, Clone, Default)]
pub struct MockVerdictProvider {
    exact: HashMap<(String, String), Vec<(String, f64)>>,
    any_source: HashMap<String, Vec<(String, f64)>>,
}

impl MockVerdictProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fixture(
        mut self,
        claim_id: &str,
        source: Option<&VerdictSource>,
        logprobs: &[(char, f64)],
    ) -> Self {
        let entry: Vec<(String, f64)> = logprobs.iter().map(|(c, v)| (c.to_string(), *v)).collect();
        match source {
            Some(s) => {
                self.exact
                    .insert((claim_id.to_owned(), s.to_string()), entry);
            }
            None => {
                self.any_source.insert(claim_id.to_owned(), entry);
            }
        }
        self
    }

    /// Reads a JSON array of `{"claim_id", "source"?, "logprobs": {"A": -0.1, ...}}`.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let entries: Vec<FixtureEntry> = serde_json::from_str(&raw)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        let mut mock = Self::default();
        for e in entries {
            let mut lp: Vec<(String, f64)> = e.logprobs.into_iter().collect();
            lp.sort_by(|a, b| a.0.cmp(&b.0));
            match e.source {
                Some(s) => {
                    let s: VerdictSource = s.parse()?;
                    mock.exact.insert((e.claim_id, s.to_string()), lp);
                }
                None => {
                    mock.any_source.insert(e.claim_id, lp);
                }
            }
        }
        Ok(mock)
    }

    fn hashed(request: &VerdictRequest<'_>) -> Vec<(String, f64)> {
        request
            .option_letters
            .iter()
            .map(|letter| {
                let key = format!(
                    "{}\u{1f}{}\u{1f}{}\u{1f}{}",
                    request.claim_id, request.source, letter, request.prompt
                );
                let h = fnv1a64(key.as_bytes());
                (letter.to_string(), -((h % 10_000) as f64) / 1_000.0)
            })
            .collect()
    }
}

impl VerdictProvider for MockVerdictProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn choose(&self, request: &VerdictRequest<'_>) -> Result<ProviderChoice, ProviderError> {
        let token_logprobs = self
            .exact
            .get(&(request.claim_id.to_owned(), request.source.to_string()))
            .or_else(|| self.any_source.get(request.claim_id))
            .cloned()
            .unwrap_or_else(|| Self::hashed(request));
        let top_token = token_logprobs
            .iter()
            .fold(None::<&(String, f64)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
            .map(|(t, _)| t.clone());
        Ok(ProviderChoice {
            top_token,
            token_logprobs,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RemoteVerdictSettings {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    /// How many alternatives to request at the answer position.
    pub top_logprobs: u32,
    pub client: ClientOptions,
}

impl RemoteVerdictSettings {
    /// Reads LLM_API_URL, LLM_API_KEY and LLM_MODEL.
    pub fn from_env() -> Option<Self> {
        Some(Self {
            url: env_var("LLM_API_URL")?,
            api_key: env_var("LLM_API_KEY"),
            model: env_var("LLM_MODEL")?,
            top_logprobs: 20,
            client: ClientOptions::default(),
        })
    }
}

/// Chat-completion verifier with log-probabilities enabled; requests a
/// single answer token at temperature 0.
#[derive(Debug)]
pub struct RemoteVerdictProvider {
    settings: RemoteVerdictSettings,
    http: HttpClient,
}

impl RemoteVerdictProvider {
    pub fn new(settings: RemoteVerdictSettings) -> Self {
        let http = HttpClient::new(settings.client.clone());
        Self { settings, http }
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": 1,
            "temperature": 0,
            "logprobs": true,
            "top_logprobs": self.settings.top_logprobs,
        })
    }

    pub fn parse_response(body: &Value) -> Result<ProviderChoice, ProviderError> {
        let top_token = chat_content(body).map(str::to_owned);
        let first = body.pointer("/choices/0/logprobs/content/0");
        let mut token_logprobs = Vec::new();
        if let Some(first) = first {
            if let (Some(t), Some(lp)) = (
                first.get("token").and_then(Value::as_str),
                first.get("logprob").and_then(Value::as_f64),
            ) {
                token_logprobs.push((t.to_owned(), lp));
            }
            for alt in first
                .get("top_logprobs")
                .and_then(Value::as_array)
                .into_iter()
                .flatten()
            {
                if let (Some(t), Some(lp)) = (
                    alt.get("token").and_then(Value::as_str),
                    alt.get("logprob").and_then(Value::as_f64),
                ) {
                    token_logprobs.push((t.to_owned(), lp));
                }
            }
        }
        if top_token.is_none() && token_logprobs.is_empty() {
            return Err(ProviderError::Decode(
                "response has neither content nor logprobs".into(),
            ));
        }
        Ok(ProviderChoice {
            top_token,
            token_logprobs,
        })
    }
}

impl VerdictProvider for RemoteVerdictProvider {
    fn name(&self) -> &str {
        &self.settings.model
    }

    fn choose(&self, request: &VerdictRequest<'_>) -> Result<ProviderChoice, ProviderError> {
        let body = self.request_body(request.prompt);
        let response =
            self.http
                .post_json(&self.settings.url, self.settings.api_key.as_deref(), &body)?;
        Self::parse_response(&response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testserver;
    use crate::types::SourceKind;
    use crate::types::{ClaimPair, LabelScheme};
    use crate::verdict::{
        letter_logits, predict_verdict, PromptTemplate, VerdictError, DEFAULT_LOGPROB_FLOOR,
    };

    fn request<'a>(source: &'a VerdictSource, letters: &'a [char]) -> VerdictRequest<'a> {
        VerdictRequest {
            claim_id: "c1",
            source,
            prompt: "prompt",
            option_letters: letters,
        }
    }

    #[test]
    fn mock_fixture_precedence() {
        let wiki = VerdictSource::Source(SourceKind::WikipediaLike);
        let web = VerdictSource::Source(SourceKind::WebSearch);
        let mock = MockVerdictProvider::new()
            .with_fixture("c1", Some(&wiki), &[('A', -0.1), ('B', -3.0)])
            .with_fixture("c1", None, &[('C', -0.2)]);
        let letters = ['A', 'B', 'C'];
        let a = mock.choose(&request(&wiki, &letters)).unwrap();
        assert_eq!(a.top_token.as_deref(), Some("A"));
        let c = mock.choose(&request(&web, &letters)).unwrap();
        assert_eq!(c.top_token.as_deref(), Some("C"));
    }

    #[test]
    fn mock_hash_fallback_is_deterministic_and_bounded() {
        let merged = VerdictSource::Merged;
        let letters = ['A', 'B', 'C', 'D'];
        let mock = MockVerdictProvider::new();
        let x = mock.choose(&request(&merged, &letters)).unwrap();
        let y = mock.choose(&request(&merged, &letters)).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.token_logprobs.len(), 4);
        assert!(x
            .token_logprobs
            .iter()
            .all(|(_, v)| (-10.0..=0.0).contains(v)));
    }

    #[test]
    fn mock_verdict_equals_confidence_of_fixture_logits() {
        let scheme = LabelScheme::builtin("scifact").unwrap();
        let claim = ClaimPair::new("c1", "Claim").unwrap();
        let mock = MockVerdictProvider::new().with_fixture(
            "c1",
            None,
            &[('A', -2.0), ('B', -0.5), ('C', -1.0)],
        );
        let v = predict_verdict(
            &claim,
            &[],
            VerdictSource::Merged,
            &mock,
            &scheme,
            &PromptTemplate::default(),
            DEFAULT_LOGPROB_FLOOR,
        )
        .unwrap();
        assert_eq!(v.label, "Refuted");
        assert_eq!(v.logits.logits, vec![-2.0, -0.5, -1.0]);
        let lse = ((-2.0f64).exp() + (-0.5f64).exp() + (-1.0f64).exp()).ln();
        assert!((v.confidence - (-0.5 - lse)).abs() < 1e-12);
    }

    struct OffScheme;
    impl VerdictProvider for OffScheme {
        fn name(&self) -> &str {
            "off"
        }
        fn choose(&self, _: &VerdictRequest<'_>) -> Result<ProviderChoice, ProviderError> {
            Ok(ProviderChoice {
                top_token: Some("Based".into()),
                token_logprobs: vec![
                    ("Based".into(), -0.05),
                    ("C".into(), -3.5),
                    ("A".into(), -4.0),
                ],
            })
        }
    }

    struct NoLetters;
    impl VerdictProvider for NoLetters {
        fn name(&self) -> &str {
            "none"
        }
        fn choose(&self, _: &VerdictRequest<'_>) -> Result<ProviderChoice, ProviderError> {
            Ok(ProviderChoice {
                top_token: Some("I".into()),
                token_logprobs: vec![("I".into(), -0.01)],
            })
        }
    }

    #[test]
    fn out_of_scheme_token_falls_back_to_valid_letters() {
        let scheme = LabelScheme::builtin("scifact").unwrap();
        let claim = ClaimPair::new("c1", "Claim").unwrap();
        let t = PromptTemplate::default();
        let v = predict_verdict(
            &claim,
            &[],
            VerdictSource::Merged,
            &OffScheme,
            &scheme,
            &t,
            -20.0,
        )
        .unwrap();
        assert_eq!(v.label, "Not Enough Info");
        assert_eq!(v.logits.logits, vec![-4.0, -20.0, -3.5]);
        let err = predict_verdict(
            &claim,
            &[],
            VerdictSource::Merged,
            &NoLetters,
            &scheme,
            &t,
            -20.0,
        )
        .unwrap_err();
        assert!(matches!(err, VerdictError::NoValidOption));
    }

    #[test]
    fn remote_provider_wire_format() {
        let reply = r#"{"choices":[{"message":{"role":"assistant","content":"B"},
            "logprobs":{"content":[{"token":"B","logprob":-0.2,
              "top_logprobs":[{"token":"B","logprob":-0.2},{"token":"A","logprob":-1.9},{"token":" C","logprob":-3.1}]}]}}]}"#;
        let (url, log, handle) = testserver::serve(vec![(200, reply.into())]);
        let provider = RemoteVerdictProvider::new(RemoteVerdictSettings {
            url: format!("{url}/v1/chat/completions"),
            api_key: Some("k".into()),
            model: "llama-3.3-70b".into(),
            top_logprobs: 5,
            client: ClientOptions::default(),
        });
        let merged = VerdictSource::Merged;
        let letters = ['A', 'B', 'C'];
        let choice = provider
            .choose(&VerdictRequest {
                claim_id: "c",
                source: &merged,
                prompt: "Which?",
                option_letters: &letters,
            })
            .unwrap();
        handle.join().unwrap();
        assert_eq!(choice.top_token.as_deref(), Some("B"));
        let scheme = LabelScheme::builtin("scifact").unwrap();
        assert_eq!(
            letter_logits(&choice, &scheme, -20.0).unwrap(),
            vec![-1.9, -0.2, -3.1]
        );
        let body: Value = serde_json::from_str(&log.lock().unwrap()[0].body).unwrap();
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["top_logprobs"], 5);
        assert_eq!(body["max_tokens"], 1);
        assert_eq!(body["messages"][0]["content"], "Which?");
    }

    #[test]
    fn remote_response_without_anything_is_a_decode_error() {
        assert!(RemoteVerdictProvider::parse_response(&json!({"choices": []})).is_err());
    }
}
