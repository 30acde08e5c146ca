use crate::error::VerdictError;
use crate::selection::EvidenceSentence;
use crate::types::LabelScheme;

pub const DEFAULT_VERDICT_TEMPLATE: &str = include_str!("../../assets/prompts/verdict.txt");
pub const NO_EVIDENCE: &str = "No evidence retrieved.";

const REQUIRED: [&str; 3] = ["claim", "evidence", "options"];

/// Plain-text prompt with `{claim}`, `{evidence}` and `{options}`
/// placeholders, plus an optional `{letters}` ("A, B, C").
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            text: DEFAULT_VERDICT_TEMPLATE.to_owned(),
        }
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, VerdictError> {
        let template = Self { text: text.into() };
        template.check()?;
        Ok(template)
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    fn check(&self) -> Result<(), VerdictError> {
        for name in REQUIRED {
            if !self.text.contains(&format!("{{{name}}}")) {
                return Err(VerdictError::TemplateMissingPlaceholder(match name {
                    "claim" => "{claim}",
                    "evidence" => "{evidence}",
                    _ => "{options}",
                }));
            }
        }
        Ok(())
    }
}

pub fn render_evidence(evidence: &[EvidenceSentence]) -> String {
    if evidence.is_empty() {
        return NO_EVIDENCE.to_owned();
    }
    evidence
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.text.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_options(scheme: &LabelScheme) -> String {
    scheme
        .option_letters
        .iter()
        .zip(&scheme.labels)
        .map(|(letter, label)| format!("{letter}) {label}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Fills the template in a single pass, so placeholder-like text inside the
/// claim or evidence is never expanded.
pub fn build_prompt(
    claim: &str,
    evidence: &[EvidenceSentence],
    scheme: &LabelScheme,
    template: &PromptTemplate,
) -> Result<String, VerdictError> {
    template.check()?;
    let evidence = render_evidence(evidence);
    let options = render_options(scheme);
    let letters = scheme
        .option_letters
        .iter()
        .map(char::to_string)
        .collect::<Vec<_>>()
        .join(", ");

    let text = template.as_str();
    let mut out = String::with_capacity(text.len() + evidence.len() + claim.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replacement = after.find('}').and_then(|close| {
            let value = match &after[..close] {
                "claim" => claim.trim(),
                "evidence" => evidence.as_str(),
                "options" => options.as_str(),
                "letters" => letters.as_str(),
                _ => return None,
            };
            Some((value, close))
        });
        match replacement {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::Polarity;
    use crate::types::SourceKind;

    fn ev(text: &str) -> EvidenceSentence {
        EvidenceSentence::new(text, SourceKind::WebSearch, "d", Polarity::FromClaim, 0.5)
    }

    #[test]
    fn empty_evidence_block() {
        let scheme = LabelScheme::builtin("scifact").unwrap();
        let p = build_prompt("Claim text", &[], &scheme, &PromptTemplate::default()).unwrap();
        assert!(p.contains(NO_EVIDENCE));
        assert!(p.contains("Claim: Claim text"));
    }

    #[test]
    fn numbered_evidence_and_lettered_options() {
        let scheme = LabelScheme::builtin("scifact").unwrap();
        let evidence = [ev("First fact."), ev("Second fact.")];
        let p = build_prompt("c", &evidence, &scheme, &PromptTemplate::default()).unwrap();
        for needle in [
            "1. First fact.",
            "2. Second fact.",
            "A) Supported",
            "B) Refuted",
            "C) Not Enough Info",
        ] {
            assert!(p.contains(needle), "missing {needle}");
        }
        let again = build_prompt("c", &evidence, &scheme, &PromptTemplate::default()).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn placeholders_in_content_are_not_expanded() {
        let scheme = LabelScheme::builtin("pubhealth").unwrap();
        let t = PromptTemplate::new("{claim}|{evidence}|{options}|{letters}|{other}").unwrap();
        let p = build_prompt("x {evidence}", &[ev("y {claim}")], &scheme, &t).unwrap();
        assert_eq!(
            p,
            "x {evidence}|1. y {claim}|A) True\nB) False\nC) Mixture\nD) Unproven|A, B, C, D|{other}"
        );
    }

    #[test]
    fn missing_placeholder_is_an_error() {
        assert!(matches!(
            PromptTemplate::new("{claim} {options}"),
            Err(VerdictError::TemplateMissingPlaceholder("{evidence}"))
        ));
        assert!(PromptTemplate::default().check().is_ok());
    }
}
