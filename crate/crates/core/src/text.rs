//! Sentence normalization shared by indexing, deduplication and embedding.

use unicode_general_category::{get_general_category, GeneralCategory};

/// Returns true for characters in any Unicode punctuation category (P*).
pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Lowercases, strips Unicode punctuation, collapses whitespace runs and trims.
///
/// This is the single normalization used as the dedup key, the index
/// tokenizer input and the hashed embedder tokenizer input.
pub fn normalize_sentence(raw: &str) -> String {
    let mut stripped = String::with_capacity(raw.len());
    for c in raw.chars() {
        for lower in c.to_lowercase() {
            if !is_punctuation(lower) {
                stripped.push(lower);
            }
        }
    }
    let mut out = String::with_capacity(stripped.len());
    for token in stripped.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Tokens of the normalized form, split on single spaces.
pub fn tokenize(raw: &str) -> Vec<String> {
    normalize_sentence(raw)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_examples() {
        assert_eq!(normalize_sentence("Hello, World!"), "hello world");
        assert_eq!(normalize_sentence(""), "");
        assert_eq!(normalize_sentence("A  B…C"), "a bc");
        assert_eq!(
            normalize_sentence("  \t Tabs\nand   lines "),
            "tabs and lines"
        );
        assert_eq!(normalize_sentence("«Quoted» — dash"), "quoted dash");
    }

    #[test]
    fn tokenize_splits_normalized_form() {
        assert_eq!(
            tokenize("The cat, the HAT."),
            vec!["the", "cat", "the", "hat"]
        );
        assert!(tokenize("...").is_empty());
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,64}") {
            let once = normalize_sentence(&s);
            prop_assert_eq!(normalize_sentence(&once), once.clone());
        }

        #[test]
        fn output_has_no_punctuation_or_cased_uppercase(s in "\\PC{0,64}") {
            let out = normalize_sentence(&s);
            for c in out.chars() {
                prop_assert!(!is_punctuation(c));
                // Some Lu code points have no lowercase mapping; the property is
                // that lowercasing is a fixpoint.
                prop_assert!(c.to_lowercase().eq(std::iter::once(c)));
            }
            prop_assert_eq!(out.trim(), out.as_str());
            prop_assert!(!out.contains("  "));
        }
    }
}
