//! Shared word tokenization: maximal alphanumeric runs, split on
//! Unicode whitespace and punctuation boundaries.

/// Split `s` into word tokens. Tokens are maximal runs of alphanumeric
/// characters; everything else is a boundary and is dropped.
pub fn word_tokens(s: &str, lowercase: bool) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_whitespace() {
        assert_eq!(
            word_tokens("Dr. Smith's 2nd visit, e.g. today!", true),
            vec!["dr", "smith", "s", "2nd", "visit", "e", "g", "today"]
        );
    }

    #[test]
    fn cased_mode_preserves_case() {
        assert_eq!(word_tokens("A b C", false), vec!["A", "b", "C"]);
    }

    #[test]
    fn empty_and_symbolic_inputs() {
        assert!(word_tokens("", true).is_empty());
        assert!(word_tokens("?!...", true).is_empty());
    }
}
