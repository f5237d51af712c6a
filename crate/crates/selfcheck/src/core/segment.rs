//! Rule-based sentence segmentation.
//!
//! A sentence ends at a run of terminal punctuation (`.`, `!`, `?`),
//! optionally followed by closing quotes or brackets, when the next
//! character is whitespace or the end of the text. A period does not
//! terminate a sentence when the token before it is on the abbreviation
//! exception list shipped with the crate (`data/abbreviations.txt`).
//!
//! The segmenter is deterministic and keeps every non-whitespace byte:
//! joining the returned sentences and collapsing whitespace reproduces
//! the input, which lets token streams be re-aligned to sentences later.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const ABBREVIATIONS_FILE: &str = include_str!("../../data/abbreviations.txt");

fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATIONS_FILE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, ')' | ']' | '}' | '"' | '\'' | '\u{201d}' | '\u{2019}' | '\u{00bb}')
}

/// The token immediately preceding byte `end`, where a token is a
/// maximal run of non-whitespace characters with leading punctuation
/// stripped. Internal periods stay, so "U.S." yields "U.S".
fn preceding_token(text: &str, end: usize) -> &str {
    let before = &text[..end];
    let start = before
        .rfind(char::is_whitespace)
        .map(|i| i + before[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    before[start..].trim_start_matches(|c: char| !c.is_alphanumeric())
}

/// Split `text` into sentences.
///
/// Returns an error when `text` contains no non-whitespace characters.
/// The output list is never empty; text without any terminal
/// punctuation comes back as a single sentence.
pub fn segment_sentences(text: &str) -> Result<Vec<String>> {
    Ok(segment_with_spans(text)?
        .into_iter()
        .map(|r| text[r].to_string())
        .collect())
}

/// Like [`segment_sentences`] but returning byte ranges into `text`.
pub fn segment_with_spans(text: &str) -> Result<Vec<Range<usize>>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput("text is empty or whitespace-only"));
    }

    let mut spans = Vec::new();
    let mut sentence_start: Option<usize> = None;
    let mut chars = text.char_indices().peekable();

    while let Some((i, c)) = chars.next() {
        if sentence_start.is_none() && !c.is_whitespace() {
            sentence_start = Some(i);
        }
        if !is_terminal(c) {
            continue;
        }
        // Swallow the full terminal run ("?!", "...") and any closers.
        let mut last_terminal = i;
        let mut end = i + c.len_utf8();
        while let Some(&(j, d)) = chars.peek() {
            if is_terminal(d) {
                last_terminal = j;
                end = j + d.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        while let Some(&(j, d)) = chars.peek() {
            if is_closer(d) {
                end = j + d.len_utf8();
                chars.next();
            } else {
                break;
            }
        }

        let at_eot = chars.peek().is_none();
        let followed_by_space = chars.peek().is_some_and(|&(_, d)| d.is_whitespace());
        if !at_eot && !followed_by_space {
            continue; // mid-token punctuation, e.g. "3.14" or "example.com"
        }

        // A lone '.' after a listed abbreviation does not end the sentence.
        if text[last_terminal..].starts_with('.') && last_terminal == i {
            let token = preceding_token(text, i);
            if abbreviations().contains(token) {
                continue;
            }
        }

        if let Some(start) = sentence_start.take() {
            spans.push(start..end);
        }
    }

    if let Some(start) = sentence_start {
        let end = start + text[start..].trim_end().len();
        spans.push(start..end);
    }
    Ok(spans)
}

/// Locate each of `sentences` inside `text`, in order, tolerating
/// whitespace differences (any whitespace run in the sentence matches
/// any whitespace run in the text). Returns one byte range per
/// sentence.
pub fn sentence_spans(text: &str, sentences: &[String]) -> Result<Vec<Range<usize>>> {
    let mut spans = Vec::with_capacity(sentences.len());
    let mut cursor = 0usize;

    for (idx, sentence) in sentences.iter().enumerate() {
        while text[cursor..].starts_with(char::is_whitespace) {
            cursor += text[cursor..].chars().next().unwrap().len_utf8();
        }
        let start = cursor;
        let mut text_it = text[cursor..].char_indices().peekable();
        let mut sent_it = sentence.trim().chars().peekable();
        let mut end = cursor;

        while let Some(&sc) = sent_it.peek() {
            if sc.is_whitespace() {
                while sent_it.peek().is_some_and(|c| c.is_whitespace()) {
                    sent_it.next();
                }
                while text_it.peek().is_some_and(|&(_, tc)| tc.is_whitespace()) {
                    text_it.next();
                }
                continue;
            }
            match text_it.next() {
                Some((off, tc)) if tc == sc => {
                    sent_it.next();
                    end = cursor + off + tc.len_utf8();
                }
                _ => {
                    return Err(Error::Invariant(format!(
                        "sentence {idx} does not occur in the response text at its expected position"
                    )));
                }
            }
        }
        spans.push(start..end);
        cursor = end;
    }
    Ok(spans)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_terminal_periods() {
        assert_eq!(segment_sentences("A. B.").unwrap(), vec!["A.", "B."]);
    }

    #[test]
    fn abbreviation_does_not_split() {
        // "Dr" is on the shipped exception list; "1970" is not.
        let got = segment_sentences("Dr. Smith was born in 1970. He died.").unwrap();
        assert_eq!(got, vec!["Dr. Smith was born in 1970.", "He died."]);
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        assert_eq!(
            segment_sentences("one sentence no period").unwrap(),
            vec!["one sentence no period"]
        );
    }

    #[test]
    fn whitespace_only_is_an_error() {
        assert!(matches!(
            segment_sentences("  \n\t "),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(segment_sentences(""), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn decimal_points_do_not_split() {
        let got = segment_sentences("Pi is 3.14 roughly. E is 2.72.").unwrap();
        assert_eq!(got, vec!["Pi is 3.14 roughly.", "E is 2.72."]);
    }

    #[test]
    fn exclamations_questions_and_runs() {
        let got = segment_sentences("Really?! Yes. Fine...").unwrap();
        assert_eq!(got, vec!["Really?!", "Yes.", "Fine..."]);
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        let got = segment_sentences("He said \"stop.\" She left.").unwrap();
        assert_eq!(got, vec!["He said \"stop.\"", "She left."]);
    }

    #[test]
    fn multi_period_abbreviation() {
        let got = segment_sentences("She moved to the U.S. in May. He stayed.").unwrap();
        assert_eq!(got, vec!["She moved to the U.S. in May.", "He stayed."]);
    }

    #[test]
    fn join_reconstructs_modulo_whitespace() {
        let text = "Dr. Jones, e.g. here, left!  Then \"why?\" came up. End";
        let sentences = segment_sentences(text).unwrap();
        let joined: String = sentences.join(" ");
        let squash = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        assert_eq!(squash(&joined), squash(text));
    }

    #[test]
    fn spans_locate_sentences() {
        let text = "A b c. D e!";
        let sentences = segment_sentences(text).unwrap();
        let spans = sentence_spans(text, &sentences).unwrap();
        assert_eq!(&text[spans[0].clone()], "A b c.");
        assert_eq!(&text[spans[1].clone()], "D e!");
    }

    #[test]
    fn spans_tolerate_whitespace_differences() {
        let text = "A  b c.\nD e!";
        let sentences = vec!["A b c.".to_string(), "D e!".to_string()];
        let spans = sentence_spans(text, &sentences).unwrap();
        assert_eq!(&text[spans[0].clone()], "A  b c.");
        assert_eq!(&text[spans[1].clone()], "D e!");
    }

    #[test]
    fn spans_error_on_missing_sentence() {
        let text = "A b c.";
        let sentences = vec!["Z q.".to_string()];
        assert!(sentence_spans(text, &sentences).is_err());
    }
}
