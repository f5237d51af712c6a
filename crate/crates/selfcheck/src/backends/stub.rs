//! Deterministic stub backends.
//!
//! These are not mocks: each stub's behaviour is a documented
//! closed-form function of its inputs, so downstream scorer tests have
//! exact oracles and every run is reproducible offline.
//!
//! - [`StubGenerator`] — completions are a pure function of
//!   (prompt, temperature, seed); temperature 0 is greedy and
//!   seed-independent.
//! - [`StubTokenScorer`] — every token gets probability 1/|V| over a
//!   uniform vocabulary of size |V|.
//! - [`StubSimilarity`] — harmonic mean of token-multiset precision and
//!   recall (identical strings score 1.0).
//! - [`StubNli`] — logits are a linear function of the fraction of
//!   hypothesis tokens found in the premise: (10f - 5, 5 - 10f).
//! - [`StubQa`] — questions pin a chunk of the sentence as the gold
//!   option against synthetic distractors; the answerer picks the
//!   option with maximal token overlap with the context and reports
//!   that overlap fraction as answerability.
//! - [`StubJudge`] — parses the verbatim judge template and answers Yes
//!   when at least half the sentence's tokens appear in the context.

use std::collections::HashSet;

use crate::backends::{
    NliLogits, NliScorer, QaAnswer, QaItem, QaModel, SimilarityScorer, TextGenerator, TokenScore,
    TokenScorer, TopToken,
};
use crate::error::{BackendError, Error, Result};
use crate::text::word_tokens;

/// FNV-1a, used so stub outputs are stable across platforms and
/// compiler versions.
fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= 0xff; // separator so ("ab","c") != ("a","bc")
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

const STUB_VOCAB: [&str; 10] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
];

/// Deterministic text generator over a small fixed vocabulary.
#[derive(Debug, Clone)]
pub struct StubGenerator {
    seed: u64,
    sentences_per_completion: usize,
    words_per_sentence: usize,
}

impl StubGenerator {
    pub fn new(seed: u64) -> Self {
        StubGenerator {
            seed,
            sentences_per_completion: 2,
            words_per_sentence: 5,
        }
    }

    fn completion(&self, prompt: &str, temperature: f64, index: usize) -> String {
        let mut words = Vec::new();
        for s in 0..self.sentences_per_completion {
            for w in 0..self.words_per_sentence {
                let h = if temperature == 0.0 {
                    // Greedy decoding ignores both seed and sample index.
                    fnv1a(&[prompt.as_bytes(), &[s as u8, w as u8]])
                } else {
                    fnv1a(&[
                        prompt.as_bytes(),
                        &temperature.to_bits().to_le_bytes(),
                        &self.seed.to_le_bytes(),
                        &(index as u64).to_le_bytes(),
                        &[s as u8, w as u8],
                    ])
                };
                words.push(STUB_VOCAB[(h % STUB_VOCAB.len() as u64) as usize]);
            }
            words.push(".");
        }
        // "w1 w2 w3. w4 w5 w6." with the period glued to the last word.
        words
            .join(" ")
            .replace(" .", ".")
    }
}

impl TextGenerator for StubGenerator {
    fn generate(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>> {
        if n == 0 {
            return Err(Error::Precondition("generate requires n >= 1".into()));
        }
        if temperature < 0.0 {
            return Err(Error::Precondition(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        Ok((0..n).map(|i| self.completion(prompt, temperature, i)).collect())
    }

    fn id(&self) -> String {
        format!("stub-gen:{}", self.seed)
    }
}

/// Token scorer with a uniform distribution over a fixed-size
/// vocabulary: every token has probability 1/|V|, and the top-k list
/// holds k entries of 1/|V| each.
#[derive(Debug, Clone)]
pub struct StubTokenScorer {
    pub vocab_size: usize,
    pub topk_len: usize,
    pub max_chars: usize,
}

impl Default for StubTokenScorer {
    fn default() -> Self {
        StubTokenScorer {
            vocab_size: 10,
            topk_len: 5,
            max_chars: 1 << 20,
        }
    }
}

impl StubTokenScorer {
    pub fn new(vocab_size: usize, topk_len: usize) -> Self {
        StubTokenScorer {
            vocab_size,
            topk_len,
            ..Default::default()
        }
    }
}

impl TokenScorer for StubTokenScorer {
    fn score_tokens(&self, text: &str, _context: &str) -> Result<Vec<TokenScore>> {
        if text.is_empty() {
            return Err(Error::EmptyInput("text to score"));
        }
        if text.len() > self.max_chars {
            return Err(BackendError::TextTooLong {
                len: text.len(),
                limit: self.max_chars,
            }
            .into());
        }
        let prob = 1.0 / self.vocab_size as f64;
        let topk: Vec<TopToken> = (0..self.topk_len.min(5).min(self.vocab_size))
            .map(|i| TopToken {
                token: STUB_VOCAB[i % STUB_VOCAB.len()].to_string(),
                prob,
            })
            .collect();
        // Tokens are whitespace-inclusive pieces so that concatenating
        // them reproduces `text` byte for byte.
        text.split_inclusive(char::is_whitespace)
            .map(|piece| {
                TokenScore::new(
                    piece,
                    prob.ln(),
                    if topk.is_empty() { None } else { Some(topk.clone()) },
                )
            })
            .collect()
    }

    fn id(&self) -> String {
        format!("stub-tokens:v{}k{}", self.vocab_size, self.topk_len)
    }
}

fn token_multiset(s: &str) -> Vec<String> {
    word_tokens(s, true)
}

fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    let mut remaining: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for t in b {
        *remaining.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut hits = 0;
    for t in a {
        if let Some(n) = remaining.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                hits += 1;
            }
        }
    }
    hits
}

/// Token-overlap similarity: harmonic mean of precision and recall over
/// word-token multisets, clipped to [0, 1].
#[derive(Debug, Clone, Default)]
pub struct StubSimilarity;

impl SimilarityScorer for StubSimilarity {
    fn similarity(&self, candidate: &str, reference: &str) -> Result<f64> {
        if candidate.trim().is_empty() || reference.trim().is_empty() {
            return Err(Error::EmptyInput("similarity input"));
        }
        if candidate == reference {
            return Ok(1.0);
        }
        let c = token_multiset(candidate);
        let r = token_multiset(reference);
        if c.is_empty() || r.is_empty() {
            return Ok(0.0);
        }
        let overlap = multiset_overlap(&c, &r) as f64;
        if overlap == 0.0 {
            return Ok(0.0);
        }
        let precision = overlap / c.len() as f64;
        let recall = overlap / r.len() as f64;
        Ok((2.0 * precision * recall / (precision + recall)).clamp(0.0, 1.0))
    }

    fn id(&self) -> String {
        "stub-sim".into()
    }
}

/// Overlap-driven NLI: with `f` the fraction of distinct hypothesis
/// tokens present in the premise, logits are (10f - 5, 5 - 10f). Zero
/// shared tokens gives (-5, 5); identical texts give (5, -5).
#[derive(Debug, Clone, Default)]
pub struct StubNli;

impl NliScorer for StubNli {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliLogits> {
        if premise.trim().is_empty() {
            return Err(Error::EmptyInput("NLI premise"));
        }
        if hypothesis.trim().is_empty() {
            return Err(Error::EmptyInput("NLI hypothesis"));
        }
        let f = if premise == hypothesis {
            1.0
        } else {
            let prem: HashSet<String> = word_tokens(premise, true).into_iter().collect();
            let hyp: HashSet<String> = word_tokens(hypothesis, true).into_iter().collect();
            if hyp.is_empty() {
                0.0
            } else {
                hyp.iter().filter(|t| prem.contains(*t)).count() as f64 / hyp.len() as f64
            }
        };
        NliLogits::new(10.0 * f - 5.0, 5.0 - 10.0 * f)
    }

    fn id(&self) -> String {
        "stub-nli".into()
    }
}

/// Question generator/answerer over token chunks.
#[derive(Debug, Clone)]
pub struct StubQa {
    /// Number of consecutive sentence tokens forming the gold option.
    pub chunk_len: usize,
}

impl Default for StubQa {
    fn default() -> Self {
        StubQa { chunk_len: 4 }
    }
}

impl QaModel for StubQa {
    fn qa_generate(&self, sentence: &str, _passage: &str, n_questions: usize) -> Result<Vec<QaItem>> {
        if n_questions == 0 {
            return Err(Error::Precondition("n_questions must be >= 1".into()));
        }
        let tokens = word_tokens(sentence, true);
        if tokens.is_empty() {
            // Nothing to ask about: every question fails generation.
            return Ok(Vec::new());
        }
        (0..n_questions)
            .map(|q| {
                let start = q % tokens.len();
                let chunk: Vec<&str> = (0..self.chunk_len.min(tokens.len()))
                    .map(|k| tokens[(start + k) % tokens.len()].as_str())
                    .collect();
                let gold = chunk.join(" ");
                let gold_index =
                    (fnv1a(&[sentence.as_bytes(), &(q as u64).to_le_bytes()]) % 4) as usize;
                let mut options: Vec<String> = Vec::with_capacity(4);
                let mut d = 0;
                while options.len() < 4 {
                    if options.len() == gold_index {
                        options.push(gold.clone());
                    } else {
                        let h = fnv1a(&[
                            sentence.as_bytes(),
                            &(q as u64).to_le_bytes(),
                            &(d as u64).to_le_bytes(),
                        ]);
                        options.push(format!("zzq{d}{h:016x}"));
                        d += 1;
                    }
                }
                QaItem::new(
                    format!("Which phrase belongs with item {q} here?"),
                    options.try_into().expect("exactly four options"),
                    gold_index,
                )
            })
            .collect()
    }

    fn qa_answer(&self, item: &QaItem, context: &str) -> Result<QaAnswer> {
        let ctx: HashSet<String> = word_tokens(context, true).into_iter().collect();
        let mut best = QaAnswer {
            answer_index: 0,
            answerability: 0.0,
        };
        for (i, option) in item.options.iter().enumerate() {
            let toks = word_tokens(option, true);
            let frac = if toks.is_empty() {
                0.0
            } else {
                toks.iter().filter(|t| ctx.contains(*t)).count() as f64 / toks.len() as f64
            };
            if frac > best.answerability {
                best = QaAnswer {
                    answer_index: i,
                    answerability: frac,
                };
            }
        }
        Ok(best)
    }

    fn id(&self) -> String {
        format!("stub-qa:c{}", self.chunk_len)
    }
}

/// Judge stub: parses the verbatim support-check template and answers
/// "Yes" when at least `yes_threshold` of the sentence's distinct
/// tokens appear in the context, "No" otherwise, and "N/A" when the
/// sentence has no word tokens at all.
#[derive(Debug, Clone)]
pub struct StubJudge {
    pub yes_threshold: f64,
}

impl Default for StubJudge {
    fn default() -> Self {
        StubJudge { yes_threshold: 0.5 }
    }
}

const TEMPLATE_SUFFIX: &str = "\nIs the sentence supported by the context above? \nAnswer Yes or No:";

impl TextGenerator for StubJudge {
    fn generate(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>> {
        if n == 0 {
            return Err(Error::Precondition("generate requires n >= 1".into()));
        }
        if temperature < 0.0 {
            return Err(Error::Precondition(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        let body = prompt
            .strip_suffix(TEMPLATE_SUFFIX)
            .and_then(|rest| rest.strip_prefix("Context: "))
            .ok_or_else(|| BackendError::Protocol("stub judge expects the support-check template".into()))?;
        let (context, sentence) = body
            .rsplit_once("\nSentence: ")
            .ok_or_else(|| BackendError::Protocol("stub judge expects the support-check template".into()))?;

        let ctx: HashSet<String> = word_tokens(context, true).into_iter().collect();
        let sent = word_tokens(sentence, true);
        let answer = if sent.is_empty() {
            "N/A"
        } else {
            let f = sent.iter().filter(|t| ctx.contains(*t)).count() as f64 / sent.len() as f64;
            if f >= self.yes_threshold {
                "Yes"
            } else {
                "No"
            }
        };
        Ok(vec![answer.to_string(); n])
    }

    fn id(&self) -> String {
        format!("stub-judge:{}", self.yes_threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{judge, normalize_verdict, Verdict};

    #[test]
    fn generator_is_deterministic() {
        let g = StubGenerator::new(7);
        let a = g.generate("p", 1.0, 3).unwrap();
        let b = g.generate("p", 1.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        // Different samples differ (overwhelmingly likely with 10 words drawn).
        assert_ne!(a[0], a[1]);
        // A different seed changes sampled output.
        let c = StubGenerator::new(8).generate("p", 1.0, 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn greedy_completion_ignores_seed() {
        let a = StubGenerator::new(1).generate("p", 0.0, 1).unwrap();
        let b = StubGenerator::new(2).generate("p", 0.0, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn generate_rejects_zero_n() {
        assert!(matches!(
            StubGenerator::new(0).generate("p", 1.0, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn token_scorer_is_uniform() {
        let s = StubTokenScorer::default();
        let scores = s.score_tokens("a b c", "").unwrap();
        let concat: String = scores.iter().map(|t| t.token.as_str()).collect();
        assert_eq!(concat, "a b c");
        for t in &scores {
            assert!((t.logprob - (0.1f64).ln()).abs() < 1e-12);
            let topk = t.topk.as_ref().unwrap();
            assert_eq!(topk.len(), 5);
            let sum: f64 = topk.iter().map(|t| t.prob).sum();
            assert!((sum - 0.5).abs() < 1e-12);
        }
        assert!(matches!(
            s.score_tokens("", ""),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn token_scorer_rejects_oversized_text() {
        let s = StubTokenScorer {
            max_chars: 4,
            ..Default::default()
        };
        assert!(matches!(
            s.score_tokens("hello", ""),
            Err(Error::Backend(BackendError::TextTooLong { limit: 4, .. }))
        ));
    }

    #[test]
    fn similarity_closed_forms() {
        let s = StubSimilarity;
        assert_eq!(s.similarity("a b c", "a b c").unwrap(), 1.0);
        // Precision = recall = 1/2, harmonic mean = 1/2.
        assert!((s.similarity("a b", "a c").unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(s.similarity("a b", "x y").unwrap(), 0.0);
        assert!(s.similarity("", "x").is_err());
    }

    #[test]
    fn nli_closed_forms() {
        let n = StubNli;
        let disjoint = n.nli("a b c", "x y").unwrap();
        assert_eq!((disjoint.entail, disjoint.contradict), (-5.0, 5.0));
        let same = n.nli("a b c", "a b c").unwrap();
        assert_eq!((same.entail, same.contradict), (5.0, -5.0));
        assert!(n.nli("a b", " ").is_err());
    }

    #[test]
    fn qa_stub_round_trip() {
        let qa = StubQa::default();
        let items = qa.qa_generate("the quick brown fox jumps", "irrelevant", 3).unwrap();
        assert_eq!(items.len(), 3);
        for item in &items {
            // Context containing the sentence verbatim answers gold with alpha 1.
            let ans = qa.qa_answer(item, "the quick brown fox jumps today").unwrap();
            assert_eq!(ans.answer_index, item.gold_index);
            assert_eq!(ans.answerability, 1.0);
            // Disjoint context: alpha 0.
            let ans = qa.qa_answer(item, "totally unrelated words here").unwrap();
            assert_eq!(ans.answerability, 0.0);
        }
        assert!(qa.qa_generate("s", "p", 0).is_err());
    }

    #[test]
    fn qa_stub_empty_sentence_generates_nothing() {
        let qa = StubQa::default();
        assert!(qa.qa_generate("?!", "p", 3).unwrap().is_empty());
    }

    #[test]
    fn judge_stub_parses_template() {
        let j = StubJudge::default();
        let v = judge(&j, "the cat sat on the mat", "the cat sat").unwrap();
        assert_eq!(v.verdict, Verdict::Yes);
        let v = judge(&j, "the cat sat on the mat", "dogs bark loudly").unwrap();
        assert_eq!(v.verdict, Verdict::No);
        // Multi-line context still parses.
        let v = judge(&j, "line one.\nline two.", "line one.").unwrap();
        assert_eq!(v.verdict, Verdict::Yes);
        // Non-template prompts are a protocol error.
        assert!(j.generate("free-form prompt", 0.0, 1).is_err());
    }

    #[test]
    fn judge_verdict_uses_normalizer() {
        assert_eq!(normalize_verdict("Yes"), Verdict::Yes);
    }
}
