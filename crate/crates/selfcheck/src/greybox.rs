//! Token-uncertainty factuality metrics.
//!
//! Given per-token probabilities of a response (from the generating
//! model, or from a proxy model when the generator's probabilities are
//! unavailable), each sentence gets four scores: the mean and the
//! maximum of the per-token negative log-probabilities, and the mean
//! and the maximum of the per-token output entropies. Low-probability
//! or high-entropy tokens mark content the model was unsure about.
//!
//! The entropy is computed over whatever top-k alternatives the backend
//! reported, without renormalizing the truncated distribution (a
//! renormalized variant is available behind a flag). Two output
//! conventions exist: plain nats, or the base-2 exponentiated form
//! 2^H2 where H2 is the entropy in bits.
//!
//! Proxy scoring and generator scoring share this code path entirely;
//! they differ only in which backend produced the [`TokenScore`]s.

use crate::backends::{TokenScore, TopToken};
use crate::core;
use crate::error::{Error, Result};

/// The tokens of one sentence, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceTokenRun {
    pub sentence_index: usize,
    pub tokens: Vec<TokenScore>,
}

impl SentenceTokenRun {
    pub fn new(sentence_index: usize, tokens: Vec<TokenScore>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("sentence token run"));
        }
        Ok(SentenceTokenRun {
            sentence_index,
            tokens,
        })
    }

    /// Number of tokens in the sentence.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor rejects empty runs
    }
}

/// Mean negative log-probability over the sentence's tokens. Always
/// >= 0 since log-probabilities are <= 0.
pub fn avg_neg_logprob(run: &SentenceTokenRun) -> f64 {
    let total: f64 = run.tokens.iter().map(|t| -t.logprob).sum();
    total / run.len() as f64
}

/// Negative log-probability of the least likely token in the sentence.
pub fn max_neg_logprob(run: &SentenceTokenRun) -> f64 {
    run.tokens
        .iter()
        .map(|t| -t.logprob)
        .fold(0.0_f64, f64::max)
}

/// Output convention for [`entropy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// -sum p ln p.
    Nats,
    /// 2^(-sum p log2 p): the perplexity-style exponentiated form.
    Exp2Bits,
}

/// Entropy of a (possibly truncated) output distribution.
///
/// With `renormalize` off, the provided probabilities are used as-is;
/// the truncated tail simply contributes nothing. With it on, the
/// entries are first scaled to sum to one.
pub fn entropy(dist: &[TopToken], mode: EntropyMode, renormalize: bool) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::EmptyInput("entropy distribution"));
    }
    let scale = if renormalize {
        let sum: f64 = dist.iter().map(|t| t.prob).sum();
        if sum <= 0.0 {
            return Err(Error::Precondition("distribution has zero mass".into()));
        }
        sum
    } else {
        1.0
    };
    for t in dist {
        if !(t.prob > 0.0 && t.prob <= 1.0) {
            return Err(Error::Precondition(format!(
                "probability {} outside (0, 1]",
                t.prob
            )));
        }
    }
    match mode {
        EntropyMode::Nats => Ok(-dist
            .iter()
            .map(|t| {
                let p = t.prob / scale;
                p * p.ln()
            })
            .sum::<f64>()),
        EntropyMode::Exp2Bits => {
            let bits: f64 = -dist
                .iter()
                .map(|t| {
                    let p = t.prob / scale;
                    p * p.log2()
                })
                .sum::<f64>();
            Ok(bits.exp2())
        }
    }
}

fn token_entropy(token: &TokenScore, mode: EntropyMode, renormalize: bool) -> Result<f64> {
    let topk = token.topk.as_ref().ok_or_else(|| {
        Error::Precondition(format!(
            "token {:?} has no top-k distribution; entropy metrics need one",
            token.token
        ))
    })?;
    entropy(topk, mode, renormalize)
}

/// Mean per-token entropy over the sentence.
pub fn avg_entropy(run: &SentenceTokenRun, mode: EntropyMode, renormalize: bool) -> Result<f64> {
    let mut total = 0.0;
    for t in &run.tokens {
        total += token_entropy(t, mode, renormalize)?;
    }
    Ok(total / run.len() as f64)
}

/// Maximum per-token entropy over the sentence.
pub fn max_entropy(run: &SentenceTokenRun, mode: EntropyMode, renormalize: bool) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for t in &run.tokens {
        best = best.max(token_entropy(t, mode, renormalize)?);
    }
    Ok(best)
}

/// Assign a response's token stream to its sentences.
///
/// The token strings must concatenate to `response` exactly. Each
/// sentence's span is extended rightwards up to the start of the next
/// sentence (covering inter-sentence whitespace), and leftwards for the
/// first sentence to the start of the text. A token belongs to the
/// sentence whose extended span contains its first byte, so a token
/// straddling a boundary goes to the earlier sentence.
pub fn align_tokens(
    response: &str,
    sentences: &[String],
    tokens: Vec<TokenScore>,
) -> Result<Vec<SentenceTokenRun>> {
    let concat: String = tokens.iter().map(|t| t.token.as_str()).collect();
    if concat != response {
        return Err(Error::Invariant(
            "token stream does not concatenate to the response text".into(),
        ));
    }
    let spans = core::sentence_spans(response, sentences)?;

    // Sentence i owns bytes [start_i, start_{i+1}).
    let starts: Vec<usize> = spans.iter().map(|s| s.start).collect();
    let mut runs: Vec<Vec<TokenScore>> = vec![Vec::new(); sentences.len()];
    let mut offset = 0usize;
    for token in tokens {
        let sentence = match starts.binary_search(&offset) {
            Ok(i) => i,
            Err(0) => 0, // leading text belongs to the first sentence
            Err(i) => i - 1,
        };
        offset += token.token.len();
        runs[sentence].push(token);
    }

    runs.into_iter()
        .enumerate()
        .map(|(i, tokens)| {
            if tokens.is_empty() {
                Err(Error::Invariant(format!("sentence {i} received no tokens")))
            } else {
                SentenceTokenRun::new(i, tokens)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(p: f64) -> TokenScore {
        TokenScore::new("t", p.ln(), None).unwrap()
    }

    fn tok_with_topk(probs: &[f64]) -> TokenScore {
        let mut sorted: Vec<f64> = probs.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let topk = sorted
            .iter()
            .map(|&p| TopToken { token: "w".into(), prob: p })
            .collect();
        TokenScore::new("t", -0.1, Some(topk)).unwrap()
    }

    fn run(tokens: Vec<TokenScore>) -> SentenceTokenRun {
        SentenceTokenRun::new(0, tokens).unwrap()
    }

    #[test]
    fn neg_logprob_metrics() {
        let certain = run(vec![tok(1.0), tok(1.0)]);
        assert_eq!(avg_neg_logprob(&certain), 0.0);
        assert_eq!(max_neg_logprob(&certain), 0.0);

        let r = run(vec![tok((-1.0f64).exp()), tok((-3.0f64).exp())]);
        assert!((avg_neg_logprob(&r) - 2.0).abs() < 1e-12);
        assert!((max_neg_logprob(&r) - 3.0).abs() < 1e-12);

        let single = run(vec![tok(0.5)]);
        assert!((avg_neg_logprob(&single) - std::f64::consts::LN_2).abs() < 1e-12);

        // Adding a less likely token moves the max.
        let extended = run(vec![
            tok((-1.0f64).exp()),
            tok((-3.0f64).exp()),
            tok((-5.0f64).exp()),
        ]);
        assert!((max_neg_logprob(&extended) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_run_is_rejected() {
        assert!(matches!(
            SentenceTokenRun::new(0, vec![]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn entropy_closed_forms() {
        let single = [TopToken { token: "a".into(), prob: 1.0 }];
        assert_eq!(entropy(&single, EntropyMode::Nats, false).unwrap(), 0.0);
        assert_eq!(entropy(&single, EntropyMode::Exp2Bits, false).unwrap(), 1.0);

        let uniform2 = [
            TopToken { token: "a".into(), prob: 0.5 },
            TopToken { token: "b".into(), prob: 0.5 },
        ];
        assert!((entropy(&uniform2, EntropyMode::Nats, false).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((entropy(&uniform2, EntropyMode::Exp2Bits, false).unwrap() - 2.0).abs() < 1e-12);

        let uniform5: Vec<TopToken> = (0..5)
            .map(|i| TopToken { token: format!("t{i}"), prob: 0.2 })
            .collect();
        assert!((entropy(&uniform5, EntropyMode::Nats, false).unwrap() - 5.0f64.ln()).abs() < 1e-12);

        assert!(entropy(&[], EntropyMode::Nats, false).is_err());
    }

    #[test]
    fn truncated_distribution_is_not_renormalized_by_default() {
        let truncated = [
            TopToken { token: "a".into(), prob: 0.4 },
            TopToken { token: "b".into(), prob: 0.2 },
        ];
        let raw = entropy(&truncated, EntropyMode::Nats, false).unwrap();
        let expected_raw = -(0.4 * 0.4f64.ln() + 0.2 * 0.2f64.ln());
        assert!((raw - expected_raw).abs() < 1e-12);

        let renorm = entropy(&truncated, EntropyMode::Nats, true).unwrap();
        let (p, q) = (0.4 / 0.6, 0.2 / 0.6);
        let expected_renorm = -(p * f64::ln(p) + q * f64::ln(q));
        assert!((renorm - expected_renorm).abs() < 1e-12);
        assert!((raw - renorm).abs() > 1e-3);
    }

    #[test]
    fn entropy_aggregates() {
        let uniform2 = tok_with_topk(&[0.5, 0.5]);
        let deterministic = tok_with_topk(&[1.0]);

        let both_uniform = run(vec![uniform2.clone(), uniform2.clone()]);
        let avg = avg_entropy(&both_uniform, EntropyMode::Nats, false).unwrap();
        let max = max_entropy(&both_uniform, EntropyMode::Nats, false).unwrap();
        assert!((avg - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((max - std::f64::consts::LN_2).abs() < 1e-12);

        let mixed = run(vec![deterministic, uniform2]);
        let avg = avg_entropy(&mixed, EntropyMode::Nats, false).unwrap();
        let max = max_entropy(&mixed, EntropyMode::Nats, false).unwrap();
        assert!((avg - std::f64::consts::LN_2 / 2.0).abs() < 1e-12);
        assert!((max - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn missing_topk_is_an_error_for_entropy() {
        let r = run(vec![tok(0.5)]);
        assert!(avg_entropy(&r, EntropyMode::Nats, false).is_err());
    }

    #[test]
    fn alignment_by_start_offset() {
        let response = "Ab cd. Ef gh.";
        let sentences = vec!["Ab cd.".to_string(), "Ef gh.".to_string()];
        // Tokens straddle the boundary: "Ab", " cd", ". E", "f gh."
        let tokens: Vec<TokenScore> = ["Ab", " cd", ". E", "f gh."]
            .iter()
            .map(|t| TokenScore::new(*t, -0.5, None).unwrap())
            .collect();
        let runs = align_tokens(response, &sentences, tokens).unwrap();
        assert_eq!(runs.len(), 2);
        // ". E" starts inside sentence 0's span, so it stays there.
        let texts: Vec<Vec<&str>> = runs
            .iter()
            .map(|r| r.tokens.iter().map(|t| t.token.as_str()).collect())
            .collect();
        assert_eq!(texts[0], vec!["Ab", " cd", ". E"]);
        assert_eq!(texts[1], vec!["f gh."]);
    }

    #[test]
    fn alignment_rejects_mismatched_tokens() {
        let tokens = vec![TokenScore::new("xyz", -0.5, None).unwrap()];
        assert!(align_tokens("Ab.", &["Ab.".to_string()], tokens).is_err());
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let a = run(vec![tok(0.9), tok(0.5), tok(0.1)]);
        let b = run(vec![tok(0.1), tok(0.9), tok(0.5)]);
        assert!((avg_neg_logprob(&a) - avg_neg_logprob(&b)).abs() < 1e-12);
        assert!((max_neg_logprob(&a) - max_neg_logprob(&b)).abs() < 1e-12);
    }
}
