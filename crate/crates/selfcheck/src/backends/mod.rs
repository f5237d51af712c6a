//! Pluggable contracts for every neural capability the scorers need,
//! plus deterministic stub implementations, an HTTP JSON client, and a
//! content-addressed disk cache.
//!
//! Five narrow capabilities instead of one mega-interface: text
//! generation, token scoring, sentence similarity, natural-language
//! inference, and multiple-choice QA. Each scorer declares only what it
//! uses, and every capability has a stub whose behaviour is a
//! documented closed-form function of its inputs, so scorer tests have
//! exact oracles.
//!
//! All log-probabilities are natural logs everywhere in the toolkit;
//! clients converting from other bases do so at the wire boundary.

pub mod cache;
pub mod http;
pub mod stub;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{
    CachedGenerator, CachedNli, CachedQa, CachedSimilarity, CachedTokenScorer, DiskCache,
};
pub use http::{HttpBackend, HttpConfig, RetryPolicy};
pub use stub::{StubGenerator, StubJudge, StubNli, StubQa, StubSimilarity, StubTokenScorer};

/// One token of a scored text with its log-probability and, when the
/// backend provides it, the top-k alternatives at that position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token: String,
    /// Natural log of the token's probability; always <= 0.
    pub logprob: f64,
    /// Top alternatives, probabilities sorted descending, at most 5.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topk: Option<Vec<TopToken>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopToken {
    pub token: String,
    pub prob: f64,
}

impl TokenScore {
    pub fn new(token: impl Into<String>, logprob: f64, topk: Option<Vec<TopToken>>) -> Result<Self> {
        if !logprob.is_finite() || logprob > 0.0 {
            return Err(Error::Invariant(format!(
                "token logprob must be finite and <= 0, got {logprob}"
            )));
        }
        if let Some(topk) = &topk {
            if topk.is_empty() || topk.len() > 5 {
                return Err(Error::Invariant(format!(
                    "topk must hold 1..=5 entries, got {}",
                    topk.len()
                )));
            }
            let mut sum = 0.0;
            for pair in topk.windows(2) {
                if pair[0].prob < pair[1].prob {
                    return Err(Error::Invariant("topk probabilities not sorted descending".into()));
                }
            }
            for t in topk {
                if !(t.prob > 0.0 && t.prob <= 1.0) {
                    return Err(Error::Invariant(format!(
                        "topk probability {} outside (0, 1]",
                        t.prob
                    )));
                }
                sum += t.prob;
            }
            if sum > 1.0 + 1e-6 {
                return Err(Error::Invariant(format!("topk probabilities sum to {sum} > 1")));
            }
        }
        Ok(TokenScore {
            token: token.into(),
            logprob,
            topk,
        })
    }

    pub fn prob(&self) -> f64 {
        self.logprob.exp()
    }
}

/// A generated multiple-choice question: four pairwise-distinct options
/// and the index of the option that answers it on the source text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub options: [String; 4],
    pub gold_index: usize,
}

impl QaItem {
    pub fn new(question: impl Into<String>, options: [String; 4], gold_index: usize) -> Result<Self> {
        if gold_index >= 4 {
            return Err(Error::Invariant(format!("gold_index {gold_index} out of range")));
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                if options[i] == options[j] {
                    return Err(Error::Invariant(format!(
                        "options {i} and {j} are identical: {:?}",
                        options[i]
                    )));
                }
            }
        }
        Ok(QaItem {
            question: question.into(),
            options,
            gold_index,
        })
    }
}

/// Answer to a [`QaItem`] on some context, with the answerability
/// estimate alpha in [0, 1] (0 = unanswerable from this context).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaAnswer {
    pub answer_index: usize,
    pub answerability: f64,
}

/// Raw entailment/contradiction logits from an NLI model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliLogits {
    pub entail: f64,
    pub contradict: f64,
}

impl NliLogits {
    pub fn new(entail: f64, contradict: f64) -> Result<Self> {
        if !entail.is_finite() || !contradict.is_finite() {
            return Err(Error::Invariant("NLI logits must be finite".into()));
        }
        Ok(NliLogits { entail, contradict })
    }
}

/// Judge output for one (context, sentence) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Yes,
    No,
    Na,
}

impl Verdict {
    /// Inconsistency score mapping: Yes -> 0.0, No -> 1.0, N/A -> 0.5.
    pub fn score(self) -> f64 {
        match self {
            Verdict::Yes => 0.0,
            Verdict::No => 1.0,
            Verdict::Na => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub verdict: Verdict,
    /// The completion text the verdict was derived from.
    pub raw: String,
}

/// Map a raw judge completion to a verdict: the leading word decides,
/// case- and punctuation-insensitively; anything that is not "yes" or
/// "no" becomes N/A.
pub fn normalize_verdict(raw: &str) -> Verdict {
    let first = raw
        .split(|c: char| !c.is_alphanumeric())
        .find(|t| !t.is_empty())
        .map(str::to_lowercase);
    match first.as_deref() {
        Some("yes") => Verdict::Yes,
        Some("no") => Verdict::No,
        _ => Verdict::Na,
    }
}

/// Text generation at a given temperature.
pub trait TextGenerator: Send + Sync {
    /// Produce exactly `n` completions for `prompt`.
    fn generate(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>>;

    /// Stable identifier used for caching and provenance.
    fn id(&self) -> String;
}

/// Per-token log-probabilities for a text, optionally conditioned on a
/// preceding context. One `TokenScore` per backend token; concatenating
/// the token strings reproduces `text` exactly.
pub trait TokenScorer: Send + Sync {
    fn score_tokens(&self, text: &str, context: &str) -> Result<Vec<TokenScore>>;
    fn id(&self) -> String;
}

/// Sentence-pair similarity in [0, 1].
pub trait SimilarityScorer: Send + Sync {
    fn similarity(&self, candidate: &str, reference: &str) -> Result<f64>;
    fn id(&self) -> String;
}

/// Entailment/contradiction logits for a (premise, hypothesis) pair.
pub trait NliScorer: Send + Sync {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliLogits>;
    fn id(&self) -> String;
}

/// Multiple-choice question generation and answering.
pub trait QaModel: Send + Sync {
    /// Generate up to `n_questions` questions about `sentence` in the
    /// context of `passage`. Individual failed generations are skipped;
    /// the result may be shorter than requested.
    fn qa_generate(&self, sentence: &str, passage: &str, n_questions: usize) -> Result<Vec<QaItem>>;

    /// Answer `item` using `context`, returning the chosen option and
    /// the answerability estimate.
    fn qa_answer(&self, item: &QaItem, context: &str) -> Result<QaAnswer>;

    fn id(&self) -> String;
}

macro_rules! delegate_via_deref {
    ($trait:ident for $wrapper:ty { $($body:tt)* }) => {
        impl<T: $trait + ?Sized> $trait for $wrapper {
            $($body)*
        }
    };
}

delegate_via_deref!(TextGenerator for std::sync::Arc<T> {
    fn generate(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>> {
        (**self).generate(prompt, temperature, n)
    }
    fn id(&self) -> String {
        (**self).id()
    }
});

delegate_via_deref!(TokenScorer for std::sync::Arc<T> {
    fn score_tokens(&self, text: &str, context: &str) -> Result<Vec<TokenScore>> {
        (**self).score_tokens(text, context)
    }
    fn id(&self) -> String {
        (**self).id()
    }
});

delegate_via_deref!(SimilarityScorer for std::sync::Arc<T> {
    fn similarity(&self, candidate: &str, reference: &str) -> Result<f64> {
        (**self).similarity(candidate, reference)
    }
    fn id(&self) -> String {
        (**self).id()
    }
});

delegate_via_deref!(NliScorer for std::sync::Arc<T> {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliLogits> {
        (**self).nli(premise, hypothesis)
    }
    fn id(&self) -> String {
        (**self).id()
    }
});

delegate_via_deref!(QaModel for std::sync::Arc<T> {
    fn qa_generate(&self, sentence: &str, passage: &str, n_questions: usize) -> Result<Vec<QaItem>> {
        (**self).qa_generate(sentence, passage, n_questions)
    }
    fn qa_answer(&self, item: &QaItem, context: &str) -> Result<QaAnswer> {
        (**self).qa_answer(item, context)
    }
    fn id(&self) -> String {
        (**self).id()
    }
});

/// The exact prompt sent to the judge for one (context, sentence) pair.
pub fn judge_prompt(context: &str, sentence: &str) -> String {
    format!(
        "Context: {context}\nSentence: {sentence}\nIs the sentence supported by the context above? \nAnswer Yes or No:"
    )
}

/// Ask `generator` whether `sentence` is supported by `context`,
/// greedily (temperature 0), and normalize the completion to a verdict.
pub fn judge(generator: &dyn TextGenerator, context: &str, sentence: &str) -> Result<JudgeVerdict> {
    if context.trim().is_empty() {
        return Err(Error::EmptyInput("judge context"));
    }
    if sentence.trim().is_empty() {
        return Err(Error::EmptyInput("judge sentence"));
    }
    let mut completions = generator.generate(&judge_prompt(context, sentence), 0.0, 1)?;
    let raw = completions.remove(0);
    Ok(JudgeVerdict {
        verdict: normalize_verdict(&raw),
        raw,
    })
}
