//! Direct sentence-vs-evidence scorers.
//!
//! Three ways to ask "does the evidence support this sentence?":
//!
//! - similarity: one minus the mean, over samples, of the best
//!   sentence-level similarity within each sample;
//! - NLI: the mean probability that the sentence contradicts each
//!   sample, using only the entailment and contradiction logits (the
//!   neutral class is ignored);
//! - prompt: ask a judge model per sample with a fixed Yes/No template
//!   and average the mapped verdicts (Yes 0.0, No 1.0, N/A 0.5).
//!
//! All three scores lie in [0, 1]. Evidence sentences come pre-split on
//! the [`EvidenceSet`] so the same segmentation is reused everywhere.
//! Backend failures abort the score; nothing is silently imputed.

use serde::{Deserialize, Serialize};

use crate::backends::{judge, JudgeVerdict, NliLogits, NliScorer, SimilarityScorer, TextGenerator};
use crate::core::EvidenceSet;
use crate::error::{Error, Result};

/// Probability of contradiction from raw logits, ignoring the neutral
/// class: `exp(zc) / (exp(ze) + exp(zc))`, computed stably.
pub fn contradiction_probability(logits: &NliLogits) -> f64 {
    1.0 / (1.0 + (logits.entail - logits.contradict).exp())
}

/// Best similarity of `sentence` against each evidence item: the inner
/// max over the item's sentences. These per-sample maxima are the
/// reusable intermediate for sample-count sweeps.
pub fn bertsim_details(
    backend: &dyn SimilarityScorer,
    sentence: &str,
    evidence: &EvidenceSet,
) -> Result<Vec<f64>> {
    evidence
        .items
        .iter()
        .enumerate()
        .map(|(n, item)| {
            if item.sentences.is_empty() {
                return Err(Error::EmptyInput("evidence item has no sentences"));
            }
            let mut best = 0.0_f64;
            for s in &item.sentences {
                let sim = backend.similarity(sentence, s)?.clamp(0.0, 1.0);
                best = best.max(sim);
            }
            log::trace!("bertsim sample {n}: max similarity {best}");
            Ok(best)
        })
        .collect()
}

/// Similarity-based inconsistency: `1 - mean_n(max_k sim(r_i, s_nk))`.
pub fn bertsim_score(
    backend: &dyn SimilarityScorer,
    sentence: &str,
    evidence: &EvidenceSet,
) -> Result<f64> {
    let maxima = bertsim_details(backend, sentence, evidence)?;
    Ok(bertsim_from_details(&maxima))
}

/// Recombine stored per-sample maxima into the score.
pub fn bertsim_from_details(maxima: &[f64]) -> f64 {
    1.0 - maxima.iter().sum::<f64>() / maxima.len() as f64
}

/// Per-sample contradiction probabilities of `sentence` against each
/// evidence item (the whole item text is the premise).
pub fn nli_details(
    backend: &dyn NliScorer,
    sentence: &str,
    evidence: &EvidenceSet,
) -> Result<Vec<f64>> {
    evidence
        .items
        .iter()
        .map(|item| {
            let logits = backend.nli(&item.text, sentence)?;
            Ok(contradiction_probability(&logits))
        })
        .collect()
}

/// NLI inconsistency: mean contradiction probability over samples.
pub fn nli_score(backend: &dyn NliScorer, sentence: &str, evidence: &EvidenceSet) -> Result<f64> {
    if evidence.is_empty() {
        return Err(Error::EmptyInput("evidence"));
    }
    let probs = nli_details(backend, sentence, evidence)?;
    Ok(mean(&probs))
}

/// The verdicts for one sentence, one per evidence item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptVerdictRow {
    pub sentence_index: usize,
    pub verdicts: Vec<JudgeVerdict>,
}

impl PromptVerdictRow {
    /// Mapped scores x_n in {0.0, 0.5, 1.0}.
    pub fn mapped(&self) -> Vec<f64> {
        self.verdicts.iter().map(|v| v.verdict.score()).collect()
    }

    pub fn score(&self) -> f64 {
        mean(&self.mapped())
    }
}

/// Judge `sentence` against every evidence item.
pub fn judge_sentence(
    judge_backend: &dyn TextGenerator,
    sentence: &str,
    evidence: &EvidenceSet,
    sentence_index: usize,
) -> Result<PromptVerdictRow> {
    if evidence.is_empty() {
        return Err(Error::EmptyInput("evidence"));
    }
    let verdicts = evidence
        .items
        .iter()
        .map(|item| judge(judge_backend, &item.text, sentence))
        .collect::<Result<Vec<_>>>()?;
    Ok(PromptVerdictRow {
        sentence_index,
        verdicts,
    })
}

/// Prompt-judge inconsistency: mean mapped verdict over samples.
pub fn prompt_score(
    judge_backend: &dyn TextGenerator,
    sentence: &str,
    evidence: &EvidenceSet,
) -> Result<f64> {
    Ok(judge_sentence(judge_backend, sentence, evidence, 0)?.score())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::stub::{StubJudge, StubNli, StubSimilarity};
    use crate::backends::Verdict;

    fn evidence(texts: &[&str]) -> EvidenceSet {
        EvidenceSet::sampled(texts.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    /// Similarity stub returning fixed values per (candidate, reference).
    struct FixedSim(Vec<(&'static str, f64)>);

    impl SimilarityScorer for FixedSim {
        fn similarity(&self, _c: &str, reference: &str) -> Result<f64> {
            Ok(self
                .0
                .iter()
                .find(|(r, _)| *r == reference.trim())
                .map(|(_, v)| *v)
                .unwrap_or(0.0))
        }
        fn id(&self) -> String {
            "fixed-sim".into()
        }
    }

    #[test]
    fn bertsim_identity_scores_zero() {
        let ev = evidence(&["The cat sat.", "The cat sat."]);
        let s = bertsim_score(&StubSimilarity, "The cat sat.", &ev).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn bertsim_formula_substitution() {
        // Per-sample maxima {0.9, 0.7}: score = 1 - 0.8 = 0.2.
        let sim = FixedSim(vec![("Sample one.", 0.9), ("Sample two.", 0.7)]);
        let ev = evidence(&["Sample one.", "Sample two."]);
        let s = bertsim_score(&sim, "anything", &ev).unwrap();
        assert!((s - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bertsim_all_zero_scores_one() {
        let ev = evidence(&["alpha beta.", "gamma delta."]);
        let s = bertsim_score(&StubSimilarity, "unrelated words here.", &ev).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nli_equal_logits_score_half() {
        struct EqualLogits;
        impl NliScorer for EqualLogits {
            fn nli(&self, _p: &str, _h: &str) -> Result<NliLogits> {
                NliLogits::new(1.3, 1.3)
            }
            fn id(&self) -> String {
                "eq".into()
            }
        }
        let ev = evidence(&["One.", "Two.", "Three."]);
        let s = nli_score(&EqualLogits, "sentence", &ev).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nli_logit_substitution() {
        // (ze, zc) = (1, 0): P = 1 / (1 + e).
        let p = contradiction_probability(&NliLogits::new(1.0, 0.0).unwrap());
        assert!((p - 1.0 / (1.0 + std::f64::consts::E)).abs() < 1e-12);
        assert!((p - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn nli_mean_of_two_samples() {
        struct TwoLogits;
        impl NliScorer for TwoLogits {
            fn nli(&self, premise: &str, _h: &str) -> Result<NliLogits> {
                // One sample strongly contradicting, one strongly entailed,
                // with P values 0.9 and 0.1.
                if premise.contains("first") {
                    NliLogits::new(0.0, (9.0f64).ln())
                } else {
                    NliLogits::new((9.0f64).ln(), 0.0)
                }
            }
            fn id(&self) -> String {
                "two".into()
            }
        }
        let ev = evidence(&["first sample.", "second sample."]);
        let s = nli_score(&TwoLogits, "sentence", &ev).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nli_stub_extremes() {
        let ev = evidence(&[
            "the tower opened in 1900.",
            "the tower opened in the year 1900.",
        ]);
        let supported = nli_score(&StubNli, "the tower opened in 1900.", &ev).unwrap();
        assert!(supported < 0.01);
        let contradicted = nli_score(&StubNli, "zebras graze quietly", &ev).unwrap();
        assert!(contradicted > 0.99);
    }

    #[test]
    fn prompt_mapping_and_mean() {
        let row = PromptVerdictRow {
            sentence_index: 0,
            verdicts: [Verdict::Yes, Verdict::No, Verdict::Na, Verdict::Yes]
                .iter()
                .map(|v| JudgeVerdict {
                    verdict: *v,
                    raw: String::new(),
                })
                .collect(),
        };
        assert_eq!(row.mapped(), vec![0.0, 1.0, 0.5, 0.0]);
        assert!((row.score() - 0.375).abs() < 1e-12);

        let all_yes = PromptVerdictRow {
            sentence_index: 0,
            verdicts: vec![
                JudgeVerdict { verdict: Verdict::Yes, raw: "Yes".into() };
                3
            ],
        };
        assert_eq!(all_yes.score(), 0.0);

        let all_na = PromptVerdictRow {
            sentence_index: 0,
            verdicts: vec![
                JudgeVerdict { verdict: Verdict::Na, raw: "Maybe".into() };
                4
            ],
        };
        assert!((all_na.score() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn prompt_score_with_stub_judge() {
        let ev = evidence(&[
            "the spire was finished in 1889.",
            "construction finished the spire in 1889.",
        ]);
        let supported = prompt_score(&StubJudge::default(), "the spire was finished in 1889.", &ev).unwrap();
        assert_eq!(supported, 0.0);
        let unsupported = prompt_score(&StubJudge::default(), "whales sing at dawn", &ev).unwrap();
        assert_eq!(unsupported, 1.0);
    }

    #[test]
    fn prompt_exact_fraction_of_no() {
        // k Yes and N-k No gives exactly (N-k)/N.
        let ev = evidence(&[
            "apples and oranges here.",
            "apples and oranges here.",
            "nothing relevant at all.",
            "nothing relevant at all.",
            "nothing relevant at all.",
        ]);
        let s = prompt_score(&StubJudge::default(), "apples and oranges here.", &ev).unwrap();
        assert!((s - 3.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn appending_identical_evidence_never_raises_scores() {
        let base = evidence(&["alpha beta gamma.", "delta epsilon zeta."]);
        let sentence = "alpha beta gamma.";
        let mut texts: Vec<String> = base.items.iter().map(|i| i.text.clone()).collect();
        texts.push(sentence.to_string());
        let extended = EvidenceSet::sampled(texts).unwrap();

        let b0 = bertsim_score(&StubSimilarity, sentence, &base).unwrap();
        let b1 = bertsim_score(&StubSimilarity, sentence, &extended).unwrap();
        assert!(b1 <= b0 + 1e-12);

        let n0 = nli_score(&StubNli, sentence, &base).unwrap();
        let n1 = nli_score(&StubNli, sentence, &extended).unwrap();
        assert!(n1 <= n0 + 1e-12);

        let p0 = prompt_score(&StubJudge::default(), sentence, &base).unwrap();
        let p1 = prompt_score(&StubJudge::default(), sentence, &extended).unwrap();
        assert!(p1 <= p0 + 1e-12);
    }
}
