//! Question-answering consistency scoring.
//!
//! For each response sentence, multiple-choice questions are generated
//! and answered twice: once on the response itself (fixing the
//! expected answer) and once on each sampled text. Samples that agree
//! with the response's answer count as matches, the rest as
//! mismatches, and the two tallies are combined into a posterior
//! probability that the sentence is non-factual.
//!
//! With `beta1` the probability that a mismatch is observed on a
//! non-factual sentence and `beta2` the probability that a match is
//! observed on a factual one, the posterior with equal priors reduces
//! to
//!
//! ```text
//! score = gamma2^Nn / (gamma1^Nm + gamma2^Nn)
//! gamma1 = beta2 / (1 - beta1),  gamma2 = beta1 / (1 - beta2)
//! ```
//!
//! Instead of rejecting questions a sample cannot answer, each sample's
//! contribution is weighted by its answerability estimate alpha (soft
//! counting): `Nm = sum of alpha over matches`, `Nn = sum over
//! mismatches`. Hard counting (alpha thresholded to 0/1) is available
//! for comparison. The score is evaluated in log space so large sample
//! counts cannot overflow.

use serde::{Deserialize, Serialize};

use crate::backends::QaModel;
use crate::core::EvidenceSet;
use crate::error::{Error, Result};

/// Reliability parameters of the Bayesian match/mismatch model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesParams {
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for BayesParams {
    fn default() -> Self {
        BayesParams {
            beta1: 0.8,
            beta2: 0.8,
        }
    }
}

impl BayesParams {
    pub fn new(beta1: f64, beta2: f64) -> Result<Self> {
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(Error::Precondition(format!(
                    "{name} must lie strictly inside (0, 1), got {b}"
                )));
            }
        }
        Ok(BayesParams { beta1, beta2 })
    }

    /// Match weight; 4.0 at the default parameters.
    pub fn gamma1(&self) -> f64 {
        self.beta2 / (1.0 - self.beta1)
    }

    /// Mismatch weight; 4.0 at the default parameters.
    pub fn gamma2(&self) -> f64 {
        self.beta1 / (1.0 - self.beta2)
    }
}

/// How per-sample answerability enters the match/mismatch tallies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Counting {
    /// Weight each sample by its answerability alpha.
    Soft,
    /// Count a sample fully when alpha exceeds the threshold, not at all
    /// otherwise.
    Hard { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaConfig {
    /// Questions generated per sentence.
    pub n_questions: usize,
    pub params: BayesParams,
    pub counting: Counting,
    /// When set, questions whose answerability *on the response* falls
    /// below this threshold are dropped entirely.
    pub min_response_answerability: Option<f64>,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig {
            n_questions: 5,
            params: BayesParams::default(),
            counting: Counting::Soft,
            min_response_answerability: None,
        }
    }
}

/// Match/mismatch evidence gathered for one question. Each evidence
/// sample lands in exactly one of the two lists, as
/// `(sample_index, alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionEvidence {
    pub question: String,
    /// Option index the response itself selected.
    pub response_answer: usize,
    pub matches: Vec<(usize, f64)>,
    pub mismatches: Vec<(usize, f64)>,
}

impl QuestionEvidence {
    /// Effective (match, mismatch) tallies under the counting mode.
    pub fn effective_counts(&self, counting: Counting) -> (f64, f64) {
        let weigh = |alpha: f64| match counting {
            Counting::Soft => alpha,
            Counting::Hard { threshold } => {
                if alpha > threshold {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let n_match = self.matches.iter().map(|(_, a)| weigh(*a)).sum();
        let n_mismatch = self.mismatches.iter().map(|(_, a)| weigh(*a)).sum();
        (n_match, n_mismatch)
    }

    /// Evidence restricted to the first `n` samples.
    pub fn prefix(&self, n: usize) -> QuestionEvidence {
        QuestionEvidence {
            question: self.question.clone(),
            response_answer: self.response_answer,
            matches: self.matches.iter().copied().filter(|(i, _)| *i < n).collect(),
            mismatches: self.mismatches.iter().copied().filter(|(i, _)| *i < n).collect(),
        }
    }
}

/// Posterior probability that the sentence is non-factual given
/// effective match/mismatch counts. Evaluated in log space.
pub fn bayes_score(n_match: f64, n_mismatch: f64, params: &BayesParams) -> f64 {
    // gamma2^Nn / (gamma1^Nm + gamma2^Nn) == sigmoid(Nn ln g2 - Nm ln g1)
    let exponent = n_match * params.gamma1().ln() - n_mismatch * params.gamma2().ln();
    1.0 / (1.0 + exponent.exp())
}

/// Inconsistency score for a single question's evidence.
pub fn question_score(ev: &QuestionEvidence, config: &QaConfig) -> f64 {
    let (n_match, n_mismatch) = ev.effective_counts(config.counting);
    bayes_score(n_match, n_mismatch, &config.params)
}

/// Generate questions for `sentence` and collect match/mismatch
/// evidence from every item of `evidence`.
///
/// Questions the backend fails to produce are simply absent from the
/// result; an empty result means every question failed and the caller
/// should treat the sentence's QA score as missing.
pub fn collect_evidence(
    backend: &dyn QaModel,
    sentence: &str,
    passage: &str,
    evidence: &EvidenceSet,
    config: &QaConfig,
) -> Result<Vec<QuestionEvidence>> {
    let items = backend.qa_generate(sentence, passage, config.n_questions)?;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let on_response = backend.qa_answer(&item, passage)?;
        if let Some(min_alpha) = config.min_response_answerability {
            if on_response.answerability < min_alpha {
                continue;
            }
        }
        let mut ev = QuestionEvidence {
            question: item.question.clone(),
            response_answer: on_response.answer_index,
            matches: Vec::new(),
            mismatches: Vec::new(),
        };
        for (sample_index, sample) in evidence.items.iter().enumerate() {
            let ans = backend.qa_answer(&item, &sample.text)?;
            if !(0.0..=1.0).contains(&ans.answerability) {
                return Err(Error::Invariant(format!(
                    "answerability {} outside [0, 1]",
                    ans.answerability
                )));
            }
            if ans.answer_index == ev.response_answer {
                ev.matches.push((sample_index, ans.answerability));
            } else {
                ev.mismatches.push((sample_index, ans.answerability));
            }
        }
        out.push(ev);
    }
    Ok(out)
}

/// Mean question score for a sentence. Errors when no question
/// survived, so a missing score is flagged rather than silently 0.
pub fn qa_sentence_score(
    evidence: &[QuestionEvidence],
    config: &QaConfig,
    sentence_index: usize,
) -> Result<f64> {
    if evidence.is_empty() {
        return Err(Error::NoQuestions { sentence_index });
    }
    Ok(evidence.iter().map(|ev| question_score(ev, config)).sum::<f64>() / evidence.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::stub::StubQa;

    fn ev(matches: &[(usize, f64)], mismatches: &[(usize, f64)]) -> QuestionEvidence {
        QuestionEvidence {
            question: "q".into(),
            response_answer: 0,
            matches: matches.to_vec(),
            mismatches: mismatches.to_vec(),
        }
    }

    #[test]
    fn default_gammas_are_four() {
        let p = BayesParams::default();
        assert!((p.gamma1() - 4.0).abs() < 1e-12);
        assert!((p.gamma2() - 4.0).abs() < 1e-12);
        assert!(BayesParams::new(0.0, 0.5).is_err());
        assert!(BayesParams::new(0.5, 1.0).is_err());
    }

    #[test]
    fn equal_counts_score_half() {
        let p = BayesParams::default();
        for n in [0.0, 1.0, 3.5, 20.0] {
            assert!((bayes_score(n, n, &p) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_substitution_cases() {
        let p = BayesParams::default();
        // 1 / (4 + 1)
        assert!((bayes_score(1.0, 0.0, &p) - 0.2).abs() < 1e-12);
        // 4 / (16 + 4)
        assert!((bayes_score(2.0, 1.0, &p) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn log_space_survives_large_counts() {
        let p = BayesParams::default();
        let s = bayes_score(1000.0, 0.0, &p);
        assert!(s.is_finite() && (0.0..1e-300).contains(&s));
        let s = bayes_score(0.0, 1000.0, &p);
        assert!(s > 1.0 - 1e-12 && s <= 1.0);
        // Both counts huge: the naive ratio would be inf/inf.
        let s = bayes_score(1e6, 1e6, &p);
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn soft_counts_sum_alphas() {
        let matches: Vec<(usize, f64)> = (0..12).map(|i| (i, 1.0)).collect();
        let mismatches: Vec<(usize, f64)> = (12..20).map(|i| (i, 1.0)).collect();
        let e = ev(&matches, &mismatches);
        let (nm, nn) = e.effective_counts(Counting::Soft);
        assert_eq!((nm, nn), (12.0, 8.0));
    }

    #[test]
    fn hard_counting_thresholds_alpha() {
        let e = ev(&[(0, 0.9), (1, 0.4)], &[(2, 0.6), (3, 0.1)]);
        let (nm, nn) = e.effective_counts(Counting::Hard { threshold: 0.5 });
        assert_eq!((nm, nn), (1.0, 1.0));
        // Soft counting keeps the fractional weights.
        let (nm, nn) = e.effective_counts(Counting::Soft);
        assert!((nm - 1.3).abs() < 1e-12 && (nn - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sentence_score_is_mean_over_questions() {
        let config = QaConfig::default();
        // bayes(0, 1) = 4/5 = 0.8 and bayes(1, 0) = 1/5 = 0.2.
        let qs = vec![ev(&[], &[(0, 1.0)]), ev(&[(0, 1.0)], &[])];
        let s = qa_sentence_score(&qs, &config, 0).unwrap();
        assert!((s - 0.5).abs() < 1e-12);

        let single = vec![ev(&[(0, 1.0)], &[])];
        assert!((qa_sentence_score(&single, &config, 0).unwrap() - 0.2).abs() < 1e-12);

        let triple = vec![ev(&[(0, 1.0)], &[]); 3];
        assert!((qa_sentence_score(&triple, &config, 0).unwrap() - 0.2).abs() < 1e-12);

        assert!(matches!(
            qa_sentence_score(&[], &config, 7),
            Err(Error::NoQuestions { sentence_index: 7 })
        ));
    }

    #[test]
    fn collect_evidence_with_stub() {
        let qa = StubQa::default();
        let config = QaConfig {
            n_questions: 3,
            ..Default::default()
        };
        let passage = "the quick brown fox jumps over the lazy dog";
        let sentence = "the quick brown fox jumps";

        // Samples that contain the sentence verbatim: all matches, alpha 1.
        let consistent = EvidenceSet::sampled(vec![
            format!("{sentence} again today"),
            format!("indeed {sentence} as before"),
        ])
        .unwrap();
        let evs = collect_evidence(&qa, sentence, passage, &consistent, &config).unwrap();
        assert_eq!(evs.len(), 3);
        for e in &evs {
            assert_eq!(e.matches.len(), 2);
            assert!(e.mismatches.is_empty());
            assert!(e.matches.iter().all(|(_, a)| *a == 1.0));
        }

        // Vocabulary-disjoint samples: every alpha is 0.
        let disjoint = EvidenceSet::sampled(vec!["totally unrelated words".into()]).unwrap();
        let evs = collect_evidence(&qa, sentence, passage, &disjoint, &config).unwrap();
        for e in &evs {
            let (nm, nn) = e.effective_counts(Counting::Soft);
            assert_eq!(nm + nn, 0.0);
        }
    }

    #[test]
    fn response_answerability_filter_drops_questions() {
        let qa = StubQa::default();
        let evidence = EvidenceSet::sampled(vec!["anything here".into()]).unwrap();
        let config = QaConfig {
            n_questions: 2,
            // The stub answers the gold option on the response with
            // alpha 1.0, so a threshold above 1 drops everything.
            min_response_answerability: Some(1.1),
            ..Default::default()
        };
        let evs = collect_evidence(&qa, "alpha beta gamma", "alpha beta gamma delta", &evidence, &config).unwrap();
        assert!(evs.is_empty());
    }

    #[test]
    fn prefix_filters_sample_indices() {
        let e = ev(&[(0, 1.0), (3, 0.5)], &[(1, 0.25), (2, 1.0)]);
        let p = e.prefix(2);
        assert_eq!(p.matches, vec![(0, 1.0)]);
        assert_eq!(p.mismatches, vec![(1, 0.25)]);
    }
}
