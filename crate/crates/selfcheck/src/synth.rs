//! Deterministic synthetic corpus generation.
//!
//! Builds passages with known factual/hallucinated sentences and
//! matching sample sets, so the whole scoring pipeline can be validated
//! end to end without any model. The construction instantiates the
//! consistency hypothesis directly:
//!
//! - factual sentences draw their tokens from `fact_vocab` and are
//!   re-emitted in every sample, so their tokens recur;
//! - hallucinated sentences (labelled major-inaccurate) draw from
//!   `halluc_vocab`, and the samples emit *fresh* hallucination-pool
//!   tokens in their place, so the samples diverge from the response
//!   and from one another.
//!
//! `consistency_noise` interpolates toward no signal: with probability
//! `noise` a sentence's per-sample emission is re-randomized to be
//! consistent or divergent by a fair coin, independent of its label. At
//! noise 0 the labels separate perfectly; at noise 1 they carry no
//! information.
//!
//! Everything is a pure function of the spec (seed included): each
//! concept uses its own stream of a counter-based RNG, so corpora are
//! byte-identical across runs and platforms.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::core::{DatasetRecord, EvidenceSet, Passage, SentenceLabel};
use crate::error::{Error, Result};

const TOKENS_PER_SENTENCE: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_concepts: usize,
    pub sentences_per_passage: usize,
    /// Token pool for factual content; disjoint from `halluc_vocab`.
    pub fact_vocab: Vec<String>,
    /// Token pool for hallucinated content.
    pub halluc_vocab: Vec<String>,
    /// Probability that a sentence is hallucinated.
    pub halluc_rate: f64,
    pub n_samples: usize,
    /// 0 = perfectly label-determined emissions, 1 = label-independent.
    pub consistency_noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// A spec with generated token pools of comfortable size.
    pub fn new(
        n_concepts: usize,
        sentences_per_passage: usize,
        halluc_rate: f64,
        n_samples: usize,
        consistency_noise: f64,
        seed: u64,
    ) -> Self {
        SynthSpec {
            n_concepts,
            sentences_per_passage,
            fact_vocab: (0..400).map(|i| format!("fact{i:03}")).collect(),
            halluc_vocab: (0..2400).map(|i| format!("hx{i:04}")).collect(),
            halluc_rate,
            n_samples,
            consistency_noise,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_concepts == 0 || self.sentences_per_passage == 0 || self.n_samples == 0 {
            return Err(Error::Precondition(
                "n_concepts, sentences_per_passage and n_samples must all be >= 1".into(),
            ));
        }
        for (name, rate) in [
            ("halluc_rate", self.halluc_rate),
            ("consistency_noise", self.consistency_noise),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Precondition(format!(
                    "{name} must lie in [0, 1], got {rate}"
                )));
            }
        }
        if self.fact_vocab.len() < TOKENS_PER_SENTENCE {
            return Err(Error::Precondition(format!(
                "fact_vocab needs at least {TOKENS_PER_SENTENCE} tokens"
            )));
        }
        // Divergent draws must avoid the response's own hallucination
        // tokens, so the pool needs headroom.
        let needed = 2 * (self.sentences_per_passage + 1) * TOKENS_PER_SENTENCE;
        if self.halluc_vocab.len() < needed {
            return Err(Error::Precondition(format!(
                "halluc_vocab needs at least {needed} tokens for {} sentences",
                self.sentences_per_passage
            )));
        }
        let fact: HashSet<&str> = self.fact_vocab.iter().map(String::as_str).collect();
        if fact.len() != self.fact_vocab.len() {
            return Err(Error::Precondition("fact_vocab contains duplicates".into()));
        }
        let halluc: HashSet<&str> = self.halluc_vocab.iter().map(String::as_str).collect();
        if halluc.len() != self.halluc_vocab.len() {
            return Err(Error::Precondition("halluc_vocab contains duplicates".into()));
        }
        if fact.intersection(&halluc).next().is_some() {
            return Err(Error::Precondition("vocab pools must be disjoint".into()));
        }
        for t in self.fact_vocab.iter().chain(&self.halluc_vocab) {
            if t.is_empty() || !t.chars().all(|c| c.is_ascii_alphanumeric()) {
                return Err(Error::Precondition(format!(
                    "vocab tokens must be non-empty and alphanumeric, got {t:?}"
                )));
            }
        }
        Ok(())
    }
}

fn draw_sentence_tokens(
    rng: &mut ChaCha12Rng,
    pool: &[String],
    forbidden: &HashSet<String>,
) -> Vec<String> {
    let mut chosen: Vec<String> = Vec::with_capacity(TOKENS_PER_SENTENCE);
    while chosen.len() < TOKENS_PER_SENTENCE {
        let token = &pool[rng.random_range(0..pool.len())];
        if forbidden.contains(token) || chosen.iter().any(|t| t == token) {
            continue;
        }
        chosen.push(token.clone());
    }
    chosen
}

fn sentence_text(tokens: &[String]) -> String {
    format!("{}.", tokens.join(" "))
}

/// Generate the corpus described by `spec`.
pub fn generate_corpus(spec: &SynthSpec) -> Result<Vec<DatasetRecord>> {
    spec.validate()?;
    (0..spec.n_concepts).map(|c| generate_record(spec, c)).collect()
}

fn generate_record(spec: &SynthSpec, concept_index: usize) -> Result<DatasetRecord> {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    rng.set_stream(concept_index as u64 + 1);

    let no_forbidden = HashSet::new();
    let mut labels = Vec::with_capacity(spec.sentences_per_passage);
    let mut sentence_tokens: Vec<Vec<String>> = Vec::with_capacity(spec.sentences_per_passage);
    let mut response_halluc_tokens: HashSet<String> = HashSet::new();

    for _ in 0..spec.sentences_per_passage {
        let hallucinated = rng.random_bool(spec.halluc_rate);
        let tokens = if hallucinated {
            let t = draw_sentence_tokens(&mut rng, &spec.halluc_vocab, &response_halluc_tokens);
            response_halluc_tokens.extend(t.iter().cloned());
            t
        } else {
            draw_sentence_tokens(&mut rng, &spec.fact_vocab, &no_forbidden)
        };
        labels.push(if hallucinated {
            SentenceLabel::MajorInaccurate
        } else {
            SentenceLabel::Accurate
        });
        sentence_tokens.push(tokens);
    }

    let sentences: Vec<String> = sentence_tokens.iter().map(|t| sentence_text(t)).collect();
    let response = sentences.join(" ");

    let mut samples = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let mut emissions = Vec::with_capacity(spec.sentences_per_passage);
        for (i, label) in labels.iter().enumerate() {
            let factual = *label == SentenceLabel::Accurate;
            // With probability `noise` the emission ignores the label
            // and flips a fair coin; otherwise it is consistent exactly
            // when the sentence is factual.
            let consistent = if rng.random_bool(spec.consistency_noise) {
                rng.random_bool(0.5)
            } else {
                factual
            };
            if consistent {
                emissions.push(sentences[i].clone());
            } else {
                let fresh =
                    draw_sentence_tokens(&mut rng, &spec.halluc_vocab, &response_halluc_tokens);
                emissions.push(sentence_text(&fresh));
            }
        }
        samples.push(emissions.join(" "));
    }

    let factual_sentences: Vec<&str> = labels
        .iter()
        .zip(&sentences)
        .filter(|(l, _)| **l == SentenceLabel::Accurate)
        .map(|(_, s)| s.as_str())
        .collect();
    let reference = if factual_sentences.is_empty() {
        // Total hallucination: the reference knows nothing of it.
        sentence_text(&spec.fact_vocab[..TOKENS_PER_SENTENCE].to_vec())
    } else {
        factual_sentences.join(" ")
    };

    let passage = Passage::new(
        format!("synthetic-{concept_index:03}"),
        response,
        sentences,
        Some(labels),
    )?;
    let samples = EvidenceSet::sampled(samples)?;
    Ok(DatasetRecord {
        passage,
        samples: Some(samples),
        reference: Some(reference),
    })
}
