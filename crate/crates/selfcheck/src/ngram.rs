//! N-gram consistency scoring.
//!
//! An additive-smoothed n-gram model is trained on the sampled
//! responses *plus the main response itself* (so every token of the
//! response has count >= 1), then each response sentence is scored by
//! the average and the maximum of its tokens' negative log
//! probabilities. A token that rarely occurs across the samples gets a
//! small probability and a large score: the max variant flags the
//! single most surprising token in the sentence.
//!
//! Modelling choices:
//!
//! - tokens are maximal alphanumeric runs, lowercased by default
//!   (configurable);
//! - probabilities are `(count(c,t) + delta) / (count(c,.) + delta*|V|)`
//!   with `delta > 0`;
//! - each sentence of each training text is one sequence; orders >= 2
//!   pad the left context with begin-of-sequence markers (no end
//!   marker, so exactly one probability per real token);
//! - a context never observed in training backs off to the
//!   (n-1)-gram distribution, down to the unigram;
//! - natural logs throughout.

use std::collections::HashMap;

use crate::core::{EvidenceSet, Passage};
use crate::error::{Error, Result};
use crate::text::word_tokens;

/// Sentinel ids; never part of the vocabulary.
const BEGIN: u32 = u32::MAX;
const UNKNOWN: u32 = u32::MAX - 1;

pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct NgramConfig {
    /// Model order n, in 1..=5.
    pub order: usize,
    /// Additive smoothing constant, > 0.
    pub delta: f64,
    /// Lowercase tokens before counting.
    pub lowercase: bool,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            order: 1,
            delta: 1e-9,
            lowercase: true,
        }
    }
}

impl NgramConfig {
    pub fn with_order(order: usize) -> Self {
        NgramConfig {
            order,
            ..Default::default()
        }
    }
}

#[derive(Debug, Default)]
struct Level {
    /// context -> next-token counts.
    next: HashMap<Vec<u32>, HashMap<u32, u64>>,
    /// context -> total count.
    totals: HashMap<Vec<u32>, u64>,
}

#[derive(Debug)]
pub struct NgramModel {
    config: NgramConfig,
    vocab: HashMap<String, u32>,
    /// levels[k-1] holds the k-gram counts (context length k-1).
    levels: Vec<Level>,
}

/// Train a model over the evidence texts and the response.
pub fn build(evidence: &EvidenceSet, response: &Passage, config: &NgramConfig) -> Result<NgramModel> {
    if !(1..=MAX_ORDER).contains(&config.order) {
        return Err(Error::Precondition(format!(
            "n-gram order must be in 1..={MAX_ORDER}, got {}",
            config.order
        )));
    }
    if !(config.delta > 0.0) {
        return Err(Error::Precondition(format!(
            "smoothing delta must be > 0, got {}",
            config.delta
        )));
    }
    if evidence.is_empty() {
        return Err(Error::EmptyInput("evidence"));
    }

    let mut model = NgramModel {
        config: config.clone(),
        vocab: HashMap::new(),
        levels: (0..config.order).map(|_| Level::default()).collect(),
    };

    let sentences = evidence
        .items
        .iter()
        .flat_map(|item| item.sentences.iter())
        .chain(response.sentences.iter());
    let mut any = false;
    for sentence in sentences {
        let ids: Vec<u32> = word_tokens(sentence, config.lowercase)
            .into_iter()
            .map(|t| model.intern(t))
            .collect();
        any |= !ids.is_empty();
        model.count_sequence(&ids);
    }
    if !any {
        return Err(Error::EmptyInput("evidence (no tokens after tokenization)"));
    }
    Ok(model)
}

impl NgramModel {
    fn intern(&mut self, token: String) -> u32 {
        let next_id = self.vocab.len() as u32;
        *self.vocab.entry(token).or_insert(next_id)
    }

    fn count_sequence(&mut self, ids: &[u32]) {
        for j in 0..ids.len() {
            for k in 1..=self.config.order {
                let ctx = context_at(ids, j, k);
                let level = &mut self.levels[k - 1];
                *level
                    .next
                    .entry(ctx.clone())
                    .or_default()
                    .entry(ids[j])
                    .or_insert(0) += 1;
                *level.totals.entry(ctx).or_insert(0) += 1;
            }
        }
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn delta(&self) -> f64 {
        self.config.delta
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Tokenize with the model's own configuration.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        word_tokens(text, self.config.lowercase)
    }

    fn id_of(&self, token: &str) -> u32 {
        self.vocab.get(token).copied().unwrap_or(UNKNOWN)
    }

    /// Smoothed probability at level `k` with backoff for unseen
    /// contexts. `ctx` has length k-1.
    fn prob_level(&self, k: usize, ctx: &[u32], token: u32) -> f64 {
        let delta = self.config.delta;
        let v = self.vocab.len() as f64;
        let level = &self.levels[k - 1];
        match level.totals.get(ctx) {
            Some(&total) => {
                let count = level
                    .next
                    .get(ctx)
                    .and_then(|m| m.get(&token))
                    .copied()
                    .unwrap_or(0) as f64;
                (count + delta) / (total as f64 + delta * v)
            }
            None if k > 1 => self.prob_level(k - 1, &ctx[1..], token),
            None => {
                // Unreachable in practice: the unigram level always has
                // the empty context once training saw any token.
                delta / (delta * v)
            }
        }
    }

    /// Probability of `token` given the raw preceding tokens of its
    /// sequence (begin markers are added internally).
    pub fn prob(&self, preceding: &[String], token: &str) -> f64 {
        let ids: Vec<u32> = preceding.iter().map(|t| self.id_of(t)).collect();
        let ctx = context_at(&ids, ids.len(), self.config.order);
        self.prob_level(self.config.order, &ctx, self.id_of(token))
    }

    /// Unigram probability, ignoring context entirely.
    pub fn unigram_prob(&self, token: &str) -> f64 {
        self.prob_level(1, &[], self.id_of(token))
    }

    /// Natural-log probability of each token of a sentence.
    pub fn sequence_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("sentence is empty after tokenization"));
        }
        let ids: Vec<u32> = tokens.iter().map(|t| self.id_of(t)).collect();
        Ok((0..ids.len())
            .map(|j| {
                let ctx = context_at(&ids, j, self.config.order);
                self.prob_level(self.config.order, &ctx, ids[j]).ln()
            })
            .collect())
    }

    /// Mean negative log probability of the sentence's tokens.
    pub fn score_avg(&self, tokens: &[String]) -> Result<f64> {
        let logprobs = self.sequence_logprobs(tokens)?;
        Ok(-logprobs.iter().sum::<f64>() / logprobs.len() as f64)
    }

    /// Negative log probability of the sentence's least likely token.
    pub fn score_max(&self, tokens: &[String]) -> Result<f64> {
        let logprobs = self.sequence_logprobs(tokens)?;
        Ok(logprobs.iter().map(|lp| -lp).fold(f64::NEG_INFINITY, f64::max))
    }
}

/// The level-`k` context for position `j`: the k-1 preceding ids,
/// left-padded with begin markers.
fn context_at(ids: &[u32], j: usize, k: usize) -> Vec<u32> {
    let need = k - 1;
    let have = j.min(need);
    let mut ctx = vec![BEGIN; need - have];
    ctx.extend_from_slice(&ids[j - have..j]);
    ctx
}
