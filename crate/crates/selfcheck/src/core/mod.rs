//! Domain types shared by every scorer: passages, evidence sets,
//! annotation labels, and score containers.

pub mod dataset;
pub mod segment;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{load_dataset, serialize_dataset, Dataset, DatasetRecord, FileMeta};
pub use segment::{segment_sentences, sentence_spans};

/// Sentence-level factuality annotation, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceLabel {
    Accurate,
    MinorInaccurate,
    MajorInaccurate,
}

impl SentenceLabel {
    /// Numeric projection used for passage-level gold scores.
    pub fn severity(self) -> f64 {
        match self {
            SentenceLabel::Accurate => 0.0,
            SentenceLabel::MinorInaccurate => 0.5,
            SentenceLabel::MajorInaccurate => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SentenceLabel::Accurate => "accurate",
            SentenceLabel::MinorInaccurate => "minor_inaccurate",
            SentenceLabel::MajorInaccurate => "major_inaccurate",
        }
    }
}

/// Resolve a disagreement between two annotators by keeping the
/// worse-case label. Commutative and idempotent.
pub fn merge_annotations(a: SentenceLabel, b: SentenceLabel) -> SentenceLabel {
    a.max(b)
}

/// A main LLM response split into sentences, with optional gold labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub concept: String,
    pub response: String,
    pub sentences: Vec<String>,
    pub labels: Option<Vec<SentenceLabel>>,
}

impl Passage {
    /// Build a passage from pre-split sentences, validating the type
    /// invariants: sentences non-empty, in response order, and labels
    /// (when present) aligned one-to-one with sentences.
    pub fn new(
        concept: impl Into<String>,
        response: impl Into<String>,
        sentences: Vec<String>,
        labels: Option<Vec<SentenceLabel>>,
    ) -> Result<Self> {
        let response = response.into();
        if sentences.is_empty() {
            return Err(Error::Invariant("passage has no sentences".into()));
        }
        if sentences.iter().any(|s| s.trim().is_empty()) {
            return Err(Error::Invariant("passage contains an empty sentence".into()));
        }
        // Sentences must occur in the response in their listed order.
        segment::sentence_spans(&response, &sentences)?;
        if let Some(labels) = &labels {
            if labels.len() != sentences.len() {
                return Err(Error::Invariant(format!(
                    "{} labels for {} sentences",
                    labels.len(),
                    sentences.len()
                )));
            }
        }
        Ok(Passage {
            concept: concept.into(),
            response,
            sentences,
            labels,
        })
    }

    /// Build a passage by segmenting `response` into sentences.
    pub fn from_response(concept: impl Into<String>, response: impl Into<String>) -> Result<Self> {
        let response = response.into();
        let sentences = segment::segment_sentences(&response)?;
        Passage::new(concept, response, sentences, None)
    }

    /// Mean severity of the gold labels, in [0, 1]. `None` when the
    /// passage is unlabelled.
    pub fn gold_score(&self) -> Option<f64> {
        let labels = self.labels.as_ref()?;
        Some(labels.iter().map(|l| l.severity()).sum::<f64>() / labels.len() as f64)
    }

    /// A passage is a total hallucination when every sentence is
    /// labelled major-inaccurate (gold score exactly 1.0).
    pub fn is_total_hallucination(&self) -> Option<bool> {
        let labels = self.labels.as_ref()?;
        Some(labels.iter().all(|l| *l == SentenceLabel::MajorInaccurate))
    }
}

/// How an evidence set was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    /// Stochastic re-samples of the same query.
    Sampled,
    /// An external reference document (knowledge-grounded mode).
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMeta {
    pub temperature: f64,
    pub model: String,
}

/// One evidence text with its sentence split, computed once at
/// construction so every scorer sees the same segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub text: String,
    pub sentences: Vec<String>,
}

/// The texts a passage is checked against: either the N stochastic
/// samples or a single reference document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub items: Vec<EvidenceItem>,
    pub kind: EvidenceKind,
    pub sampling_meta: Option<SamplingMeta>,
}

impl EvidenceSet {
    pub fn sampled(texts: Vec<String>) -> Result<Self> {
        Self::build(texts, EvidenceKind::Sampled)
    }

    pub fn reference(text: String) -> Result<Self> {
        Self::build(vec![text], EvidenceKind::Reference)
    }

    fn build(texts: Vec<String>, kind: EvidenceKind) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::Invariant("evidence set has no items".into()));
        }
        let items = texts
            .into_iter()
            .map(|text| {
                let sentences = segment::segment_sentences(&text)?;
                Ok(EvidenceItem { text, sentences })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvidenceSet {
            items,
            kind,
            sampling_meta: None,
        })
    }

    pub fn with_sampling_meta(mut self, meta: SamplingMeta) -> Self {
        self.sampling_meta = Some(meta);
        self
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The evidence set restricted to its first `n` items, for
    /// sample-count sweeps.
    pub fn prefix(&self, n: usize) -> Result<EvidenceSet> {
        if n == 0 {
            return Err(Error::Precondition("evidence prefix length must be >= 1".into()));
        }
        if n > self.items.len() {
            return Err(Error::Precondition(format!(
                "evidence prefix length {n} exceeds the {} available items",
                self.items.len()
            )));
        }
        Ok(EvidenceSet {
            items: self.items[..n].to_vec(),
            kind: self.kind,
            sampling_meta: self.sampling_meta.clone(),
        })
    }
}

/// Identifier of a scoring method. N-gram variants carry their order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    AvgNegLogProb,
    MaxNegLogProb,
    AvgEntropy,
    MaxEntropy,
    BertSim,
    Qa,
    Nli,
    Prompt,
    NgramAvg { order: usize },
    NgramMax { order: usize },
}

impl Method {
    /// Canonical string id, used in score files and on the CLI.
    pub fn id(&self) -> String {
        match self {
            Method::AvgNegLogProb => "avg-neg-logprob".into(),
            Method::MaxNegLogProb => "max-neg-logprob".into(),
            Method::AvgEntropy => "avg-entropy".into(),
            Method::MaxEntropy => "max-entropy".into(),
            Method::BertSim => "bertsim".into(),
            Method::Qa => "qa".into(),
            Method::Nli => "nli".into(),
            Method::Prompt => "prompt".into(),
            Method::NgramAvg { order: 1 } => "unigram-avg".into(),
            Method::NgramMax { order: 1 } => "unigram-max".into(),
            Method::NgramAvg { order } => format!("{order}gram-avg"),
            Method::NgramMax { order } => format!("{order}gram-max"),
        }
    }

    /// Parse a method id. Accepts "1gram-max" as an alias of
    /// "unigram-max" (and likewise for -avg).
    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "avg-neg-logprob" => Some(Method::AvgNegLogProb),
            "max-neg-logprob" => Some(Method::MaxNegLogProb),
            "avg-entropy" => Some(Method::AvgEntropy),
            "max-entropy" => Some(Method::MaxEntropy),
            "bertsim" => Some(Method::BertSim),
            "qa" => Some(Method::Qa),
            "nli" => Some(Method::Nli),
            "prompt" => Some(Method::Prompt),
            "unigram-avg" => Some(Method::NgramAvg { order: 1 }),
            "unigram-max" => Some(Method::NgramMax { order: 1 }),
            _ => {
                let (head, tail) = s.split_once("gram-")?;
                let order: usize = head.parse().ok()?;
                if !(1..=5).contains(&order) {
                    return None;
                }
                match tail {
                    "avg" => Some(Method::NgramAvg { order }),
                    "max" => Some(Method::NgramMax { order }),
                    _ => None,
                }
            }
        }
    }

    /// Whether the score is guaranteed to lie in [0, 1].
    pub fn bounded(&self) -> bool {
        matches!(
            self,
            Method::BertSim | Method::Qa | Method::Nli | Method::Prompt
        )
    }

    /// Token-probability and entropy metrics (computed from token
    /// scores rather than sampled evidence).
    pub fn is_greybox(&self) -> bool {
        matches!(
            self,
            Method::AvgNegLogProb | Method::MaxNegLogProb | Method::AvgEntropy | Method::MaxEntropy
        )
    }

    /// Methods whose passage score is the token-level mean over the
    /// whole passage instead of the mean of sentence scores.
    pub fn aggregates_over_tokens(&self) -> bool {
        matches!(self, Method::AvgNegLogProb | Method::AvgEntropy)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.id())
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Method::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown method `{s}`")))
    }
}

/// One scalar hallucination score for one sentence under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub method: Method,
    pub value: f64,
    pub bounded: bool,
}

impl SentenceScore {
    pub fn new(method: Method, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Invariant(format!(
                "score for {method} is not finite"
            )));
        }
        let bounded = method.bounded();
        if bounded && !(0.0..=1.0).contains(&value) {
            return Err(Error::Invariant(format!(
                "bounded method {method} produced {value} outside [0, 1]"
            )));
        }
        Ok(SentenceScore {
            method,
            value,
            bounded,
        })
    }
}

/// Passage-level score: the arithmetic mean of its sentence scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassageScore {
    pub value: f64,
    pub n_sentences: usize,
}

impl PassageScore {
    pub fn from_sentence_scores(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyInput("no sentence scores"));
        }
        Ok(PassageScore {
            value: scores.iter().sum::<f64>() / scores.len() as f64,
            n_sentences: scores.len(),
        })
    }
}
