//! The measurement protocol: sentence-level detection tasks scored by
//! average precision, passage-level correlation against gold scores,
//! per-class counts, and sample-count sweeps.
//!
//! Three detection tasks are evaluated per method:
//!
//! - `nonfact` — positives are minor- and major-inaccurate sentences;
//! - `nonfact_star` — positives are major-inaccurate sentences, with
//!   the task restricted to passages that are not total hallucinations;
//! - `factual` — positives are accurate sentences, detected by ranking
//!   with the *negated* hallucination score.
//!
//! A method's passage score is the mean of its sentence scores, except
//! for the token-averaging metrics (`avg-neg-logprob`, `avg-entropy`),
//! which average over all tokens of the passage; the max-style metrics
//! take the per-sentence max first and then the sentence mean, which is
//! the plain sentence mean of their sentence scores.
//!
//! Sentences a method could not score are excluded pairwise from that
//! method's evaluation and reported in the counts.

pub mod metrics;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::core::{Dataset, FileMeta, Method, SentenceLabel};
use crate::error::{Error, Result};
use crate::ngram::{self, NgramConfig};
use crate::qa::{qa_sentence_score, QaConfig, QuestionEvidence};

pub use metrics::{average_precision, average_ranks, cohens_kappa, pearson, spearman, KappaClasses};

/// Sentence-level detection task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectionTask {
    NonFact,
    NonFactStar,
    Factual,
}

impl DetectionTask {
    pub const ALL: [DetectionTask; 3] = [
        DetectionTask::NonFact,
        DetectionTask::NonFactStar,
        DetectionTask::Factual,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            DetectionTask::NonFact => "nonfact",
            DetectionTask::NonFactStar => "nonfact_star",
            DetectionTask::Factual => "factual",
        }
    }

    /// Is a sentence with this label a positive of the task?
    pub fn is_positive(&self, label: SentenceLabel) -> bool {
        match self {
            DetectionTask::NonFact => label != SentenceLabel::Accurate,
            DetectionTask::NonFactStar => label == SentenceLabel::MajorInaccurate,
            DetectionTask::Factual => label == SentenceLabel::Accurate,
        }
    }

    /// Does the task include sentences of this passage at all?
    pub fn includes_passage(&self, total_hallucination: bool) -> bool {
        match self {
            DetectionTask::NonFactStar => !total_hallucination,
            _ => true,
        }
    }

    /// Detector orientation: hallucination scores rank non-factual
    /// content first, so factual detection ranks by the negated score.
    pub fn oriented(&self, score: f64) -> f64 {
        match self {
            DetectionTask::Factual => -score,
            _ => score,
        }
    }
}

/// One row of a scores file: one (passage, sentence, method) triple.
/// `score` is `None` when the method could not score the sentence
/// (e.g. no usable questions); such rows are counted, not imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub concept: String,
    pub sent_idx: usize,
    pub method: Method,
    pub score: Option<f64>,
    pub bounded: bool,
    /// Token count of the sentence, for token-level aggregation of the
    /// averaging grey-box metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tokens: Option<usize>,
    /// Per-sample intermediate values (similarity maxima, contradiction
    /// probabilities, or mapped verdicts) enabling sample-count sweeps
    /// without re-querying backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sample: Option<Vec<f64>>,
    /// Per-question QA evidence, likewise sweepable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qa_evidence: Option<Vec<QuestionEvidence>>,
}

/// A parsed scores file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreFile {
    pub meta: Option<FileMeta>,
    pub rows: Vec<ScoreRow>,
}

/// Serialize a scores file as JSONL with a leading meta line.
pub fn scores_to_jsonl(meta: &FileMeta, rows: &[ScoreRow]) -> String {
    let mut out = String::new();
    let mut meta_value = serde_json::to_value(meta).expect("meta serializes");
    meta_value
        .as_object_mut()
        .expect("meta is an object")
        .insert("type".into(), Value::String("meta".into()));
    writeln!(out, "{meta_value}").unwrap();
    for row in rows {
        writeln!(out, "{}", serde_json::to_string(row).expect("row serializes")).unwrap();
    }
    out
}

/// Parse a scores JSONL document; `path` is used in error messages.
pub fn parse_scores(contents: &str, path: &str) -> Result<ScoreFile> {
    let mut meta = None;
    let mut rows = Vec::new();
    for (idx, line) in contents.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::Dataset {
            path: path.into(),
            line: lineno,
            kind: crate::error::DatasetErrorKind::MalformedJson(e.to_string()),
        })?;
        if lineno == 1 && value.get("type").and_then(Value::as_str) == Some("meta") {
            let mut v = value;
            v.as_object_mut().unwrap().remove("type");
            meta = Some(serde_json::from_value(v).map_err(|e| Error::Dataset {
                path: path.into(),
                line: lineno,
                kind: crate::error::DatasetErrorKind::Invalid(e.to_string()),
            })?);
            continue;
        }
        rows.push(serde_json::from_value(value).map_err(|e| Error::Dataset {
            path: path.into(),
            line: lineno,
            kind: crate::error::DatasetErrorKind::Invalid(e.to_string()),
        })?);
    }
    Ok(ScoreFile { meta, rows })
}

/// Load a scores file from disk.
pub fn load_scores(path: impl AsRef<std::path::Path>) -> Result<ScoreFile> {
    let path = path.as_ref();
    let contents = std::fs::read_to_string(path)?;
    parse_scores(&contents, &path.display().to_string())
}

/// One sentence's outcome under one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceOutcome {
    pub score: Option<f64>,
    pub n_tokens: Option<usize>,
}

/// Passage-level score for a method over its sentence outcomes.
///
/// Token-averaging methods weight each sentence by its token count
/// (equivalent to averaging over all tokens of the passage); everything
/// else takes the plain mean of sentence scores. Unscored sentences are
/// excluded; an entirely unscored passage is an error.
pub fn passage_score_for_method(method: Method, sentences: &[SentenceOutcome]) -> Result<f64> {
    let scored: Vec<&SentenceOutcome> = sentences.iter().filter(|s| s.score.is_some()).collect();
    if scored.is_empty() {
        return Err(Error::Degenerate("no scored sentences in passage".into()));
    }
    if method.aggregates_over_tokens() {
        let mut num = 0.0;
        let mut denom = 0.0;
        for s in &scored {
            let j = s.n_tokens.ok_or_else(|| {
                Error::Precondition(format!(
                    "method {method} aggregates over tokens but a sentence lacks its token count"
                ))
            })? as f64;
            if j == 0.0 {
                return Err(Error::Precondition("sentence with zero tokens".into()));
            }
            num += s.score.unwrap() * j;
            denom += j;
        }
        Ok(num / denom)
    } else {
        let sum: f64 = scored.iter().map(|s| s.score.unwrap()).sum();
        Ok(sum / scored.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEval {
    pub auc_pr: f64,
    pub curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageCorr {
    pub pearson: f64,
    pub spearman: f64,
    pub n_passages: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub accurate: usize,
    pub minor_inaccurate: usize,
    pub major_inaccurate: usize,
    pub sentences: usize,
    pub scored_sentences: usize,
    pub skipped_sentences: usize,
    pub passages: usize,
    pub nonfact_star_passages: usize,
    pub nonfact_star_sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub tasks: BTreeMap<String, TaskEval>,
    pub passage: Option<PassageCorr>,
    pub counts: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    pub methods: BTreeMap<String, MethodReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepRow>>,
}

/// Dataset-level class counts (identical across methods except for the
/// scored/skipped tallies, which are filled in per method).
fn base_counts(dataset: &Dataset) -> Result<ClassCounts> {
    let mut counts = ClassCounts {
        passages: dataset.records.len(),
        ..Default::default()
    };
    for record in &dataset.records {
        let labels = record.passage.labels.as_ref().ok_or_else(|| {
            Error::Precondition(format!(
                "record `{}` has no labels; evaluation needs gold annotations",
                record.passage.concept
            ))
        })?;
        counts.sentences += labels.len();
        for l in labels {
            match l {
                SentenceLabel::Accurate => counts.accurate += 1,
                SentenceLabel::MinorInaccurate => counts.minor_inaccurate += 1,
                SentenceLabel::MajorInaccurate => counts.major_inaccurate += 1,
            }
        }
        if !record.passage.is_total_hallucination().unwrap() {
            counts.nonfact_star_passages += 1;
            counts.nonfact_star_sentences += labels.len();
        }
    }
    Ok(counts)
}

/// Group score rows into per-record sentence outcomes for one method.
fn outcomes_for_method(
    dataset: &Dataset,
    rows: &[ScoreRow],
    method: Method,
) -> Result<Vec<Vec<SentenceOutcome>>> {
    let index: HashMap<&str, usize> = dataset
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.passage.concept.as_str(), i))
        .collect();
    if index.len() != dataset.records.len() {
        return Err(Error::Precondition(
            "dataset concepts are not unique; scores cannot be aligned".into(),
        ));
    }
    let mut outcomes: Vec<Vec<SentenceOutcome>> = dataset
        .records
        .iter()
        .map(|r| {
            vec![
                SentenceOutcome {
                    score: None,
                    n_tokens: None
                };
                r.passage.sentences.len()
            ]
        })
        .collect();
    for row in rows.iter().filter(|r| r.method == method) {
        let &rec = index.get(row.concept.as_str()).ok_or_else(|| {
            Error::Precondition(format!(
                "scores mention concept `{}` absent from the dataset",
                row.concept
            ))
        })?;
        let slots = &mut outcomes[rec];
        if row.sent_idx >= slots.len() {
            return Err(Error::Precondition(format!(
                "concept `{}` has {} sentences but scores reference index {}",
                row.concept,
                slots.len(),
                row.sent_idx
            )));
        }
        slots[row.sent_idx] = SentenceOutcome {
            score: row.score,
            n_tokens: row.n_tokens,
        };
    }
    Ok(outcomes)
}

/// Build a method's report from per-record sentence outcomes.
fn report_for_outcomes(
    dataset: &Dataset,
    method: Method,
    outcomes: &[Vec<SentenceOutcome>],
) -> Result<MethodReport> {
    let mut counts = base_counts(dataset)?;

    let mut tasks = BTreeMap::new();
    for task in DetectionTask::ALL {
        let mut scores = Vec::new();
        let mut positives = Vec::new();
        for (record, slots) in dataset.records.iter().zip(outcomes) {
            let labels = record.passage.labels.as_ref().unwrap();
            let total = record.passage.is_total_hallucination().unwrap();
            if !task.includes_passage(total) {
                continue;
            }
            for (label, outcome) in labels.iter().zip(slots) {
                if let Some(score) = outcome.score {
                    scores.push(task.oriented(score));
                    positives.push(task.is_positive(*label));
                }
            }
        }
        match average_precision(&scores, &positives) {
            Ok((auc_pr, curve)) => {
                tasks.insert(task.id().to_string(), TaskEval { auc_pr, curve });
            }
            Err(e) => log::warn!("task {} skipped for {method}: {e}", task.id()),
        }
    }

    for slots in outcomes {
        for outcome in slots {
            if outcome.score.is_some() {
                counts.scored_sentences += 1;
            } else {
                counts.skipped_sentences += 1;
            }
        }
    }

    let mut golds = Vec::new();
    let mut preds = Vec::new();
    for (record, slots) in dataset.records.iter().zip(outcomes) {
        if slots.iter().all(|o| o.score.is_none()) {
            continue;
        }
        preds.push(passage_score_for_method(method, slots)?);
        golds.push(record.passage.gold_score().unwrap());
    }
    let passage = match (pearson(&preds, &golds), spearman(&preds, &golds)) {
        (Ok(p), Ok(s)) => Some(PassageCorr {
            pearson: p,
            spearman: s,
            n_passages: preds.len(),
        }),
        (p, s) => {
            for e in [p.err(), s.err()].into_iter().flatten() {
                log::warn!("passage correlation skipped for {method}: {e}");
            }
            None
        }
    };

    Ok(MethodReport {
        tasks,
        passage,
        counts,
    })
}

/// Evaluate every method present in `rows` against the labelled
/// dataset.
pub fn evaluate(dataset: &Dataset, rows: &[ScoreRow]) -> Result<EvalReport> {
    let mut methods: Vec<Method> = Vec::new();
    for row in rows {
        if !methods.contains(&row.method) {
            methods.push(row.method);
        }
    }
    if methods.is_empty() {
        return Err(Error::EmptyInput("no score rows"));
    }
    let mut report = EvalReport {
        config_digest: None,
        methods: BTreeMap::new(),
        sweep: None,
    };
    for method in methods {
        let outcomes = outcomes_for_method(dataset, rows, method)?;
        let method_report = report_for_outcomes(dataset, method, &outcomes)?;
        report.methods.insert(method.id(), method_report);
    }
    Ok(report)
}

/// One line of a sample-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub n_samples: usize,
    pub tasks: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman: Option<f64>,
}

/// Per-method knobs the sweep needs to recompute n-gram and QA scores.
#[derive(Debug, Clone)]
pub struct SweepParams {
    pub ngram_delta: f64,
    pub qa: QaConfig,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            ngram_delta: NgramConfig::default().delta,
            qa: QaConfig::default(),
        }
    }
}

/// Recompute scores using only the first `n` samples, for each `n`, and
/// evaluate each prefix. Consistency methods are replayed from the
/// per-sample details stored in the score rows; n-gram models are
/// rebuilt from the dataset's evidence prefixes. Grey-box methods do
/// not consume samples and are skipped.
pub fn sweep_samples(
    dataset: &Dataset,
    rows: &[ScoreRow],
    n_values: &[usize],
    params: &SweepParams,
) -> Result<Vec<SweepRow>> {
    if n_values.is_empty() {
        return Err(Error::Precondition("sweep needs at least one sample count".into()));
    }
    let available = dataset
        .records
        .iter()
        .map(|r| r.samples.as_ref().map_or(0, |s| s.len()))
        .min()
        .unwrap_or(0);
    for &n in n_values {
        if n == 0 {
            return Err(Error::Precondition("sample count 0 is not meaningful".into()));
        }
        if n > available {
            return Err(Error::Precondition(format!(
                "sweep requests {n} samples but only {available} are available in every record"
            )));
        }
    }

    let mut methods: Vec<Method> = Vec::new();
    for row in rows {
        if !methods.contains(&row.method) {
            methods.push(row.method);
        }
    }

    let mut out = Vec::new();
    for method in methods {
        if method.is_greybox() {
            log::info!("sweep: skipping {method} (does not consume samples)");
            continue;
        }
        let full = outcomes_for_method(dataset, rows, method)?;
        for &n in n_values {
            let outcomes = prefix_outcomes(dataset, rows, method, &full, n, params)?;
            let report = report_for_outcomes(dataset, method, &outcomes)?;
            let tasks = report
                .tasks
                .iter()
                .map(|(k, v)| (k.clone(), v.auc_pr))
                .collect();
            out.push(SweepRow {
                method: method.id(),
                n_samples: n,
                tasks,
                pearson: report.passage.as_ref().map(|p| p.pearson),
                spearman: report.passage.as_ref().map(|p| p.spearman),
            });
        }
    }
    Ok(out)
}

fn prefix_outcomes(
    dataset: &Dataset,
    rows: &[ScoreRow],
    method: Method,
    full: &[Vec<SentenceOutcome>],
    n: usize,
    params: &SweepParams,
) -> Result<Vec<Vec<SentenceOutcome>>> {
    match method {
        Method::NgramAvg { order } | Method::NgramMax { order } => {
            let config = NgramConfig {
                order,
                delta: params.ngram_delta,
                ..Default::default()
            };
            let is_max = matches!(method, Method::NgramMax { .. });
            dataset
                .records
                .iter()
                .map(|record| {
                    let evidence = record
                        .samples
                        .as_ref()
                        .ok_or_else(|| {
                            Error::Precondition(format!(
                                "record `{}` has no samples",
                                record.passage.concept
                            ))
                        })?
                        .prefix(n)?;
                    let model = ngram::build(&evidence, &record.passage, &config)?;
                    record
                        .passage
                        .sentences
                        .iter()
                        .map(|sentence| {
                            let tokens = model.tokenize(sentence);
                            if tokens.is_empty() {
                                return Ok(SentenceOutcome { score: None, n_tokens: None });
                            }
                            let score = if is_max {
                                model.score_max(&tokens)?
                            } else {
                                model.score_avg(&tokens)?
                            };
                            Ok(SentenceOutcome {
                                score: Some(score),
                                n_tokens: Some(tokens.len()),
                            })
                        })
                        .collect()
                })
                .collect()
        }
        Method::Qa => {
            let index: HashMap<&str, usize> = dataset
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| (r.passage.concept.as_str(), i))
                .collect();
            let mut outcomes: Vec<Vec<SentenceOutcome>> = dataset
                .records
                .iter()
                .map(|r| vec![SentenceOutcome { score: None, n_tokens: None }; r.passage.sentences.len()])
                .collect();
            for row in rows.iter().filter(|r| r.method == method) {
                let evidence = row.qa_evidence.as_ref().ok_or_else(|| {
                    Error::Precondition(
                        "scores file lacks per-question QA evidence; it cannot be swept".into(),
                    )
                })?;
                let prefixed: Vec<QuestionEvidence> =
                    evidence.iter().map(|ev| ev.prefix(n)).collect();
                let score = qa_sentence_score(&prefixed, &params.qa, row.sent_idx).ok();
                outcomes[index[row.concept.as_str()]][row.sent_idx] =
                    SentenceOutcome { score, n_tokens: row.n_tokens };
            }
            Ok(outcomes)
        }
        Method::BertSim | Method::Nli | Method::Prompt => {
            let index: HashMap<&str, usize> = dataset
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| (r.passage.concept.as_str(), i))
                .collect();
            let mut outcomes: Vec<Vec<SentenceOutcome>> = dataset
                .records
                .iter()
                .map(|r| vec![SentenceOutcome { score: None, n_tokens: None }; r.passage.sentences.len()])
                .collect();
            for row in rows.iter().filter(|r| r.method == method) {
                let per_sample = row.per_sample.as_ref().ok_or_else(|| {
                    Error::Precondition(
                        "scores file lacks per-sample details; it cannot be swept".into(),
                    )
                })?;
                if n > per_sample.len() {
                    return Err(Error::Precondition(format!(
                        "row for `{}` has {} per-sample values, sweep asked for {n}",
                        row.concept,
                        per_sample.len()
                    )));
                }
                let prefix = &per_sample[..n];
                let mean = prefix.iter().sum::<f64>() / prefix.len() as f64;
                let score = match method {
                    Method::BertSim => 1.0 - mean,
                    _ => mean,
                };
                outcomes[index[row.concept.as_str()]][row.sent_idx] =
                    SentenceOutcome { score: Some(score), n_tokens: row.n_tokens };
            }
            Ok(outcomes)
        }
        _ => {
            debug_assert!(full.len() == dataset.records.len());
            Ok(full.to_vec())
        }
    }
}

/// Render a PR curve as two-column CSV.
pub fn pr_curve_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("recall,precision\n");
    for (r, p) in curve {
        writeln!(out, "{r},{p}").unwrap();
    }
    out
}

/// Render sweep rows as CSV, one line per (method, n).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,n_samples,nonfact,nonfact_star,factual,pearson,spearman\n");
    for row in rows {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.method,
            row.n_samples,
            cell(row.tasks.get("nonfact").copied()),
            cell(row.tasks.get("nonfact_star").copied()),
            cell(row.tasks.get("factual").copied()),
            cell(row.pearson),
            cell(row.spearman),
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::dataset::parse_dataset;

    fn labelled_dataset() -> Dataset {
        let jsonl = concat!(
            r#"{"concept":"one","response":"A a. B b. C c.","sentences":["A a.","B b.","C c."],"labels":["accurate","minor_inaccurate","major_inaccurate"],"samples":["A a. X x.","A a. Y y."]}"#,
            "\n",
            r#"{"concept":"two","response":"D d. E e.","sentences":["D d.","E e."],"labels":["major_inaccurate","major_inaccurate"],"samples":["Z z.","W w."]}"#,
            "\n",
        );
        parse_dataset(jsonl, "test.jsonl").unwrap()
    }

    fn row(concept: &str, idx: usize, method: Method, score: f64) -> ScoreRow {
        ScoreRow {
            concept: concept.into(),
            sent_idx: idx,
            method,
            score: Some(score),
            bounded: method.bounded(),
            n_tokens: None,
            per_sample: None,
            qa_evidence: None,
        }
    }

    #[test]
    fn task_definitions() {
        use SentenceLabel::*;
        assert!(DetectionTask::NonFact.is_positive(MinorInaccurate));
        assert!(DetectionTask::NonFact.is_positive(MajorInaccurate));
        assert!(!DetectionTask::NonFact.is_positive(Accurate));
        assert!(DetectionTask::NonFactStar.is_positive(MajorInaccurate));
        assert!(!DetectionTask::NonFactStar.is_positive(MinorInaccurate));
        assert!(DetectionTask::Factual.is_positive(Accurate));
        assert!(!DetectionTask::NonFactStar.includes_passage(true));
        assert!(DetectionTask::NonFact.includes_passage(true));
        assert_eq!(DetectionTask::Factual.oriented(0.25), -0.25);
    }

    #[test]
    fn evaluate_perfect_scorer() {
        let dataset = labelled_dataset();
        let m = Method::Prompt;
        let rows = vec![
            row("one", 0, m, 0.0),
            row("one", 1, m, 0.6),
            row("one", 2, m, 1.0),
            row("two", 0, m, 1.0),
            row("two", 1, m, 0.9),
        ];
        let report = evaluate(&dataset, &rows).unwrap();
        let mr = &report.methods["prompt"];
        assert!((mr.tasks["nonfact"].auc_pr - 1.0).abs() < 1e-12);
        // NonFact* restricts to passage "one" (passage "two" is a total
        // hallucination): scores [0.0, 0.6, 1.0], positive last.
        assert!((mr.tasks["nonfact_star"].auc_pr - 1.0).abs() < 1e-12);
        assert!((mr.tasks["factual"].auc_pr - 1.0).abs() < 1e-12);
        assert_eq!(mr.counts.sentences, 5);
        assert_eq!(mr.counts.scored_sentences, 5);
        assert_eq!(mr.counts.nonfact_star_passages, 1);
        assert_eq!(mr.counts.nonfact_star_sentences, 3);
        let corr = mr.passage.as_ref().unwrap();
        assert!((corr.pearson - 1.0).abs() < 1e-9);
        assert_eq!(corr.n_passages, 2);
    }

    #[test]
    fn constant_scores_reproduce_prevalence() {
        let dataset = labelled_dataset();
        let m = Method::Prompt;
        let rows: Vec<ScoreRow> = dataset
            .records
            .iter()
            .flat_map(|r| {
                let c = r.passage.concept.clone();
                (0..r.passage.sentences.len()).map(move |i| row(&c, i, m, 0.5))
            })
            .collect();
        let report = evaluate(&dataset, &rows).unwrap();
        let mr = &report.methods["prompt"];
        // 4 of 5 sentences are non-factual.
        assert!((mr.tasks["nonfact"].auc_pr - 0.8).abs() < 1e-12);
        // 1 of 3 NonFact* sentences is major within non-total passages.
        assert!((mr.tasks["nonfact_star"].auc_pr - 1.0 / 3.0).abs() < 1e-12);
        assert!((mr.tasks["factual"].auc_pr - 0.2).abs() < 1e-12);
        // Constant scores have zero variance: no passage correlation.
        assert!(mr.passage.is_none());
    }

    #[test]
    fn missing_scores_are_excluded_and_counted() {
        let dataset = labelled_dataset();
        let m = Method::Qa;
        let mut rows = vec![
            row("one", 0, m, 0.1),
            row("one", 2, m, 0.9),
            row("two", 0, m, 0.8),
            row("two", 1, m, 0.7),
        ];
        rows.push(ScoreRow {
            concept: "one".into(),
            sent_idx: 1,
            method: m,
            score: None,
            bounded: true,
            n_tokens: None,
            per_sample: None,
            qa_evidence: None,
        });
        let report = evaluate(&dataset, &rows).unwrap();
        let mr = &report.methods["qa"];
        assert_eq!(mr.counts.scored_sentences, 4);
        assert_eq!(mr.counts.skipped_sentences, 1);
    }

    #[test]
    fn evaluate_requires_labels() {
        let jsonl = r#"{"concept":"u","response":"A a.","sentences":["A a."]}"#;
        let dataset = parse_dataset(jsonl, "t").unwrap();
        let rows = vec![row("u", 0, Method::Prompt, 0.5)];
        assert!(evaluate(&dataset, &rows).is_err());
    }

    #[test]
    fn aggregation_asymmetry() {
        // Two sentences with token neg-logprobs [1, 3] and [2, 2].
        let max_sentences = [
            SentenceOutcome { score: Some(3.0), n_tokens: Some(2) },
            SentenceOutcome { score: Some(2.0), n_tokens: Some(2) },
        ];
        let max = passage_score_for_method(Method::MaxNegLogProb, &max_sentences).unwrap();
        assert_eq!(max, 2.5);

        let avg_sentences = [
            SentenceOutcome { score: Some(2.0), n_tokens: Some(2) }, // (1+3)/2
            SentenceOutcome { score: Some(2.0), n_tokens: Some(2) }, // (2+2)/2
        ];
        let avg = passage_score_for_method(Method::AvgNegLogProb, &avg_sentences).unwrap();
        assert_eq!(avg, 2.0);

        // Weighting matters when sentence lengths differ.
        let uneven = [
            SentenceOutcome { score: Some(1.0), n_tokens: Some(1) },
            SentenceOutcome { score: Some(4.0), n_tokens: Some(3) },
        ];
        let avg = passage_score_for_method(Method::AvgNegLogProb, &uneven).unwrap();
        assert!((avg - (1.0 + 4.0 * 3.0) / 4.0).abs() < 1e-12);
        let mean = passage_score_for_method(Method::Prompt, &uneven).unwrap();
        assert!((mean - 2.5).abs() < 1e-12);
    }

    #[test]
    fn sentence_mean_example() {
        let outcomes = [
            SentenceOutcome { score: Some(1.0), n_tokens: None },
            SentenceOutcome { score: Some(0.5), n_tokens: None },
            SentenceOutcome { score: Some(0.0), n_tokens: None },
        ];
        let s = passage_score_for_method(Method::Prompt, &outcomes).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn token_aggregation_requires_counts() {
        let outcomes = [SentenceOutcome { score: Some(1.0), n_tokens: None }];
        assert!(passage_score_for_method(Method::AvgEntropy, &outcomes).is_err());
    }

    #[test]
    fn sweep_prefix_means_for_prompt() {
        let dataset = labelled_dataset();
        let mut r = row("one", 0, Method::Prompt, 0.5);
        // Verdicts [Yes, No]: n=1 -> 0.0, n=2 -> 0.5.
        r.per_sample = Some(vec![0.0, 1.0]);
        let mut rows = vec![r];
        for (c, i) in [("one", 1), ("one", 2), ("two", 0), ("two", 1)] {
            let mut r = row(c, i, Method::Prompt, 0.5);
            r.per_sample = Some(vec![0.5, 0.5]);
            rows.push(r);
        }
        let sweep = sweep_samples(&dataset, &rows, &[1, 2], &SweepParams::default()).unwrap();
        assert_eq!(sweep.len(), 2);
        assert_eq!(sweep[0].n_samples, 1);
        assert_eq!(sweep[1].n_samples, 2);
    }

    #[test]
    fn sweep_validates_n() {
        let dataset = labelled_dataset();
        let rows = vec![row("one", 0, Method::NgramMax { order: 1 }, 0.5)];
        let params = SweepParams::default();
        assert!(sweep_samples(&dataset, &rows, &[0], &params).is_err());
        assert!(sweep_samples(&dataset, &rows, &[3], &params).is_err());
        assert!(sweep_samples(&dataset, &rows, &[2], &params).is_ok());
    }

    #[test]
    fn sweep_full_prefix_matches_direct_scoring() {
        let dataset = labelled_dataset();
        // Score with the n-gram directly at full N, then sweep at N.
        let config = NgramConfig::default();
        let mut rows = Vec::new();
        for record in &dataset.records {
            let model = ngram::build(record.samples.as_ref().unwrap(), &record.passage, &config).unwrap();
            for (i, s) in record.passage.sentences.iter().enumerate() {
                let tokens = model.tokenize(s);
                let mut r = row(&record.passage.concept, i, Method::NgramMax { order: 1 }, 0.0);
                r.score = Some(model.score_max(&tokens).unwrap());
                r.n_tokens = Some(tokens.len());
                rows.push(r);
            }
        }
        let direct = evaluate(&dataset, &rows).unwrap();
        let sweep = sweep_samples(&dataset, &rows, &[2], &SweepParams::default()).unwrap();
        let direct_ap = direct.methods["unigram-max"].tasks["nonfact"].auc_pr;
        let sweep_ap = sweep[0].tasks["nonfact"];
        assert!((direct_ap - sweep_ap).abs() < 1e-12);
    }

    #[test]
    fn scores_jsonl_round_trip() {
        let meta = FileMeta {
            config_digest: Some("d".into()),
            ..Default::default()
        };
        let mut r = row("one", 0, Method::Nli, 0.25);
        r.per_sample = Some(vec![0.2, 0.3]);
        let text = scores_to_jsonl(&meta, &[r.clone()]);
        let parsed = parse_scores(&text, "mem").unwrap();
        assert_eq!(parsed.meta.unwrap().config_digest.as_deref(), Some("d"));
        assert_eq!(parsed.rows, vec![r]);
    }
}
