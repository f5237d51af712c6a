//! Dataset ingestion: one JSON record per line.
//!
//! Record shape:
//!
//! ```json
//! {"concept": "...", "response": "...", "sentences": ["..."],
//!  "labels": ["accurate"|"minor_inaccurate"|"major_inaccurate"],
//!  "samples": ["..."], "reference": "..."}
//! ```
//!
//! `concept` and `response` are required; the rest are optional. When
//! `sentences` is present it is used verbatim (published annotated data
//! is consumed as-is); otherwise the response is segmented. Unknown
//! fields are ignored with a warning. Any malformed line aborts the
//! load with its 1-based line number; there are no partial loads.
//!
//! Files written by the toolkit start with a metadata line
//! `{"type":"meta", ...}` carrying the run's config digest. A leading
//! meta line is recognised and set aside when loading.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::core::{segment, EvidenceSet, Passage, SamplingMeta, SentenceLabel};
use crate::error::{DatasetErrorKind, Error, Result};

/// One loaded dataset record: the passage plus whatever evidence the
/// file carried for it.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub passage: Passage,
    pub samples: Option<EvidenceSet>,
    pub reference: Option<String>,
}

impl DatasetRecord {
    /// Evidence for scoring: the stored samples, or the reference
    /// document when `use_reference` is set.
    pub fn evidence(&self, use_reference: bool) -> Result<EvidenceSet> {
        if use_reference {
            let text = self.reference.clone().ok_or_else(|| {
                Error::Precondition(format!(
                    "record `{}` has no reference document",
                    self.passage.concept
                ))
            })?;
            EvidenceSet::reference(text)
        } else {
            self.samples.clone().ok_or_else(|| {
                Error::Precondition(format!(
                    "record `{}` has no samples",
                    self.passage.concept
                ))
            })
        }
    }
}

/// File-level metadata from a leading `{"type":"meta"}` line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FileMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingMeta>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub meta: Option<FileMeta>,
    pub records: Vec<DatasetRecord>,
}

#[derive(Deserialize)]
struct RawRecord {
    concept: Option<String>,
    response: Option<String>,
    sentences: Option<Vec<String>>,
    labels: Option<Vec<SentenceLabel>>,
    samples: Option<Vec<String>>,
    reference: Option<String>,
    #[serde(flatten)]
    extra: serde_json::Map<String, Value>,
}

fn dataset_err(path: &Path, line: usize, kind: DatasetErrorKind) -> Error {
    Error::Dataset {
        path: path.display().to_string(),
        line,
        kind,
    }
}

/// Load a JSONL dataset file. Every record is validated against the
/// type invariants; the first failure aborts the whole load with its
/// line number.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path)?;
    parse_dataset(&contents, path)
}

/// Parse JSONL dataset content; `path` is used only in error messages.
pub fn parse_dataset(contents: &str, path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut meta = None;
    let mut records = Vec::new();

    for (idx, line) in contents.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| {
            dataset_err(path, lineno, DatasetErrorKind::MalformedJson(e.to_string()))
        })?;
        if lineno == 1 && value.get("type").and_then(Value::as_str) == Some("meta") {
            let parsed: FileMeta = serde_json::from_value(strip_type(value)).map_err(|e| {
                dataset_err(path, lineno, DatasetErrorKind::Invalid(e.to_string()))
            })?;
            meta = Some(parsed);
            continue;
        }
        records.push(parse_record(value, path, lineno)?);
    }
    Ok(Dataset { meta, records })
}

fn strip_type(mut value: Value) -> Value {
    if let Some(map) = value.as_object_mut() {
        map.remove("type");
    }
    value
}

fn parse_record(value: Value, path: &Path, lineno: usize) -> Result<DatasetRecord> {
    let raw: RawRecord = serde_json::from_value(value)
        .map_err(|e| dataset_err(path, lineno, DatasetErrorKind::Invalid(e.to_string())))?;

    if !raw.extra.is_empty() {
        let keys: Vec<_> = raw.extra.keys().map(String::as_str).collect();
        log::warn!("{}:{lineno}: ignoring unknown fields: {}", path.display(), keys.join(", "));
    }

    let concept = raw
        .concept
        .ok_or_else(|| dataset_err(path, lineno, DatasetErrorKind::MissingField("concept")))?;
    let response = raw
        .response
        .ok_or_else(|| dataset_err(path, lineno, DatasetErrorKind::MissingField("response")))?;

    let sentences = match raw.sentences {
        Some(s) if !s.is_empty() => s,
        _ => segment::segment_sentences(&response)
            .map_err(|e| dataset_err(path, lineno, DatasetErrorKind::Invalid(e.to_string())))?,
    };

    if let Some(labels) = &raw.labels {
        if labels.len() != sentences.len() {
            return Err(dataset_err(
                path,
                lineno,
                DatasetErrorKind::LabelLengthMismatch {
                    labels: labels.len(),
                    sentences: sentences.len(),
                },
            ));
        }
    }

    let passage = Passage::new(concept, response, sentences, raw.labels)
        .map_err(|e| dataset_err(path, lineno, DatasetErrorKind::Invalid(e.to_string())))?;

    let samples = raw
        .samples
        .map(EvidenceSet::sampled)
        .transpose()
        .map_err(|e| dataset_err(path, lineno, DatasetErrorKind::Invalid(e.to_string())))?;

    Ok(DatasetRecord {
        passage,
        samples,
        reference: raw.reference,
    })
}

#[derive(Serialize)]
struct RawRecordOut<'a> {
    concept: &'a str,
    response: &'a str,
    sentences: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: &'a Option<Vec<SentenceLabel>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<&'a str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: &'a Option<String>,
}

/// Serialize a dataset back to JSONL. `parse_dataset` on the output
/// yields an equal value.
pub fn serialize_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    if let Some(meta) = &dataset.meta {
        let mut v = serde_json::to_value(meta).expect("meta serializes");
        v.as_object_mut()
            .expect("meta is an object")
            .insert("type".into(), Value::String("meta".into()));
        writeln!(out, "{v}").unwrap();
    }
    for record in &dataset.records {
        let row = RawRecordOut {
            concept: &record.passage.concept,
            response: &record.passage.response,
            sentences: &record.passage.sentences,
            labels: &record.passage.labels,
            samples: record
                .samples
                .as_ref()
                .map(|ev| ev.items.iter().map(|i| i.text.as_str()).collect()),
            reference: &record.reference,
        };
        writeln!(out, "{}", serde_json::to_string(&row).expect("record serializes")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Dataset> {
        parse_dataset(s, "test.jsonl")
    }

    #[test]
    fn loads_valid_records() {
        let ds = parse(concat!(
            r#"{"concept":"a","response":"X y. Z w.","sentences":["X y.","Z w."],"labels":["accurate","major_inaccurate"],"samples":["S one.","S two."]}"#,
            "\n",
            r#"{"concept":"b","response":"Only one sentence."}"#,
            "\n",
        ))
        .unwrap();
        assert_eq!(ds.records.len(), 2);
        assert_eq!(ds.records[0].passage.sentences.len(), 2);
        assert_eq!(ds.records[0].samples.as_ref().unwrap().len(), 2);
        // Second record had no sentence list: segmented from response.
        assert_eq!(ds.records[1].passage.sentences, vec!["Only one sentence."]);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let ds = parse("").unwrap();
        assert!(ds.records.is_empty());
        assert!(ds.meta.is_none());
    }

    #[test]
    fn label_length_mismatch_reports_line() {
        let err = parse(concat!(
            r#"{"concept":"a","response":"A."}"#,
            "\n",
            r#"{"concept":"b","response":"A. B. C.","sentences":["A.","B.","C."],"labels":["accurate","accurate"]}"#,
            "\n",
        ))
        .unwrap_err();
        match err {
            Error::Dataset { line, kind, .. } => {
                assert_eq!(line, 2);
                assert!(matches!(
                    kind,
                    DatasetErrorKind::LabelLengthMismatch { labels: 2, sentences: 3 }
                ));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse("{\"concept\":\"a\",\"response\":\"A.\"}\nnot json\n").unwrap_err();
        match err {
            Error::Dataset { line, kind, .. } => {
                assert_eq!(line, 2);
                assert!(matches!(kind, DatasetErrorKind::MalformedJson(_)));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_field_reports_field() {
        let err = parse(r#"{"concept":"a"}"#).unwrap_err();
        match err {
            Error::Dataset { kind, .. } => {
                assert!(matches!(kind, DatasetErrorKind::MissingField("response")));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_invalid() {
        let err = parse(
            r#"{"concept":"a","response":"A.","sentences":["A."],"labels":["kinda_wrong"]}"#,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::Dataset { kind: DatasetErrorKind::Invalid(_), .. }
        ));
    }

    #[test]
    fn meta_line_is_captured() {
        let ds = parse(concat!(
            r#"{"type":"meta","config_digest":"abc123"}"#,
            "\n",
            r#"{"concept":"a","response":"A."}"#,
            "\n",
        ))
        .unwrap();
        assert_eq!(ds.meta.as_ref().unwrap().config_digest.as_deref(), Some("abc123"));
        assert_eq!(ds.records.len(), 1);
    }

    #[test]
    fn round_trip() {
        let src = concat!(
            r#"{"type":"meta","config_digest":"abc123"}"#,
            "\n",
            r#"{"concept":"a","response":"X y. Z w.","sentences":["X y.","Z w."],"labels":["accurate","minor_inaccurate"],"samples":["S one."],"reference":"R doc."}"#,
            "\n",
        );
        let ds = parse(src).unwrap();
        let out = serialize_dataset(&ds);
        let ds2 = parse(&out).unwrap();
        assert_eq!(ds, ds2);
    }
}
