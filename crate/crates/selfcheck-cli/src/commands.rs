//! The four subcommands: sample, score, eval, synth.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde_json::{json, Value};

use selfcheck::backends::cache::sha256_hex;
use selfcheck::consistency;
use selfcheck::core::{
    load_dataset, serialize_dataset, Dataset, DatasetRecord, EvidenceSet, FileMeta, Method,
    Passage, SamplingMeta,
};
use selfcheck::eval::{
    self, load_scores, pr_curve_csv, scores_to_jsonl, sweep_csv, ScoreRow, SweepParams,
};
use selfcheck::greybox::{self, SentenceTokenRun};
use selfcheck::ngram::{self, NgramConfig, NgramModel};
use selfcheck::qa::{collect_evidence, qa_sentence_score, QaConfig};
use selfcheck::synth::{generate_corpus, SynthSpec};
use selfcheck::Error;

use crate::backend_set::BackendSet;
use crate::config::RunConfig;

/// The generation prompt for a concept.
pub fn sample_prompt(concept: &str) -> String {
    format!("This is a Wikipedia passage about {concept}:")
}

/// Evidence source for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceMode {
    Sampled,
    Reference,
}

impl EvidenceMode {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        match s {
            "sampled" => Ok(EvidenceMode::Sampled),
            "reference" => Ok(EvidenceMode::Reference),
            other => bail!("unknown evidence mode `{other}` (expected \"sampled\" or \"reference\")"),
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            EvidenceMode::Sampled => "sampled",
            EvidenceMode::Reference => "reference",
        }
    }
}

pub fn cmd_sample(
    config: &RunConfig,
    backends: &BackendSet,
    concepts_path: &Path,
    out: &Path,
    n_samples: Option<usize>,
) -> anyhow::Result<()> {
    let n_samples = n_samples.unwrap_or(config.n_samples);
    if n_samples == 0 {
        bail!("n_samples must be >= 1");
    }
    let text = std::fs::read_to_string(concepts_path)
        .with_context(|| format!("reading concepts from {}", concepts_path.display()))?;
    let concepts: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if concepts.is_empty() {
        bail!("no concepts found in {}", concepts_path.display());
    }

    let records = concepts
        .iter()
        .map(|concept| {
            let prompt = sample_prompt(concept);
            let response = backends
                .generator
                .generate(&prompt, config.temperature_main, 1)?
                .remove(0);
            let samples = backends
                .generator
                .generate(&prompt, config.temperature_samples, n_samples)?;
            let passage = Passage::from_response(*concept, response)?;
            let evidence = EvidenceSet::sampled(samples)?.with_sampling_meta(SamplingMeta {
                temperature: config.temperature_samples,
                model: config.model.clone(),
            });
            log::info!("sampled `{concept}`: {} sentences, {n_samples} samples", passage.sentences.len());
            Ok(DatasetRecord {
                passage,
                samples: Some(evidence),
                reference: None,
            })
        })
        .collect::<selfcheck::Result<Vec<_>>>()?;

    let meta = FileMeta {
        config_digest: Some(config.digest()),
        backend: Some(backends.generator.id()),
        sampling: Some(SamplingMeta {
            temperature: config.temperature_samples,
            model: config.model.clone(),
        }),
        extra: BTreeMap::from([
            ("kind".to_string(), json!("dataset")),
            ("n_samples".to_string(), json!(n_samples)),
        ]),
    };
    let dataset = Dataset {
        meta: Some(meta),
        records,
    };
    std::fs::write(out, serialize_dataset(&dataset))
        .with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} records to {}", dataset.records.len(), out.display());
    Ok(())
}

/// Resolve method names, expanding the config-order aliases.
pub fn parse_methods(names: &[String], config: &RunConfig) -> anyhow::Result<Vec<Method>> {
    if names.is_empty() {
        bail!("--methods requires at least one method");
    }
    let mut methods = Vec::new();
    for name in names {
        let method = match name.as_str() {
            "ngram-avg" => Method::NgramAvg { order: config.ngram_order },
            "ngram-max" => Method::NgramMax { order: config.ngram_order },
            other => Method::parse(other)
                .with_context(|| format!("unknown method `{other}`"))?,
        };
        if !methods.contains(&method) {
            methods.push(method);
        }
    }
    Ok(methods)
}

pub fn cmd_score(
    config: &RunConfig,
    backends: &BackendSet,
    dataset_path: &Path,
    out: &Path,
    method_names: &[String],
    evidence_mode: EvidenceMode,
) -> anyhow::Result<()> {
    let methods = parse_methods(method_names, config)?;
    let qa_config = config.qa_config()?;
    let entropy_mode = config.entropy_mode()?;

    // Method/backend mismatches are reported before any backend call.
    for method in &methods {
        if method.is_greybox() && backends.token_scorer.is_none() {
            return Err(Error::MethodBackend {
                method: method.id(),
                capability: "token-scoring",
            }
            .into());
        }
    }

    let raw = std::fs::read(dataset_path)
        .with_context(|| format!("reading dataset {}", dataset_path.display()))?;
    let dataset_sha256 = sha256_hex(&raw);
    let dataset = load_dataset(dataset_path)?;
    if dataset.records.is_empty() {
        bail!("dataset {} has no records", dataset_path.display());
    }

    let needs_evidence = methods.iter().any(|m| !m.is_greybox());
    if needs_evidence {
        for record in &dataset.records {
            match evidence_mode {
                EvidenceMode::Reference if record.reference.is_none() => bail!(
                    "record `{}` has no reference document (required by --evidence reference)",
                    record.passage.concept
                ),
                EvidenceMode::Sampled if record.samples.is_none() => bail!(
                    "record `{}` has no samples; run `selfcheck sample` first",
                    record.passage.concept
                ),
                _ => {}
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .context("building worker pool")?;
    let per_record: Vec<Vec<ScoreRow>> = pool.install(|| {
        dataset
            .records
            .par_iter()
            .map(|record| score_record(config, backends, record, &methods, evidence_mode, &qa_config, entropy_mode))
            .collect::<selfcheck::Result<Vec<_>>>()
    })?;
    let rows: Vec<ScoreRow> = per_record.into_iter().flatten().collect();

    let meta = FileMeta {
        config_digest: Some(config.digest()),
        backend: None,
        sampling: None,
        extra: BTreeMap::from([
            ("kind".to_string(), json!("scores")),
            ("dataset_sha256".to_string(), json!(dataset_sha256)),
            ("evidence".to_string(), json!(evidence_mode.as_str())),
            (
                "methods".to_string(),
                json!(methods.iter().map(Method::id).collect::<Vec<_>>()),
            ),
            ("backends".to_string(), json!(backends.ids())),
        ]),
    };
    std::fs::write(out, scores_to_jsonl(&meta, &rows))
        .with_context(|| format!("writing {}", out.display()))?;
    eprintln!(
        "scored {} sentences x {} methods -> {}",
        dataset.records.iter().map(|r| r.passage.sentences.len()).sum::<usize>(),
        methods.len(),
        out.display()
    );
    Ok(())
}

fn score_record(
    config: &RunConfig,
    backends: &BackendSet,
    record: &DatasetRecord,
    methods: &[Method],
    evidence_mode: EvidenceMode,
    qa_config: &QaConfig,
    entropy_mode: greybox::EntropyMode,
) -> selfcheck::Result<Vec<ScoreRow>> {
    let passage = &record.passage;
    let concept = passage.concept.as_str();

    let evidence = if methods.iter().any(|m| !m.is_greybox()) {
        Some(record.evidence(evidence_mode == EvidenceMode::Reference)?)
    } else {
        None
    };

    let token_runs: Option<Vec<SentenceTokenRun>> = if methods.iter().any(Method::is_greybox) {
        let scorer = backends.token_scorer.as_ref().expect("checked upfront");
        let tokens = scorer.score_tokens(&passage.response, &sample_prompt(concept))?;
        Some(greybox::align_tokens(&passage.response, &passage.sentences, tokens)?)
    } else {
        None
    };

    let mut ngram_models: HashMap<usize, NgramModel> = HashMap::new();
    for method in methods {
        if let Method::NgramAvg { order } | Method::NgramMax { order } = method {
            if !ngram_models.contains_key(order) {
                let model_config = NgramConfig {
                    order: *order,
                    delta: config.ngram_delta,
                    ..Default::default()
                };
                let model = ngram::build(evidence.as_ref().expect("ngram needs evidence"), passage, &model_config)?;
                ngram_models.insert(*order, model);
            }
        }
    }

    let mut rows = Vec::new();
    for method in methods {
        match method {
            Method::AvgNegLogProb | Method::MaxNegLogProb | Method::AvgEntropy | Method::MaxEntropy => {
                for run in token_runs.as_ref().expect("token runs computed") {
                    let score = match method {
                        Method::AvgNegLogProb => greybox::avg_neg_logprob(run),
                        Method::MaxNegLogProb => greybox::max_neg_logprob(run),
                        Method::AvgEntropy => {
                            greybox::avg_entropy(run, entropy_mode, config.entropy_renormalize)?
                        }
                        Method::MaxEntropy => {
                            greybox::max_entropy(run, entropy_mode, config.entropy_renormalize)?
                        }
                        _ => unreachable!(),
                    };
                    rows.push(ScoreRow {
                        concept: concept.into(),
                        sent_idx: run.sentence_index,
                        method: *method,
                        score: Some(score),
                        bounded: method.bounded(),
                        n_tokens: Some(run.len()),
                        per_sample: None,
                        qa_evidence: None,
                    });
                }
            }
            Method::NgramAvg { order } | Method::NgramMax { order } => {
                let model = &ngram_models[order];
                for (sent_idx, sentence) in passage.sentences.iter().enumerate() {
                    let tokens = model.tokenize(sentence);
                    let (score, n_tokens) = if tokens.is_empty() {
                        log::warn!("`{concept}` sentence {sent_idx} has no tokens; skipping {method}");
                        (None, None)
                    } else {
                        let s = match method {
                            Method::NgramMax { .. } => model.score_max(&tokens)?,
                            _ => model.score_avg(&tokens)?,
                        };
                        (Some(s), Some(tokens.len()))
                    };
                    rows.push(ScoreRow {
                        concept: concept.into(),
                        sent_idx,
                        method: *method,
                        score,
                        bounded: method.bounded(),
                        n_tokens,
                        per_sample: None,
                        qa_evidence: None,
                    });
                }
            }
            Method::BertSim => {
                let evidence = evidence.as_ref().expect("bertsim needs evidence");
                for (sent_idx, sentence) in passage.sentences.iter().enumerate() {
                    let maxima = consistency::bertsim_details(&*backends.similarity, sentence, evidence)?;
                    rows.push(ScoreRow {
                        concept: concept.into(),
                        sent_idx,
                        method: *method,
                        score: Some(consistency::bertsim_from_details(&maxima)),
                        bounded: true,
                        n_tokens: None,
                        per_sample: Some(maxima),
                        qa_evidence: None,
                    });
                }
            }
            Method::Nli => {
                let evidence = evidence.as_ref().expect("nli needs evidence");
                for (sent_idx, sentence) in passage.sentences.iter().enumerate() {
                    let probs = consistency::nli_details(&*backends.nli, sentence, evidence)?;
                    let score = probs.iter().sum::<f64>() / probs.len() as f64;
                    rows.push(ScoreRow {
                        concept: concept.into(),
                        sent_idx,
                        method: *method,
                        score: Some(score),
                        bounded: true,
                        n_tokens: None,
                        per_sample: Some(probs),
                        qa_evidence: None,
                    });
                }
            }
            Method::Prompt => {
                let evidence = evidence.as_ref().expect("prompt needs evidence");
                for (sent_idx, sentence) in passage.sentences.iter().enumerate() {
                    let row = consistency::judge_sentence(&*backends.judge, sentence, evidence, sent_idx)?;
                    rows.push(ScoreRow {
                        concept: concept.into(),
                        sent_idx,
                        method: *method,
                        score: Some(row.score()),
                        bounded: true,
                        n_tokens: None,
                        per_sample: Some(row.mapped()),
                        qa_evidence: None,
                    });
                }
            }
            Method::Qa => {
                let evidence = evidence.as_ref().expect("qa needs evidence");
                for (sent_idx, sentence) in passage.sentences.iter().enumerate() {
                    let evs = collect_evidence(&*backends.qa, sentence, &passage.response, evidence, qa_config)?;
                    let score = match qa_sentence_score(&evs, qa_config, sent_idx) {
                        Ok(s) => Some(s),
                        Err(Error::NoQuestions { .. }) => {
                            log::warn!("`{concept}` sentence {sent_idx}: every question failed; QA score omitted");
                            None
                        }
                        Err(e) => return Err(e),
                    };
                    rows.push(ScoreRow {
                        concept: concept.into(),
                        sent_idx,
                        method: *method,
                        score,
                        bounded: true,
                        n_tokens: None,
                        per_sample: None,
                        qa_evidence: Some(evs),
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    config: &RunConfig,
    scores_path: &Path,
    dataset_path: &Path,
    report_path: &Path,
    curves_dir: Option<&Path>,
    sweep_n: &[usize],
    sweep_out: Option<&Path>,
    force: bool,
) -> anyhow::Result<()> {
    let raw = std::fs::read(dataset_path)
        .with_context(|| format!("reading dataset {}", dataset_path.display()))?;
    let dataset_sha256 = sha256_hex(&raw);
    let dataset = load_dataset(dataset_path)?;
    let scores = load_scores(scores_path)?;

    if let Some(meta) = &scores.meta {
        let mine = config.digest();
        if let Some(theirs) = &meta.config_digest {
            if *theirs != mine && !force {
                bail!(
                    "scores file {} was produced under config digest {} but the current config digest is {}; \
                     pass --force to evaluate anyway",
                    scores_path.display(),
                    &theirs[..12.min(theirs.len())],
                    &mine[..12]
                );
            }
        }
        if let Some(Value::String(recorded)) = meta.extra.get("dataset_sha256") {
            if *recorded != dataset_sha256 && !force {
                bail!(
                    "scores file {} was computed against a different dataset file; pass --force to evaluate anyway",
                    scores_path.display()
                );
            }
        }
    }

    let mut report = eval::evaluate(&dataset, &scores.rows)?;
    report.config_digest = Some(config.digest());

    if !sweep_n.is_empty() {
        let params = SweepParams {
            ngram_delta: config.ngram_delta,
            qa: config.qa_config()?,
        };
        let sweep = eval::sweep_samples(&dataset, &scores.rows, sweep_n, &params)?;
        let csv = sweep_csv(&sweep);
        let sweep_path = match sweep_out {
            Some(p) => p.to_path_buf(),
            None => report_path.with_file_name("sweep.csv"),
        };
        std::fs::write(&sweep_path, csv)
            .with_context(|| format!("writing {}", sweep_path.display()))?;
        eprintln!("wrote sample-count sweep to {}", sweep_path.display());
        report.sweep = Some(sweep);
    }

    let curves = match curves_dir {
        Some(d) => d.to_path_buf(),
        None => report_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("curves"),
    };
    std::fs::create_dir_all(&curves).with_context(|| format!("creating {}", curves.display()))?;
    for (method, method_report) in &report.methods {
        for (task, task_eval) in &method_report.tasks {
            let path = curves.join(format!("pr_{method}_{task}.csv"));
            std::fs::write(&path, pr_curve_csv(&task_eval.curve))
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }

    let json = serde_json::to_string_pretty(&report).context("serializing report")?;
    std::fs::write(report_path, json + "\n")
        .with_context(|| format!("writing {}", report_path.display()))?;
    eprintln!(
        "evaluated {} methods over {} passages -> {}",
        report.methods.len(),
        dataset.records.len(),
        report_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth(
    config: &RunConfig,
    out: &Path,
    concepts: usize,
    sentences: usize,
    halluc_rate: f64,
    noise: f64,
    n_samples: Option<usize>,
    seed: Option<u64>,
) -> anyhow::Result<()> {
    let spec = SynthSpec::new(
        concepts,
        sentences,
        halluc_rate,
        n_samples.unwrap_or(config.n_samples),
        noise,
        seed.unwrap_or(config.seed),
    );
    let records = generate_corpus(&spec)?;
    let meta = FileMeta {
        config_digest: Some(config.digest()),
        backend: Some("synth".into()),
        sampling: None,
        extra: BTreeMap::from([
            ("kind".to_string(), json!("dataset")),
            (
                "synth".to_string(),
                json!({
                    "n_concepts": spec.n_concepts,
                    "sentences_per_passage": spec.sentences_per_passage,
                    "halluc_rate": spec.halluc_rate,
                    "n_samples": spec.n_samples,
                    "consistency_noise": spec.consistency_noise,
                    "seed": spec.seed,
                }),
            ),
        ]),
    };
    let dataset = Dataset {
        meta: Some(meta),
        records,
    };
    std::fs::write(out, serialize_dataset(&dataset))
        .with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} synthetic records to {}", dataset.records.len(), out.display());
    Ok(())
}
