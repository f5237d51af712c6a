//! Run configuration: a flat TOML document, every key overridable on
//! the command line via `--set key=value`. The API key is never part of
//! the config; it is read from the environment variable named by
//! `api_key_env`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use selfcheck::backends::cache::{canonical_json, sha256_hex};
use selfcheck::greybox::EntropyMode;
use selfcheck::qa::{BayesParams, Counting, QaConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// "stub" or "http".
    pub backend: String,
    /// Base URL of the HTTP backend (required when backend = "http").
    pub base_url: Option<String>,
    /// Model used for generation, similarity, NLI and QA.
    pub model: String,
    /// Judge model; defaults to `model`.
    pub judge_model: Option<String>,
    /// Token-scoring model. With the HTTP backend the grey-box methods
    /// are unavailable until this is set (point it at the generator for
    /// generator probabilities, or at another model for proxy scoring).
    pub token_model: Option<String>,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    /// System message for chat-style requests; empty string disables.
    pub system_message: String,
    pub temperature_main: f64,
    pub temperature_samples: f64,
    pub n_samples: usize,
    pub ngram_order: usize,
    pub ngram_delta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub n_questions: usize,
    /// When set, switches QA to hard counting at this answerability
    /// threshold instead of soft counting.
    pub answerability_threshold: Option<f64>,
    /// When set, QA questions whose answerability on the response falls
    /// below this value are dropped.
    pub min_response_answerability: Option<f64>,
    /// "nats" or "exp2bits".
    pub entropy_mode: String,
    pub entropy_renormalize: bool,
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    /// Concurrency limit for passage scoring and backend fan-out.
    pub workers: usize,
    pub max_attempts: u32,
    pub timeout_secs: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: "stub".into(),
            base_url: None,
            model: "stub".into(),
            judge_model: None,
            token_model: None,
            api_key_env: "SELFCHECK_API_KEY".into(),
            system_message: "You are a helpful assistant.".into(),
            temperature_main: 0.0,
            temperature_samples: 1.0,
            n_samples: 20,
            ngram_order: 1,
            ngram_delta: 1e-9,
            beta1: 0.8,
            beta2: 0.8,
            n_questions: 5,
            answerability_threshold: None,
            min_response_answerability: None,
            entropy_mode: "nats".into(),
            entropy_renormalize: false,
            cache_dir: None,
            seed: 1234,
            workers: 4,
            max_attempts: 3,
            timeout_secs: 60,
        }
    }
}

impl RunConfig {
    /// Load from an optional TOML file and apply `--set key=value`
    /// overrides on top.
    pub fn load(path: Option<&Path>, sets: &[String]) -> anyhow::Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                text.parse()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for set in sets {
            let (key, value) = set
                .split_once('=')
                .with_context(|| format!("--set expects key=value, got `{set}`"))?;
            table.insert(key.trim().to_string(), parse_toml_value(value.trim()));
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match self.backend.as_str() {
            "stub" => {}
            "http" => {
                if self.base_url.as_deref().map_or(true, str::is_empty) {
                    bail!("backend = \"http\" requires base_url");
                }
            }
            other => bail!("unknown backend `{other}` (expected \"stub\" or \"http\")"),
        }
        if self.n_samples == 0 {
            bail!("n_samples must be >= 1");
        }
        if self.temperature_main < 0.0 || self.temperature_samples < 0.0 {
            bail!("temperatures must be >= 0");
        }
        if !(1..=selfcheck::ngram::MAX_ORDER).contains(&self.ngram_order) {
            bail!("ngram_order must be in 1..=5");
        }
        if self.workers == 0 {
            bail!("workers must be >= 1");
        }
        self.entropy_mode()?;
        Ok(())
    }

    /// Digest of the resolved configuration, embedded in every output
    /// file so mismatched artifacts are caught at eval time.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        sha256_hex(canonical_json(&value).as_bytes())
    }

    pub fn entropy_mode(&self) -> anyhow::Result<EntropyMode> {
        match self.entropy_mode.as_str() {
            "nats" => Ok(EntropyMode::Nats),
            "exp2bits" => Ok(EntropyMode::Exp2Bits),
            other => bail!("unknown entropy_mode `{other}` (expected \"nats\" or \"exp2bits\")"),
        }
    }

    pub fn qa_config(&self) -> anyhow::Result<QaConfig> {
        Ok(QaConfig {
            n_questions: self.n_questions,
            params: BayesParams::new(self.beta1, self.beta2)?,
            counting: match self.answerability_threshold {
                Some(threshold) => Counting::Hard { threshold },
                None => Counting::Soft,
            },
            min_response_answerability: self.min_response_answerability,
        })
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

fn parse_toml_value(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(raw.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.n_samples, 20);
        assert_eq!(c.temperature_main, 0.0);
        assert_eq!(c.temperature_samples, 1.0);
    }

    #[test]
    fn set_overrides_parse_types() {
        let c = RunConfig::load(
            None,
            &[
                "n_samples=7".into(),
                "ngram_delta=0.5".into(),
                "entropy_renormalize=true".into(),
                "model=foo".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.n_samples, 7);
        assert_eq!(c.ngram_delta, 0.5);
        assert!(c.entropy_renormalize);
        assert_eq!(c.model, "foo");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::load(None, &["no_such_key=1".into()]).is_err());
    }

    #[test]
    fn http_requires_base_url() {
        assert!(RunConfig::load(None, &["backend=http".into()]).is_err());
        assert!(RunConfig::load(
            None,
            &["backend=http".into(), "base_url=http://localhost:1".into()]
        )
        .is_ok());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig::load(None, &["n_samples=7".into()]).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), RunConfig::default().digest());
    }

    #[test]
    fn qa_config_mapping() {
        let c = RunConfig::load(None, &["answerability_threshold=0.4".into()]).unwrap();
        assert_eq!(
            c.qa_config().unwrap().counting,
            Counting::Hard { threshold: 0.4 }
        );
        let c = RunConfig::default();
        assert_eq!(c.qa_config().unwrap().counting, Counting::Soft);
    }
}
