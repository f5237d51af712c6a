//! HTTP JSON client implementing every backend capability.
//!
//! Wire protocol (all POST, JSON bodies, optional `Authorization:
//! Bearer` from an environment variable):
//!
//! - `{base_url}/chat/completions` — text generation and judging:
//!   `{"model", "messages": [...], "temperature", "n"}` returning
//!   `{"choices": [{"message": {"content": "..."}}, ...]}`.
//! - `{base_url}/completions` — token scoring with echo:
//!   `{"model", "prompt", "echo": true, "logprobs": 5, "max_tokens": 0}`
//!   returning `{"choices": [{"logprobs": {"tokens", "token_logprobs",
//!   "top_logprobs", "text_offset"}}]}`. Log-probabilities are natural
//!   logs.
//! - `{base_url}/score` — generic scoring tasks. The `task` field
//!   selects among `similarity` (`{"score"}`), `nli`
//!   (`{"entail", "contradict"}`), `qa_generate` (`{"items": [...]}`)
//!   and `qa_answer` (`{"answer", "answerability"}`).
//!
//! Transient failures (connect errors, timeouts, HTTP 5xx and 429) are
//! retried with jittered exponential backoff; 429 responses honour a
//! `Retry-After` header when present. Other 4xx responses fail fast.

use std::time::Duration;

use serde_json::{json, Value};

use crate::backends::{
    NliLogits, NliScorer, QaAnswer, QaItem, QaModel, SimilarityScorer, TextGenerator, TokenScore,
    TokenScorer, TopToken,
};
use crate::error::{BackendError, Error, Result};

/// Retry behaviour for transient transport failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_backoff: Duration::from_secs(1),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.base_backoff.saturating_mul(1u32 << attempt.min(16));
        if self.jitter {
            let extra = Duration::from_millis(rand::random_range(0..250));
            base.saturating_add(extra)
        } else {
            base
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token; the request is
    /// sent unauthenticated when the variable is unset.
    pub api_key_env: String,
    /// System message prepended to chat-style requests.
    pub system_message: Option<String>,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub max_text_chars: usize,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: "SELFCHECK_API_KEY".into(),
            system_message: Some("You are a helpful assistant.".into()),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(60),
            max_text_chars: 1 << 16,
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

enum Attempt {
    Retry {
        message: String,
        rate_limited: bool,
        retry_after: Option<Duration>,
    },
    Fail(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok();
        Ok(HttpBackend {
            config,
            client,
            api_key,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn url(&self, endpoint: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), endpoint)
    }

    fn attempt(&self, endpoint: &str, body: &Value) -> std::result::Result<Value, Attempt> {
        let mut req = self.client.post(self.url(endpoint)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry {
            message: e.to_string(),
            rate_limited: false,
            retry_after: None,
        })?;

        let status = resp.status();
        if status.as_u16() == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|s| s.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(Attempt::Retry {
                message: "rate limited".into(),
                rate_limited: true,
                retry_after,
            });
        }
        if status.is_server_error() {
            return Err(Attempt::Retry {
                message: format!("server error {status}"),
                rate_limited: false,
                retry_after: None,
            });
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(Attempt::Fail(BackendError::Protocol(format!(
                "HTTP {status}: {body}"
            ))));
        }
        resp.json::<Value>().map_err(|e| {
            Attempt::Fail(BackendError::Protocol(format!("invalid JSON response: {e}")))
        })
    }

    /// POST with the retry policy applied.
    fn post(&self, endpoint: &str, body: Value) -> Result<Value> {
        let attempts = self.config.retry.max_attempts.max(1);
        let mut last: Option<Attempt> = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = match &last {
                    Some(Attempt::Retry { retry_after: Some(d), .. }) => *d,
                    _ => self.config.retry.backoff(attempt - 1),
                };
                std::thread::sleep(wait);
            }
            match self.attempt(endpoint, &body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fail(e)) => return Err(e.into()),
                Err(retry) => last = Some(retry),
            }
        }
        Err(match last {
            Some(Attempt::Retry { message, rate_limited, retry_after }) => {
                if rate_limited {
                    BackendError::RateLimited { attempts, retry_after }.into()
                } else {
                    BackendError::Transport { message, attempts }.into()
                }
            }
            _ => BackendError::Unavailable("no attempt made".into()).into(),
        })
    }
}

fn field<'v>(value: &'v Value, name: &str) -> Result<&'v Value> {
    value
        .get(name)
        .ok_or_else(|| BackendError::Protocol(format!("response missing `{name}`")).into())
}

fn as_f64(value: &Value, name: &str) -> Result<f64> {
    field(value, name)?
        .as_f64()
        .ok_or_else(|| BackendError::Protocol(format!("`{name}` is not a number")).into())
}

impl TextGenerator for HttpBackend {
    fn generate(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>> {
        if n == 0 {
            return Err(Error::Precondition("generate requires n >= 1".into()));
        }
        if temperature < 0.0 {
            return Err(Error::Precondition(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        let mut messages = Vec::new();
        if let Some(system) = &self.config.system_message {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt}));
        let response = self.post(
            "chat/completions",
            json!({
                "model": self.config.model,
                "messages": messages,
                "temperature": temperature,
                "n": n,
            }),
        )?;
        let choices = field(&response, "choices")?
            .as_array()
            .ok_or_else(|| BackendError::Protocol("`choices` is not an array".into()))?;
        let texts: Vec<String> = choices
            .iter()
            .map(|c| {
                c.pointer("/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| BackendError::Protocol("choice missing `message.content`".into()).into())
            })
            .collect::<Result<_>>()?;
        if texts.len() != n {
            return Err(BackendError::Protocol(format!(
                "requested {n} completions, got {}",
                texts.len()
            ))
            .into());
        }
        Ok(texts)
    }

    fn id(&self) -> String {
        format!("http:{}:{}", self.config.base_url, self.config.model)
    }
}

impl TokenScorer for HttpBackend {
    fn score_tokens(&self, text: &str, context: &str) -> Result<Vec<TokenScore>> {
        if text.is_empty() {
            return Err(Error::EmptyInput("text to score"));
        }
        let total = context.len() + text.len();
        if total > self.config.max_text_chars {
            return Err(BackendError::TextTooLong {
                len: total,
                limit: self.config.max_text_chars,
            }
            .into());
        }
        let prompt = format!("{context}{text}");
        let response = self.post(
            "completions",
            json!({
                "model": self.config.model,
                "prompt": prompt,
                "echo": true,
                "logprobs": 5,
                "max_tokens": 0,
                "temperature": 0.0,
            }),
        )?;
        let logprobs = response
            .pointer("/choices/0/logprobs")
            .ok_or_else(|| BackendError::Protocol("response missing `choices[0].logprobs`".into()))?;
        let tokens = field(logprobs, "tokens")?
            .as_array()
            .ok_or_else(|| BackendError::Protocol("`tokens` is not an array".into()))?;
        let token_logprobs = field(logprobs, "token_logprobs")?
            .as_array()
            .ok_or_else(|| BackendError::Protocol("`token_logprobs` is not an array".into()))?;
        let offsets = field(logprobs, "text_offset")?
            .as_array()
            .ok_or_else(|| BackendError::Protocol("`text_offset` is not an array".into()))?;
        let top_logprobs = logprobs.get("top_logprobs").and_then(Value::as_array);

        if tokens.len() != token_logprobs.len() || tokens.len() != offsets.len() {
            return Err(BackendError::Protocol("logprob arrays have mismatched lengths".into()).into());
        }

        let mut out = Vec::new();
        for i in 0..tokens.len() {
            let offset = offsets[i]
                .as_u64()
                .ok_or_else(|| BackendError::Protocol("`text_offset` entry is not an integer".into()))?
                as usize;
            if offset < context.len() {
                continue; // token belongs to the conditioning context
            }
            let token = tokens[i]
                .as_str()
                .ok_or_else(|| BackendError::Protocol("`tokens` entry is not a string".into()))?;
            // The first token of an unconditioned prompt has no
            // probability; treat it as certain.
            let logprob = token_logprobs[i].as_f64().unwrap_or(0.0).min(0.0);
            let topk = match top_logprobs.and_then(|arr| arr.get(i)).and_then(Value::as_object) {
                Some(map) => {
                    let mut entries: Vec<TopToken> = map
                        .iter()
                        .filter_map(|(tok, lp)| {
                            lp.as_f64().map(|lp| TopToken {
                                token: tok.clone(),
                                prob: lp.exp().clamp(f64::MIN_POSITIVE, 1.0),
                            })
                        })
                        .collect();
                    entries.sort_by(|a, b| b.prob.total_cmp(&a.prob));
                    entries.truncate(5);
                    if entries.is_empty() {
                        None
                    } else {
                        Some(entries)
                    }
                }
                None => None,
            };
            out.push(TokenScore::new(token, logprob, topk)?);
        }

        let concat: String = out.iter().map(|t| t.token.as_str()).collect();
        if concat != text {
            return Err(BackendError::Protocol(
                "echoed tokens do not concatenate to the scored text".into(),
            )
            .into());
        }
        Ok(out)
    }

    fn id(&self) -> String {
        format!("http:{}:{}", self.config.base_url, self.config.model)
    }
}

impl SimilarityScorer for HttpBackend {
    fn similarity(&self, candidate: &str, reference: &str) -> Result<f64> {
        if candidate.trim().is_empty() || reference.trim().is_empty() {
            return Err(Error::EmptyInput("similarity input"));
        }
        let response = self.post(
            "score",
            json!({
                "task": "similarity",
                "model": self.config.model,
                "candidate": candidate,
                "reference": reference,
            }),
        )?;
        // Raw backend values may fall slightly outside [0, 1]; clip.
        Ok(as_f64(&response, "score")?.clamp(0.0, 1.0))
    }

    fn id(&self) -> String {
        format!("http:{}:{}", self.config.base_url, self.config.model)
    }
}

impl NliScorer for HttpBackend {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliLogits> {
        if premise.trim().is_empty() {
            return Err(Error::EmptyInput("NLI premise"));
        }
        if hypothesis.trim().is_empty() {
            return Err(Error::EmptyInput("NLI hypothesis"));
        }
        let response = self.post(
            "score",
            json!({
                "task": "nli",
                "model": self.config.model,
                "premise": premise,
                "hypothesis": hypothesis,
            }),
        )?;
        NliLogits::new(as_f64(&response, "entail")?, as_f64(&response, "contradict")?)
    }

    fn id(&self) -> String {
        format!("http:{}:{}", self.config.base_url, self.config.model)
    }
}

impl QaModel for HttpBackend {
    fn qa_generate(&self, sentence: &str, passage: &str, n_questions: usize) -> Result<Vec<QaItem>> {
        if n_questions == 0 {
            return Err(Error::Precondition("n_questions must be >= 1".into()));
        }
        let response = self.post(
            "score",
            json!({
                "task": "qa_generate",
                "model": self.config.model,
                "sentence": sentence,
                "passage": passage,
                "n_questions": n_questions,
            }),
        )?;
        let items = field(&response, "items")?
            .as_array()
            .ok_or_else(|| BackendError::Protocol("`items` is not an array".into()))?;
        items
            .iter()
            .map(|item| {
                let question = field(item, "question")?
                    .as_str()
                    .ok_or_else(|| BackendError::Protocol("`question` is not a string".into()))?;
                let options: Vec<String> = field(item, "options")?
                    .as_array()
                    .ok_or_else(|| BackendError::Protocol("`options` is not an array".into()))?
                    .iter()
                    .map(|o| {
                        o.as_str().map(str::to_string).ok_or_else(|| {
                            Error::from(BackendError::Protocol("option is not a string".into()))
                        })
                    })
                    .collect::<Result<_>>()?;
                let options: [String; 4] = options.try_into().map_err(|v: Vec<_>| {
                    BackendError::Protocol(format!("expected 4 options, got {}", v.len()))
                })?;
                let gold = field(item, "gold_index")?
                    .as_u64()
                    .ok_or_else(|| BackendError::Protocol("`gold_index` is not an integer".into()))?;
                QaItem::new(question, options, gold as usize)
            })
            .collect()
    }

    fn qa_answer(&self, item: &QaItem, context: &str) -> Result<QaAnswer> {
        let response = self.post(
            "score",
            json!({
                "task": "qa_answer",
                "model": self.config.model,
                "question": item.question,
                "options": item.options,
                "context": context,
            }),
        )?;
        let answer = field(&response, "answer")?
            .as_u64()
            .ok_or_else(|| BackendError::Protocol("`answer` is not an integer".into()))? as usize;
        if answer >= 4 {
            return Err(BackendError::Protocol(format!("answer index {answer} out of range")).into());
        }
        let answerability = as_f64(&response, "answerability")?;
        if !(0.0..=1.0).contains(&answerability) {
            return Err(BackendError::Protocol(format!(
                "answerability {answerability} outside [0, 1]"
            ))
            .into());
        }
        Ok(QaAnswer {
            answer_index: answer,
            answerability,
        })
    }

    fn id(&self) -> String {
        format!("http:{}:{}", self.config.base_url, self.config.model)
    }
}
