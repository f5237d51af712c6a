//! Assemble the capability backends described by a [`RunConfig`],
//! optionally wrapping every one of them in the disk cache.

use std::collections::BTreeMap;
use std::sync::Arc;

use selfcheck::backends::cache::{
    CachedGenerator, CachedNli, CachedQa, CachedSimilarity, CachedTokenScorer, DiskCache,
};
use selfcheck::backends::http::{HttpBackend, HttpConfig, RetryPolicy};
use selfcheck::backends::stub::{StubGenerator, StubJudge, StubNli, StubQa, StubSimilarity, StubTokenScorer};
use selfcheck::backends::{NliScorer, QaModel, SimilarityScorer, TextGenerator, TokenScorer};

use crate::config::RunConfig;

pub struct BackendSet {
    pub generator: Arc<dyn TextGenerator>,
    pub judge: Arc<dyn TextGenerator>,
    /// Absent when the HTTP backend has no token model configured.
    pub token_scorer: Option<Arc<dyn TokenScorer>>,
    pub similarity: Arc<dyn SimilarityScorer>,
    pub nli: Arc<dyn NliScorer>,
    pub qa: Arc<dyn QaModel>,
}

impl BackendSet {
    pub fn from_config(config: &RunConfig) -> anyhow::Result<Self> {
        let mut set = match config.backend.as_str() {
            "stub" => BackendSet {
                generator: Arc::new(StubGenerator::new(config.seed)),
                judge: Arc::new(StubJudge::default()),
                token_scorer: Some(Arc::new(StubTokenScorer::default())),
                similarity: Arc::new(StubSimilarity),
                nli: Arc::new(StubNli),
                qa: Arc::new(StubQa::default()),
            },
            "http" => {
                let base = |model: &str| {
                    let mut http = HttpConfig::new(
                        config.base_url.clone().expect("validated"),
                        model.to_string(),
                    );
                    http.api_key_env = config.api_key_env.clone();
                    http.system_message = if config.system_message.is_empty() {
                        None
                    } else {
                        Some(config.system_message.clone())
                    };
                    http.retry = RetryPolicy {
                        max_attempts: config.max_attempts,
                        ..RetryPolicy::default()
                    };
                    http.timeout = config.timeout();
                    http
                };
                let main: Arc<HttpBackend> = Arc::new(HttpBackend::new(base(&config.model))?);
                let judge: Arc<dyn TextGenerator> = match &config.judge_model {
                    Some(m) if *m != config.model => Arc::new(HttpBackend::new(base(m))?),
                    _ => main.clone(),
                };
                let token_scorer: Option<Arc<dyn TokenScorer>> = match &config.token_model {
                    Some(m) if *m != config.model => Some(Arc::new(HttpBackend::new(base(m))?)),
                    Some(_) => Some(main.clone()),
                    None => None,
                };
                BackendSet {
                    generator: main.clone(),
                    judge,
                    token_scorer,
                    similarity: main.clone(),
                    nli: main.clone(),
                    qa: main,
                }
            }
            other => anyhow::bail!("unknown backend `{other}`"),
        };
        if let Some(dir) = &config.cache_dir {
            let cache = Arc::new(DiskCache::new(dir)?);
            set = set.cached(cache);
        }
        Ok(set)
    }

    fn cached(self, cache: Arc<DiskCache>) -> Self {
        BackendSet {
            generator: Arc::new(CachedGenerator::new(self.generator, cache.clone())),
            judge: Arc::new(CachedGenerator::new(self.judge, cache.clone())),
            token_scorer: self
                .token_scorer
                .map(|t| Arc::new(CachedTokenScorer::new(t, cache.clone())) as Arc<dyn TokenScorer>),
            similarity: Arc::new(CachedSimilarity::new(self.similarity, cache.clone())),
            nli: Arc::new(CachedNli::new(self.nli, cache.clone())),
            qa: Arc::new(CachedQa::new(self.qa, cache)),
        }
    }

    /// Backend identifiers for file provenance.
    pub fn ids(&self) -> BTreeMap<String, String> {
        let mut ids = BTreeMap::new();
        ids.insert("generator".into(), self.generator.id());
        ids.insert("judge".into(), self.judge.id());
        if let Some(t) = &self.token_scorer {
            ids.insert("token_scorer".into(), t.id());
        }
        ids.insert("similarity".into(), self.similarity.id());
        ids.insert("nli".into(), self.nli.id());
        ids.insert("qa".into(), self.qa.id());
        ids
    }
}
