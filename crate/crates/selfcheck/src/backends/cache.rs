//! Content-addressed disk cache for backend responses.
//!
//! Entries are keyed by sha256 of (backend id, operation, canonicalized
//! request) and stored as `<root>/<backend>/<sha256>.json`. A corrupt
//! entry is treated as a miss and logged. Writes go through a temp file
//! and rename, so concurrent readers never observe a partial entry;
//! the last writer wins.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::backends::{
    NliLogits, NliScorer, QaAnswer, QaItem, QaModel, SimilarityScorer, TextGenerator, TokenScore,
    TokenScorer,
};
use crate::error::Result;

/// Serialize a JSON value with object keys sorted at every level, so
/// equal requests hash equally regardless of field order.
pub fn canonical_json(value: &Value) -> String {
    fn write(value: &Value, out: &mut String) {
        match value {
            Value::Object(map) => {
                out.push('{');
                let mut keys: Vec<_> = map.keys().collect();
                keys.sort();
                for (i, k) in keys.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(k).expect("string serializes"));
                    out.push(':');
                    write(&map[*k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

/// Hex-encoded sha256, shared by cache keys and file digests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct CacheKey {
    pub backend: String,
    pub operation: &'static str,
    pub request: Value,
}

impl CacheKey {
    pub fn digest(&self) -> String {
        let canonical = canonical_json(&serde_json::json!({
            "backend": self.backend,
            "operation": self.operation,
            "request": self.request,
        }));
        sha256_hex(canonical.as_bytes())
    }
}

#[derive(Debug)]
pub struct DiskCache {
    root: PathBuf,
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(DiskCache { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        // Backend ids may contain ':' etc.; keep the directory name tame.
        let dir: String = key
            .backend
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        self.root.join(dir).join(format!("{}.json", key.digest()))
    }

    /// Fetch the cached bytes for `key`, or `None` on miss. Entries
    /// that are not valid JSON are treated as misses and logged.
    pub fn get(&self, key: &CacheKey) -> Option<Vec<u8>> {
        let path = self.path(key);
        let bytes = std::fs::read(&path).ok()?;
        if serde_json::from_slice::<Value>(&bytes).is_err() {
            log::warn!("corrupt cache entry at {}, treating as miss", path.display());
            return None;
        }
        Some(bytes)
    }

    /// Store `bytes` under `key`, replacing any previous entry.
    pub fn put(&self, key: &CacheKey, bytes: &[u8]) -> Result<()> {
        let path = self.path(key);
        let dir = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(dir)?;
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn get_typed<T: DeserializeOwned>(&self, key: &CacheKey) -> Option<T> {
        let bytes = self.get(key)?;
        match serde_json::from_slice(&bytes) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("cache entry for {} has unexpected shape ({e}), treating as miss", key.operation);
                None
            }
        }
    }

    fn put_typed<T: Serialize>(&self, key: &CacheKey, value: &T) {
        match serde_json::to_vec(value) {
            Ok(bytes) => {
                if let Err(e) = self.put(key, &bytes) {
                    log::warn!("failed to write cache entry: {e}");
                }
            }
            Err(e) => log::warn!("failed to serialize cache entry: {e}"),
        }
    }
}

macro_rules! cached_call {
    ($self:ident, $op:literal, $request:expr, $compute:expr) => {{
        let key = CacheKey {
            backend: $self.inner.id(),
            operation: $op,
            request: $request,
        };
        if let Some(hit) = $self.cache.get_typed(&key) {
            return Ok(hit);
        }
        let fresh = $compute?;
        $self.cache.put_typed(&key, &fresh);
        Ok(fresh)
    }};
}

/// Wrap a generator with read-through caching.
pub struct CachedGenerator<G> {
    inner: G,
    cache: Arc<DiskCache>,
}

impl<G> CachedGenerator<G> {
    pub fn new(inner: G, cache: Arc<DiskCache>) -> Self {
        CachedGenerator { inner, cache }
    }
}

impl<G: TextGenerator> TextGenerator for CachedGenerator<G> {
    fn generate(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>> {
        cached_call!(
            self,
            "generate",
            serde_json::json!({"prompt": prompt, "temperature": temperature, "n": n}),
            self.inner.generate(prompt, temperature, n)
        )
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}

pub struct CachedTokenScorer<S> {
    inner: S,
    cache: Arc<DiskCache>,
}

impl<S> CachedTokenScorer<S> {
    pub fn new(inner: S, cache: Arc<DiskCache>) -> Self {
        CachedTokenScorer { inner, cache }
    }
}

impl<S: TokenScorer> TokenScorer for CachedTokenScorer<S> {
    fn score_tokens(&self, text: &str, context: &str) -> Result<Vec<TokenScore>> {
        cached_call!(
            self,
            "score_tokens",
            serde_json::json!({"text": text, "context": context}),
            self.inner.score_tokens(text, context)
        )
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}

pub struct CachedSimilarity<S> {
    inner: S,
    cache: Arc<DiskCache>,
}

impl<S> CachedSimilarity<S> {
    pub fn new(inner: S, cache: Arc<DiskCache>) -> Self {
        CachedSimilarity { inner, cache }
    }
}

impl<S: SimilarityScorer> SimilarityScorer for CachedSimilarity<S> {
    fn similarity(&self, candidate: &str, reference: &str) -> Result<f64> {
        cached_call!(
            self,
            "similarity",
            serde_json::json!({"candidate": candidate, "reference": reference}),
            self.inner.similarity(candidate, reference)
        )
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}

pub struct CachedNli<S> {
    inner: S,
    cache: Arc<DiskCache>,
}

impl<S> CachedNli<S> {
    pub fn new(inner: S, cache: Arc<DiskCache>) -> Self {
        CachedNli { inner, cache }
    }
}

impl<S: NliScorer> NliScorer for CachedNli<S> {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliLogits> {
        cached_call!(
            self,
            "nli",
            serde_json::json!({"premise": premise, "hypothesis": hypothesis}),
            self.inner.nli(premise, hypothesis)
        )
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}

pub struct CachedQa<S> {
    inner: S,
    cache: Arc<DiskCache>,
}

impl<S> CachedQa<S> {
    pub fn new(inner: S, cache: Arc<DiskCache>) -> Self {
        CachedQa { inner, cache }
    }
}

impl<S: QaModel> QaModel for CachedQa<S> {
    fn qa_generate(&self, sentence: &str, passage: &str, n_questions: usize) -> Result<Vec<QaItem>> {
        cached_call!(
            self,
            "qa_generate",
            serde_json::json!({"sentence": sentence, "passage": passage, "n_questions": n_questions}),
            self.inner.qa_generate(sentence, passage, n_questions)
        )
    }

    fn qa_answer(&self, item: &QaItem, context: &str) -> Result<QaAnswer> {
        cached_call!(
            self,
            "qa_answer",
            serde_json::json!({
                "question": item.question,
                "options": item.options,
                "gold_index": item.gold_index,
                "context": context,
            }),
            self.inner.qa_answer(item, context)
        )
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn key(req: Value) -> CacheKey {
        CacheKey {
            backend: "test-backend".into(),
            operation: "op",
            request: req,
        }
    }

    #[test]
    fn put_then_get_returns_equal_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        let k = key(serde_json::json!({"a": 1}));
        cache.put(&k, br#"{"x":42}"#).unwrap();
        assert_eq!(cache.get(&k).unwrap(), br#"{"x":42}"#.to_vec());
    }

    #[test]
    fn unknown_key_is_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        assert!(cache.get(&key(serde_json::json!({"a": 2}))).is_none());
    }

    #[test]
    fn last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        let k = key(serde_json::json!({"a": 3}));
        cache.put(&k, br#"{"v":1}"#).unwrap();
        cache.put(&k, br#"{"v":2}"#).unwrap();
        assert_eq!(cache.get(&k).unwrap(), br#"{"v":2}"#.to_vec());
    }

    #[test]
    fn corrupt_entry_is_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        let k = key(serde_json::json!({"a": 4}));
        cache.put(&k, b"not json at all").unwrap();
        assert!(cache.get(&k).is_none());
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let a: Value = serde_json::from_str(r#"{"b":1,"a":{"d":2,"c":[{"z":1,"y":2}]}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a":{"c":[{"y":2,"z":1}],"d":2},"b":1}"#).unwrap();
        assert_eq!(canonical_json(&a), canonical_json(&b));
        assert_eq!(canonical_json(&a), r#"{"a":{"c":[{"y":2,"z":1}],"d":2},"b":1}"#);
    }

    #[test]
    fn key_digest_depends_on_backend_and_operation() {
        let a = CacheKey { backend: "x".into(), operation: "op1", request: serde_json::json!(1) };
        let b = CacheKey { backend: "y".into(), operation: "op1", request: serde_json::json!(1) };
        let c = CacheKey { backend: "x".into(), operation: "op2", request: serde_json::json!(1) };
        assert_ne!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    struct CountingGen(AtomicUsize);

    impl TextGenerator for CountingGen {
        fn generate(&self, _p: &str, _t: f64, n: usize) -> Result<Vec<String>> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(vec!["out".into(); n])
        }
        fn id(&self) -> String {
            "counting".into()
        }
    }

    #[test]
    fn second_pass_issues_zero_inner_calls() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::new(dir.path()).unwrap());
        let gen = CachedGenerator::new(CountingGen(AtomicUsize::new(0)), cache);
        let first = gen.generate("p", 1.0, 2).unwrap();
        let calls_after_first = gen.inner.0.load(Ordering::SeqCst);
        let second = gen.generate("p", 1.0, 2).unwrap();
        assert_eq!(first, second);
        assert_eq!(gen.inner.0.load(Ordering::SeqCst), calls_after_first);
        assert_eq!(calls_after_first, 1);
    }
}
