//! Deterministic offline clients.
//!
//! [`HashEmbedder`] is a hashed bag-of-words embedder with real cosine
//! structure. [`ScriptedChat`] answers from a rule table that can be loaded
//! from a JSON fixture; [`FnChat`] wraps a closure. [`Counted`] adds a call
//! counter to any chat client.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_embed_batch, ChatClient, ChatRequest, ClientError, EmbedClient, EmbeddingVector};
use crate::text::words;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Hashed bag-of-words embedder.
///
/// Each case-folded word adds one to coordinate `fnv1a(word) mod dim`; the
/// count vector is L2-normalized. Texts without any word map to a fixed
/// sentinel direction so the output is always a unit vector.
#[derive(Debug)]
pub struct HashEmbedder {
    dim: usize,
    max_batch: usize,
    calls: AtomicUsize,
    texts: AtomicUsize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(1), max_batch: 256, calls: AtomicUsize::new(0), texts: AtomicUsize::new(0) }
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    /// Coordinate a word hashes to.
    pub fn bucket(&self, word: &str) -> usize {
        (fnv1a(word.to_lowercase().as_bytes()) % self.dim as u64) as usize
    }

    /// Number of `embed` invocations so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Number of texts embedded so far.
    pub fn texts_embedded(&self) -> usize {
        self.texts.load(Ordering::SeqCst)
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector<f64> {
        let mut values = vec![0.0f64; self.dim];
        let tokens = words(text);
        if tokens.is_empty() {
            values[0] = 1.0;
        } else {
            for w in &tokens {
                values[self.bucket(w)] += 1.0;
            }
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector::new(values).expect("finite by construction")
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl EmbedClient for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn max_batch(&self) -> usize {
        self.max_batch
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>, ClientError> {
        check_embed_batch(texts, self.max_batch)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.texts.fetch_add(texts.len(), Ordering::SeqCst);
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Stable fingerprint of a request: hex SHA-256 over roles and contents.
pub fn fingerprint(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    for m in &request.messages {
        hasher.update(format!("{:?}", m.role).as_bytes());
        hasher.update([0]);
        hasher.update(m.content.as_bytes());
        hasher.update([0]);
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One scripted reply. A rule matches when its fingerprint (if set) equals
/// the request fingerprint and every `contains` needle occurs in the
/// request transcript.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    pub reply: String,
}

impl ScriptRule {
    pub fn contains(needles: &[&str], reply: impl Into<String>) -> Self {
        Self { fingerprint: None, contains: needles.iter().map(|s| s.to_string()).collect(), reply: reply.into() }
    }

    fn matches(&self, fp: &str, transcript: &str) -> bool {
        self.fingerprint.as_deref().is_none_or(|f| f == fp)
            && self.contains.iter().all(|n| transcript.contains(n.as_str()))
    }
}

/// On-disk form of a chat script.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatScript {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    /// Reply used when no rule matches; absent means an unmatched request is an error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

/// Rule-table chat client. First matching rule wins.
#[derive(Debug)]
pub struct ScriptedChat {
    script: ChatScript,
    calls: AtomicUsize,
    log: Mutex<Vec<String>>,
}

impl ScriptedChat {
    pub fn new(script: ChatScript) -> Self {
        Self { script, calls: AtomicUsize::new(0), log: Mutex::new(Vec::new()) }
    }

    pub fn from_rules(rules: Vec<ScriptRule>) -> Self {
        Self::new(ChatScript { rules, fallback: None })
    }

    pub fn with_fallback(mut self, reply: impl Into<String>) -> Self {
        self.script.fallback = Some(reply.into());
        self
    }

    pub fn from_file(path: &Path) -> Result<Self, ClientError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Mock(format!("cannot read script {}: {e}", path.display())))?;
        let script: ChatScript = serde_json::from_str(&raw)
            .map_err(|e| ClientError::Mock(format!("invalid script {}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn script(&self) -> &ChatScript {
        &self.script
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Transcripts of every request received, in arrival order.
    pub fn transcripts(&self) -> Vec<String> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl ChatClient for ScriptedChat {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let transcript = request.transcript();
        let fp = fingerprint(request);
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(transcript.clone());
        self.script
            .rules
            .iter()
            .find(|r| r.matches(&fp, &transcript))
            .map(|r| r.reply.clone())
            .or_else(|| self.script.fallback.clone())
            .ok_or_else(|| {
                let head: String = transcript.chars().take(120).collect();
                ClientError::Mock(format!("no scripted reply for request {fp} ({head}...)"))
            })
    }
}

/// Chat client backed by a closure over the request transcript.
pub struct FnChat<F> {
    reply: F,
}

impl<F> FnChat<F>
where
    F: Fn(&str) -> Result<String, ClientError> + Send + Sync,
{
    pub fn new(reply: F) -> Self {
        Self { reply }
    }
}

impl<F> ChatClient for FnChat<F>
where
    F: Fn(&str) -> Result<String, ClientError> + Send + Sync,
{
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError> {
        request.validate()?;
        (self.reply)(&request.transcript())
    }
}

/// Chat client always returning the same reply.
pub fn canned(reply: impl Into<String>) -> ScriptedChat {
    ScriptedChat::new(ChatScript { rules: Vec::new(), fallback: Some(reply.into()) })
}

/// Wraps a chat client and counts the calls it receives.
pub struct Counted<C> {
    inner: C,
    calls: AtomicUsize,
}

impl<C: ChatClient> Counted<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: ChatClient> ChatClient for Counted<C> {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.chat(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn canned_reply_is_verbatim() {
        let chat = canned("  R \n");
        assert_eq!(chat.chat(&ChatRequest::user("anything")).unwrap(), "  R \n");
    }

    #[test]
    fn scripted_first_match_wins_and_unmatched_errors() {
        let chat = ScriptedChat::from_rules(vec![
            ScriptRule::contains(&["alpha"], "one"),
            ScriptRule::contains(&["alpha", "beta"], "two"),
        ]);
        assert_eq!(chat.chat(&ChatRequest::user("alpha beta")).unwrap(), "one");
        assert!(matches!(chat.chat(&ChatRequest::user("gamma")), Err(ClientError::Mock(_))));
        assert_eq!(chat.calls(), 2);
    }

    #[test]
    fn fingerprint_rules_match_exact_request() {
        let req = ChatRequest::user("hello");
        let chat = ScriptedChat::from_rules(vec![ScriptRule {
            fingerprint: Some(fingerprint(&req)),
            contains: vec![],
            reply: "hi".into(),
        }]);
        assert_eq!(chat.chat(&req).unwrap(), "hi");
        assert!(chat.chat(&ChatRequest::user("hello ")).is_err());
    }

    #[test]
    fn embed_is_deterministic_and_order_insensitive() {
        let e = HashEmbedder::default();
        let v = e.embed(&["t", "t"]).unwrap();
        assert_eq!(v[0], v[1]);
        let ab = e.embed_one("a b");
        let ba = e.embed_one("b a");
        assert!((cosine(ab.values(), ba.values()) - 1.0).abs() < 1e-12);
        assert!(e.embed(&[]).unwrap().is_empty());
        assert!((ab.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embed_rejects_empty_text_with_index() {
        let e = HashEmbedder::default();
        assert!(matches!(e.embed(&["x", " "]), Err(ClientError::InvalidInput { index: 1, .. })));
    }

    #[test]
    fn embed_all_batches() {
        let e = HashEmbedder::new(16).with_max_batch(2);
        let out = e.embed_all(&["a", "b", "c", "d", "e"]).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(e.calls(), 3);
        assert!(matches!(e.embed_all(&["a", "b", ""]), Err(ClientError::InvalidInput { index: 2, .. })));
    }
}
