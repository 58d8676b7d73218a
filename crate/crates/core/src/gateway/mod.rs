//! Uniform access to batch completion, streaming generation and text
//! embeddings, backed by a live HTTP service or one of two offline mocks.
//!
//! Every downstream module talks to models only through [`Gateway`]. The
//! gateway owns the content-addressed [`ImageStore`], the per-context stream
//! registry used for cancellation, and the retry policy for batch calls.

mod images;
mod live;
mod mock;
mod scripted;

use std::collections::HashMap;
use std::fmt;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use images::{ImageRef, ImageStore};
pub use live::{LiveBackend, LiveConfig};
pub use mock::{bag_of_words, FixtureValue, Fixtures, MockBackend, Responder, BOW_DIMS};
pub use scripted::{ScriptedBackend, ScriptedFault, ScriptedReply};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("could not decode backend output: {0}")]
    Decode(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("unknown image {0}")]
    MissingImage(String),
}

impl GatewayError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, GatewayError::Timeout(_))
    }
}

pub type Result<T> = std::result::Result<T, GatewayError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Batch,
    Stream,
    Embed,
}

impl RequestKind {
    fn as_str(self) -> &'static str {
        match self {
            RequestKind::Batch => "batch",
            RequestKind::Stream => "stream",
            RequestKind::Embed => "embed",
        }
    }
}

/// Opaque session-scoped token. Streams are registered under it so that a
/// cancel from another thread can stop them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ContextId(pub String);

impl ContextId {
    pub fn new(id: impl Into<String>) -> Self {
        ContextId(id.into())
    }
}

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub kind: RequestKind,
    pub prompt: String,
    pub images: Vec<ImageRef>,
    pub context_id: ContextId,
    pub max_latency_hint_ms: u64,
}

impl ModelRequest {
    pub fn batch(prompt: impl Into<String>) -> Self {
        Self::new(RequestKind::Batch, prompt, 30_000)
    }

    pub fn stream(prompt: impl Into<String>) -> Self {
        Self::new(RequestKind::Stream, prompt, 2_000)
    }

    pub fn embed(text: impl Into<String>) -> Self {
        Self::new(RequestKind::Embed, text, 10_000)
    }

    fn new(kind: RequestKind, prompt: impl Into<String>, hint: u64) -> Self {
        ModelRequest {
            kind,
            prompt: prompt.into(),
            images: Vec::new(),
            context_id: ContextId::default(),
            max_latency_hint_ms: hint,
        }
    }

    pub fn with_images(mut self, images: impl IntoIterator<Item = ImageRef>) -> Self {
        self.images = images.into_iter().collect();
        self
    }

    pub fn with_context(mut self, ctx: &ContextId) -> Self {
        self.context_id = ctx.clone();
        self
    }

    /// Canonical hash of kind, prompt and image digests. Fixture files are
    /// keyed by this value; context and latency hints are deliberately left
    /// out so fixtures survive session restarts.
    pub fn fixture_key(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.kind.as_str().as_bytes());
        hasher.update([0u8]);
        hasher.update(self.prompt.as_bytes());
        for image in &self.images {
            hasher.update([0u8]);
            hasher.update(image.as_str().as_bytes());
        }
        images::hex(&hasher.finalize())
    }

    fn check(&self) -> Result<()> {
        if self.prompt.trim().is_empty() {
            return Err(GatewayError::Argument("prompt is empty".into()));
        }
        if self.kind == RequestKind::Embed && !self.images.is_empty() {
            return Err(GatewayError::Argument("embed requests carry no images".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chunks: Vec<String>,
    #[serde(default)]
    pub cancelled: bool,
}

/// Image bytes resolved from the store, in request order.
pub type ImageBytes = Arc<[u8]>;

/// What a concrete model service has to provide. The gateway layers
/// validation, retries, normalization and cancellation on top.
pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;

    fn complete(&self, req: &ModelRequest, images: &[ImageBytes]) -> Result<String>;

    /// Produce chunks in order; stop as soon as `on_chunk` breaks.
    fn stream(
        &self,
        req: &ModelRequest,
        images: &[ImageBytes],
        on_chunk: &mut dyn FnMut(String) -> ControlFlow<()>,
    ) -> Result<()>;

    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_delay: Duration::ZERO,
        }
    }
}

#[derive(Debug)]
pub struct SinkError(pub String);

struct StreamSlot {
    generation: u64,
    cancelled: Arc<AtomicBool>,
}

/// Backend selector used by configuration and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    #[default]
    Mock,
    Scripted,
}

impl std::str::FromStr for BackendKind {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(BackendKind::Live),
            "mock" => Ok(BackendKind::Mock),
            "scripted" => Ok(BackendKind::Scripted),
            other => Err(GatewayError::Argument(format!("unknown backend {other:?}"))),
        }
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    images: ImageStore,
    retry: RetryPolicy,
    streams: Mutex<HashMap<ContextId, StreamSlot>>,
    next_generation: AtomicU64,
    embed_dims: OnceLock<usize>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.name())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Gateway {
            backend,
            images: ImageStore::in_memory(),
            retry: RetryPolicy::default(),
            streams: Mutex::new(HashMap::new()),
            next_generation: AtomicU64::new(1),
            embed_dims: OnceLock::new(),
        }
    }

    pub fn with_images(mut self, images: ImageStore) -> Self {
        self.images = images;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn images(&self) -> &ImageStore {
        &self.images
    }

    /// Builds a gateway from `MODEL_BACKEND`, `MODEL_BASE_URL`,
    /// `MODEL_API_KEY`, `MODEL_FIXTURES`, `MODEL_MOCK_STRICT` and
    /// `MODEL_SCRIPT`. `responder` serves unfixtured mock requests.
    pub fn from_env(kind: Option<BackendKind>, responder: Option<Arc<dyn Responder>>) -> Result<Self> {
        let kind = match kind {
            Some(k) => k,
            None => match std::env::var("MODEL_BACKEND") {
                Ok(v) => v.parse()?,
                Err(_) => BackendKind::Mock,
            },
        };
        let backend: Arc<dyn Backend> = match kind {
            BackendKind::Live => Arc::new(LiveBackend::new(LiveConfig::from_env()?)),
            BackendKind::Mock => {
                let fixtures = match std::env::var_os("MODEL_FIXTURES") {
                    Some(path) => Fixtures::load(&PathBuf::from(path))?,
                    None => Fixtures::default(),
                };
                let strict = std::env::var("MODEL_MOCK_STRICT")
                    .map(|v| v == "1" || v.eq_ignore_ascii_case("true"))
                    .unwrap_or(false);
                let mut mock = MockBackend::new(fixtures).strict(strict);
                if let Some(r) = responder {
                    mock = mock.with_responder(r);
                }
                Arc::new(mock)
            }
            BackendKind::Scripted => match std::env::var_os("MODEL_SCRIPT") {
                Some(path) => Arc::new(ScriptedBackend::load(&PathBuf::from(path))?),
                None => Arc::new(ScriptedBackend::default()),
            },
        };
        Ok(Gateway::new(backend))
    }

    fn resolve(&self, req: &ModelRequest) -> Result<Vec<ImageBytes>> {
        req.images
            .iter()
            .map(|r| {
                self.images
                    .get(r)
                    .ok_or_else(|| GatewayError::MissingImage(r.to_string()))
            })
            .collect()
    }

    /// Batch completion. Timeouts are retried with exponential backoff.
    pub fn complete(&self, req: &ModelRequest) -> Result<ModelResponse> {
        if req.kind != RequestKind::Batch {
            return Err(GatewayError::Argument("complete() needs a batch request".into()));
        }
        req.check()?;
        let images = self.resolve(req)?;
        let mut attempt = 0;
        loop {
            match self.backend.complete(req, &images) {
                Ok(text) => {
                    return Ok(ModelResponse {
                        text,
                        ..Default::default()
                    })
                }
                Err(e) if e.is_retriable() && attempt < self.retry.max_retries => {
                    let delay = self.retry.base_delay * 2u32.pow(attempt);
                    tracing::warn!(attempt, ?delay, "batch call timed out, retrying");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Convenience wrapper for the common prompt+images batch call.
    pub fn complete_text(&self, prompt: impl Into<String>, images: &[ImageRef], ctx: &ContextId) -> Result<String> {
        let req = ModelRequest::batch(prompt)
            .with_images(images.iter().cloned())
            .with_context(ctx);
        self.complete(&req).map(|r| r.text)
    }

    /// Streaming generation. Chunks reach `sink` in order. A [`cancel`] on the
    /// same context (from any thread) or starting another stream under it
    /// stops delivery before the next chunk. Streams are never retried.
    ///
    /// [`cancel`]: Gateway::cancel
    pub fn stream(
        &self,
        req: &ModelRequest,
        sink: &mut dyn FnMut(&str) -> std::result::Result<(), SinkError>,
    ) -> Result<ModelResponse> {
        if req.kind != RequestKind::Stream {
            return Err(GatewayError::Argument("stream() needs a stream request".into()));
        }
        req.check()?;
        let images = self.resolve(req)?;
        let flag = Arc::new(AtomicBool::new(false));
        let generation = self.next_generation.fetch_add(1, Ordering::Relaxed);
        {
            let mut streams = self.streams.lock().expect("stream registry poisoned");
            let previous = streams.insert(
                req.context_id.clone(),
                StreamSlot {
                    generation,
                    cancelled: flag.clone(),
                },
            );
            if let Some(old) = previous {
                old.cancelled.store(true, Ordering::SeqCst);
            }
        }

        let mut chunks = Vec::new();
        let mut cancelled = false;
        let outcome = self.backend.stream(req, &images, &mut |chunk| {
            if flag.load(Ordering::SeqCst) {
                cancelled = true;
                return ControlFlow::Break(());
            }
            if let Err(SinkError(msg)) = sink(&chunk) {
                tracing::warn!(%msg, "stream sink failed, aborting");
                cancelled = true;
                return ControlFlow::Break(());
            }
            chunks.push(chunk);
            ControlFlow::Continue(())
        });
        if flag.load(Ordering::SeqCst) {
            cancelled = true;
        }
        {
            let mut streams = self.streams.lock().expect("stream registry poisoned");
            if streams.get(&req.context_id).is_some_and(|s| s.generation == generation) {
                streams.remove(&req.context_id);
            }
        }
        outcome?;
        Ok(ModelResponse {
            text: chunks.concat(),
            vector: Vec::new(),
            chunks,
            cancelled,
        })
    }

    /// Stops any in-flight stream under `ctx`. Unknown ids are a no-op.
    pub fn cancel(&self, ctx: &ContextId) {
        let streams = self.streams.lock().expect("stream registry poisoned");
        if let Some(slot) = streams.get(ctx) {
            slot.cancelled.store(true, Ordering::SeqCst);
        }
    }

    pub fn has_active_stream(&self, ctx: &ContextId) -> bool {
        self.streams.lock().expect("stream registry poisoned").contains_key(ctx)
    }

    /// Unit-normalized text embedding.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(GatewayError::Argument("cannot embed empty text".into()));
        }
        let raw = self.backend.embed(text)?;
        let v = normalize(raw)?;
        let dims = *self.embed_dims.get_or_init(|| v.len());
        if v.len() != dims {
            return Err(GatewayError::Decode(format!(
                "embedding has {} dimensions, backend produced {dims} before",
                v.len()
            )));
        }
        Ok(v)
    }

    /// Short factual caption for a stored image.
    pub fn caption(&self, image: &ImageRef) -> Result<String> {
        let req = ModelRequest::batch(CAPTION_PROMPT).with_images([image.clone()]);
        let text = self.complete(&req)?.text;
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(GatewayError::Decode("empty caption".into()));
        }
        Ok(text)
    }

    /// Image embedding realized as caption-then-embed, so every backend
    /// shares one text vector space.
    pub fn embed_image(&self, image: &ImageRef) -> Result<Vec<f64>> {
        let caption = self.caption(image)?;
        self.embed(&caption)
    }
}

pub const CAPTION_PROMPT: &str = "Describe this image in one factual sentence. Mention the objects, \
ingredients and tools that are visible and their state. Do not describe people's appearance.";

fn normalize(v: Vec<f64>) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(GatewayError::Decode("empty embedding".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(GatewayError::Decode("embedding has zero or non-finite norm".into()));
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
}

/// Cosine similarity; zero when either side has no length.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strict_mock(fixtures: Fixtures) -> Gateway {
        Gateway::new(Arc::new(MockBackend::new(fixtures).strict(true))).with_retry(RetryPolicy::immediate())
    }

    #[test]
    fn fixtured_batch_is_returned_verbatim() {
        let req = ModelRequest::batch("Is the bacon done?");
        let mut fx = Fixtures::default();
        fx.insert(&req, FixtureValue::Text("complete".into()));
        let gw = strict_mock(fx);
        assert_eq!(gw.complete(&req).unwrap().text, "complete");
    }

    #[test]
    fn unfixtured_request_under_strict_mock_is_a_decode_error() {
        let gw = strict_mock(Fixtures::default());
        let err = gw.complete(&ModelRequest::batch("anything")).unwrap_err();
        assert!(matches!(err, GatewayError::Decode(_)), "{err:?}");
    }

    #[test]
    fn empty_prompt_is_rejected() {
        let gw = strict_mock(Fixtures::default());
        assert!(matches!(
            gw.complete(&ModelRequest::batch("  ")),
            Err(GatewayError::Argument(_))
        ));
    }

    #[test]
    fn fixture_key_depends_on_images_not_context() {
        let a = ModelRequest::batch("p");
        let b = ModelRequest::batch("p").with_context(&ContextId::new("x"));
        let c = ModelRequest::batch("p").with_images([ImageRef::of(b"frame")]);
        assert_eq!(a.fixture_key(), b.fixture_key());
        assert_ne!(a.fixture_key(), c.fixture_key());
        assert_ne!(a.fixture_key(), ModelRequest::stream("p").fixture_key());
    }

    #[test]
    fn stream_concatenates_chunks() {
        let gw = Gateway::new(Arc::new(ScriptedBackend::default().with_streams([vec![
            "a".to_string(),
            "b".into(),
            "c".into(),
        ]])));
        let mut seen = Vec::new();
        let resp = gw
            .stream(&ModelRequest::stream("go"), &mut |c| {
                seen.push(c.to_string());
                Ok(())
            })
            .unwrap();
        assert_eq!(resp.text, "abc");
        assert_eq!(seen, ["a", "b", "c"]);
        assert!(!resp.cancelled);
    }

    #[test]
    fn cancel_after_first_chunk_stops_delivery() {
        let gw = Gateway::new(Arc::new(ScriptedBackend::default().with_streams([vec![
            "a".to_string(),
            "b".into(),
            "c".into(),
        ]])));
        let ctx = ContextId::new("s1");
        let req = ModelRequest::stream("go").with_context(&ctx);
        let mut seen = Vec::new();
        let resp = gw
            .stream(&req, &mut |c| {
                seen.push(c.to_string());
                gw.cancel(&ctx);
                Ok(())
            })
            .unwrap();
        assert_eq!(seen, ["a"]);
        assert_eq!(resp.chunks, ["a"]);
        assert!(resp.cancelled);
    }

    #[test]
    fn empty_script_streams_nothing() {
        let gw = Gateway::new(Arc::new(
            ScriptedBackend::default().with_streams([Vec::<String>::new()]),
        ));
        let resp = gw.stream(&ModelRequest::stream("go"), &mut |_| Ok(())).unwrap();
        assert_eq!(resp.text, "");
        assert!(resp.chunks.is_empty());
        assert!(!resp.cancelled);
    }

    #[test]
    fn sink_failure_aborts_with_cancelled() {
        let gw = Gateway::new(Arc::new(
            ScriptedBackend::default().with_streams([vec!["a".to_string(), "b".into()]]),
        ));
        let resp = gw
            .stream(&ModelRequest::stream("go"), &mut |_| Err(SinkError("closed".into())))
            .unwrap();
        assert!(resp.cancelled);
        assert!(resp.chunks.is_empty());
    }

    #[test]
    fn cancel_is_idempotent_and_harmless_without_a_stream() {
        let gw = Gateway::new(Arc::new(
            ScriptedBackend::default().with_streams([vec!["x".to_string(), "y".into()]]),
        ));
        let ctx = ContextId::new("c");
        gw.cancel(&ctx);
        gw.cancel(&ctx);
        assert!(!gw.has_active_stream(&ctx));
        let resp = gw
            .stream(&ModelRequest::stream("go").with_context(&ctx), &mut |_| Ok(()))
            .unwrap();
        assert_eq!(resp.text, "xy");
        assert!(!resp.cancelled);
    }

    #[test]
    fn cancel_from_another_thread_is_bounded_by_one_chunk() {
        let gw = Arc::new(Gateway::new(Arc::new(
            ScriptedBackend::default()
                .with_streams([(0..50).map(|i| i.to_string()).collect::<Vec<_>>()])
                .with_chunk_delay(Duration::from_millis(5)),
        )));
        let ctx = ContextId::new("bg");
        let (tx, rx) = std::sync::mpsc::channel::<()>();
        let worker = {
            let gw = gw.clone();
            let ctx = ctx.clone();
            std::thread::spawn(move || {
                let mut delivered_after_cancel = 0usize;
                let mut cancel_seen = false;
                let resp = gw
                    .stream(&ModelRequest::stream("go").with_context(&ctx), &mut |_| {
                        if cancel_seen {
                            delivered_after_cancel += 1;
                        }
                        if rx.try_recv().is_ok() {
                            cancel_seen = true;
                        }
                        Ok(())
                    })
                    .unwrap();
                (resp, delivered_after_cancel)
            })
        };
        std::thread::sleep(Duration::from_millis(30));
        gw.cancel(&ctx);
        tx.send(()).unwrap();
        let (resp, after) = worker.join().unwrap();
        assert!(resp.cancelled);
        assert!(resp.chunks.len() < 50);
        assert!(after <= 1, "{after} chunks after cancel");
    }

    #[test]
    fn new_stream_on_same_context_cancels_old() {
        let backend = Arc::new(
            ScriptedBackend::default()
                .with_streams([
                    (0..40).map(|i| i.to_string()).collect::<Vec<_>>(),
                    vec!["new".to_string()],
                ])
                .with_chunk_delay(Duration::from_millis(5)),
        );
        let gw = Arc::new(Gateway::new(backend));
        let ctx = ContextId::new("one");
        let first = {
            let gw = gw.clone();
            let ctx = ctx.clone();
            std::thread::spawn(move || {
                gw.stream(&ModelRequest::stream("a").with_context(&ctx), &mut |_| Ok(()))
                    .unwrap()
            })
        };
        std::thread::sleep(Duration::from_millis(25));
        let second = gw
            .stream(&ModelRequest::stream("b").with_context(&ctx), &mut |_| Ok(()))
            .unwrap();
        let first = first.join().unwrap();
        assert!(first.cancelled);
        assert_eq!(second.text, "new");
    }

    #[test]
    fn timeouts_are_retried_twice() {
        let backend = Arc::new(ScriptedBackend::default().with_batch([
            ScriptedReply::Timeout,
            ScriptedReply::Timeout,
            ScriptedReply::text("ok"),
        ]));
        let gw = Gateway::new(backend.clone()).with_retry(RetryPolicy::immediate());
        assert_eq!(gw.complete(&ModelRequest::batch("x")).unwrap().text, "ok");

        let backend = Arc::new(ScriptedBackend::default().with_batch([
            ScriptedReply::Timeout,
            ScriptedReply::Timeout,
            ScriptedReply::Timeout,
            ScriptedReply::text("late"),
        ]));
        let gw = Gateway::new(backend).with_retry(RetryPolicy::immediate());
        assert!(matches!(
            gw.complete(&ModelRequest::batch("x")),
            Err(GatewayError::Timeout(_))
        ));
    }

    #[test]
    fn embeddings_are_normalized() {
        let req = ModelRequest::embed("three four");
        let mut fx = Fixtures::default();
        fx.insert(&req, FixtureValue::Vector(vec![3.0, 4.0]));
        let gw = strict_mock(fx);
        let v = gw.embed("three four").unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12);
        assert!((v[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn embedding_is_deterministic_and_rejects_empty() {
        let gw = strict_mock(Fixtures::default());
        let a = gw.embed("salt").unwrap();
        let b = gw.embed("salt").unwrap();
        assert_eq!(a, b);
        assert!(matches!(gw.embed(""), Err(GatewayError::Argument(_))));
    }

    #[test]
    fn embedding_dimension_is_fixed_per_gateway() {
        let mut fx = Fixtures::default();
        fx.insert(&ModelRequest::embed("short"), FixtureValue::Vector(vec![1.0, 0.0]));
        let gw = strict_mock(fx);
        gw.embed("anything").unwrap();
        assert!(matches!(gw.embed("short"), Err(GatewayError::Decode(_))));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 0.0], &[0.6, 0.8]) - 0.6).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[0.3, 0.4], &[0.3, 0.4]) - 1.0).abs() < 1e-12);
    }
}
