//! Fixture-driven mock backend.
//!
//! Fixture files are JSON maps from [`ModelRequest::fixture_key`] to a reply:
//! a string (batch or stream text), an array of numbers (embedding), or
//! `{"chunks": [...]}` (exact stream chunking). In strict mode an unfixtured
//! batch or stream request is a decode error; otherwise it falls through to
//! an optional [`Responder`]. Unfixtured embeddings always use the
//! deterministic bag-of-words embedder.

use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Backend, GatewayError, ImageBytes, ModelRequest, Result};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureValue {
    Text(String),
    Vector(Vec<f64>),
    Chunks { chunks: Vec<String> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fixtures(BTreeMap<String, FixtureValue>);

impl Fixtures {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Backend(format!("fixture file {}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| GatewayError::Decode(format!("fixture file {}: {e}", path.display())))
    }

    pub fn insert(&mut self, req: &ModelRequest, value: FixtureValue) {
        self.0.insert(req.fixture_key(), value);
    }

    pub fn insert_key(&mut self, key: impl Into<String>, value: FixtureValue) {
        self.0.insert(key.into(), value);
    }

    pub fn get(&self, req: &ModelRequest) -> Option<&FixtureValue> {
        self.0.get(&req.fixture_key())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fallback for unfixtured mock requests. Returns `None` when the prompt is
/// not one it understands.
pub trait Responder: Send + Sync {
    fn respond(&self, req: &ModelRequest, images: &[ImageBytes]) -> Option<String>;
}

impl<F> Responder for F
where
    F: Fn(&ModelRequest, &[ImageBytes]) -> Option<String> + Send + Sync,
{
    fn respond(&self, req: &ModelRequest, images: &[ImageBytes]) -> Option<String> {
        self(req, images)
    }
}

pub struct MockBackend {
    fixtures: Fixtures,
    strict: bool,
    responder: Option<Arc<dyn Responder>>,
}

impl MockBackend {
    pub fn new(fixtures: Fixtures) -> Self {
        MockBackend {
            fixtures,
            strict: false,
            responder: None,
        }
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn with_responder(mut self, responder: Arc<dyn Responder>) -> Self {
        self.responder = Some(responder);
        self
    }

    fn reply(&self, req: &ModelRequest, images: &[ImageBytes]) -> Result<Vec<String>> {
        match self.fixtures.get(req) {
            Some(FixtureValue::Text(t)) => return Ok(split_words(t)),
            Some(FixtureValue::Chunks { chunks }) => return Ok(chunks.clone()),
            Some(FixtureValue::Vector(_)) => {
                return Err(GatewayError::Decode("fixture holds a vector, expected text".into()))
            }
            None => {}
        }
        let miss = || GatewayError::Decode(format!("no fixture for request {}", req.fixture_key()));
        if self.strict {
            return Err(miss());
        }
        self.responder
            .as_ref()
            .and_then(|r| r.respond(req, images))
            .map(|t| split_words(&t))
            .ok_or_else(miss)
    }
}

/// Splits text into word chunks whose concatenation is the original text.
fn split_words(text: &str) -> Vec<String> {
    text.split_inclusive(' ').map(str::to_string).collect()
}

impl Backend for MockBackend {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn complete(&self, req: &ModelRequest, images: &[ImageBytes]) -> Result<String> {
        self.reply(req, images).map(|c| c.concat())
    }

    fn stream(
        &self,
        req: &ModelRequest,
        images: &[ImageBytes],
        on_chunk: &mut dyn FnMut(String) -> ControlFlow<()>,
    ) -> Result<()> {
        for chunk in self.reply(req, images)? {
            if on_chunk(chunk).is_break() {
                break;
            }
        }
        Ok(())
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        match self.fixtures.get(&ModelRequest::embed(text)) {
            Some(FixtureValue::Vector(v)) => Ok(v.clone()),
            Some(_) => Err(GatewayError::Decode("embedding fixture is not a vector".into())),
            None => Ok(bag_of_words(text)),
        }
    }
}

pub const BOW_DIMS: usize = 1024;

/// Signed feature-hashing embedding over content words. Identical texts
/// give identical vectors; texts sharing words have positive cosine.
pub fn bag_of_words(input: &str) -> Vec<f64> {
    let mut tokens: Vec<String> = text::content_words(input).into_iter().collect();
    if tokens.is_empty() {
        tokens = text::words(input);
    }
    if tokens.is_empty() {
        tokens = vec![input.trim().to_string()];
    }
    let mut v = vec![0.0; BOW_DIMS];
    for tok in tokens {
        let h = text::fnv1a(tok.as_bytes());
        let idx = (h % BOW_DIMS as u64) as usize;
        let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        v[idx] += sign;
    }
    if v.iter().all(|x| *x == 0.0) {
        // colliding tokens cancelled out
        v[0] = 1.0;
    }
    v
}
