//! Scripted mock: replays ordered batch replies and stream scripts, and
//! records every request it sees. Used by scheduler and routing tests.

use std::collections::VecDeque;
use std::ops::ControlFlow;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::mock::bag_of_words;
use super::{Backend, GatewayError, ImageBytes, ModelRequest, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedReply {
    Text(String),
    Fault { error: ScriptedFault },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedFault {
    Timeout,
    Backend,
}

impl ScriptedReply {
    #[allow(non_upper_case_globals)]
    pub const Timeout: ScriptedReply = ScriptedReply::Fault {
        error: ScriptedFault::Timeout,
    };

    pub fn text(t: impl Into<String>) -> Self {
        ScriptedReply::Text(t.into())
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ScriptFile {
    #[serde(default)]
    batch: Vec<ScriptedReply>,
    #[serde(default)]
    stream: Vec<Vec<String>>,
}

#[derive(Default)]
pub struct ScriptedBackend {
    batch: Mutex<VecDeque<ScriptedReply>>,
    streams: Mutex<VecDeque<Vec<String>>>,
    calls: Mutex<Vec<ModelRequest>>,
    chunk_delay: Duration,
}

impl ScriptedBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Backend(format!("script {}: {e}", path.display())))?;
        let file: ScriptFile =
            serde_json::from_str(&raw).map_err(|e| GatewayError::Decode(format!("script {}: {e}", path.display())))?;
        Ok(ScriptedBackend::default()
            .with_batch(file.batch)
            .with_streams(file.stream))
    }

    pub fn with_batch(self, replies: impl IntoIterator<Item = ScriptedReply>) -> Self {
        self.batch.lock().unwrap().extend(replies);
        self
    }

    pub fn with_streams(self, scripts: impl IntoIterator<Item = Vec<String>>) -> Self {
        self.streams.lock().unwrap().extend(scripts);
        self
    }

    /// Sleep between stream chunks, for cancellation tests.
    pub fn with_chunk_delay(mut self, delay: Duration) -> Self {
        self.chunk_delay = delay;
        self
    }

    pub fn push_batch(&self, reply: ScriptedReply) {
        self.batch.lock().unwrap().push_back(reply);
    }

    pub fn push_stream(&self, script: Vec<String>) {
        self.streams.lock().unwrap().push_back(script);
    }

    /// Requests received so far, in order (batch and stream).
    pub fn calls(&self) -> Vec<ModelRequest> {
        self.calls.lock().unwrap().clone()
    }

    fn record(&self, req: &ModelRequest) {
        self.calls.lock().unwrap().push(req.clone());
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn complete(&self, req: &ModelRequest, _images: &[ImageBytes]) -> Result<String> {
        self.record(req);
        match self.batch.lock().unwrap().pop_front() {
            Some(ScriptedReply::Text(t)) => Ok(t),
            Some(ScriptedReply::Fault {
                error: ScriptedFault::Timeout,
            }) => Err(GatewayError::Timeout(req.max_latency_hint_ms)),
            Some(ScriptedReply::Fault {
                error: ScriptedFault::Backend,
            }) => Err(GatewayError::Backend("scripted failure".into())),
            None => Err(GatewayError::Decode("batch script exhausted".into())),
        }
    }

    fn stream(
        &self,
        req: &ModelRequest,
        _images: &[ImageBytes],
        on_chunk: &mut dyn FnMut(String) -> ControlFlow<()>,
    ) -> Result<()> {
        self.record(req);
        let script = self
            .streams
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| GatewayError::Decode("stream script exhausted".into()))?;
        for chunk in script {
            if !self.chunk_delay.is_zero() {
                std::thread::sleep(self.chunk_delay);
            }
            if on_chunk(chunk).is_break() {
                break;
            }
        }
        Ok(())
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        Ok(bag_of_words(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_file_parses_text_and_faults() {
        let file: ScriptFile =
            serde_json::from_str(r#"{"batch": ["one", {"error": "timeout"}], "stream": [["a", "b"]]}"#).unwrap();
        assert_eq!(file.batch[0], ScriptedReply::text("one"));
        assert_eq!(file.batch[1], ScriptedReply::Timeout);
        assert_eq!(file.stream, vec![vec!["a".to_string(), "b".into()]]);
    }

    #[test]
    fn records_calls_in_order() {
        let b = ScriptedBackend::default().with_batch([ScriptedReply::text("x")]);
        b.complete(&ModelRequest::batch("first"), &[]).unwrap();
        assert!(b.complete(&ModelRequest::batch("second"), &[]).is_err());
        let prompts: Vec<_> = b.calls().into_iter().map(|r| r.prompt).collect();
        assert_eq!(prompts, ["first", "second"]);
    }
}
