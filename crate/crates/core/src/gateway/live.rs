//! HTTP backend for OpenAI-compatible chat-completions and embeddings
//! endpoints. Streaming reads server-sent events.

use std::io::{BufRead, BufReader};
use std::ops::ControlFlow;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{Backend, GatewayError, ImageBytes, ModelRequest, Result};

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: String,
    pub chat_model: String,
    pub embed_model: String,
}

impl LiveConfig {
    pub fn from_env() -> Result<Self> {
        let base_url =
            std::env::var("MODEL_BASE_URL").map_err(|_| GatewayError::Argument("MODEL_BASE_URL is not set".into()))?;
        let api_key = std::env::var("MODEL_API_KEY").unwrap_or_default();
        Ok(LiveConfig {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            chat_model: std::env::var("MODEL_NAME").unwrap_or_else(|_| "gpt-4o".into()),
            embed_model: std::env::var("MODEL_EMBED_NAME").unwrap_or_else(|_| "text-embedding-3-small".into()),
        })
    }
}

pub struct LiveBackend {
    config: LiveConfig,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        LiveBackend { config }
    }

    fn post(&self, path: &str, body: &Value, timeout_ms: u64) -> Result<ureq::Response> {
        let url = format!("{}/{}", self.config.base_url, path);
        let mut req = ureq::post(&url).timeout(Duration::from_millis(timeout_ms.max(1)));
        if !self.config.api_key.is_empty() {
            req = req.set("Authorization", &format!("Bearer {}", self.config.api_key));
        }
        req.send_json(body.clone()).map_err(|e| map_error(e, timeout_ms))
    }

    fn chat_body(&self, req: &ModelRequest, images: &[ImageBytes], stream: bool) -> Value {
        let mut content = vec![json!({"type": "text", "text": req.prompt})];
        for bytes in images {
            let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
            let url = format!("data:{};base64,{b64}", sniff_mime(bytes));
            content.push(json!({"type": "image_url", "image_url": {"url": url}}));
        }
        json!({
            "model": self.config.chat_model,
            "messages": [{"role": "user", "content": content}],
            "stream": stream,
        })
    }
}

fn map_error(e: ureq::Error, timeout_ms: u64) -> GatewayError {
    match e {
        ureq::Error::Status(code, resp) => {
            let body = resp.into_string().unwrap_or_default();
            if code == 408 || code == 504 {
                GatewayError::Timeout(timeout_ms)
            } else {
                GatewayError::Backend(format!("HTTP {code}: {}", body.chars().take(300).collect::<String>()))
            }
        }
        ureq::Error::Transport(t) => {
            let msg = t.to_string();
            if msg.to_ascii_lowercase().contains("timed out") {
                GatewayError::Timeout(timeout_ms)
            } else {
                GatewayError::Backend(msg)
            }
        }
    }
}

fn sniff_mime(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG") {
        "image/png"
    } else if bytes.starts_with(b"GIF8") {
        "image/gif"
    } else if bytes.len() > 12 && &bytes[8..12] == b"WEBP" {
        "image/webp"
    } else {
        "image/jpeg"
    }
}

fn message_text(v: &Value) -> Option<String> {
    v.pointer("/choices/0/message/content")?.as_str().map(str::to_string)
}

fn delta_text(v: &Value) -> Option<String> {
    v.pointer("/choices/0/delta/content")?.as_str().map(str::to_string)
}

impl Backend for LiveBackend {
    fn name(&self) -> &'static str {
        "live"
    }

    fn complete(&self, req: &ModelRequest, images: &[ImageBytes]) -> Result<String> {
        let resp = self.post(
            "chat/completions",
            &self.chat_body(req, images, false),
            req.max_latency_hint_ms,
        )?;
        let v: Value = resp.into_json().map_err(|e| GatewayError::Decode(e.to_string()))?;
        message_text(&v).ok_or_else(|| GatewayError::Decode("response has no message content".into()))
    }

    fn stream(
        &self,
        req: &ModelRequest,
        images: &[ImageBytes],
        on_chunk: &mut dyn FnMut(String) -> ControlFlow<()>,
    ) -> Result<()> {
        let resp = self.post(
            "chat/completions",
            &self.chat_body(req, images, true),
            req.max_latency_hint_ms.max(30_000),
        )?;
        let reader = BufReader::new(resp.into_reader());
        for line in reader.lines() {
            let line = line.map_err(|e| GatewayError::Backend(e.to_string()))?;
            let Some(data) = line.strip_prefix("data:") else {
                continue;
            };
            let data = data.trim();
            if data == "[DONE]" {
                break;
            }
            let v: Value = serde_json::from_str(data).map_err(|e| GatewayError::Decode(e.to_string()))?;
            if let Some(chunk) = delta_text(&v) {
                if !chunk.is_empty() && on_chunk(chunk).is_break() {
                    break;
                }
            }
        }
        Ok(())
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let body = json!({"model": self.config.embed_model, "input": text});
        let v: Value = self
            .post("embeddings", &body, 10_000)?
            .into_json()
            .map_err(|e| GatewayError::Decode(e.to_string()))?;
        let arr = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Decode("response has no embedding".into()))?;
        arr.iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| GatewayError::Decode("non-numeric embedding".into()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_chat_and_delta_payloads() {
        let full = json!({"choices": [{"message": {"content": "OK"}}]});
        assert_eq!(message_text(&full).as_deref(), Some("OK"));
        let delta = json!({"choices": [{"delta": {"content": "O"}}]});
        assert_eq!(delta_text(&delta).as_deref(), Some("O"));
        assert_eq!(delta_text(&json!({"choices": [{"delta": {}}]})), None);
    }

    #[test]
    fn mime_sniffing() {
        assert_eq!(sniff_mime(b"\x89PNG\r\n"), "image/png");
        assert_eq!(sniff_mime(&[0xff, 0xd8, 0xff]), "image/jpeg");
    }

    /// Smoke test against a configured live endpoint; skipped otherwise.
    #[test]
    fn live_smoke_reply_ok() {
        let Ok(config) = LiveConfig::from_env() else {
            eprintln!("MODEL_BASE_URL unset; skipping live smoke test");
            return;
        };
        if std::env::var("MODEL_BACKEND").as_deref() != Ok("live") {
            eprintln!("MODEL_BACKEND != live; skipping live smoke test");
            return;
        }
        let backend = LiveBackend::new(config);
        let text = backend
            .complete(&ModelRequest::batch("Reply with the word OK"), &[])
            .unwrap();
        assert!(text.contains("OK"), "{text}");
    }
}
