//! Deterministic session replay from a timestamped fixture.
//!
//! A fixture is either a JSON array of entries, an object
//! `{"ticks": bool, "until_s": f64, "entries": [...]}`, or JSONL of client
//! wire messages. Entries look like `{"at_s": 12.0, "type": "utterance",
//! "payload": "is it done"}` where `type` is `frame`, `utterance`, `verdict`
//! or `command`. Frame payloads are a caption string (used as the frame's
//! bytes), `{"image_b64": ...}` or `{"path": ...}` relative to the fixture.
//! Verdict entries are applied directly without a model call.
//!
//! Entries at time t are applied before the batch tick due at t.

use std::path::{Path, PathBuf};

use base64::Engine;
use serde::Deserialize;
use thiserror::Error;

use super::{ClientMessage, CommandName, MonitorVerdict, ServerMessage, Session, SimClock};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("replay entry {index}: {message}")]
    Entry { index: usize, message: String },
    #[error("replay fixture is not valid: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntryKind {
    Frame(Vec<u8>),
    Utterance(String),
    Verdict(MonitorVerdict),
    Command(CommandName),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayEntry {
    pub at_s: f64,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub ticks: bool,
    pub until_s: Option<f64>,
    pub entries: Vec<ReplayEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    at_s: f64,
    #[serde(rename = "type")]
    kind: String,
    payload: serde_json::Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Wrapper {
    #[serde(default = "yes")]
    ticks: bool,
    #[serde(default)]
    until_s: Option<f64>,
    entries: Vec<RawEntry>,
}

fn yes() -> bool {
    true
}

fn decode_b64(s: &str) -> Result<Vec<u8>, String> {
    base64::engine::general_purpose::STANDARD
        .decode(s.trim())
        .map_err(|e| format!("bad base64 frame: {e}"))
}

fn convert(index: usize, raw: RawEntry, base: &Path) -> Result<ReplayEntry, ReplayError> {
    let err = |message: String| ReplayError::Entry { index, message };
    if !raw.at_s.is_finite() || raw.at_s < 0.0 {
        return Err(err(format!("at_s must be a non-negative number, got {}", raw.at_s)));
    }
    let kind = match raw.kind.as_str() {
        "frame" => match &raw.payload {
            serde_json::Value::String(caption) => EntryKind::Frame(caption.as_bytes().to_vec()),
            serde_json::Value::Object(o) => {
                if let Some(b) = o.get("image_b64").and_then(|v| v.as_str()) {
                    EntryKind::Frame(decode_b64(b).map_err(err)?)
                } else if let Some(p) = o.get("path").and_then(|v| v.as_str()) {
                    let path: PathBuf = base.join(p);
                    let bytes = std::fs::read(&path).map_err(|source| ReplayError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    EntryKind::Frame(bytes)
                } else if let Some(c) = o.get("caption").and_then(|v| v.as_str()) {
                    EntryKind::Frame(c.as_bytes().to_vec())
                } else {
                    return Err(err("frame payload needs caption, image_b64 or path".into()));
                }
            }
            _ => return Err(err("frame payload must be a string or object".into())),
        },
        "utterance" => match &raw.payload {
            serde_json::Value::String(t) => EntryKind::Utterance(t.clone()),
            serde_json::Value::Object(o) => match o.get("text").and_then(|v| v.as_str()) {
                Some(t) => EntryKind::Utterance(t.to_string()),
                None => return Err(err("utterance payload needs text".into())),
            },
            _ => return Err(err("utterance payload must be a string".into())),
        },
        "verdict" => {
            EntryKind::Verdict(serde_json::from_value(raw.payload).map_err(|e| err(format!("bad verdict: {e}")))?)
        }
        "command" => {
            let name = match &raw.payload {
                serde_json::Value::Object(o) => o.get("name").cloned().unwrap_or_default(),
                v => v.clone(),
            };
            EntryKind::Command(serde_json::from_value(name).map_err(|e| err(format!("bad command: {e}")))?)
        }
        other => return Err(err(format!("unknown entry type {other:?}"))),
    };
    Ok(ReplayEntry { at_s: raw.at_s, kind })
}

fn from_client(msg: ClientMessage) -> Result<ReplayEntry, String> {
    let at_s = msg.ts();
    let kind = match msg {
        ClientMessage::Frame { image_b64, .. } => EntryKind::Frame(decode_b64(&image_b64)?),
        ClientMessage::Utterance { text, .. } => EntryKind::Utterance(text),
        ClientMessage::Command { name, .. } => EntryKind::Command(name),
    };
    Ok(ReplayEntry { at_s, kind })
}

impl Replay {
    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ReplayError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&raw, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(raw: &str, base: &Path) -> Result<Self, ReplayError> {
        let trimmed = raw.trim_start();
        let mut replay = if trimmed.starts_with('[') {
            let entries: Vec<RawEntry> = serde_json::from_str(raw).map_err(|e| ReplayError::Format(e.to_string()))?;
            Replay {
                ticks: true,
                until_s: None,
                entries: entries
                    .into_iter()
                    .enumerate()
                    .map(|(i, e)| convert(i, e, base))
                    .collect::<Result<_, _>>()?,
            }
        } else if let Ok(w) = serde_json::from_str::<Wrapper>(raw) {
            Replay {
                ticks: w.ticks,
                until_s: w.until_s,
                entries: w
                    .entries
                    .into_iter()
                    .enumerate()
                    .map(|(i, e)| convert(i, e, base))
                    .collect::<Result<_, _>>()?,
            }
        } else {
            let mut entries = Vec::new();
            for (i, line) in raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let msg: ClientMessage = serde_json::from_str(line).map_err(|e| ReplayError::Entry {
                    index: i,
                    message: e.to_string(),
                })?;
                entries.push(from_client(msg).map_err(|message| ReplayError::Entry { index: i, message })?);
            }
            Replay {
                ticks: true,
                until_s: None,
                entries,
            }
        };
        replay.entries.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));
        Ok(replay)
    }

    pub fn end_s(&self) -> f64 {
        let last = self.entries.last().map_or(0.0, |e| e.at_s);
        self.until_s.unwrap_or(last).max(last)
    }
}

fn run_ticks_before(session: &mut Session, clock: &SimClock, t: f64, inclusive: bool) {
    loop {
        let next = session.next_tick_at();
        let due = if inclusive { next <= t + 1e-9 } else { next < t - 1e-9 };
        if !due {
            break;
        }
        clock.set(next);
        session.poll();
    }
}

/// Drives `session` (built on `clock`, inline mode) through the fixture and
/// returns every server message in order, starting with the session's
/// opening messages.
pub fn run(session: &mut Session, clock: &SimClock, replay: &Replay) -> Vec<ServerMessage> {
    let mut out = session.drain_messages();
    for entry in &replay.entries {
        if replay.ticks {
            run_ticks_before(session, clock, entry.at_s, false);
            out.extend(session.drain_messages());
        }
        clock.set(entry.at_s);
        match &entry.kind {
            EntryKind::Frame(bytes) => {
                session.ingest_frame_bytes(entry.at_s, bytes);
            }
            EntryKind::Utterance(t) => {
                session.handle_utterance(t);
            }
            EntryKind::Verdict(v) => {
                session.apply_verdict(v.clone());
            }
            EntryKind::Command(c) => {
                session.handle_command(*c);
            }
        }
        out.extend(session.drain_messages());
    }
    if replay.ticks {
        run_ticks_before(session, clock, replay.end_s(), true);
    }
    out.extend(session.drain_messages());
    out
}

pub fn to_jsonl(messages: &[ServerMessage]) -> String {
    messages.iter().map(|m| m.to_json() + "\n").collect()
}
