//! Session wire messages and the events they carry.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Instruction,
    DemonstrationDetail,
    ProgressUpdate,
    CompletionPrompt,
    MistakeAlert,
    Suggestion,
    Answer,
    ReframeRequest,
    Error,
    /// Boundary clamps, session completion and other notices.
    Info,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Instruction => "instruction",
            EventKind::DemonstrationDetail => "demonstration_detail",
            EventKind::ProgressUpdate => "progress_update",
            EventKind::CompletionPrompt => "completion_prompt",
            EventKind::MistakeAlert => "mistake_alert",
            EventKind::Suggestion => "suggestion",
            EventKind::Answer => "answer",
            EventKind::ReframeRequest => "reframe_request",
            EventKind::Error => "error",
            EventKind::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub kind: EventKind,
    pub text: String,
    pub step_index: usize,
    pub action_index: usize,
    #[serde(rename = "ts")]
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub step_index: usize,
    pub action_index: usize,
    pub narration_enabled: bool,
    pub awaiting_confirmation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Event(SessionEvent),
    State(StateSnapshot),
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Next,
    Back,
    Repeat,
    Yes,
    No,
    NarrationOn,
    NarrationOff,
    /// Voice activity began; in-flight generation is cancelled.
    SpeechStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Frame { ts: f64, image_b64: String },
    Utterance { text: String, ts: f64 },
    Command { name: CommandName, ts: f64 },
}

impl ClientMessage {
    pub fn ts(&self) -> f64 {
        match self {
            ClientMessage::Frame { ts, .. }
            | ClientMessage::Utterance { ts, .. }
            | ClientMessage::Command { ts, .. } => *ts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        let m = ServerMessage::Event(SessionEvent {
            kind: EventKind::CompletionPrompt,
            text: "Done? Would you like to move on?".into(),
            step_index: 1,
            action_index: 0,
            timestamp: 5.0,
        });
        assert_eq!(
            m.to_json(),
            r#"{"type":"event","kind":"completion_prompt","text":"Done? Would you like to move on?","step_index":1,"action_index":0,"ts":5.0}"#
        );
        let s = ServerMessage::State(StateSnapshot {
            step_index: 0,
            action_index: 2,
            narration_enabled: true,
            awaiting_confirmation: false,
        });
        assert_eq!(
            s.to_json(),
            r#"{"type":"state","step_index":0,"action_index":2,"narration_enabled":true,"awaiting_confirmation":false}"#
        );
    }

    #[test]
    fn client_messages_parse() {
        let c: ClientMessage = serde_json::from_str(r#"{"type":"command","name":"narration_off","ts":3}"#).unwrap();
        assert_eq!(
            c,
            ClientMessage::Command {
                name: CommandName::NarrationOff,
                ts: 3.0
            }
        );
        let u: ClientMessage = serde_json::from_str(r#"{"type":"utterance","text":"go back","ts":1.5}"#).unwrap();
        assert_eq!(u.ts(), 1.5);
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"command","name":"jump","ts":0}"#).is_err());
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"frame","ts":0}"#).is_err());
    }
}
