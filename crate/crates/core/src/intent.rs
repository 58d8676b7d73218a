//! Utterance intent classification.

use serde::{Deserialize, Serialize};

use crate::gateway::{ContextId, Gateway, GatewayError};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentType {
    Navigation,
    TipsWorkarounds,
    ProgressFeedback,
    VisualQa,
    NonvisualKnowledge,
}

impl IntentType {
    pub const ALL: [IntentType; 5] = [
        IntentType::Navigation,
        IntentType::TipsWorkarounds,
        IntentType::ProgressFeedback,
        IntentType::VisualQa,
        IntentType::NonvisualKnowledge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentType::Navigation => "navigation",
            IntentType::TipsWorkarounds => "tips_workarounds",
            IntentType::ProgressFeedback => "progress_feedback",
            IntentType::VisualQa => "visual_qa",
            IntentType::NonvisualKnowledge => "nonvisual_knowledge",
        }
    }
}

/// Fixed voice commands recognized without a model call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalCommand {
    Next,
    Back,
    Repeat,
    NarrationOn,
    NarrationOff,
    Yes,
    No,
}

const LEXICON: &[(&str, CanonicalCommand)] = &[
    ("next", CanonicalCommand::Next),
    ("next step", CanonicalCommand::Next),
    ("next one", CanonicalCommand::Next),
    ("go to the next step", CanonicalCommand::Next),
    ("skip", CanonicalCommand::Next),
    ("skip this", CanonicalCommand::Next),
    ("skip this step", CanonicalCommand::Next),
    ("back", CanonicalCommand::Back),
    ("go back", CanonicalCommand::Back),
    ("go back a step", CanonicalCommand::Back),
    ("previous", CanonicalCommand::Back),
    ("previous step", CanonicalCommand::Back),
    ("go to the previous step", CanonicalCommand::Back),
    ("repeat", CanonicalCommand::Repeat),
    ("repeat that", CanonicalCommand::Repeat),
    ("repeat the step", CanonicalCommand::Repeat),
    ("say that again", CanonicalCommand::Repeat),
    ("say it again", CanonicalCommand::Repeat),
    ("again", CanonicalCommand::Repeat),
    ("narration on", CanonicalCommand::NarrationOn),
    ("turn on narration", CanonicalCommand::NarrationOn),
    ("turn narration on", CanonicalCommand::NarrationOn),
    ("start narration", CanonicalCommand::NarrationOn),
    ("start narrating", CanonicalCommand::NarrationOn),
    ("narration off", CanonicalCommand::NarrationOff),
    ("turn off narration", CanonicalCommand::NarrationOff),
    ("turn narration off", CanonicalCommand::NarrationOff),
    ("stop narration", CanonicalCommand::NarrationOff),
    ("stop narrating", CanonicalCommand::NarrationOff),
    ("be quiet", CanonicalCommand::NarrationOff),
];

/// Accepted as confirmation only while a completion prompt is pending.
const YES: &[&str] = &[
    "yes",
    "yeah",
    "yep",
    "yup",
    "sure",
    "ok",
    "okay",
    "done",
    "i'm done",
    "it's done",
    "move on",
    "let's move on",
    "go ahead",
    "yes please",
    "sounds good",
];
const NO: &[&str] = &["no", "nope", "not yet", "wait", "hold on", "no thanks", "not done"];

const FILLERS: &[&str] = &["please", "hey", "um", "uh", "coach", "now"];

fn strip_fillers(norm: &str) -> String {
    let kept: Vec<&str> = norm
        .split(' ')
        .filter(|w| !w.is_empty() && !FILLERS.contains(w))
        .collect();
    if kept.is_empty() {
        norm.to_string()
    } else {
        kept.join(" ")
    }
}

/// Rule pre-pass over the fixed lexicon. Bare yes/no style answers only
/// count while `awaiting_confirmation`.
pub fn rule_prepass(utterance: &str, awaiting_confirmation: bool) -> Option<CanonicalCommand> {
    let norm = strip_fillers(&text::normalize(utterance));
    if awaiting_confirmation {
        if YES.contains(&norm.as_str()) {
            return Some(CanonicalCommand::Yes);
        }
        if NO.contains(&norm.as_str()) {
            return Some(CanonicalCommand::No);
        }
    }
    let norm = norm
        .strip_prefix("okay ")
        .or_else(|| norm.strip_prefix("ok "))
        .unwrap_or(&norm);
    LEXICON.iter().find(|(p, _)| *p == norm).map(|(_, c)| *c)
}

/// Loose mapping of a navigation utterance that missed the lexicon.
pub fn navigation_command(utterance: &str) -> Option<CanonicalCommand> {
    let words = text::words(utterance);
    let has = |w: &str| words.iter().any(|x| x == w);
    if has("back") || has("previous") {
        Some(CanonicalCommand::Back)
    } else if has("repeat") || has("again") {
        Some(CanonicalCommand::Repeat)
    } else if has("next") || has("skip") || (has("move") && has("on")) {
        Some(CanonicalCommand::Next)
    } else {
        None
    }
}

pub const INTENT_PROMPT_HEAD: &str = "Classify what the user of a live task assistant wants, from one thing they said.";

pub fn intent_prompt(utterance: &str, state_summary: &str) -> String {
    format!(
        r#"{INTENT_PROMPT_HEAD}
Intent types:
- navigation: move between steps or hear an instruction again.
- tips_workarounds: ask for an easier, safer or more accessible way to do the current action.
- progress_feedback: ask whether the current action looks finished or how it is going.
- visual_qa: ask about something in view right now.
- nonvisual_knowledge: general knowledge that does not need the camera.
People ask both directly and indirectly.

Examples:
"take me to the step after this" -> navigation
"what was that last bit" -> navigation
"is there a trick to doing this without measuring cups" -> tips_workarounds
"I keep making a mess with this" -> tips_workarounds
"how is it looking" -> progress_feedback
"I'm not sure I've stirred enough" -> progress_feedback
"what does this label say" -> visual_qa
"I can't find the red one in front of me" -> visual_qa
"how long does bread usually keep" -> nonvisual_knowledge
"how many grams are in an ounce" -> nonvisual_knowledge

Current state:
```json
{}
```
Utterance: {:?}
Answer with the intent type only."#,
        state_summary,
        utterance.trim()
    )
}

pub fn parse_intent(reply: &str) -> Option<IntentType> {
    let norm = text::normalize(reply).replace(' ', "_");
    if let Some(t) = IntentType::ALL.iter().find(|t| t.as_str() == norm) {
        return Some(*t);
    }
    IntentType::ALL.iter().find(|t| norm.contains(t.as_str())).copied()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub intent: IntentType,
    pub command: Option<CanonicalCommand>,
}

/// Rule pre-pass first; otherwise one batch call. Labels outside the set
/// fall back to `nonvisual_knowledge`.
pub fn classify_intent(
    gateway: &Gateway,
    utterance: &str,
    state_summary: &str,
    awaiting_confirmation: bool,
    ctx: &ContextId,
) -> Result<Classification, GatewayError> {
    if utterance.trim().is_empty() {
        return Err(GatewayError::Argument("empty utterance".into()));
    }
    if let Some(command) = rule_prepass(utterance, awaiting_confirmation) {
        return Ok(Classification {
            intent: IntentType::Navigation,
            command: Some(command),
        });
    }
    let reply = gateway.complete_text(intent_prompt(utterance, state_summary), &[], ctx)?;
    let intent = parse_intent(&reply).unwrap_or_else(|| {
        tracing::warn!(%utterance, %reply, "intent outside the set, using nonvisual_knowledge");
        IntentType::NonvisualKnowledge
    });
    let command = if intent == IntentType::Navigation {
        navigation_command(utterance)
    } else {
        None
    };
    Ok(Classification { intent, command })
}
