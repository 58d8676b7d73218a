//! Transcript → role-labelled sentences → Step/Action hierarchy.

mod hierarchy;
mod roles;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;

pub(crate) use hierarchy::is_action_verb;
pub use hierarchy::{
    build_hierarchy, hierarchy_prompt, parse_hierarchy, single_verb_rate, DraftAction, DraftStep, HIERARCHY_PROMPT_HEAD,
};
pub use roles::{classify_roles, parse_role, role_prompt, ROLE_PROMPT_HEAD};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("invalid transcript: {0}")]
    Transcript(String),
    #[error("transcript has no instructional content")]
    NoInstructionalContent,
    #[error("hierarchy output rejected after repair: {}", .0.join("; "))]
    Schema(Vec<String>),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptWord {
    pub text: String,
    pub start: f64,
    pub end: f64,
}

/// `{"words": [...]}` transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub words: Vec<TranscriptWord>,
}

impl Transcript {
    pub fn from_json(raw: &str) -> Result<Self, CompileError> {
        serde_json::from_str(raw).map_err(|e| CompileError::Transcript(e.to_string()))
    }
}

/// The eight information roles a transcript sentence can play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Greeting,
    Overview,
    Method,
    Supplementary,
    Explanation,
    Description,
    Conclusion,
    Miscellaneous,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::Greeting,
        Role::Overview,
        Role::Method,
        Role::Supplementary,
        Role::Explanation,
        Role::Description,
        Role::Conclusion,
        Role::Miscellaneous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Greeting => "Greeting",
            Role::Overview => "Overview",
            Role::Method => "Method",
            Role::Supplementary => "Supplementary",
            Role::Explanation => "Explanation",
            Role::Description => "Description",
            Role::Conclusion => "Conclusion",
            Role::Miscellaneous => "Miscellaneous",
        }
    }

    /// Roles dropped before hierarchy building.
    pub fn is_filtered(self) -> bool {
        matches!(self, Role::Greeting | Role::Conclusion | Role::Miscellaneous)
    }

    /// Non-method roles whose sentences are attached to actions as tips.
    pub fn is_supporting(self) -> bool {
        matches!(self, Role::Supplementary | Role::Explanation | Role::Description)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSentence {
    pub id: usize,
    pub text: String,
    pub start: f64,
    pub end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

fn ends_sentence(word: &str) -> bool {
    let trimmed = word.trim_end_matches(['"', '\'', ')', ']', '”', '’']);
    trimmed.ends_with(['.', '!', '?'])
}

/// Groups words into sentences at terminal punctuation. Spans come from the
/// first and last word of each sentence.
pub fn ingest_transcript(words: &[TranscriptWord]) -> Result<Vec<TranscriptSentence>, CompileError> {
    if words.is_empty() {
        return Err(CompileError::Transcript("no words".into()));
    }
    let mut prev_start = f64::NEG_INFINITY;
    for (i, w) in words.iter().enumerate() {
        if !(w.start >= 0.0 && w.start <= w.end) {
            return Err(CompileError::Transcript(format!(
                "word {i} ({:?}) has span [{}, {}]",
                w.text, w.start, w.end
            )));
        }
        if w.start < prev_start {
            return Err(CompileError::Transcript(format!(
                "word {i} ({:?}) starts before the previous word",
                w.text
            )));
        }
        prev_start = w.start;
    }

    let mut out = Vec::new();
    let mut current: Vec<&TranscriptWord> = Vec::new();
    let flush = |current: &mut Vec<&TranscriptWord>, out: &mut Vec<TranscriptSentence>| {
        let text = current
            .iter()
            .map(|w| w.text.trim())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        if let (Some(first), Some(last)) = (current.first(), current.last()) {
            if !text.is_empty() {
                out.push(TranscriptSentence {
                    id: out.len(),
                    text,
                    start: first.start,
                    end: last.end,
                    role: None,
                });
            }
        }
        current.clear();
    };
    for w in words {
        current.push(w);
        if ends_sentence(w.text.trim()) {
            flush(&mut current, &mut out);
        }
    }
    flush(&mut current, &mut out);
    Ok(out)
}

/// Drops greeting, conclusion and miscellaneous sentences; keeps order.
pub fn filter_sentences(sentences: &[TranscriptSentence]) -> Vec<TranscriptSentence> {
    sentences
        .iter()
        .filter(|s| !s.role.is_some_and(Role::is_filtered))
        .cloned()
        .collect()
}

/// Optional recipe metadata, injected into the hierarchy prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecipeMetadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub ingredients: Vec<String>,
    pub tools: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn words_of(text: &str, start: f64, step: f64) -> Vec<TranscriptWord> {
        text.split_whitespace()
            .enumerate()
            .map(|(i, w)| TranscriptWord {
                text: w.into(),
                start: start + i as f64 * step,
                end: start + i as f64 * step + step * 0.8,
            })
            .collect()
    }

    #[test]
    fn splits_on_terminal_punctuation() {
        let s = ingest_transcript(&words_of("Hi. Add flour.", 0.0, 1.0)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].text, "Hi.");
        assert_eq!((s[0].start, s[0].end), (0.0, 0.8));
        assert_eq!(s[1].text, "Add flour.");
        assert_eq!((s[1].start, s[1].end), (1.0, 2.8));
    }

    #[test]
    fn trailing_words_form_a_final_sentence() {
        let s = ingest_transcript(&words_of("Add flour. then mix it", 0.0, 1.0)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].text, "then mix it");
        assert_eq!((s[1].start, s[1].end), (2.0, 4.8));
    }

    #[test]
    fn quoted_terminators_still_split() {
        let s = ingest_transcript(&words_of("He said \"stop.\" Then go!", 0.0, 1.0)).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn empty_and_unordered_words_are_rejected() {
        assert!(matches!(ingest_transcript(&[]), Err(CompileError::Transcript(_))));
        let mut w = words_of("Add flour.", 0.0, 1.0);
        w.swap(0, 1);
        assert!(matches!(ingest_transcript(&w), Err(CompileError::Transcript(_))));
        let bad = vec![TranscriptWord {
            text: "x".into(),
            start: 2.0,
            end: 1.0,
        }];
        assert!(ingest_transcript(&bad).is_err());
    }

    fn labelled(roles: &[Role]) -> Vec<TranscriptSentence> {
        roles
            .iter()
            .enumerate()
            .map(|(i, r)| TranscriptSentence {
                id: i,
                text: format!("s{i}"),
                start: i as f64,
                end: i as f64 + 0.5,
                role: Some(*r),
            })
            .collect()
    }

    #[test]
    fn filter_keeps_instructional_roles_in_order() {
        let kept = filter_sentences(&labelled(&[Role::Greeting, Role::Method, Role::Conclusion]));
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].role, Some(Role::Method));
        assert_eq!(kept[0].start, 1.0);

        let kept = filter_sentences(&labelled(&[Role::Method, Role::Supplementary]));
        assert_eq!(kept.len(), 2);

        assert!(filter_sentences(&labelled(&[Role::Miscellaneous; 3])).is_empty());
    }
}
