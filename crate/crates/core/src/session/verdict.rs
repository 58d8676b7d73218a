//! Batch monitoring verdicts.

use serde::{Deserialize, Serialize};

use crate::plan::{Action, ActionType};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Irrelevant,
    InProgress,
    Complete,
    Mistake,
}

impl Status {
    pub fn parse(label: &str) -> Option<Self> {
        let norm: String = label
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '-' || c == ' ' { '_' } else { c })
            .filter(|c| c.is_ascii_alphabetic() || *c == '_')
            .collect();
        match norm.trim_matches('_') {
            "irrelevant" => Some(Status::Irrelevant),
            "in_progress" | "inprogress" | "progress" => Some(Status::InProgress),
            "complete" | "completed" | "done" => Some(Status::Complete),
            "mistake" | "error" => Some(Status::Mistake),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Irrelevant => "irrelevant",
            Status::InProgress => "in_progress",
            Status::Complete => "complete",
            Status::Mistake => "mistake",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    pub status: Status,
    #[serde(default)]
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetition_count: Option<u32>,
    /// The mistake criterion a mistake verdict matched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<String>,
}

impl MonitorVerdict {
    pub fn irrelevant(rationale: &str) -> Self {
        MonitorVerdict {
            status: Status::Irrelevant,
            rationale: rationale.into(),
            repetition_count: None,
            criterion: None,
        }
    }
}

pub const MONITOR_PROMPT_HEAD: &str =
    "You are monitoring a person's progress on one action of a task from their first-person camera.";

#[derive(Serialize)]
struct MonitorInput<'a> {
    instruction: &'a str,
    action_type: &'static str,
    target_count: Option<u32>,
    in_progress_criteria: &'a [String],
    completion_criteria: &'a [String],
    mistake_criteria: &'a [String],
    previous_verdict: Option<&'a MonitorVerdict>,
}

pub fn monitor_prompt(action: &Action, previous: Option<&MonitorVerdict>) -> String {
    let input = MonitorInput {
        instruction: &action.instruction,
        action_type: action.action_type.as_str(),
        target_count: target_count(action),
        in_progress_criteria: &action.in_progress_criteria,
        completion_criteria: &action.completion_criteria,
        mistake_criteria: &action.mistake_criteria,
        previous_verdict: previous,
    };
    let type_note = match action.action_type {
        ActionType::Punctual => "This action is brief. Only decide whether it has been completed.",
        ActionType::Iterative => "Count the visible repetitions so far in repetition_count.",
        ActionType::Durative => "Describe how far the gradual change has progressed.",
    };
    format!(
        r#"{MONITOR_PROMPT_HEAD}
```json
{}
```
The attached frames are the most recent ones, oldest first. {type_note}
Choose one status:
- irrelevant: the frames show something unrelated to this action, or the work is out of view.
- in_progress: an in-progress criterion holds.
- complete: a completion criterion holds.
- mistake: a mistake criterion holds; name it in "criterion".
Base the rationale only on what the frames show, in one sentence.
Output JSON: {{"status": str, "rationale": str, "repetition_count": int or null, "criterion": str or null}}"#,
        serde_json::to_string(&input).expect("monitor input serializes")
    )
}

/// Repetitions an iterative action asks for, from its instruction.
pub fn target_count(action: &Action) -> Option<u32> {
    (action.action_type == ActionType::Iterative)
        .then(|| text::parse_count(&action.instruction))
        .flatten()
}

#[derive(Deserialize)]
struct RawVerdict {
    status: String,
    #[serde(default)]
    rationale: Option<String>,
    #[serde(default)]
    repetition_count: Option<serde_json::Value>,
    #[serde(default)]
    criterion: Option<String>,
}

/// Best-matching mistake criterion for a rationale; earliest on ties.
pub fn match_mistake(action: &Action, hint: Option<&str>, rationale: &str) -> Option<String> {
    if let Some(h) = hint {
        let h = text::normalize(h);
        if let Some(c) = action.mistake_criteria.iter().find(|c| text::normalize(c) == h) {
            return Some(c.clone());
        }
    }
    let probe = format!("{} {}", hint.unwrap_or(""), rationale);
    let mut best: Option<(&String, f64)> = None;
    for c in &action.mistake_criteria {
        let score = text::coverage(c, &probe);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((c, score));
        }
    }
    best.map(|(c, _)| c.clone())
}

/// Parses a monitor reply against the action it was asked about. Anything
/// unreadable becomes an irrelevant verdict with rationale "unparseable".
/// A mistake that names no criterion is tied to the closest one; an action
/// without mistake criteria cannot be in a mistake state.
pub fn parse_verdict(reply: &str, action: &Action) -> MonitorVerdict {
    let raw: Option<RawVerdict> = text::extract_json(reply).and_then(|j| serde_json::from_str(j).ok());
    let raw = match raw {
        Some(r) => r,
        None => match Status::parse(reply) {
            Some(status) => RawVerdict {
                status: status.as_str().into(),
                rationale: None,
                repetition_count: None,
                criterion: None,
            },
            None => return MonitorVerdict::irrelevant("unparseable"),
        },
    };
    let Some(status) = Status::parse(&raw.status) else {
        return MonitorVerdict::irrelevant("unparseable");
    };
    let rationale = raw.rationale.unwrap_or_default().trim().to_string();
    let repetition_count = raw.repetition_count.and_then(|v| match v {
        serde_json::Value::Number(n) => n.as_u64().map(|n| n as u32),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    });
    let mut verdict = MonitorVerdict {
        status,
        rationale,
        repetition_count: if action.action_type == ActionType::Iterative {
            repetition_count
        } else {
            None
        },
        criterion: None,
    };
    if status == Status::Mistake {
        match match_mistake(action, raw.criterion.as_deref(), &verdict.rationale) {
            Some(c) => verdict.criterion = Some(c),
            None => {
                tracing::warn!(instruction = %action.instruction, "mistake verdict without criteria, ignoring");
                return MonitorVerdict::irrelevant("mistake reported but the action has no mistake criteria");
            }
        }
    }
    verdict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::fixtures::action;

    #[test]
    fn parses_fixtured_verdict() {
        let a = action("Cook the bacon until golden brown.", ActionType::Durative, 0.0, 60.0);
        let v = parse_verdict(
            r#"{"status": "complete", "rationale": "bacon evenly golden brown"}"#,
            &a,
        );
        assert_eq!(v.status, Status::Complete);
        assert_eq!(v.rationale, "bacon evenly golden brown");
    }

    #[test]
    fn unparseable_is_irrelevant() {
        let a = action("Stir.", ActionType::Durative, 0.0, 1.0);
        for reply in ["", "I think maybe", r#"{"status": "great"}"#] {
            let v = parse_verdict(reply, &a);
            assert_eq!(v.status, Status::Irrelevant);
            assert_eq!(v.rationale, "unparseable");
        }
        assert_eq!(parse_verdict("In progress", &a).status, Status::InProgress);
    }

    #[test]
    fn mistakes_cite_a_criterion() {
        let mut a = action("Add 3 eggs into the mixture.", ActionType::Iterative, 0.0, 1.0);
        a.mistake_criteria = vec!["More than three eggs added".into(), "Eggshell is visible.".into()];
        let v = parse_verdict(
            r#"{"status":"mistake","rationale":"a piece of eggshell floats in the bowl"}"#,
            &a,
        );
        assert_eq!(v.criterion.as_deref(), Some("Eggshell is visible."));
        let v = parse_verdict(
            r#"{"status":"mistake","rationale":"x","criterion":"more than three eggs added"}"#,
            &a,
        );
        assert_eq!(v.criterion.as_deref(), Some("More than three eggs added"));
        a.mistake_criteria.clear();
        assert_eq!(parse_verdict(r#"{"status":"mistake"}"#, &a).status, Status::Irrelevant);
    }

    #[test]
    fn repetition_count_only_for_iterative() {
        let a = action("Add 3 eggs into the mixture.", ActionType::Iterative, 0.0, 1.0);
        let v = parse_verdict(
            r#"{"status":"in_progress","rationale":"two eggs","repetition_count":"2"}"#,
            &a,
        );
        assert_eq!(v.repetition_count, Some(2));
        assert_eq!(target_count(&a), Some(3));
        let b = action("Stir.", ActionType::Durative, 0.0, 1.0);
        let v = parse_verdict(r#"{"status":"in_progress","repetition_count":2}"#, &b);
        assert_eq!(v.repetition_count, None);
    }

    #[test]
    fn prompt_carries_criteria_and_previous_verdict() {
        let a = action("Add 3 eggs into the mixture.", ActionType::Iterative, 0.0, 1.0);
        let prev = MonitorVerdict::irrelevant("hands out of view");
        let p = monitor_prompt(&a, Some(&prev));
        let block: serde_json::Value = serde_json::from_str(text::fenced_json(&p, 0).unwrap()).unwrap();
        assert_eq!(block["target_count"], 3);
        assert_eq!(block["previous_verdict"]["rationale"], "hands out of view");
    }
}
