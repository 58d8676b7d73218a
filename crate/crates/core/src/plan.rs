//! The compiled instructional artifact, serialized as `coachplan/1` JSON.
//!
//! Field order in these structs is the wire order; do not reorder.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PLAN_VERSION: &str = "coachplan/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionType {
    Punctual,
    Iterative,
    Durative,
}

impl ActionType {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Punctual => "punctual",
            ActionType::Iterative => "iterative",
            ActionType::Durative => "durative",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label
            .trim()
            .trim_matches(|c: char| !c.is_alphabetic())
            .to_ascii_lowercase()
            .as_str()
        {
            "punctual" => Some(ActionType::Punctual),
            "iterative" => Some(ActionType::Iterative),
            "durative" => Some(ActionType::Durative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoachPlan {
    pub version: String,
    pub video: VideoInfo,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoInfo {
    pub title: String,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub step_name: String,
    pub start: f64,
    pub end: f64,
    pub tools: Vec<String>,
    pub materials: Vec<String>,
    pub new_tools: Vec<String>,
    pub new_materials: Vec<String>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub instruction: String,
    pub supplementary: Vec<String>,
    pub demonstration_description: String,
    pub action_type: ActionType,
    pub in_progress_criteria: Vec<String>,
    pub completion_criteria: Vec<String>,
    pub mistake_criteria: Vec<String>,
    pub nonvisual_completion_criteria: Vec<String>,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("cannot read plan {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("plan JSON does not match coachplan/1: {0}")]
    Schema(String),
    #[error("plan is invalid: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

impl CoachPlan {
    pub fn new(video: VideoInfo, steps: Vec<Step>) -> Self {
        CoachPlan {
            version: PLAN_VERSION.to_string(),
            video,
            steps,
        }
    }

    pub fn from_json(raw: &str) -> Result<Self, PlanError> {
        serde_json::from_str(raw).map_err(|e| PlanError::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PlanError> {
        let raw = std::fs::read_to_string(path).map_err(|source| PlanError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&raw)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialization cannot fail")
    }

    pub fn action(&self, step: usize, action: usize) -> Option<&Action> {
        self.steps.get(step)?.actions.get(action)
    }

    pub fn action_count(&self) -> usize {
        self.steps.iter().map(|s| s.actions.len()).sum()
    }

    /// Every structural rule a session relies on. Returns all violations.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.version != PLAN_VERSION {
            out.push(format!("version is {:?}, expected {PLAN_VERSION:?}", self.version));
        }
        if self.steps.is_empty() {
            out.push("plan has no steps".into());
        }
        let mut prev_end: Option<f64> = None;
        for (si, step) in self.steps.iter().enumerate() {
            let at = |msg: String| format!("step {si} ({:?}): {msg}", step.step_name);
            if step.step_name.trim().is_empty() {
                out.push(at("empty step_name".into()));
            }
            if step.actions.is_empty() {
                out.push(at("no actions".into()));
            }
            if step.start > step.end {
                out.push(at(format!("start {} after end {}", step.start, step.end)));
            }
            if let Some(pe) = prev_end {
                if step.start < pe - 1e-9 {
                    out.push(at(format!(
                        "starts at {} before previous step ends at {pe}",
                        step.start
                    )));
                }
            }
            prev_end = Some(step.end);
            if let (Some(first), Some(last)) = (step.actions.first(), step.actions.last()) {
                if (first.start - step.start).abs() > 1e-9 || (last.end - step.end).abs() > 1e-9 {
                    out.push(at("span does not match its first/last action".into()));
                }
            }
            subset(&step.new_tools, &step.tools, "new_tools", "tools", &mut out, &at);
            subset(
                &step.new_materials,
                &step.materials,
                "new_materials",
                "materials",
                &mut out,
                &at,
            );
            let mut prev_start = f64::NEG_INFINITY;
            for (ai, action) in step.actions.iter().enumerate() {
                let at = |msg: &str| format!("step {si} action {ai}: {msg}");
                if action.instruction.trim().is_empty() {
                    out.push(at("empty instruction"));
                }
                if action.start > action.end {
                    out.push(at("start after end"));
                }
                if action.start < prev_start {
                    out.push(at("actions not ordered by start"));
                }
                prev_start = action.start;
                if action.completion_criteria.is_empty() {
                    out.push(at("no completion criteria"));
                }
                if action.action_type == ActionType::Punctual && !action.in_progress_criteria.is_empty() {
                    out.push(at("punctual action carries in-progress criteria"));
                }
                let done: HashSet<&str> = action.completion_criteria.iter().map(String::as_str).collect();
                if action.in_progress_criteria.iter().any(|c| done.contains(c.as_str())) {
                    out.push(at("in-progress and completion criteria overlap"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(PlanError::Invalid(v))
        }
    }
}

fn subset(
    part: &[String],
    whole: &[String],
    part_name: &str,
    whole_name: &str,
    out: &mut Vec<String>,
    at: &dyn Fn(String) -> String,
) {
    let whole: HashSet<String> = whole.iter().map(|s| s.to_lowercase()).collect();
    for item in part {
        if !whole.contains(&item.to_lowercase()) {
            out.push(at(format!("{part_name} entry {item:?} missing from {whole_name}")));
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn action(instruction: &str, ty: ActionType, start: f64, end: f64) -> Action {
        Action {
            instruction: instruction.into(),
            supplementary: vec![],
            demonstration_description: format!("The cook shows how to {}", instruction.to_lowercase()),
            action_type: ty,
            in_progress_criteria: if ty == ActionType::Punctual {
                vec![]
            } else {
                vec![format!("{instruction} is under way.")]
            },
            completion_criteria: vec![format!("{instruction} is finished.")],
            mistake_criteria: vec!["Something spills.".into()],
            nonvisual_completion_criteria: vec![],
            start,
            end,
        }
    }

    pub fn step(name: &str, actions: Vec<Action>) -> Step {
        Step {
            step_name: name.into(),
            start: actions.first().map_or(0.0, |a| a.start),
            end: actions.last().map_or(0.0, |a| a.end),
            tools: vec![],
            materials: vec![],
            new_tools: vec![],
            new_materials: vec![],
            actions,
        }
    }

    pub fn three_step_plan() -> CoachPlan {
        CoachPlan::new(
            VideoInfo {
                title: "Cookies".into(),
                duration_s: 120.0,
            },
            vec![
                step(
                    "Mix",
                    vec![
                        action("Put 1 cup of flour into the bowl.", ActionType::Punctual, 0.0, 5.0),
                        action("Add 3 eggs into the mixture.", ActionType::Iterative, 5.0, 10.0),
                    ],
                ),
                step(
                    "Whisk",
                    vec![action(
                        "Whisk the mixture until it is smooth.",
                        ActionType::Durative,
                        10.0,
                        30.0,
                    )],
                ),
                step(
                    "Bake",
                    vec![action("Bake for 10 minutes.", ActionType::Durative, 30.0, 60.0)],
                ),
            ],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn sample_plan_is_valid_and_round_trips() {
        let plan = three_step_plan();
        plan.validate().unwrap();
        let back = CoachPlan::from_json(&plan.to_json_pretty()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn wire_field_order_is_fixed() {
        let json = serde_json::to_string(&three_step_plan()).unwrap();
        let order = ["\"version\"", "\"video\"", "\"steps\""];
        let pos: Vec<_> = order.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let action_keys = [
            "\"instruction\"",
            "\"supplementary\"",
            "\"demonstration_description\"",
            "\"action_type\"",
            "\"in_progress_criteria\"",
            "\"completion_criteria\"",
            "\"mistake_criteria\"",
            "\"nonvisual_completion_criteria\"",
        ];
        let pos: Vec<_> = action_keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(json.contains("\"action_type\":\"punctual\""));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = serde_json::to_value(three_step_plan()).unwrap();
        v["steps"][0]["extra"] = serde_json::json!(1);
        assert!(matches!(
            CoachPlan::from_json(&v.to_string()),
            Err(PlanError::Schema(_))
        ));
    }

    #[test]
    fn violations_are_reported() {
        let mut plan = three_step_plan();
        plan.steps[0].actions[0].in_progress_criteria.push("pouring".into());
        plan.steps[1].new_tools.push("Whisk".into());
        plan.steps[2].actions[0].completion_criteria.clear();
        let v = plan.violations();
        assert_eq!(v.len(), 3, "{v:?}");

        let empty = CoachPlan::new(plan.video.clone(), vec![]);
        assert!(empty.validate().is_err());
    }
}
