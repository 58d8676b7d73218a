//! Demonstration descriptions, action types and monitoring criteria.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::{DraftAction, DraftStep, RecipeMetadata};
use crate::gateway::{ContextId, Gateway, GatewayError, ImageRef};
use crate::plan::{Action, ActionType, Step};
use crate::text;

#[derive(Debug, Error)]
pub enum CriteriaError {
    #[error("a demonstration description needs at least one frame")]
    NoFrames,
    #[error("criteria for step {step:?} rejected after repair: {}", .errors.join("; "))]
    Schema { step: String, errors: Vec<String> },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub const DESCRIBE_PROMPT_HEAD: &str =
    "You are writing demonstration details for one action of a how-to video, for a blind or low-vision learner.";

#[derive(Serialize)]
struct DescribeInput<'a> {
    step_name: &'a str,
    instruction: &'a str,
    supplementary: &'a [String],
    narration: &'a [String],
}

pub fn describe_prompt(step_name: &str, action: &DraftAction, narration: &[String]) -> String {
    let input = DescribeInput {
        step_name,
        instruction: &action.instruction,
        supplementary: &action.supplementary,
        narration,
    };
    format!(
        r#"{DESCRIBE_PROMPT_HEAD}
The attached frames show the action being demonstrated. Narration and step context:
```json
{}
```
Answer these questions from the frames and the narration, as two to four plain sentences:
1. What is the demonstrated action?
2. Which ingredients are used, how do they look, and how much is being used?
3. Which tools are used, and how do they look?
4. How is the action performed?
5. Are there any tips for performing this action evident from the images?
Describe only the task. Leave out the presenter's appearance or clothing, the background, decorations and camera work."#,
        serde_json::to_string(&input).expect("describe input serializes")
    )
}

const LINT_TERMS: &[&str] = &[
    "presenter",
    "host",
    "chef's",
    "wearing",
    "shirt",
    "apron",
    "hair",
    "smiling",
    "smiles",
    "background",
    "backdrop",
    "decor",
    "decoration",
    "decorative",
    "camera",
    "shot",
    "angle",
    "zoom",
    "filmed",
    "kitchen is",
    "countertop decor",
];

/// Drops sentences that talk about the presenter, the set or the camera.
pub fn lint_description(description: &str) -> String {
    text::sentences(description)
        .into_iter()
        .filter(|s| {
            let lower = format!(" {} ", text::normalize(s));
            !LINT_TERMS.iter().any(|t| lower.contains(&format!(" {t} ")))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Five-question description over the kept frames. Backend failures leave
/// the description empty.
pub fn describe_demonstration(
    gateway: &Gateway,
    step_name: &str,
    action: &DraftAction,
    narration: &[String],
    frames: &[ImageRef],
) -> Result<String, CriteriaError> {
    if frames.is_empty() {
        return Err(CriteriaError::NoFrames);
    }
    let prompt = describe_prompt(step_name, action, narration);
    match gateway.complete_text(prompt, frames, &ContextId::new("compile-describe")) {
        Ok(reply) => Ok(lint_description(reply.trim())),
        Err(e) => {
            tracing::warn!(instruction = %action.instruction, error = %e, "description failed");
            Ok(String::new())
        }
    }
}

pub const ANNOTATE_PROMPT_HEAD: &str = "This is one step of a tutorial video:";

#[derive(Serialize)]
struct AnnotateAction<'a> {
    id: usize,
    instruction: &'a str,
    demonstration_description: &'a str,
    supplementary: &'a [String],
}

#[derive(Serialize)]
struct AnnotateStep<'a> {
    step_name: &'a str,
    tools: &'a [String],
    materials: &'a [String],
    actions: Vec<AnnotateAction<'a>>,
}

pub fn annotate_prompt(step: &DraftStep, descriptions: &[String], metadata: Option<&RecipeMetadata>) -> String {
    let input = AnnotateStep {
        step_name: &step.step_name,
        tools: &step.tools,
        materials: &step.materials,
        actions: step
            .actions
            .iter()
            .enumerate()
            .map(|(id, a)| AnnotateAction {
                id,
                instruction: &a.instruction,
                demonstration_description: descriptions.get(id).map_or("", String::as_str),
                supplementary: &a.supplementary,
            })
            .collect(),
    };
    let metadata = match metadata {
        Some(m) => serde_json::to_string(m).expect("metadata serializes"),
        None => "null".into(),
    };
    format!(
        r#"{ANNOTATE_PROMPT_HEAD}
```json
{}
```
Recipe metadata, to take precise amounts from when available:
```json
{metadata}
```
For each action choose one action_type:
- punctual: brief, happens at one moment ("Put 1 cup of flour").
- iterative: repetition or several quantities ("Add 2 rounded teaspoons").
- durative: extends over time with continuous motion ("Whisk the mixture").

Then list for each action:
- in_progress_criteria: visual signs the action is under way.
- completion_criteria: visual signs the action is finished.
- mistake_criteria: visual signs of likely errors.
- nonvisual_completion_criteria: optional sensory cues of completion such as touch, sound or smell ("feels crispy").

Rules:
- Punctual actions get no in_progress_criteria.
- completion_criteria come from the instruction itself ("until brown").
- No criterion may appear in both in_progress_criteria and completion_criteria.
- Use only the information given.

Output JSON of the form
{{"actions": [{{"id": int, "action_type": str, "in_progress_criteria": [str], "completion_criteria": [str], "mistake_criteria": [str], "nonvisual_completion_criteria": [str]}}]}}"#,
        serde_json::to_string(&input).expect("annotate input serializes")
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub action_type: ActionType,
    pub in_progress_criteria: Vec<String>,
    pub completion_criteria: Vec<String>,
    pub mistake_criteria: Vec<String>,
    pub nonvisual_completion_criteria: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawAnnotation {
    #[serde(default)]
    id: Option<usize>,
    #[serde(default, alias = "type")]
    action_type: String,
    #[serde(default)]
    in_progress_criteria: Vec<String>,
    #[serde(default)]
    completion_criteria: Vec<String>,
    #[serde(default)]
    mistake_criteria: Vec<String>,
    #[serde(default)]
    nonvisual_completion_criteria: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawAnnotations {
    actions: Vec<RawAnnotation>,
}

const DURATION_UNITS: &[&str] = &["second", "seconds", "minute", "minutes", "min", "mins", "hour", "hours"];
const REPETITION_WORDS: &[&str] = &["each", "every", "repeat", "times", "scoops", "another", "remaining"];

/// Keyword fallback for labels outside the three types.
pub fn heuristic_action_type(instruction: &str) -> ActionType {
    let words = text::words(instruction);
    let durative = words.iter().any(|w| w == "until")
        || words.windows(3).any(|w| {
            w[0] == "for"
                && (w[1].parse::<f64>().is_ok() || text::parse_count(&w[1]).is_some() || w[1] == "a")
                && DURATION_UNITS.contains(&w[2].as_str())
        });
    if durative {
        return ActionType::Durative;
    }
    let counted = text::parse_count(instruction).is_some_and(|n| n >= 2);
    if counted || words.iter().any(|w| REPETITION_WORDS.contains(&w.as_str())) {
        return ActionType::Iterative;
    }
    ActionType::Punctual
}

fn clean(items: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && seen.insert(s.clone()))
        .collect()
}

/// Validates one annotation reply for a step with `instructions`. Label and
/// rule slips are fixed in place; missing actions or completion criteria are
/// errors for the repair prompt.
pub fn parse_annotation(reply: &str, instructions: &[String]) -> Result<Vec<Annotation>, Vec<String>> {
    let json = text::extract_json(reply).ok_or_else(|| vec!["reply contains no JSON".to_string()])?;
    let raw: Vec<RawAnnotation> = match serde_json::from_str::<RawAnnotations>(json) {
        Ok(r) => r.actions,
        Err(e) => serde_json::from_str::<Vec<RawAnnotation>>(json)
            .map_err(|_| vec![format!("JSON does not match the schema: {e}")])?,
    };
    let mut slots: Vec<Option<RawAnnotation>> = instructions.iter().map(|_| None).collect();
    let mut errors = Vec::new();
    for (pos, a) in raw.into_iter().enumerate() {
        let id = a.id.unwrap_or(pos);
        match slots.get_mut(id) {
            Some(slot @ None) => *slot = Some(a),
            Some(Some(_)) => errors.push(format!("action {id} is annotated twice")),
            None => errors.push(format!("action id {id} does not exist")),
        }
    }
    let mut out = Vec::new();
    for (id, (slot, instruction)) in slots.into_iter().zip(instructions).enumerate() {
        let Some(a) = slot else {
            errors.push(format!("action {id} ({instruction:?}) is missing"));
            continue;
        };
        let action_type = ActionType::parse(&a.action_type).unwrap_or_else(|| {
            let t = heuristic_action_type(instruction);
            tracing::warn!(label = %a.action_type, %instruction, chosen = t.as_str(), "action type outside the set");
            t
        });
        let completion = clean(a.completion_criteria);
        if completion.is_empty() {
            errors.push(format!("action {id} ({instruction:?}) has no completion_criteria"));
            continue;
        }
        let mut in_progress = clean(a.in_progress_criteria);
        if action_type == ActionType::Punctual && !in_progress.is_empty() {
            tracing::warn!(%instruction, "dropping in-progress criteria from punctual action");
            in_progress.clear();
        }
        in_progress.retain(|c| !completion.contains(c));
        out.push(Annotation {
            action_type,
            in_progress_criteria: in_progress,
            completion_criteria: completion,
            mistake_criteria: clean(a.mistake_criteria),
            nonvisual_completion_criteria: clean(a.nonvisual_completion_criteria),
        });
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

/// Types and criteria for every action of a step from one structured prompt,
/// with one repair attempt.
pub fn annotate_step(
    gateway: &Gateway,
    step: &DraftStep,
    descriptions: &[String],
    metadata: Option<&RecipeMetadata>,
) -> Result<Step, CriteriaError> {
    let ctx = ContextId::new("compile-criteria");
    let instructions: Vec<String> = step.actions.iter().map(|a| a.instruction.clone()).collect();
    let prompt = annotate_prompt(step, descriptions, metadata);
    let reply = gateway.complete_text(prompt.clone(), &[], &ctx)?;
    let annotations = match parse_annotation(&reply, &instructions) {
        Ok(a) => a,
        Err(errors) => {
            tracing::warn!(step = %step.step_name, ?errors, "criteria rejected, asking for a repair");
            let repair = format!(
                "{prompt}\n\nYour previous answer was:\n{reply}\n\nIt was rejected for these reasons:\n- {}\nReturn corrected JSON only.",
                errors.join("\n- ")
            );
            let reply = gateway.complete_text(repair, &[], &ctx)?;
            parse_annotation(&reply, &instructions).map_err(|errors| CriteriaError::Schema {
                step: step.step_name.clone(),
                errors,
            })?
        }
    };
    let actions = step
        .actions
        .iter()
        .zip(annotations)
        .enumerate()
        .map(|(i, (a, ann))| Action {
            instruction: a.instruction.clone(),
            supplementary: a.supplementary.clone(),
            demonstration_description: descriptions.get(i).cloned().unwrap_or_default(),
            action_type: ann.action_type,
            in_progress_criteria: ann.in_progress_criteria,
            completion_criteria: ann.completion_criteria,
            mistake_criteria: ann.mistake_criteria,
            nonvisual_completion_criteria: ann.nonvisual_completion_criteria,
            start: a.start,
            end: a.end,
        })
        .collect();
    Ok(Step {
        step_name: step.step_name.clone(),
        start: step.start,
        end: step.end,
        tools: step.tools.clone(),
        materials: step.materials.clone(),
        new_tools: step.new_tools.clone(),
        new_materials: step.new_materials.clone(),
        actions,
    })
}

/// Whether every completion criterion shares a content word with the
/// instruction or the description.
pub fn is_grounded(action: &Action) -> bool {
    let mut vocab = text::content_words(&action.instruction);
    vocab.extend(text::content_words(&action.demonstration_description));
    action
        .completion_criteria
        .iter()
        .all(|c| !text::content_words(c).is_disjoint(&vocab))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{RetryPolicy, ScriptedBackend, ScriptedReply};

    fn instructions() -> Vec<String> {
        vec![
            "Put 1 cup of flour into the bowl.".into(),
            "Add 3 eggs into the mixture.".into(),
            "Whisk the mixture until it is smooth.".into(),
        ]
    }

    const TABLE_REPLY: &str = r#"{"actions": [
      {"id": 0, "type": "punctual", "completion_criteria": ["The flour is visible in the bowl."],
       "mistake_criteria": ["Flour spills outside the bowl."]},
      {"id": 1, "action_type": "iterative",
       "in_progress_criteria": ["One or two eggs are visible in the bowl, but not all three."],
       "completion_criteria": ["All three eggs are visible in the bowl."],
       "mistake_criteria": ["More than three eggs added", "Eggshell is visible."]},
      {"id": 2, "action_type": "durative",
       "in_progress_criteria": ["The whisk is moving through the mixture."],
       "completion_criteria": ["The mixture looks smooth and consistent."],
       "nonvisual_completion_criteria": ["Mixture feels smooth to the touch."],
       "mistake_criteria": ["Mixture is lumpy or too runny."]}
    ]}"#;

    #[test]
    fn parses_worked_example() {
        let a = parse_annotation(TABLE_REPLY, &instructions()).unwrap();
        let types: Vec<_> = a.iter().map(|a| a.action_type).collect();
        assert_eq!(
            types,
            [ActionType::Punctual, ActionType::Iterative, ActionType::Durative]
        );
        assert_eq!(
            a[2].nonvisual_completion_criteria,
            ["Mixture feels smooth to the touch."]
        );
    }

    #[test]
    fn rule_slips_are_fixed() {
        let reply = r#"[{"action_type": "Punctual", "in_progress_criteria": ["pouring"], "completion_criteria": ["done"]},
                        {"action_type": "repeated", "in_progress_criteria": ["x", "done"], "completion_criteria": ["done"]},
                        {"action_type": "durative", "in_progress_criteria": ["a", "a", " "], "completion_criteria": ["b"]}]"#;
        let a = parse_annotation(reply, &instructions()).unwrap();
        assert!(a[0].in_progress_criteria.is_empty());
        assert_eq!(a[1].action_type, ActionType::Iterative);
        assert_eq!(a[1].in_progress_criteria, ["x"]);
        assert_eq!(a[2].in_progress_criteria, ["a"]);
    }

    #[test]
    fn structural_errors_are_reported() {
        let reply = r#"{"actions": [{"id": 0, "action_type": "punctual", "completion_criteria": []},
                                     {"id": 7, "action_type": "punctual", "completion_criteria": ["x"]}]}"#;
        let err = parse_annotation(reply, &instructions()).unwrap_err();
        assert_eq!(err.len(), 4, "{err:?}");
    }

    #[test]
    fn keyword_heuristic() {
        assert_eq!(
            heuristic_action_type("Put 1 cup of flour into the bowl."),
            ActionType::Punctual
        );
        assert_eq!(
            heuristic_action_type("Add 3 eggs into the mixture."),
            ActionType::Iterative
        );
        assert_eq!(
            heuristic_action_type("Whisk the mixture until it is smooth."),
            ActionType::Durative
        );
        assert_eq!(
            heuristic_action_type("Let the dough rest for 30 minutes."),
            ActionType::Durative
        );
        assert_eq!(
            heuristic_action_type("Place three scoops of dough on the tray."),
            ActionType::Iterative
        );
        assert_eq!(heuristic_action_type("Add 1/2 cup sugar."), ActionType::Punctual);
    }

    #[test]
    fn description_lint() {
        let d =
            "The presenter is wearing a red apron. Flour is scooped into a 1-cup measure. The background has plants.";
        assert_eq!(lint_description(d), "Flour is scooped into a 1-cup measure.");
    }

    fn draft_step() -> DraftStep {
        let action = |s: &str, t: f64| DraftAction {
            instruction: s.into(),
            supplementary: vec![],
            start: t,
            end: t + 5.0,
            sources: vec![0],
        };
        DraftStep {
            step_name: "Mix".into(),
            tools: vec!["whisk".into(), "bowl".into()],
            materials: vec![],
            new_tools: vec![],
            new_materials: vec![],
            actions: instructions()
                .iter()
                .enumerate()
                .map(|(i, s)| action(s, i as f64 * 5.0))
                .collect(),
            start: 0.0,
            end: 15.0,
        }
    }

    #[test]
    fn annotate_repairs_once_then_fails() {
        let backend = Arc::new(
            ScriptedBackend::default().with_batch([ScriptedReply::text("{}"), ScriptedReply::text(TABLE_REPLY)]),
        );
        let gw = Gateway::new(backend.clone());
        let step = annotate_step(&gw, &draft_step(), &[], None).unwrap();
        assert_eq!(step.actions[1].in_progress_criteria.len(), 1);
        assert!(backend.calls()[1].prompt.contains("rejected"));

        let backend =
            Arc::new(ScriptedBackend::default().with_batch([ScriptedReply::text("{}"), ScriptedReply::text("[]")]));
        let gw = Gateway::new(backend).with_retry(RetryPolicy::immediate());
        match annotate_step(&gw, &draft_step(), &[], None) {
            Err(CriteriaError::Schema { step, .. }) => assert_eq!(step, "Mix"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn describe_needs_frames_and_survives_backend_failure() {
        let gw = Gateway::new(Arc::new(ScriptedBackend::default())).with_retry(RetryPolicy::immediate());
        let a = &draft_step().actions[0];
        assert!(matches!(
            describe_demonstration(&gw, "Mix", a, &[], &[]),
            Err(CriteriaError::NoFrames)
        ));
        let r = gw.images().put(b"f");
        assert_eq!(describe_demonstration(&gw, "Mix", a, &[], &[r]).unwrap(), "");
    }

    #[test]
    fn grounding_check() {
        let plan = crate::plan::fixtures::three_step_plan();
        assert!(plan.steps.iter().flat_map(|s| &s.actions).all(is_grounded));
        let mut a = plan.steps[0].actions[0].clone();
        a.completion_criteria = vec!["Everything is ready.".into()];
        assert!(!is_grounded(&a));
    }
}
