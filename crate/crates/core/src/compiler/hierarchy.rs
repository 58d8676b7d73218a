//! Step/action hierarchy from role-labelled sentences.
//!
//! The model proposes steps, atomic actions and their source sentences. The
//! rest is deterministic: action spans come from their sources, spans are
//! tiled, new tools/materials are recomputed against the previous step and
//! supporting sentences are attached to the temporally nearest action.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{CompileError, RecipeMetadata, Role, TranscriptSentence};
use crate::gateway::{ContextId, Gateway};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftAction {
    pub instruction: String,
    pub supplementary: Vec<String>,
    pub start: f64,
    pub end: f64,
    /// Ids of the method sentences this action came from.
    pub sources: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftStep {
    pub step_name: String,
    pub tools: Vec<String>,
    pub materials: Vec<String>,
    pub new_tools: Vec<String>,
    pub new_materials: Vec<String>,
    pub actions: Vec<DraftAction>,
    pub start: f64,
    pub end: f64,
}

pub const HIERARCHY_PROMPT_HEAD: &str =
    "This is the transcript of a tutorial video, one JSON object per sentence with its information role and timestamps:";

#[derive(Serialize)]
struct PromptSentence<'a> {
    id: usize,
    role: &'static str,
    text: &'a str,
    start: f64,
    end: f64,
}

pub fn hierarchy_prompt(sentences: &[TranscriptSentence], metadata: Option<&RecipeMetadata>) -> String {
    let rows: Vec<PromptSentence> = sentences
        .iter()
        .map(|s| PromptSentence {
            id: s.id,
            role: s.role.map_or("Unknown", Role::as_str),
            text: &s.text,
            start: s.start,
            end: s.end,
        })
        .collect();
    let transcript = serde_json::to_string(&rows).expect("sentences serialize");
    let metadata = match metadata {
        Some(m) => serde_json::to_string(m).expect("metadata serializes"),
        None => "null".to_string(),
    };
    format!(
        r#"{HIERARCHY_PROMPT_HEAD}
```json
{transcript}
```
This is the metadata for this tutorial:
```json
{metadata}
```
When the transcript or the images disagree with the metadata, prefer the metadata.

Segment the tutorial into high-level steps and output JSON of the form
{{"steps": [{{"step_name": str, "actions": [{{"instruction": str, "supplementary": [str], "sources": [sentence id], "start": float, "end": float}}], "tools": [str], "materials": [str], "new_tools": [str], "new_materials": [str], "start": float, "end": float}}]}}

Build instructions from sentences with the Method role; use the other roles (tips, warnings, explanations) as supplementary notes.
Make every instruction specific and actionable, with measurements ("Add 1.5 cups of ...") and tools ("Mix using a spatula ...").

Rules:
- Each instruction is one clear sentence centered on a single verb.
- Split sentences that contain several actions ("Add sugar and whisk" becomes two actions).
- Split iterative actions over different materials ("Add salt, sugar, and vanilla extract" becomes three actions).
- Merge only when two instructions describe the same event.
- Actions split from one sentence share that sentence's timestamps; list the sentence id in "sources".
- A step may have no actions when it has no Method content.
- A step starts at its first action's start and ends at its last action's end; the next step starts where the previous one ends.
- tools and materials list everything used in the step; new_tools and new_materials list what the previous step did not use.
- Use only the information provided. Do not invent steps, tools or quantities."#
    )
}

#[derive(Debug, Deserialize)]
struct RawPlan {
    steps: Vec<RawStep>,
}

#[derive(Debug, Deserialize)]
struct RawStep {
    #[serde(default)]
    step_name: String,
    #[serde(default)]
    actions: Vec<RawAction>,
    #[serde(default)]
    tools: Vec<String>,
    #[serde(default)]
    materials: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawAction {
    #[serde(default)]
    instruction: String,
    #[serde(default)]
    supplementary: Vec<String>,
    #[serde(default)]
    sources: Option<Vec<usize>>,
    #[serde(default)]
    start: Option<f64>,
}

fn dedup_names(items: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && seen.insert(s.to_lowercase()))
        .collect()
}

/// Source sentence for an action that did not name one: a method sentence
/// starting at (or containing) the action's start time.
fn infer_source(start: f64, methods: &[&TranscriptSentence]) -> Option<usize> {
    methods
        .iter()
        .find(|s| (s.start - start).abs() < 0.5)
        .or_else(|| methods.iter().find(|s| s.start <= start && start <= s.end))
        .map(|s| s.id)
}

/// Validates a model reply against the retained sentences and turns it into
/// draft steps. Errors are phrased for the repair prompt.
pub fn parse_hierarchy(reply: &str, sentences: &[TranscriptSentence]) -> Result<Vec<DraftStep>, Vec<String>> {
    let json = text::extract_json(reply).ok_or_else(|| vec!["reply contains no JSON".to_string()])?;
    let raw: RawPlan = match serde_json::from_str::<RawPlan>(json) {
        Ok(p) => p,
        Err(e) => match serde_json::from_str::<Vec<RawStep>>(json) {
            Ok(steps) => RawPlan { steps },
            Err(_) => return Err(vec![format!("JSON does not match the schema: {e}")]),
        },
    };
    let methods: Vec<&TranscriptSentence> = sentences.iter().filter(|s| s.role == Some(Role::Method)).collect();
    let method_ids: HashSet<usize> = methods.iter().map(|s| s.id).collect();
    let by_id = |id: usize| sentences.iter().find(|s| s.id == id);

    let mut errors = Vec::new();
    let mut steps = Vec::new();
    let mut covered = BTreeSet::new();
    for (si, raw_step) in raw.steps.into_iter().enumerate() {
        if raw_step.step_name.trim().is_empty() {
            errors.push(format!("step {si} has no step_name"));
        }
        let mut actions = Vec::new();
        for (ai, a) in raw_step.actions.into_iter().enumerate() {
            let instruction = a.instruction.trim().to_string();
            if instruction.is_empty() {
                errors.push(format!("step {si} action {ai} has an empty instruction"));
                continue;
            }
            let sources = match a.sources.filter(|s| !s.is_empty()) {
                Some(s) => s,
                None => match a.start.and_then(|t| infer_source(t, &methods)) {
                    Some(id) => vec![id],
                    None => {
                        errors.push(format!(
                            "step {si} action {ai} ({instruction:?}) names no source sentence"
                        ));
                        continue;
                    }
                },
            };
            if let Some(bad) = sources.iter().find(|id| !method_ids.contains(id)) {
                errors.push(format!(
                    "step {si} action {ai} cites sentence {bad}, which is not a Method sentence"
                ));
                continue;
            }
            covered.extend(sources.iter().copied());
            let start = sources
                .iter()
                .filter_map(|id| by_id(*id))
                .map(|s| s.start)
                .fold(f64::INFINITY, f64::min);
            let end = sources
                .iter()
                .filter_map(|id| by_id(*id))
                .map(|s| s.end)
                .fold(f64::NEG_INFINITY, f64::max);
            actions.push(DraftAction {
                instruction,
                supplementary: dedup_names(a.supplementary),
                start,
                end,
                sources,
            });
        }
        actions.sort_by(|a, b| a.start.total_cmp(&b.start));
        if actions.is_empty() {
            tracing::info!(step = %raw_step.step_name, "dropping step without actions");
            continue;
        }
        steps.push(DraftStep {
            step_name: raw_step.step_name.trim().to_string(),
            tools: dedup_names(raw_step.tools),
            materials: dedup_names(raw_step.materials),
            new_tools: Vec::new(),
            new_materials: Vec::new(),
            start: 0.0,
            end: 0.0,
            actions,
        });
    }
    for m in methods.iter().filter(|m| !covered.contains(&m.id)) {
        errors.push(format!(
            "method sentence {} ({:?}) is not covered by any action",
            m.id, m.text
        ));
    }
    for (i, pair) in steps.windows(2).enumerate() {
        let last = pair[0].actions.last().map_or(0.0, |a| a.start);
        let first = pair[1].actions.first().map_or(0.0, |a| a.start);
        if last >= first {
            errors.push(format!("steps {i} and {} overlap in time", i + 1));
        }
    }
    if steps.is_empty() && errors.is_empty() {
        errors.push("no steps with actions".into());
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    tile(&mut steps);
    recompute_new_items(&mut steps);
    attach_supporting(&mut steps, sentences);
    Ok(steps)
}

/// Closes gaps so consecutive actions meet: every action ends where the next
/// later-starting action begins. Actions sharing a source keep equal spans.
fn tile(steps: &mut [DraftStep]) {
    let mut starts: Vec<f64> = steps.iter().flat_map(|s| s.actions.iter().map(|a| a.start)).collect();
    starts.sort_by(f64::total_cmp);
    starts.dedup();
    for step in steps.iter_mut() {
        for action in &mut step.actions {
            if let Some(next) = starts.iter().find(|s| **s > action.start) {
                action.end = *next;
            }
        }
        step.start = step.actions.first().map_or(0.0, |a| a.start);
        step.end = step.actions.last().map_or(0.0, |a| a.end);
    }
}

fn recompute_new_items(steps: &mut [DraftStep]) {
    let lower = |v: &[String]| v.iter().map(|s| s.to_lowercase()).collect::<HashSet<_>>();
    let mut prev_tools = HashSet::new();
    let mut prev_materials = HashSet::new();
    for step in steps.iter_mut() {
        step.new_tools = step
            .tools
            .iter()
            .filter(|t| !prev_tools.contains(&t.to_lowercase()))
            .cloned()
            .collect();
        step.new_materials = step
            .materials
            .iter()
            .filter(|m| !prev_materials.contains(&m.to_lowercase()))
            .cloned()
            .collect();
        prev_tools = lower(&step.tools);
        prev_materials = lower(&step.materials);
    }
}

/// Attaches supplementary/explanation/description sentences to the action
/// whose source span midpoint is closest; ties go to the earlier action.
fn attach_supporting(steps: &mut [DraftStep], sentences: &[TranscriptSentence]) {
    let mids: Vec<(usize, usize, f64)> = steps
        .iter()
        .enumerate()
        .flat_map(|(si, s)| {
            s.actions.iter().enumerate().map(move |(ai, a)| {
                let (lo, hi) = source_span(a, sentences);
                (si, ai, (lo + hi) / 2.0)
            })
        })
        .collect();
    for sentence in sentences.iter().filter(|s| s.role.is_some_and(Role::is_supporting)) {
        let mid = (sentence.start + sentence.end) / 2.0;
        let mut best: Option<(usize, usize, f64)> = None;
        for &(si, ai, m) in &mids {
            let d = (m - mid).abs();
            if best.is_none_or(|(_, _, bd)| d < bd) {
                best = Some((si, ai, d));
            }
        }
        if let Some((si, ai, _)) = best {
            let sup = &mut steps[si].actions[ai].supplementary;
            let norm = text::normalize(&sentence.text);
            if !sup.iter().any(|s| text::normalize(s) == norm) {
                sup.push(sentence.text.clone());
            }
        }
    }
}

fn source_span(action: &DraftAction, sentences: &[TranscriptSentence]) -> (f64, f64) {
    let spans: Vec<(f64, f64)> = action
        .sources
        .iter()
        .filter_map(|id| sentences.iter().find(|s| s.id == *id))
        .map(|s| (s.start, s.end))
        .collect();
    let lo = spans.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = spans.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (action.start, action.end)
    }
}

/// One batch call for the whole video; a schema violation earns one repair
/// attempt that quotes the validator's complaints.
pub fn build_hierarchy(
    gateway: &Gateway,
    sentences: &[TranscriptSentence],
    metadata: Option<&RecipeMetadata>,
) -> Result<Vec<DraftStep>, CompileError> {
    if !sentences.iter().any(|s| s.role == Some(Role::Method)) {
        return Err(CompileError::NoInstructionalContent);
    }
    let ctx = ContextId::new("compile-hierarchy");
    let prompt = hierarchy_prompt(sentences, metadata);
    let reply = gateway.complete_text(prompt.clone(), &[], &ctx)?;
    match parse_hierarchy(&reply, sentences) {
        Ok(steps) => Ok(steps),
        Err(errors) => {
            tracing::warn!(?errors, "hierarchy reply rejected, asking for a repair");
            let repair = format!(
                "{prompt}\n\nYour previous answer was:\n{reply}\n\nIt was rejected for these reasons:\n- {}\nReturn corrected JSON only.",
                errors.join("\n- ")
            );
            let reply = gateway.complete_text(repair, &[], &ctx)?;
            parse_hierarchy(&reply, sentences).map_err(CompileError::Schema)
        }
    }
}

const VERBS: &[&str] = &[
    "add", "bake", "beat", "blend", "boil", "break", "bring", "brush", "chop", "combine", "cook", "cool", "cover",
    "crack", "cut", "dice", "drain", "drizzle", "drop", "flip", "fold", "fry", "glue", "grate", "grease", "heat",
    "knead", "let", "line", "measure", "melt", "mix", "peel", "place", "poach", "pour", "preheat", "press", "put",
    "remove", "rest", "roll", "scoop", "season", "separate", "serve", "set", "sift", "simmer", "slice", "spoon",
    "spread", "sprinkle", "squeeze", "stir", "strain", "take", "tape", "toast", "top", "transfer", "turn", "wait",
    "whisk", "wipe", "wrap", "cream", "pipe", "fill", "trim", "sew", "paint", "thread",
];

pub(crate) fn is_action_verb(word: &str) -> bool {
    VERBS.contains(&word)
}

/// Number of clause-initial imperative verbs in an instruction.
pub(crate) fn verb_count(instruction: &str) -> usize {
    let mut count = 0;
    for clause in instruction
        .split([',', ';'])
        .flat_map(|c| c.split(" and "))
        .flat_map(|c| c.split(" then "))
    {
        let mut toks = text::words(clause)
            .into_iter()
            .skip_while(|w| w == "then" || w == "and");
        if toks.next().is_some_and(|w| is_action_verb(&w)) {
            count += 1;
        }
    }
    count
}

/// Share of instructions with exactly one clause-initial verb.
pub fn single_verb_rate(steps: &[DraftStep]) -> f64 {
    let all: Vec<&DraftAction> = steps.iter().flat_map(|s| &s.actions).collect();
    if all.is_empty() {
        return 1.0;
    }
    let single = all.iter().filter(|a| verb_count(&a.instruction) == 1).count();
    single as f64 / all.len() as f64
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{Fixtures, MockBackend, RetryPolicy, ScriptedBackend, ScriptedReply};

    fn s(id: usize, text: &str, role: Role, start: f64, end: f64) -> TranscriptSentence {
        TranscriptSentence {
            id,
            text: text.into(),
            start,
            end,
            role: Some(role),
        }
    }

    fn corpus() -> Vec<TranscriptSentence> {
        vec![
            s(0, "Add sugar and whisk.", Role::Method, 0.0, 3.0),
            s(1, "Whisking adds air to the batter.", Role::Explanation, 3.5, 5.0),
            s(2, "Pour it into the pan.", Role::Method, 8.0, 10.0),
            s(3, "Bake for 20 minutes.", Role::Method, 20.0, 22.0),
            s(4, "Don't open the oven early.", Role::Supplementary, 23.0, 24.0),
        ]
    }

    const REPLY: &str = r#"{"steps": [
        {"step_name": "Make batter", "tools": ["Whisk", "Bowl"], "materials": ["Sugar"],
         "actions": [
            {"instruction": "Add sugar.", "sources": [0]},
            {"instruction": "Whisk the batter.", "sources": [0]},
            {"instruction": "Pour the batter into the pan.", "sources": [2]}]},
        {"step_name": "Bake", "tools": ["Oven", "bowl"], "materials": [],
         "actions": [{"instruction": "Bake for 20 minutes.", "sources": [3], "supplementary": ["Keep the door closed."]}]}
    ]}"#;

    #[test]
    fn multi_action_sentence_shares_timestamps() {
        let steps = parse_hierarchy(REPLY, &corpus()).unwrap();
        let a = &steps[0].actions;
        assert_eq!((a[0].start, a[0].end), (a[1].start, a[1].end));
        assert_eq!(a[0].start, 0.0);
    }

    #[test]
    fn spans_tile_across_steps() {
        let steps = parse_hierarchy(REPLY, &corpus()).unwrap();
        assert_eq!(steps[0].actions[1].end, 8.0);
        assert_eq!(steps[0].end, steps[1].start);
        assert_eq!(steps[0].start, 0.0);
        assert_eq!(steps[1].end, 22.0);
    }

    #[test]
    fn new_items_are_relative_to_previous_step() {
        let steps = parse_hierarchy(REPLY, &corpus()).unwrap();
        assert_eq!(steps[0].new_tools, ["Whisk", "Bowl"]);
        assert_eq!(steps[1].new_tools, ["Oven"]);
        assert!(steps[1].new_materials.is_empty());
    }

    #[test]
    fn supporting_sentences_attach_to_nearest_action() {
        let steps = parse_hierarchy(REPLY, &corpus()).unwrap();
        // explanation at 4.25 is nearest to sentence 0 (mid 1.5) vs sentence 2 (mid 9.0);
        // the two actions from sentence 0 tie and the earlier one wins
        assert_eq!(steps[0].actions[0].supplementary, ["Whisking adds air to the batter."]);
        assert!(steps[0].actions[1].supplementary.is_empty());
        assert_eq!(
            steps[1].actions[0].supplementary,
            ["Keep the door closed.", "Don't open the oven early."]
        );
    }

    #[test]
    fn uncovered_method_sentence_is_rejected() {
        let reply = r#"{"steps": [{"step_name": "x", "actions": [{"instruction": "Add sugar.", "sources": [0]}]}]}"#;
        let err = parse_hierarchy(reply, &corpus()).unwrap_err();
        assert_eq!(err.len(), 2, "{err:?}");
    }

    #[test]
    fn sources_are_inferred_from_start_times() {
        let reply = r#"{"steps": [{"step_name": "x", "actions": [
            {"instruction": "Add sugar.", "start": 0.0, "end": 3.0},
            {"instruction": "Pour.", "start": 8.0, "end": 10.0},
            {"instruction": "Bake.", "start": 20.0, "end": 22.0}]}]}"#;
        let steps = parse_hierarchy(reply, &corpus()).unwrap();
        assert_eq!(steps[0].actions[2].sources, [3]);
    }

    #[test]
    fn non_method_sources_and_overlapping_steps_are_rejected() {
        let reply = r#"{"steps": [{"step_name": "x", "actions": [{"instruction": "Add.", "sources": [0, 1]}]}]}"#;
        assert!(parse_hierarchy(reply, &corpus()).is_err());
        let reply = r#"{"steps": [
            {"step_name": "a", "actions": [{"instruction": "Bake.", "sources": [3]}]},
            {"step_name": "b", "actions": [{"instruction": "Add.", "sources": [0]}, {"instruction": "Pour.", "sources": [2]}]}]}"#;
        let err = parse_hierarchy(reply, &corpus()).unwrap_err();
        assert!(err.iter().any(|e| e.contains("overlap")), "{err:?}");
    }

    #[test]
    fn repair_is_attempted_once() {
        let backend = Arc::new(
            ScriptedBackend::default().with_batch([ScriptedReply::text("not json"), ScriptedReply::text(REPLY)]),
        );
        let gw = Gateway::new(backend.clone()).with_retry(RetryPolicy::immediate());
        let steps = build_hierarchy(&gw, &corpus(), None).unwrap();
        assert_eq!(steps.len(), 2);
        let calls = backend.calls();
        assert_eq!(calls.len(), 2);
        assert!(calls[1].prompt.contains("reply contains no JSON"));

        let backend = Arc::new(
            ScriptedBackend::default().with_batch([ScriptedReply::text("nope"), ScriptedReply::text("still nope")]),
        );
        let gw = Gateway::new(backend);
        assert!(matches!(
            build_hierarchy(&gw, &corpus(), None),
            Err(CompileError::Schema(_))
        ));
    }

    #[test]
    fn no_method_sentences_is_an_empty_plan_error() {
        let gw = Gateway::new(Arc::new(MockBackend::new(Fixtures::default()).strict(true)));
        let only_tips = vec![s(0, "Use cold butter.", Role::Supplementary, 0.0, 1.0)];
        assert!(matches!(
            build_hierarchy(&gw, &only_tips, None),
            Err(CompileError::NoInstructionalContent)
        ));
    }

    #[test]
    fn metadata_is_injected_into_the_prompt() {
        let meta = RecipeMetadata {
            title: None,
            ingredients: vec!["1 1/3 cups AP flour".into()],
            tools: vec![],
        };
        let p = hierarchy_prompt(&corpus(), Some(&meta));
        assert!(p.contains("1 1/3 cups AP flour"));
        assert!(text::fenced_json(&p, 0).unwrap().starts_with('['));
    }

    #[test]
    fn verb_counter() {
        assert_eq!(verb_count("Add sugar and whisk"), 2);
        assert_eq!(verb_count("Add 1 cup of flour into the bowl."), 1);
        assert_eq!(
            verb_count("Mix the mixture with a spatula until no residue flour is visible."),
            1
        );
        assert_eq!(verb_count("Add salt, then stir"), 2);
    }
}
