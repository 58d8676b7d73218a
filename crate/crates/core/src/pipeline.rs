//! Video + transcript → Coach Plan.

use serde::Serialize;
use thiserror::Error;

use crate::compiler::{
    build_hierarchy, classify_roles, filter_sentences, ingest_transcript, single_verb_rate, CompileError, DraftStep,
    RecipeMetadata, Role, Transcript, TranscriptSentence,
};
use crate::criteria::{annotate_step, describe_demonstration, is_grounded, CriteriaError};
use crate::frames::{sample_frames, score_frames, select_relevant, FrameError, ThresholdPolicy, VideoSource};
use crate::gateway::Gateway;
use crate::plan::{CoachPlan, PlanError, VideoInfo};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Frames(#[from] FrameError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionFrames {
    pub step: usize,
    pub action: usize,
    pub sampled: usize,
    pub kept: Vec<u32>,
}

/// What happened along the way, for logs and lint reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompileReport {
    pub sentences: usize,
    pub retained: usize,
    pub roles: Vec<(String, usize)>,
    pub single_verb_rate: f64,
    pub ungrounded: Vec<String>,
    pub frames: Vec<ActionFrames>,
}

/// Transcript sentences overlapping `[start, end]`.
fn narration_for(sentences: &[TranscriptSentence], start: f64, end: f64) -> Vec<String> {
    sentences
        .iter()
        .filter(|s| s.start <= end && s.end >= start)
        .map(|s| s.text.clone())
        .collect()
}

fn describe_step(
    gateway: &Gateway,
    video: &dyn VideoSource,
    policy: &ThresholdPolicy,
    sentences: &[TranscriptSentence],
    step_index: usize,
    step: &DraftStep,
    report: &mut CompileReport,
) -> Result<Vec<String>, PipelineError> {
    let mut out = Vec::new();
    for (i, action) in step.actions.iter().enumerate() {
        let sampled = sample_frames(video, gateway, action.start, action.end)?;
        let n = sampled.len();
        let scored = score_frames(gateway, sampled, &action.instruction)?;
        let kept = select_relevant(scored, policy);
        report.frames.push(ActionFrames {
            step: step_index,
            action: i,
            sampled: n,
            kept: kept.iter().map(|f| f.timestamp).collect(),
        });
        let refs: Vec<_> = kept.into_iter().map(|f| f.image_ref).collect();
        let narration = narration_for(sentences, action.start, action.end);
        let description = match describe_demonstration(gateway, &step.step_name, action, &narration, &refs) {
            Ok(d) => d,
            Err(CriteriaError::NoFrames) => {
                tracing::warn!(instruction = %action.instruction, "no frames in the action window");
                String::new()
            }
            Err(e) => return Err(e.into()),
        };
        out.push(description);
    }
    Ok(out)
}

/// Runs every compile stage and validates the result.
pub fn compile(
    gateway: &Gateway,
    transcript: &Transcript,
    video: &dyn VideoSource,
    metadata: Option<&RecipeMetadata>,
    policy: &ThresholdPolicy,
) -> Result<(CoachPlan, CompileReport), PipelineError> {
    let sentences = ingest_transcript(&transcript.words)?;
    let labeled = classify_roles(gateway, &sentences).map_err(CompileError::from)?;
    let retained = filter_sentences(&labeled);
    let roles = Role::ALL
        .iter()
        .map(|r| {
            let n = labeled.iter().filter(|s| s.role == Some(*r)).count();
            (r.as_str().to_string(), n)
        })
        .collect();
    let drafts = build_hierarchy(gateway, &retained, metadata)?;
    let mut report = CompileReport {
        sentences: sentences.len(),
        retained: retained.len(),
        roles,
        single_verb_rate: single_verb_rate(&drafts),
        ungrounded: Vec::new(),
        frames: Vec::new(),
    };
    let mut steps = Vec::with_capacity(drafts.len());
    for (i, draft) in drafts.iter().enumerate() {
        let descriptions = describe_step(gateway, video, policy, &sentences, i, draft, &mut report)?;
        let step = annotate_step(gateway, draft, &descriptions, metadata)?;
        report.ungrounded.extend(
            step.actions
                .iter()
                .filter(|a| !is_grounded(a))
                .map(|a| a.instruction.clone()),
        );
        steps.push(step);
    }
    let title = metadata
        .and_then(|m| m.title.clone())
        .unwrap_or_else(|| video.title().to_string());
    let plan = CoachPlan::new(
        VideoInfo {
            title,
            duration_s: video.duration_s(),
        },
        steps,
    );
    plan.validate()?;
    if report.single_verb_rate < 0.95 {
        tracing::warn!(
            rate = report.single_verb_rate,
            "fewer than 95% of instructions have a single verb"
        );
    }
    for instruction in &report.ungrounded {
        tracing::warn!(%instruction, "completion criteria share no words with the action");
    }
    Ok((plan, report))
}
