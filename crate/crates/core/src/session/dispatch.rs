//! Utterance routing: rule pre-pass, intent classification and the
//! per-intent answer paths.

use super::{as_sentence, EventKind, Job, JobKind, JobOutput, Nav, Session, SessionEvent, Work};
use crate::gateway::ModelRequest;
use crate::intent::{self, CanonicalCommand, IntentType};
use crate::session::verdict::{monitor_prompt, parse_verdict, Status};

pub const VISUAL_PROMPT_HEAD: &str =
    "Answer a question from a person doing a task, using only what their camera shows.";
pub const KNOWLEDGE_PROMPT_HEAD: &str =
    "Answer a question from a person doing a task. The camera is not needed for this one.";

pub const NO_FRAMES_ANSWER: &str = "I can't see anything yet. Point the camera at your work and ask again.";
const NAV_HELP: &str = "Say next, back or repeat to move between actions.";

fn visual_prompt(question: &str, summary: &str) -> String {
    format!(
        "{VISUAL_PROMPT_HEAD}\n```json\n{summary}\n```\nThe attached frames are the most recent ones, oldest first. If the answer is not visible, say so and suggest how to adjust the camera.\nQuestion: {:?}\nAnswer in one or two short sentences.",
        question.trim()
    )
}

fn knowledge_prompt(question: &str, summary: &str) -> String {
    format!(
        "{KNOWLEDGE_PROMPT_HEAD}\n```json\n{summary}\n```\nQuestion: {:?}\nAnswer in one or two short sentences.",
        question.trim()
    )
}

impl Session {
    /// Handles one final user utterance. Answers arrive as events, either
    /// immediately (inline mode) or when their jobs finish.
    pub fn handle_utterance(&mut self, utterance: &str) -> Vec<SessionEvent> {
        let before = self.state.event_log.len();
        let utterance = utterance.trim();
        if utterance.is_empty() {
            return Vec::new();
        }
        self.executor.gateway.cancel(&self.state.context_id);
        self.speech_active = true;
        self.speech_since = self.now();
        self.engaged = true;
        if let Some(command) = intent::rule_prepass(utterance, self.state.awaiting_confirmation) {
            self.run_command(command);
        } else {
            let req = ModelRequest::batch(intent::intent_prompt(utterance, &self.state_summary()))
                .with_context(&self.state.context_id);
            self.submit(
                JobKind::Classify {
                    utterance: utterance.to_string(),
                },
                Work::Batch(req),
            );
        }
        self.sync_state();
        self.state.event_log[before..].to_vec()
    }

    fn run_command(&mut self, command: CanonicalCommand) {
        self.end_speech();
        match command {
            CanonicalCommand::Next => {
                self.navigate(Nav::Next);
            }
            CanonicalCommand::Back => {
                self.navigate(Nav::Back);
            }
            CanonicalCommand::Repeat => {
                self.navigate(Nav::Repeat);
            }
            CanonicalCommand::NarrationOn => {
                self.toggle_narration(true);
                self.emit(EventKind::Info, "Narration is on.");
            }
            CanonicalCommand::NarrationOff => {
                self.toggle_narration(false);
                self.emit(EventKind::Info, "Narration is off.");
            }
            CanonicalCommand::Yes => {
                self.confirm_advance(true);
            }
            CanonicalCommand::No => {
                self.confirm_advance(false);
            }
        }
    }

    fn route(&mut self, utterance: &str, intent: IntentType) {
        tracing::debug!(%utterance, intent = intent.as_str(), "routing utterance");
        match intent {
            IntentType::Navigation => match intent::navigation_command(utterance) {
                Some(c) => self.run_command(c),
                None => {
                    self.end_speech();
                    self.emit(EventKind::Info, NAV_HELP);
                }
            },
            IntentType::TipsWorkarounds => {
                let instruction = self.current_action().instruction.clone();
                self.submit(JobKind::Suggestion, Work::Suggest { instruction });
            }
            IntentType::ProgressFeedback => {
                let frames = self.recent_frames();
                if frames.is_empty() {
                    self.end_speech();
                    self.emit(EventKind::Answer, NO_FRAMES_ANSWER);
                    return;
                }
                let prompt = monitor_prompt(self.current_action(), self.last_verdict.as_ref());
                let req = ModelRequest::batch(prompt)
                    .with_images(frames)
                    .with_context(&self.state.context_id);
                self.submit(JobKind::ProgressAnswer, Work::Batch(req));
            }
            IntentType::VisualQa => {
                let frames = self.recent_frames();
                if frames.is_empty() {
                    self.end_speech();
                    self.emit(EventKind::Answer, NO_FRAMES_ANSWER);
                    return;
                }
                let req = ModelRequest::batch(visual_prompt(utterance, &self.state_summary()))
                    .with_images(frames)
                    .with_context(&self.state.context_id);
                self.submit(JobKind::VisualAnswer, Work::Batch(req));
            }
            IntentType::NonvisualKnowledge => {
                let req = ModelRequest::stream(knowledge_prompt(utterance, &self.state_summary()))
                    .with_context(&self.state.context_id);
                self.submit(JobKind::KnowledgeAnswer, Work::Stream(req));
            }
        }
    }

    pub(super) fn finish_dispatch(&mut self, job: Job, output: JobOutput) {
        let text = match output {
            JobOutput::Text(t) => t,
            JobOutput::Cancelled => {
                self.end_speech();
                return;
            }
            JobOutput::Timeout => {
                self.end_speech();
                self.emit(EventKind::Error, "The model took too long to answer. Please ask again.");
                return;
            }
            JobOutput::Failed(e) => {
                tracing::warn!(error = %e, "utterance job failed");
                self.end_speech();
                self.emit(EventKind::Error, "Sorry, I couldn't answer that. Please try again.");
                return;
            }
        };
        match job.kind {
            JobKind::Classify { utterance } => {
                let intent = intent::parse_intent(&text).unwrap_or_else(|| {
                    tracing::warn!(%utterance, reply = %text, "intent outside the set, using nonvisual_knowledge");
                    IntentType::NonvisualKnowledge
                });
                self.route(&utterance, intent);
            }
            JobKind::ProgressAnswer => {
                self.end_speech();
                let current = self.is_current(&job);
                let action = self.current_action().clone();
                let v = parse_verdict(&text, &action);
                let answer = match v.status {
                    Status::Complete if current => {
                        self.state.awaiting_confirmation = true;
                        let lead = as_sentence(&v.rationale);
                        let lead = if lead.is_empty() {
                            "This looks done.".into()
                        } else {
                            lead
                        };
                        format!("{lead} Would you like to move on?")
                    }
                    Status::Mistake => format!(
                        "Possible mistake: {}",
                        as_sentence(v.criterion.as_deref().unwrap_or(&v.rationale))
                    ),
                    Status::Irrelevant => {
                        "I can't see your work clearly. Try adjusting the camera toward your hands.".into()
                    }
                    _ => {
                        let r = as_sentence(&v.rationale);
                        if r.is_empty() {
                            "It's still in progress.".into()
                        } else {
                            r
                        }
                    }
                };
                if current {
                    self.last_verdict = Some(v);
                }
                self.emit(EventKind::Answer, answer);
            }
            JobKind::VisualAnswer | JobKind::KnowledgeAnswer => {
                self.end_speech();
                self.emit(EventKind::Answer, as_sentence(&text));
            }
            JobKind::Suggestion => {
                self.end_speech();
                self.emit(EventKind::Suggestion, text.trim());
            }
            JobKind::Tick { .. } | JobKind::Narration { .. } => unreachable!("handled by finish_job"),
        }
    }
}
