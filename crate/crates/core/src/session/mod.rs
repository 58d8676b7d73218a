//! Live assistance sessions: frame buffering, batch monitoring on a fixed
//! cadence, streamed narration, the plan state machine and utterance
//! handling.

pub mod clock;
mod dispatch;
mod jobs;
pub mod protocol;
pub mod replay;
pub mod server;
pub mod verdict;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ContextId, Gateway, ImageRef, ModelRequest};
use crate::knowledge::{KnowledgeBase, UserProfile};
use crate::plan::{Action, ActionType, CoachPlan, Step};
use crate::text;

pub use clock::{Clock, SimClock, WallClock};
pub use dispatch::{KNOWLEDGE_PROMPT_HEAD, NO_FRAMES_ANSWER, VISUAL_PROMPT_HEAD};
pub use jobs::{Executor, Job, JobKind, JobOutput, Work};
pub use protocol::{ClientMessage, CommandName, EventKind, ServerMessage, SessionEvent, StateSnapshot};
pub use verdict::{monitor_prompt, parse_verdict, MonitorVerdict, Status};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("plan refused: {}", .0.join("; "))]
    InvalidPlan(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub period_s: f64,
    pub monitor_frames: usize,
    pub buffer_capacity: usize,
    /// Hold mistake alerts until the completion prompt.
    pub defer_mistakes: bool,
    /// Consecutive irrelevant ticks, with the user engaged, before asking
    /// them to adjust the camera.
    pub reframe_after: u32,
    /// How long a speech start without an utterance keeps feedback quiet.
    pub speech_timeout_s: f64,
    pub min_relevance: f64,
    pub ticks: bool,
    pub session_id: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            period_s: 5.0,
            monitor_frames: 5,
            buffer_capacity: 30,
            defer_mistakes: false,
            reframe_after: 3,
            speech_timeout_s: 10.0,
            min_relevance: 0.0,
            ticks: true,
            session_id: "session".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferedFrame {
    pub ts: f64,
    pub image_ref: ImageRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub plan: CoachPlan,
    pub profile: UserProfile,
    pub step_index: usize,
    pub action_index: usize,
    pub frame_buffer: VecDeque<BufferedFrame>,
    pub narration_enabled: bool,
    pub awaiting_confirmation: bool,
    pub context_id: ContextId,
    pub event_log: Vec<SessionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "detail")]
pub enum TickOutcome {
    Pending,
    Verdict(Status),
    NoFrames,
    Busy,
    Timeout,
    Failed(String),
    Stale,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickRecord {
    pub at: f64,
    pub images: usize,
    #[serde(flatten)]
    pub outcome: TickOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameIngest {
    Buffered,
    Thinned,
    Regressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// Jobs run on the calling thread as soon as they are created.
    Inline,
    /// Jobs queue up for [`Session::take_jobs`].
    Deferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nav {
    Next,
    Back,
    Repeat,
}

pub struct Session {
    state: SessionState,
    config: SessionConfig,
    executor: Executor,
    clock: Arc<dyn Clock>,
    mode: ExecMode,
    jobs: Vec<Job>,
    next_job: u64,
    outbox: Vec<ServerMessage>,
    last_snapshot: Option<StateSnapshot>,
    next_tick: f64,
    tick_in_flight: bool,
    tick_log: Vec<TickRecord>,
    last_verdict: Option<MonitorVerdict>,
    last_mistake: Option<String>,
    deferred_mistakes: Vec<String>,
    irrelevant_streak: u32,
    engaged: bool,
    speech_active: bool,
    speech_since: f64,
    step_entries: usize,
    contexts: Vec<ContextId>,
    finished: bool,
    last_ts: f64,
}

pub(crate) fn as_sentence(s: &str) -> String {
    let s = text::capitalize(s.trim());
    if s.is_empty() || s.ends_with(['.', '!', '?']) {
        s
    } else {
        format!("{s}.")
    }
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [rest @ .., last] => format!("{} and {last}", rest.join(", ")),
    }
}

impl Session {
    pub fn start(
        plan: CoachPlan,
        profile: UserProfile,
        gateway: Arc<Gateway>,
        knowledge: Arc<KnowledgeBase>,
        config: SessionConfig,
        clock: Arc<dyn Clock>,
        mode: ExecMode,
    ) -> Result<Self, SessionError> {
        let violations = plan.violations();
        if !violations.is_empty() {
            return Err(SessionError::InvalidPlan(violations));
        }
        let executor = Executor {
            gateway,
            knowledge,
            profile: profile.clone(),
            min_relevance: config.min_relevance,
        };
        let next_tick = config.period_s;
        let mut session = Session {
            state: SessionState {
                plan,
                profile,
                step_index: 0,
                action_index: 0,
                frame_buffer: VecDeque::new(),
                narration_enabled: true,
                awaiting_confirmation: false,
                context_id: ContextId::default(),
                event_log: Vec::new(),
            },
            config,
            executor,
            clock,
            mode,
            jobs: Vec::new(),
            next_job: 0,
            outbox: Vec::new(),
            last_snapshot: None,
            next_tick,
            tick_in_flight: false,
            tick_log: Vec::new(),
            last_verdict: None,
            last_mistake: None,
            deferred_mistakes: Vec::new(),
            irrelevant_streak: 0,
            engaged: false,
            speech_active: false,
            speech_since: 0.0,
            step_entries: 0,
            contexts: Vec::new(),
            finished: false,
            last_ts: 0.0,
        };
        session.enter_step();
        session.announce_action();
        session.sync_state();
        Ok(session)
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.state.event_log
    }

    pub fn tick_log(&self) -> &[TickRecord] {
        &self.tick_log
    }

    /// Context ids in the order steps were entered.
    pub fn contexts(&self) -> &[ContextId] {
        &self.contexts
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn next_tick_at(&self) -> f64 {
        self.next_tick
    }

    pub fn executor(&self) -> Executor {
        self.executor.clone()
    }

    pub fn gateway(&self) -> &Gateway {
        &self.executor.gateway
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            step_index: self.state.step_index,
            action_index: self.state.action_index,
            narration_enabled: self.state.narration_enabled,
            awaiting_confirmation: self.state.awaiting_confirmation,
        }
    }

    /// Server messages produced since the last call.
    pub fn drain_messages(&mut self) -> Vec<ServerMessage> {
        std::mem::take(&mut self.outbox)
    }

    /// Jobs waiting for a worker (deferred mode only).
    pub fn take_jobs(&mut self) -> Vec<Job> {
        std::mem::take(&mut self.jobs)
    }

    fn step(&self) -> &Step {
        &self.state.plan.steps[self.state.step_index]
    }

    pub fn current_action(&self) -> &Action {
        &self.step().actions[self.state.action_index]
    }

    fn now(&self) -> f64 {
        self.clock.now()
    }

    fn emit(&mut self, kind: EventKind, text: impl Into<String>) -> SessionEvent {
        let ts = self.now().max(self.last_ts);
        self.last_ts = ts;
        let event = SessionEvent {
            kind,
            text: text.into(),
            step_index: self.state.step_index,
            action_index: self.state.action_index,
            timestamp: ts,
        };
        self.state.event_log.push(event.clone());
        self.outbox.push(ServerMessage::Event(event.clone()));
        event
    }

    fn sync_state(&mut self) {
        let snap = self.snapshot();
        if self.last_snapshot != Some(snap) {
            self.last_snapshot = Some(snap);
            self.outbox.push(ServerMessage::State(snap));
        }
    }

    /// New context for a step entry. In-flight streams under the old one
    /// are cancelled.
    fn enter_step(&mut self) {
        if !self.state.context_id.0.is_empty() {
            self.executor.gateway.cancel(&self.state.context_id);
        }
        let ctx = ContextId::new(format!(
            "{}-step{}-{}",
            self.config.session_id, self.state.step_index, self.step_entries
        ));
        self.step_entries += 1;
        self.contexts.push(ctx.clone());
        self.state.context_id = ctx;
    }

    fn reset_action_state(&mut self) {
        self.last_verdict = None;
        self.last_mistake = None;
        self.deferred_mistakes.clear();
        self.irrelevant_streak = 0;
        self.engaged = false;
        self.state.awaiting_confirmation = false;
    }

    pub fn instruction_text(&self) -> String {
        let step = self.step();
        let action = self.current_action();
        let mut out = String::new();
        if self.state.action_index == 0 {
            out.push_str(&format!(
                "Step {} of {}: {}. ",
                self.state.step_index + 1,
                self.state.plan.steps.len(),
                step.step_name.trim_end_matches('.')
            ));
            let mut needed = step.new_tools.clone();
            needed.extend(step.new_materials.iter().cloned());
            if !needed.is_empty() {
                out.push_str(&format!("You will need {}. ", join_list(&needed)));
            }
        }
        out.push_str(&as_sentence(&action.instruction));
        out
    }

    pub fn detail_text(&self) -> String {
        let action = self.current_action();
        let mut parts = Vec::new();
        if action.demonstration_description.trim().is_empty() {
            parts.push("No demonstration details are available for this action.".to_string());
        } else {
            parts.push(as_sentence(&action.demonstration_description));
        }
        for tip in &action.supplementary {
            parts.push(format!("Tip: {}", as_sentence(tip)));
        }
        parts.join(" ")
    }

    fn announce_action(&mut self) {
        let instruction = self.instruction_text();
        let detail = self.detail_text();
        self.emit(EventKind::Instruction, instruction);
        self.emit(EventKind::DemonstrationDetail, detail);
    }

    fn submit(&mut self, kind: JobKind, work: Work) {
        let job = Job {
            id: self.next_job,
            kind,
            work,
            context_id: self.state.context_id.clone(),
            step_index: self.state.step_index,
            action_index: self.state.action_index,
        };
        self.next_job += 1;
        match self.mode {
            ExecMode::Inline => {
                let out = self.executor.run(&job);
                self.finish_job(job, out);
            }
            ExecMode::Deferred => self.jobs.push(job),
        }
    }

    fn is_current(&self, job: &Job) -> bool {
        job.context_id == self.state.context_id
            && job.step_index == self.state.step_index
            && job.action_index == self.state.action_index
    }

    // ---- frames and scheduling ----

    /// Buffers a frame on the 1 Hz grid: the first frame of each second is
    /// kept, later ones in the same second are thinned, and frames older
    /// than the newest buffered frame are dropped.
    pub fn ingest_frame(&mut self, ts: f64, image_ref: ImageRef) -> FrameIngest {
        if let Some(last) = self.state.frame_buffer.back() {
            if ts < last.ts {
                tracing::warn!(ts, last = last.ts, "dropping out-of-order frame");
                return FrameIngest::Regressed;
            }
            if ts.floor() == last.ts.floor() {
                return FrameIngest::Thinned;
            }
        }
        self.state.frame_buffer.push_back(BufferedFrame { ts, image_ref });
        let cap = self.config.buffer_capacity.max(self.config.monitor_frames);
        while self.state.frame_buffer.len() > cap {
            self.state.frame_buffer.pop_front();
        }
        FrameIngest::Buffered
    }

    pub fn ingest_frame_bytes(&mut self, ts: f64, bytes: &[u8]) -> FrameIngest {
        let r = self.executor.gateway.images().put(bytes);
        self.ingest_frame(ts, r)
    }

    fn recent_frames(&self) -> Vec<ImageRef> {
        let n = self.config.monitor_frames.min(self.state.frame_buffer.len());
        self.state
            .frame_buffer
            .iter()
            .skip(self.state.frame_buffer.len() - n)
            .map(|f| f.image_ref.clone())
            .collect()
    }

    /// Runs every batch tick due at the current clock time.
    pub fn poll(&mut self) {
        let now = self.now();
        if self.speech_active && now - self.speech_since > self.config.speech_timeout_s {
            self.speech_active = false;
        }
        while self.config.ticks && self.next_tick <= now + 1e-9 {
            let at = self.next_tick;
            self.next_tick += self.config.period_s;
            self.batch_tick(at);
        }
        self.sync_state();
    }

    fn batch_tick(&mut self, at: f64) {
        let images = self.recent_frames();
        let record = self.tick_log.len();
        let outcome = if self.finished {
            TickOutcome::Finished
        } else if images.is_empty() {
            TickOutcome::NoFrames
        } else if self.tick_in_flight {
            TickOutcome::Busy
        } else {
            TickOutcome::Pending
        };
        self.tick_log.push(TickRecord {
            at,
            images: images.len(),
            outcome: outcome.clone(),
        });
        if outcome != TickOutcome::Pending {
            return;
        }
        let prompt = monitor_prompt(self.current_action(), self.last_verdict.as_ref());
        let req = ModelRequest::batch(prompt)
            .with_images(images)
            .with_context(&self.state.context_id);
        self.tick_in_flight = true;
        self.submit(JobKind::Tick { record }, Work::Batch(req));
    }

    /// Applies a model result to the session.
    pub fn finish_job(&mut self, job: Job, output: JobOutput) {
        match job.kind.clone() {
            JobKind::Tick { record } => {
                self.tick_in_flight = false;
                let outcome = if !self.is_current(&job) {
                    TickOutcome::Stale
                } else {
                    match output {
                        JobOutput::Text(reply) => {
                            let v = parse_verdict(&reply, self.current_action());
                            let status = v.status;
                            self.apply_verdict(v);
                            TickOutcome::Verdict(status)
                        }
                        JobOutput::Timeout => TickOutcome::Timeout,
                        JobOutput::Cancelled => TickOutcome::Stale,
                        JobOutput::Failed(e) => {
                            tracing::warn!(error = %e, "batch tick failed");
                            TickOutcome::Failed(e)
                        }
                    }
                };
                if let Some(r) = self.tick_log.get_mut(record) {
                    r.outcome = outcome;
                }
            }
            JobKind::Narration { fallback } => {
                if !self.is_current(&job) || !self.state.narration_enabled || self.speech_active {
                    return;
                }
                let text = match output {
                    JobOutput::Text(t) if !t.trim().is_empty() => t.trim().to_string(),
                    JobOutput::Cancelled => return,
                    _ => fallback,
                };
                if !text.is_empty() {
                    self.emit(EventKind::ProgressUpdate, as_sentence(&text));
                }
            }
            _ => self.finish_dispatch(job, output),
        }
        self.sync_state();
    }

    // ---- state machine ----

    /// Turns one verdict into feedback. Returns the events it emitted
    /// directly; narration arrives later through its stream job.
    pub fn apply_verdict(&mut self, verdict: MonitorVerdict) -> Vec<SessionEvent> {
        let before = self.state.event_log.len();
        if self.finished {
            return Vec::new();
        }
        let action = self.current_action().clone();
        if verdict.status == Status::Irrelevant {
            self.irrelevant_streak += 1;
            if self.engaged && self.irrelevant_streak >= self.config.reframe_after {
                self.irrelevant_streak = 0;
                self.emit(
                    EventKind::ReframeRequest,
                    "I can't see your work right now. Please adjust your view, for example turn slightly toward your hands.",
                );
            }
        } else {
            self.irrelevant_streak = 0;
        }
        match verdict.status {
            Status::Irrelevant => {}
            Status::InProgress => match action.action_type {
                ActionType::Punctual => {}
                ActionType::Iterative => {
                    if self.progress_allowed() {
                        let text = iterative_progress(&action, &verdict);
                        self.emit(EventKind::ProgressUpdate, text);
                    }
                }
                ActionType::Durative => {
                    if self.progress_allowed() {
                        let req = ModelRequest::stream(narration_prompt(&action, &verdict))
                            .with_images(self.recent_frames().into_iter().last())
                            .with_context(&self.state.context_id);
                        self.submit(
                            JobKind::Narration {
                                fallback: verdict.rationale.clone(),
                            },
                            Work::Stream(req),
                        );
                    }
                }
            },
            Status::Complete => {
                if !self.state.awaiting_confirmation {
                    let text = self.completion_text(&action, &verdict);
                    self.state.awaiting_confirmation = true;
                    self.emit(EventKind::CompletionPrompt, text);
                }
            }
            Status::Mistake => {
                let criterion = verdict.criterion.clone().unwrap_or_else(|| verdict.rationale.clone());
                if self.config.defer_mistakes {
                    if !self.deferred_mistakes.contains(&criterion) {
                        self.deferred_mistakes.push(criterion);
                    }
                } else if self.last_mistake.as_deref() != Some(criterion.as_str()) {
                    let mut text = format!("Possible mistake: {}", as_sentence(&criterion));
                    let rationale = as_sentence(&verdict.rationale);
                    if !rationale.is_empty() && text::normalize(&rationale) != text::normalize(&criterion) {
                        text.push(' ');
                        text.push_str(&rationale);
                    }
                    self.emit(EventKind::MistakeAlert, text);
                    self.last_mistake = Some(criterion);
                }
            }
        }
        self.last_verdict = Some(verdict);
        self.sync_state();
        self.state.event_log[before..].to_vec()
    }

    fn progress_allowed(&self) -> bool {
        self.state.narration_enabled && !self.speech_active
    }

    fn completion_text(&self, action: &Action, verdict: &MonitorVerdict) -> String {
        let mut parts = Vec::new();
        let rationale = as_sentence(&verdict.rationale);
        parts.push(if rationale.is_empty() {
            "This looks done.".to_string()
        } else {
            rationale
        });
        for cue in &action.nonvisual_completion_criteria {
            parts.push(format!("To check without looking: {}", as_sentence(cue)));
        }
        if !self.deferred_mistakes.is_empty() {
            let notes: Vec<String> = self.deferred_mistakes.iter().map(|m| as_sentence(m)).collect();
            parts.push(format!("Before you move on, check this: {}", notes.join(" ")));
        }
        parts.push("Would you like to move on?".into());
        parts.join(" ")
    }

    pub fn navigate(&mut self, nav: Nav) -> Vec<SessionEvent> {
        let before = self.state.event_log.len();
        let steps = self.state.plan.steps.len();
        let (s, a) = (self.state.step_index, self.state.action_index);
        let target = match nav {
            Nav::Repeat => Some((s, a)),
            Nav::Next => {
                if a + 1 < self.step().actions.len() {
                    Some((s, a + 1))
                } else if s + 1 < steps {
                    Some((s + 1, 0))
                } else {
                    None
                }
            }
            Nav::Back => {
                if a > 0 {
                    Some((s, a - 1))
                } else if s > 0 {
                    Some((s - 1, self.state.plan.steps[s - 1].actions.len() - 1))
                } else {
                    None
                }
            }
        };
        match target {
            None => {
                let text = if nav == Nav::Next {
                    "This is the last action of the last step."
                } else {
                    "This is the first action of the first step."
                };
                self.emit(EventKind::Info, text);
            }
            Some((ns, na)) => {
                if nav != Nav::Repeat {
                    self.state.step_index = ns;
                    self.state.action_index = na;
                    if ns != s {
                        self.enter_step();
                    }
                    self.reset_action_state();
                    self.finished = false;
                }
                self.announce_action();
            }
        }
        self.sync_state();
        self.state.event_log[before..].to_vec()
    }

    pub fn toggle_narration(&mut self, on: bool) {
        self.state.narration_enabled = on;
        self.sync_state();
    }

    /// Answer to a completion prompt. Without a pending prompt the answer is
    /// handled as an ordinary utterance.
    pub fn confirm_advance(&mut self, yes: bool) -> Vec<SessionEvent> {
        if !self.state.awaiting_confirmation {
            return self.handle_utterance(if yes { "yes" } else { "no" });
        }
        let before = self.state.event_log.len();
        self.state.awaiting_confirmation = false;
        if yes {
            let last_step = self.state.step_index + 1 == self.state.plan.steps.len();
            let last_action = self.state.action_index + 1 == self.step().actions.len();
            if last_step && last_action {
                self.finished = true;
                self.emit(EventKind::Info, "That was the last action. The task is complete.");
            } else {
                self.navigate(Nav::Next);
            }
        } else {
            self.emit(EventKind::Info, "Okay, I will keep watching.");
        }
        self.sync_state();
        self.state.event_log[before..].to_vec()
    }

    /// Voice activity: cancel in-flight generation and hold progress
    /// updates until the utterance is answered.
    pub fn speech_start(&mut self) {
        self.executor.gateway.cancel(&self.state.context_id);
        self.speech_active = true;
        self.speech_since = self.now();
    }

    /// Emits an error event, for problems outside the session such as bad
    /// client messages.
    pub fn report_error(&mut self, text: impl Into<String>) {
        self.emit(EventKind::Error, text);
    }

    pub(crate) fn end_speech(&mut self) {
        self.speech_active = false;
    }

    pub fn handle_command(&mut self, name: CommandName) -> Vec<SessionEvent> {
        let before = self.state.event_log.len();
        match name {
            CommandName::Next => {
                self.navigate(Nav::Next);
            }
            CommandName::Back => {
                self.navigate(Nav::Back);
            }
            CommandName::Repeat => {
                self.navigate(Nav::Repeat);
            }
            CommandName::Yes => {
                self.confirm_advance(true);
            }
            CommandName::No => {
                self.confirm_advance(false);
            }
            CommandName::NarrationOn => self.toggle_narration(true),
            CommandName::NarrationOff => self.toggle_narration(false),
            CommandName::SpeechStart => self.speech_start(),
        }
        self.sync_state();
        self.state.event_log[before..].to_vec()
    }

    /// Brief JSON description of where the user is, for prompts.
    pub fn state_summary(&self) -> String {
        let step = self.step();
        let action = self.current_action();
        serde_json::json!({
            "video": self.state.plan.video.title,
            "step_index": self.state.step_index,
            "step_name": step.step_name,
            "instruction": action.instruction,
            "action_type": action.action_type.as_str(),
            "awaiting_confirmation": self.state.awaiting_confirmation,
        })
        .to_string()
    }
}

fn iterative_progress(action: &Action, verdict: &MonitorVerdict) -> String {
    let target = verdict::target_count(action);
    let lead = match (verdict.repetition_count, target) {
        (Some(n), Some(t)) => Some(format!("{n} of {t} so far.")),
        (Some(n), None) => Some(format!("{n} so far.")),
        _ => None,
    };
    let rationale = as_sentence(&verdict.rationale);
    match (lead, rationale.is_empty()) {
        (Some(l), true) => l,
        (Some(l), false) => format!("{l} {rationale}"),
        (None, false) => rationale,
        (None, true) => "Still in progress.".into(),
    }
}

pub const NARRATION_PROMPT_HEAD: &str = "Narrate the user's progress on the current action in one short sentence.";

pub fn narration_prompt(action: &Action, verdict: &MonitorVerdict) -> String {
    let input = serde_json::json!({
        "instruction": action.instruction,
        "in_progress_criteria": action.in_progress_criteria,
        "completion_criteria": action.completion_criteria,
        "batch_observation": verdict.rationale,
    });
    format!(
        "{NARRATION_PROMPT_HEAD}\n```json\n{input}\n```\nDescribe what changed in the attached frame relative to the completion criteria. Speak to the user directly."
    )
}
