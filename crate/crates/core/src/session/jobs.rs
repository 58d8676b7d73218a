//! Model work requested by a session. Jobs run inline (replay, tests) or on
//! worker threads (server); either way results come back through
//! [`Session::finish_job`](super::Session::finish_job).

use std::sync::Arc;

use crate::gateway::{ContextId, Gateway, GatewayError, ModelRequest};
use crate::knowledge::{self, KnowledgeBase, UserProfile};

#[derive(Debug, Clone, PartialEq)]
pub enum JobKind {
    Tick { record: usize },
    Classify { utterance: String },
    ProgressAnswer,
    VisualAnswer,
    Suggestion,
    KnowledgeAnswer,
    Narration { fallback: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Work {
    Batch(ModelRequest),
    Stream(ModelRequest),
    Suggest { instruction: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: u64,
    pub kind: JobKind,
    pub work: Work,
    pub context_id: ContextId,
    pub step_index: usize,
    pub action_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobOutput {
    Text(String),
    Cancelled,
    Timeout,
    Failed(String),
}

/// Everything a worker needs to run jobs away from the session.
#[derive(Clone)]
pub struct Executor {
    pub gateway: Arc<Gateway>,
    pub knowledge: Arc<KnowledgeBase>,
    pub profile: UserProfile,
    pub min_relevance: f64,
}

impl Executor {
    pub fn run(&self, job: &Job) -> JobOutput {
        let out = match &job.work {
            Work::Batch(req) => self.gateway.complete(req).map(|r| r.text),
            Work::Stream(req) => match self.gateway.stream(req, &mut |_| Ok(())) {
                Ok(r) if r.cancelled => return JobOutput::Cancelled,
                Ok(r) => Ok(r.text),
                Err(e) => Err(e),
            },
            Work::Suggest { instruction } => {
                match knowledge::suggest(
                    &self.gateway,
                    &self.knowledge,
                    instruction,
                    &self.profile,
                    self.min_relevance,
                    &job.context_id,
                ) {
                    Ok(s) => Ok(s.text),
                    Err(knowledge::KnowledgeError::Gateway(e)) => Err(e),
                    Err(e) => Err(GatewayError::Backend(e.to_string())),
                }
            }
        };
        match out {
            Ok(text) => JobOutput::Text(text),
            Err(GatewayError::Timeout(_)) => JobOutput::Timeout,
            Err(e) => JobOutput::Failed(e.to_string()),
        }
    }
}
