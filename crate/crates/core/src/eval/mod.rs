//! Offline evaluation: atomic-fact description scoring and per-frame
//! monitoring accuracy.

pub mod facts;
pub mod monitoring;

use std::path::Path;

use thiserror::Error;

pub use facts::{
    extract_facts, score_description, score_items, AtomicFactReport, ClauseJudge, DescriptionItem, FactJudge,
    FactSource, ItemReport, MatchMode, ModelJudge,
};
pub use monitoring::{score_monitoring, FrameLabel, GroupAccuracy, MonitorAccuracyReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Argument(String),
}

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}
