//! TOML configuration shared by every command.
//!
//! ```toml
//! [frames]
//! floor = 0.27
//! base = 0.285
//! ceiling = 0.30
//!
//! [session]
//! period_s = 5
//! monitor_frames = 5
//!
//! [knowledge]
//! corpus = "cooking"
//! store = "kb/cooking.jsonl"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::ThresholdPolicy;
use crate::session::SessionConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} is invalid: {msg}")]
    Invalid { path: String, msg: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeConfig {
    /// Corpus name, informational; the store path picks the data.
    pub corpus: Option<String>,
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub frames: ThresholdPolicy,
    pub session: SessionConfig,
    pub knowledge: KnowledgeConfig,
}

impl Config {
    pub fn parse(raw: &str, origin: &str) -> Result<Self, ConfigError> {
        let invalid = |msg: String| ConfigError::Invalid {
            path: origin.to_string(),
            msg,
        };
        let config: Config = toml::from_str(raw).map_err(|e| invalid(e.to_string()))?;
        config.frames.check().map_err(invalid)?;
        if config.session.period_s.is_nan() || config.session.period_s <= 0.0 {
            return Err(invalid("session.period_s must be positive".into()));
        }
        if config.session.monitor_frames == 0 {
            return Err(invalid("session.monitor_frames must be at least 1".into()));
        }
        Ok(config)
    }

    /// Reads `path`; relative store paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::parse(&raw, &path.display().to_string())?;
        if let (Some(store), Some(dir)) = (&config.knowledge.store, path.parent()) {
            if store.is_relative() {
                config.knowledge.store = Some(dir.join(store));
            }
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = Config::parse("", "inline").unwrap();
        assert_eq!(c, Config::default());
        let c = Config::parse("[session]\nperiod_s = 3.0\n[frames]\nbase = 0.28\n", "inline").unwrap();
        assert_eq!(c.session.period_s, 3.0);
        assert_eq!(c.session.monitor_frames, 5);
        assert_eq!(c.frames.base, 0.28);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        assert!(Config::parse("[session]\nperiod = 3\n", "inline").is_err());
        assert!(Config::parse("[frames]\nfloor = 0.4\n", "inline").is_err());
        assert!(Config::parse("[session]\nperiod_s = 0.0\n", "inline").is_err());
    }
}
