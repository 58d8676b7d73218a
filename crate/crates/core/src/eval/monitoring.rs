//! Per-frame monitoring accuracy by action type and field of view.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::session::Status;

/// One row of the frame-label CSV.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct FrameLabel {
    pub frame_id: String,
    pub action_id: String,
    pub action_type: String,
    pub fov: String,
    pub gold_status: String,
}

pub fn load_labels(path: &Path) -> Result<Vec<FrameLabel>, EvalError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| EvalError::Format(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VerdictFile {
    Map(BTreeMap<String, String>),
    List(Vec<VerdictRow>),
}

#[derive(Deserialize)]
struct VerdictRow {
    frame_id: String,
    status: String,
}

/// Predicted status per frame: `{frame_id: status}` or
/// `[{frame_id, status}]`.
pub fn load_verdicts(path: &Path) -> Result<BTreeMap<String, String>, EvalError> {
    let raw = super::read(path)?;
    let file: VerdictFile =
        serde_json::from_str(&raw).map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))?;
    Ok(match file {
        VerdictFile::Map(m) => m,
        VerdictFile::List(rows) => rows.into_iter().map(|r| (r.frame_id, r.status)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAccuracy {
    pub action_type: String,
    pub fov: String,
    pub frames: usize,
    pub matches: usize,
    pub accuracy: f64,
    /// Mean over actions of each action's per-frame accuracy.
    pub mean_action_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorAccuracyReport {
    pub groups: Vec<GroupAccuracy>,
    pub frames: usize,
    pub matches: usize,
    pub accuracy: f64,
    /// Cells of the type × fov grid with no frames.
    pub empty: Vec<(String, String)>,
}

fn canonical(label: &str) -> String {
    Status::parse(label).map_or_else(|| label.trim().to_lowercase(), |s| s.as_str().to_string())
}

pub fn score_monitoring(
    labels: &[FrameLabel],
    verdicts: &BTreeMap<String, String>,
) -> Result<MonitorAccuracyReport, EvalError> {
    let label_ids: BTreeSet<&str> = labels.iter().map(|l| l.frame_id.as_str()).collect();
    if label_ids.len() != labels.len() {
        return Err(EvalError::Argument("frame ids in the label file are not unique".into()));
    }
    let missing: Vec<&str> = label_ids
        .iter()
        .filter(|id| !verdicts.contains_key(**id))
        .copied()
        .collect();
    let extra: Vec<&str> = verdicts
        .keys()
        .map(String::as_str)
        .filter(|id| !label_ids.contains(id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(EvalError::Argument(format!(
            "verdicts and labels are misaligned: no verdict for {missing:?}, no label for {extra:?}"
        )));
    }
    let mut cells: BTreeMap<(String, String), BTreeMap<String, (usize, usize)>> = BTreeMap::new();
    for l in labels {
        let hit = canonical(&verdicts[&l.frame_id]) == canonical(&l.gold_status);
        let per_action = cells
            .entry((l.action_type.to_lowercase(), l.fov.to_lowercase()))
            .or_default()
            .entry(l.action_id.clone())
            .or_default();
        per_action.0 += 1;
        per_action.1 += usize::from(hit);
    }
    let groups: Vec<GroupAccuracy> = cells
        .iter()
        .map(|((ty, fov), actions)| {
            let frames: usize = actions.values().map(|a| a.0).sum();
            let matches: usize = actions.values().map(|a| a.1).sum();
            let mean_action_accuracy =
                actions.values().map(|(f, m)| *m as f64 / *f as f64).sum::<f64>() / actions.len() as f64;
            GroupAccuracy {
                action_type: ty.clone(),
                fov: fov.clone(),
                frames,
                matches,
                accuracy: matches as f64 / frames as f64,
                mean_action_accuracy,
            }
        })
        .collect();
    let types: BTreeSet<&String> = groups.iter().map(|g| &g.action_type).collect();
    let fovs: BTreeSet<&String> = groups.iter().map(|g| &g.fov).collect();
    let empty = types
        .iter()
        .flat_map(|t| fovs.iter().map(move |f| ((*t).clone(), (*f).clone())))
        .filter(|key| !cells.contains_key(key))
        .collect();
    let frames = labels.len();
    let matches = groups.iter().map(|g| g.matches).sum();
    Ok(MonitorAccuracyReport {
        accuracy: if frames == 0 {
            0.0
        } else {
            matches as f64 / frames as f64
        },
        groups,
        frames,
        matches,
        empty,
    })
}

const TYPE_ORDER: &[&str] = &["punctual", "iterative", "durative"];

impl MonitorAccuracyReport {
    pub fn get(&self, action_type: &str, fov: &str) -> Option<&GroupAccuracy> {
        self.groups
            .iter()
            .find(|g| g.action_type == action_type && g.fov == fov)
    }

    /// One row per action type present, one column per field of view.
    pub fn to_markdown(&self) -> String {
        let mut types: Vec<&str> = self.groups.iter().map(|g| g.action_type.as_str()).collect();
        types.sort_by_key(|t| {
            (
                TYPE_ORDER.iter().position(|o| o == t).unwrap_or(usize::MAX),
                t.to_string(),
            )
        });
        types.dedup();
        let fovs: BTreeSet<&str> = self.groups.iter().map(|g| g.fov.as_str()).collect();
        let mut out = String::from("| action type |");
        for f in &fovs {
            out.push_str(&format!(" {f} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(fovs.len()));
        out.push('\n');
        for t in types {
            out.push_str(&format!("| {t} |"));
            for f in &fovs {
                match self.get(t, f) {
                    Some(g) => out.push_str(&format!(" {:.2} ({}/{}) |", g.accuracy, g.matches, g.frames)),
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "\nOverall: {:.2} ({}/{} frames)\n",
            self.accuracy, self.matches, self.frames
        ));
        for (t, f) in &self.empty {
            out.push_str(&format!("\nNo frames for {t} / {f}; left out of the table.\n"));
        }
        out
    }
}
