//! Atomic-fact scoring of demonstration descriptions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::gateway::{ContextId, Gateway};
use crate::text;

/// Extracts facts and decides when two facts say the same thing.
pub trait FactJudge {
    fn extract(&self, description: &str) -> Result<Vec<String>, String>;
    fn equivalent(&self, a: &str, b: &str) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Normalized text must be identical.
    Exact,
    /// Either normalized text contains the other.
    #[default]
    Containment,
}

fn text_match(mode: MatchMode, a: &str, b: &str) -> bool {
    let (a, b) = (text::normalize(a), text::normalize(b));
    if a.is_empty() || b.is_empty() {
        return false;
    }
    match mode {
        MatchMode::Exact => a == b,
        MatchMode::Containment => {
            a == b || format!(" {b} ").contains(&format!(" {a} ")) || format!(" {a} ").contains(&format!(" {b} "))
        }
    }
}

const COPULAS: &[&str] = &["is", "are", "was", "were", "looks", "look", "feels", "seems"];
const CLAUSE_BREAKS: &[&str] = &[", and ", " and ", "; ", ", but ", " but ", ", while ", ", then "];

/// Splits sentences into clauses. A clause that is only a predicate
/// ("oiled" in "The pan is hot and oiled") borrows the previous clause's
/// subject and verb.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClauseJudge {
    pub mode: MatchMode,
}

fn split_clauses(sentence: &str) -> Vec<String> {
    let body = sentence.trim().trim_end_matches(['.', '!', '?']);
    let mut parts = vec![body.to_string()];
    for sep in CLAUSE_BREAKS {
        parts = parts
            .iter()
            .flat_map(|p| p.split(sep).map(str::to_string).collect::<Vec<_>>())
            .collect();
    }
    let mut out: Vec<String> = Vec::new();
    let mut lead: Option<String> = None;
    for part in parts.iter().map(|p| p.trim()).filter(|p| !p.is_empty()) {
        let words = text::words(part);
        let copula = words.iter().position(|w| COPULAS.contains(&w.as_str()));
        let clause = match copula {
            Some(_) => {
                let lower = part.to_lowercase();
                lead = COPULAS.iter().find_map(|c| {
                    lower
                        .find(&format!(" {c} "))
                        .map(|i| part[..i + c.len() + 2].to_string())
                });
                part.to_string()
            }
            None if words.len() <= 3 => match &lead {
                Some(l) => format!("{l}{part}"),
                None => part.to_string(),
            },
            None => {
                lead = None;
                part.to_string()
            }
        };
        out.push(format!("{}.", text::capitalize(&clause)));
    }
    out
}

impl FactJudge for ClauseJudge {
    fn extract(&self, description: &str) -> Result<Vec<String>, String> {
        Ok(text::sentences(description)
            .iter()
            .flat_map(|s| split_clauses(s))
            .collect())
    }

    fn equivalent(&self, a: &str, b: &str) -> bool {
        text_match(self.mode, a, b)
    }
}

pub const FACTS_PROMPT_HEAD: &str = "Break the text below into atomic facts.";
pub const SAME_FACT_PROMPT_HEAD: &str = "Do these two statements state the same fact?";

/// Judge backed by a model: extraction is one batch call; equivalence
/// first tries text containment, then asks the model.
pub struct ModelJudge<'a> {
    pub gateway: &'a Gateway,
}

impl FactJudge for ModelJudge<'_> {
    fn extract(&self, description: &str) -> Result<Vec<String>, String> {
        let prompt = format!(
            "{FACTS_PROMPT_HEAD} Each fact is one short, self-contained claim. Output a JSON array of strings.\nText: {description:?}"
        );
        let reply = self
            .gateway
            .complete_text(prompt, &[], &ContextId::new("eval-facts"))
            .map_err(|e| e.to_string())?;
        let json = text::extract_json(&reply).ok_or("judge reply contains no JSON")?;
        serde_json::from_str(json).map_err(|e| format!("judge reply is not a string list: {e}"))
    }

    fn equivalent(&self, a: &str, b: &str) -> bool {
        if text_match(MatchMode::Containment, a, b) {
            return true;
        }
        let prompt = format!("{SAME_FACT_PROMPT_HEAD} Answer yes or no.\nA: {a:?}\nB: {b:?}");
        self.gateway
            .complete_text(prompt, &[], &ContextId::new("eval-facts"))
            .map(|r| text::normalize(&r).starts_with("yes"))
            .unwrap_or(false)
    }
}

/// One extraction, with the error flag set when the judge failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extraction {
    pub facts: Vec<String>,
    pub error: Option<String>,
}

pub fn extract_facts(judge: &dyn FactJudge, description: &str) -> Result<Extraction, EvalError> {
    if description.trim().is_empty() {
        return Err(EvalError::Argument("description is empty".into()));
    }
    Ok(match judge.extract(description) {
        Ok(facts) => Extraction { facts, error: None },
        Err(e) => Extraction {
            facts: Vec::new(),
            error: Some(e),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactJudgment {
    /// Also in the narration.
    Narration,
    /// In the reference and not in the narration.
    New,
    /// Neither.
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgedFact {
    pub fact: String,
    pub judgment: FactJudgment,
    pub hallucinated: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemReport {
    pub id: String,
    pub generated: Vec<JudgedFact>,
    pub missed: Vec<String>,
    pub new_facts: usize,
    pub missed_facts: usize,
    pub narration_overlap: usize,
    pub other: usize,
    pub hallucinated: Option<usize>,
    pub extraction_error: Option<String>,
}

impl ItemReport {
    /// new + narration overlap + other = generated.
    pub fn identity_holds(&self) -> bool {
        self.new_facts + self.narration_overlap + self.other == self.generated.len()
    }
}

fn matches_any(judge: &dyn FactJudge, fact: &str, set: &[String]) -> bool {
    set.iter().any(|f| judge.equivalent(fact, f))
}

/// Scores one description's facts. `labels[i]` marks generated fact i as
/// hallucinated.
pub fn score_description(
    judge: &dyn FactJudge,
    id: &str,
    generated: &[String],
    narration: &[String],
    reference: &[String],
    labels: Option<&[bool]>,
) -> Result<ItemReport, EvalError> {
    if let Some(l) = labels {
        if l.len() != generated.len() {
            return Err(EvalError::Argument(format!(
                "item {id}: {} hallucination labels for {} generated facts",
                l.len(),
                generated.len()
            )));
        }
    }
    let judged: Vec<JudgedFact> = generated
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let judgment = if matches_any(judge, g, narration) {
                FactJudgment::Narration
            } else if matches_any(judge, g, reference) {
                FactJudgment::New
            } else {
                FactJudgment::Other
            };
            JudgedFact {
                fact: g.clone(),
                judgment,
                hallucinated: labels.map(|l| l[i]),
            }
        })
        .collect();
    let missed: Vec<String> = reference
        .iter()
        .filter(|r| !matches_any(judge, r, generated))
        .cloned()
        .collect();
    let count = |j: FactJudgment| judged.iter().filter(|f| f.judgment == j).count();
    Ok(ItemReport {
        id: id.to_string(),
        new_facts: count(FactJudgment::New),
        narration_overlap: count(FactJudgment::Narration),
        other: count(FactJudgment::Other),
        missed_facts: missed.len(),
        missed,
        hallucinated: labels.map(|l| l.iter().filter(|b| **b).count()),
        generated: judged,
        extraction_error: None,
    })
}

/// A text to split into facts, or facts already split.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FactSource {
    Text(String),
    Facts(Vec<String>),
}

/// One line of the description dataset.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptionItem {
    pub id: String,
    pub generated: FactSource,
    pub narration: FactSource,
    pub reference: FactSource,
    #[serde(default)]
    pub labels: Option<Vec<bool>>,
}

pub fn load_items(path: &Path) -> Result<Vec<DescriptionItem>, EvalError> {
    let raw = super::read(path)?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Format(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// `{item id: [bool per generated fact]}`.
pub fn load_labels(path: &Path) -> Result<BTreeMap<String, Vec<bool>>, EvalError> {
    let raw = super::read(path)?;
    serde_json::from_str(&raw).map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomicFactReport {
    pub items: Vec<ItemReport>,
    pub new_facts: usize,
    pub missed_facts: usize,
    pub mean_new_facts: f64,
    pub mean_missed_facts: f64,
    pub generated_facts: usize,
    /// Percent of generated facts labeled hallucinated; absent when any
    /// item lacks labels.
    pub hallucination_rate: Option<f64>,
}

fn resolve(judge: &dyn FactJudge, source: &FactSource) -> (Vec<String>, Option<String>) {
    match source {
        FactSource::Facts(f) => (f.clone(), None),
        FactSource::Text(t) if t.trim().is_empty() => (Vec::new(), None),
        FactSource::Text(t) => match judge.extract(t) {
            Ok(f) => (f, None),
            Err(e) => (Vec::new(), Some(e)),
        },
    }
}

pub fn score_items(
    judge: &dyn FactJudge,
    items: &[DescriptionItem],
    labels: Option<&BTreeMap<String, Vec<bool>>>,
) -> Result<AtomicFactReport, EvalError> {
    let mut reports = Vec::new();
    for item in items {
        let (generated, e1) = resolve(judge, &item.generated);
        let (narration, e2) = resolve(judge, &item.narration);
        let (reference, e3) = resolve(judge, &item.reference);
        let item_labels = item
            .labels
            .as_deref()
            .or_else(|| labels.and_then(|m| m.get(&item.id)).map(Vec::as_slice));
        let mut r = score_description(judge, &item.id, &generated, &narration, &reference, item_labels)?;
        r.extraction_error = e1.or(e2).or(e3);
        reports.push(r);
    }
    let n = reports.len().max(1) as f64;
    let new_facts: usize = reports.iter().map(|r| r.new_facts).sum();
    let missed_facts: usize = reports.iter().map(|r| r.missed_facts).sum();
    let generated_facts: usize = reports.iter().map(|r| r.generated.len()).sum();
    let hallucinated: Option<usize> = reports.iter().map(|r| r.hallucinated).sum();
    let hallucination_rate = hallucinated.map(|h| {
        if generated_facts == 0 {
            0.0
        } else {
            h as f64 / generated_facts as f64 * 100.0
        }
    });
    Ok(AtomicFactReport {
        new_facts,
        missed_facts,
        mean_new_facts: new_facts as f64 / n,
        mean_missed_facts: missed_facts as f64 / n,
        generated_facts,
        hallucination_rate,
        items: reports,
    })
}

impl AtomicFactReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| item | generated | new | in narration | other | missed | hallucinated |\n|---|---|---|---|---|---|---|\n");
        for r in &self.items {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                r.id,
                r.generated.len(),
                r.new_facts,
                r.narration_overlap,
                r.other,
                r.missed_facts,
                r.hallucinated.map_or("n/a".to_string(), |h| h.to_string())
            ));
        }
        out.push_str(&format!(
            "\nMean new facts: {:.2}\nMean missed facts: {:.2}\nHallucination rate: {}\n",
            self.mean_new_facts,
            self.mean_missed_facts,
            self.hallucination_rate
                .map_or("unavailable (no hallucination labels)".to_string(), |h| format!(
                    "{h:.2}%"
                ))
        ));
        for r in self.items.iter().filter(|r| r.extraction_error.is_some()) {
            out.push_str(&format!(
                "\nFact extraction failed for {}: {}\n",
                r.id,
                r.extraction_error.as_deref().unwrap_or_default()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn facts(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn clause_splitter() {
        let j = ClauseJudge::default();
        assert_eq!(
            j.extract("The pan is hot and oiled.").unwrap(),
            ["The pan is hot.", "The pan is oiled."]
        );
        assert_eq!(j.extract("The bowl is steel.").unwrap().len(), 1);
        assert!(matches!(extract_facts(&j, "  "), Err(EvalError::Argument(_))));
        assert_eq!(
            j.extract("She scoops flour into a cup, and levels it with a knife.")
                .unwrap(),
            ["She scoops flour into a cup.", "Levels it with a knife."]
        );
    }

    #[test]
    fn set_arithmetic() {
        let j = ClauseJudge { mode: MatchMode::Exact };
        let r = score_description(
            &j,
            "x",
            &facts(&["A", "B"]),
            &facts(&["A"]),
            &facts(&["A", "B", "C"]),
            None,
        )
        .unwrap();
        assert_eq!((r.new_facts, r.missed_facts), (1, 1));
        assert!(r.identity_holds());
        let same = facts(&["A", "B"]);
        let r = score_description(&j, "y", &same, &same, &same, None).unwrap();
        assert_eq!((r.new_facts, r.missed_facts), (0, 0));
        assert!(r.identity_holds());
    }

    #[test]
    fn hallucination_rate() {
        let j = ClauseJudge { mode: MatchMode::Exact };
        let item = DescriptionItem {
            id: "a".into(),
            generated: FactSource::Facts(facts(&["A", "B", "C", "D"])),
            narration: FactSource::Facts(vec![]),
            reference: FactSource::Facts(facts(&["A"])),
            labels: Some(vec![false, true, false, false]),
        };
        let r = score_items(&j, std::slice::from_ref(&item), None).unwrap();
        assert_eq!(r.hallucination_rate, Some(25.0));
        let unlabeled = DescriptionItem { labels: None, ..item };
        let r = score_items(&j, &[unlabeled], None).unwrap();
        assert_eq!(r.hallucination_rate, None);
        assert!(r.to_markdown().contains("unavailable"));
    }
}
