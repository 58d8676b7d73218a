//! Deterministic stand-in model for the mock backend. It recognizes each
//! pipeline prompt by its opening line, reads the JSON blocks the prompt
//! carries, and answers with simple text heuristics. Frames are read as
//! captions: UTF-8 bytes are the caption itself, PNGs carry it in a tEXt
//! "Description" chunk.

use std::collections::BTreeSet;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::compiler::{HIERARCHY_PROMPT_HEAD, ROLE_PROMPT_HEAD};
use crate::criteria::{heuristic_action_type, ANNOTATE_PROMPT_HEAD, DESCRIBE_PROMPT_HEAD};
use crate::gateway::{ImageBytes, ModelRequest, Responder, CAPTION_PROMPT};
use crate::intent::INTENT_PROMPT_HEAD;
use crate::knowledge::{I_DONT_KNOW, SUGGEST_PROMPT_HEAD};
use crate::plan::ActionType;
use crate::session::verdict::MONITOR_PROMPT_HEAD;
use crate::session::{KNOWLEDGE_PROMPT_HEAD, NARRATION_PROMPT_HEAD, VISUAL_PROMPT_HEAD};
use crate::text;

#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineResponder;

impl Responder for OfflineResponder {
    fn respond(&self, req: &ModelRequest, images: &[ImageBytes]) -> Option<String> {
        let p = req.prompt.as_str();
        let captions: Vec<String> = images.iter().map(|b| caption_of(b)).collect();
        if p.starts_with(ROLE_PROMPT_HEAD) {
            let sentence = p.rsplit_once("\nSentence: ")?.1;
            let sentence = sentence.strip_suffix("\nCategory:").unwrap_or(sentence);
            return Some(classify_role(sentence).into());
        }
        if p.starts_with(HIERARCHY_PROMPT_HEAD) {
            return Some(hierarchy(p));
        }
        if p.starts_with(CAPTION_PROMPT) {
            return captions.first().cloned();
        }
        if p.starts_with(DESCRIBE_PROMPT_HEAD) {
            return Some(describe(p, &captions));
        }
        if p.starts_with(ANNOTATE_PROMPT_HEAD) {
            return Some(annotate(p));
        }
        if p.starts_with(MONITOR_PROMPT_HEAD) {
            return Some(monitor(p, &captions));
        }
        if p.starts_with(NARRATION_PROMPT_HEAD) {
            let block: Value = serde_json::from_str(text::fenced_json(p, 0)?).ok()?;
            let seen = captions.last().cloned().unwrap_or_default();
            let fallback = block["batch_observation"].as_str().unwrap_or("").to_string();
            return Some(if seen.is_empty() { fallback } else { seen });
        }
        if p.starts_with(INTENT_PROMPT_HEAD) {
            let line = p.lines().find_map(|l| l.strip_prefix("Utterance: "))?;
            let utterance: String = serde_json::from_str(line).unwrap_or_else(|_| line.to_string());
            return Some(classify_intent(&utterance).into());
        }
        if p.starts_with(SUGGEST_PROMPT_HEAD) {
            return Some(suggest(p));
        }
        if p.starts_with(VISUAL_PROMPT_HEAD) {
            return Some(match captions.last() {
                Some(c) if !c.is_empty() => format!("I can see {}.", c.trim_end_matches('.')),
                _ => "I can't make that out. Try holding it closer to the camera.".into(),
            });
        }
        if p.starts_with(KNOWLEDGE_PROMPT_HEAD) {
            let block: Value = serde_json::from_str(text::fenced_json(p, 0)?).ok()?;
            let instruction = block["instruction"].as_str().unwrap_or("");
            return Some(format!(
                "I can't look that up right now. The current action is: {}",
                instruction.trim()
            ));
        }
        None
    }
}

// ---- frames ----

/// Caption carried by a frame: the bytes themselves when they are text,
/// otherwise a PNG tEXt "Description" chunk.
pub fn caption_of(bytes: &[u8]) -> String {
    if let Some(c) = png_description(bytes) {
        return c;
    }
    match std::str::from_utf8(bytes) {
        Ok(s) => s.trim().to_string(),
        Err(_) => String::new(),
    }
}

const PNG_SIGNATURE: &[u8] = &[0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

fn png_description(bytes: &[u8]) -> Option<String> {
    let mut rest = bytes.strip_prefix(PNG_SIGNATURE)?;
    while rest.len() >= 12 {
        let len = u32::from_be_bytes(rest[0..4].try_into().ok()?) as usize;
        let kind = &rest[4..8];
        let data = rest.get(8..8 + len)?;
        if kind == b"tEXt" {
            if let Some(pos) = data.iter().position(|b| *b == 0) {
                if &data[..pos] == b"Description" {
                    return Some(String::from_utf8_lossy(&data[pos + 1..]).trim().to_string());
                }
            }
        }
        rest = rest.get(12 + len..)?;
    }
    None
}

// ---- roles ----

const LEAD_INS: &[&str] = &[
    "we're going to",
    "we are going to",
    "i'm going to",
    "i am going to",
    "you're going to",
    "you are going to",
    "we're gonna",
    "i'm gonna",
    "you want to",
    "you'll want to",
    "go ahead and",
    "let's",
    "we'll",
    "i'll",
    "you'll",
    "we",
    "you",
    "just",
    "and",
    "so",
    "okay",
    "ok",
    "alright",
    "now",
    "next",
    "first",
    "then",
    "finally",
    "after that",
    "to start",
    "second",
    "third",
    "also",
    "lastly",
    "once that's done",
    "once",
];

const STEP_CUES: &[&str] = &[
    "now",
    "next",
    "first",
    "finally",
    "after that",
    "to start",
    "second",
    "third",
    "lastly",
];

const EXTRA_VERBS: &[&str] = &["use", "grab", "get", "need", "gather", "prepare", "make", "lay"];

fn is_verb(word: &str) -> bool {
    crate::compiler::is_action_verb(word) || EXTRA_VERBS.contains(&word)
}

/// Strips conversational lead-ins; returns the remainder and whether a
/// step cue ("now", "next", ...) was among them.
fn strip_lead_ins(sentence: &str) -> (String, bool) {
    let mut rest = sentence.trim().to_string();
    let mut cued = false;
    loop {
        let lower = rest.to_lowercase();
        let hit = LEAD_INS
            .iter()
            .find(|l| lower.starts_with(*l) && lower[l.len()..].chars().next().is_none_or(|c| c == ' ' || c == ','));
        match hit {
            Some(l) => {
                if STEP_CUES.contains(l) {
                    cued = true;
                }
                rest = rest[l.len()..].trim_start_matches([' ', ',']).to_string();
            }
            None => return (rest, cued),
        }
    }
}

fn has_any(lower: &str, cues: &[&str]) -> bool {
    let padded = format!(" {lower} ");
    cues.iter().any(|c| padded.contains(&format!(" {c} ")))
}

pub fn classify_role(sentence: &str) -> &'static str {
    let lower = text::normalize(sentence);
    let first = lower.split(' ').next().unwrap_or("");
    if ["hey", "hi", "hello", "welcome", "bye", "goodbye"].contains(&first)
        || has_any(&lower, &["see you", "catch you", "stay tuned", "thanks for watching"])
    {
        return "Greeting";
    }
    if has_any(
        &lower,
        &[
            "subscribe",
            "thumbs up",
            "like this video",
            "comment below",
            "whoops",
            "get started",
            "sponsor",
        ],
    ) {
        return "Miscellaneous";
    }
    if has_any(
        &lower,
        &[
            "because",
            "helps",
            "so that",
            "in order to",
            "this way",
            "which will",
            "that way",
        ],
    ) {
        return "Explanation";
    }
    if has_any(
        &lower,
        &[
            "make sure",
            "be careful",
            "avoid",
            "don't",
            "do not",
            "tip",
            "easier",
            "for the best",
            "for stability",
            "i find",
            "try not",
        ],
    ) {
        return "Supplementary";
    }
    if has_any(
        &lower,
        &[
            "today",
            "in this video",
            "we're making",
            "show you how",
            "i'll show you",
        ],
    ) {
        return "Overview";
    }
    let (rest, _) = strip_lead_ins(sentence);
    let head = text::words(&rest).into_iter().next().unwrap_or_default();
    if is_verb(&head) {
        return "Method";
    }
    if has_any(
        &lower,
        &[
            "and now we have",
            "there you have it",
            "enjoy",
            "turned out",
            "next time",
            "final result",
        ],
    ) {
        return "Conclusion";
    }
    if has_any(
        &lower,
        &["these are", "this is", "it looks", "it's", "looks", "texture", "smells"],
    ) {
        return "Description";
    }
    "Miscellaneous"
}

// ---- hierarchy ----

#[derive(Deserialize)]
struct Row {
    id: usize,
    role: String,
    text: String,
    start: f64,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct Meta {
    ingredients: Vec<String>,
    tools: Vec<String>,
}

const TOOL_LEXICON: &[(&str, &str)] = &[
    ("measuring cup", "Measuring cup"),
    ("cup", "Cup"),
    ("mixing bowl", "Mixing bowl"),
    ("bowl", "Bowl"),
    ("spatula", "Spatula"),
    ("whisk", "Whisk"),
    ("spoon", "Spoon"),
    ("pan", "Pan"),
    ("pot", "Pot"),
    ("oven", "Oven"),
    ("knife", "Knife"),
    ("baking sheet", "Baking sheet"),
    ("tray", "Tray"),
    ("scissors", "Scissors"),
    ("glue", "Glue"),
    ("tape", "Tape"),
    ("needle", "Needle"),
    ("mixer", "Mixer"),
];

const MATERIAL_LEXICON: &[&str] = &[
    "flour",
    "sugar",
    "brown sugar",
    "butter",
    "egg",
    "milk",
    "salt",
    "vanilla",
    "baking soda",
    "baking powder",
    "chocolate chips",
    "water",
    "oil",
    "bacon",
    "cheese",
    "bread",
    "paper",
    "yarn",
    "fabric",
    "ribbon",
    "honey",
    "oats",
    "cinnamon",
];

const UNITS: &[&str] = &[
    "cup",
    "cups",
    "tablespoon",
    "tablespoons",
    "tbsp",
    "teaspoon",
    "teaspoons",
    "tsp",
    "gram",
    "grams",
    "g",
    "ml",
    "oz",
    "ounce",
    "ounces",
    "pound",
    "pounds",
    "lb",
    "lbs",
    "pinch",
    "handful",
    "scoop",
    "scoops",
    "stick",
    "sticks",
    "large",
    "small",
    "medium",
    "rounded",
    "heaping",
    "half",
    "quarter",
    "piece",
    "pieces",
    "slice",
    "slices",
    "of",
    "a",
    "an",
    "the",
    "some",
    "your",
    "our",
    "kosher",
];

/// Ingredient name without its leading amount: "1 1/3 cups AP flour" gives
/// "AP flour".
pub fn strip_quantity(item: &str) -> String {
    let toks: Vec<&str> = item.split_whitespace().collect();
    let mut i = 0;
    while i < toks.len() {
        let t = toks[i]
            .trim_matches(|c: char| !c.is_alphanumeric() && c != '/')
            .to_lowercase();
        let numeric = !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || c == '/' || c == '.');
        if numeric || UNITS.contains(&t.as_str()) || text::parse_count(&t).is_some() {
            i += 1;
        } else {
            break;
        }
    }
    let rest = toks[i..].join(" ");
    let rest = rest.split(['(', ',']).next().unwrap_or("").trim().to_string();
    if rest.is_empty() {
        item.trim().to_string()
    } else {
        rest
    }
}

fn stems(s: &str) -> BTreeSet<String> {
    text::words(s).iter().map(|w| text::stem(w)).collect()
}

/// An item matches when its head noun (last word) occurs in the text.
fn mentions(text_stems: &BTreeSet<String>, item: &str) -> bool {
    text::words(item)
        .last()
        .is_some_and(|head| text_stems.contains(&text::stem(head)))
}

fn phrase_in(haystack: &str, phrase: &str) -> bool {
    let words: Vec<String> = text::words(haystack).iter().map(|w| text::stem(w)).collect();
    let needle: Vec<String> = text::words(phrase).iter().map(|w| text::stem(w)).collect();
    !needle.is_empty() && words.windows(needle.len()).any(|w| w == needle.as_slice())
}

fn extract_items(step_text: &str, meta: &Meta) -> (Vec<String>, Vec<String>) {
    let st = stems(step_text);
    let tools: Vec<String> = if meta.tools.is_empty() {
        let mut out: Vec<String> = Vec::new();
        for (phrase, name) in TOOL_LEXICON {
            if phrase_in(step_text, phrase) && !out.iter().any(|o| o.to_lowercase().contains(&phrase.to_string())) {
                out.push(name.to_string());
            }
        }
        out
    } else {
        meta.tools.iter().filter(|t| mentions(&st, t)).cloned().collect()
    };
    let materials: Vec<String> = if meta.ingredients.is_empty() {
        MATERIAL_LEXICON
            .iter()
            .filter(|m| phrase_in(step_text, m))
            .map(|m| text::capitalize(m))
            .collect()
    } else {
        meta.ingredients
            .iter()
            .map(|i| strip_quantity(i))
            .filter(|name| mentions(&st, name))
            .map(|name| text::capitalize(&name))
            .collect()
    };
    (tools, materials)
}

/// Splits one method sentence into single-verb clauses.
pub fn split_actions(sentence: &str) -> Vec<String> {
    let (body, _) = strip_lead_ins(sentence);
    let body = body.trim().trim_end_matches(['.', '!', '?']).to_string();
    let mut clauses: Vec<String> = vec![];
    let mut current: Vec<&str> = vec![];
    let tokens: Vec<&str> = body.split(' ').collect();
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        let bare = tok.trim_end_matches(',').to_lowercase();
        let joiner = bare == "and" || bare == "then";
        let prev_comma = current.last().is_some_and(|t| t.ends_with(','));
        if joiner || prev_comma {
            let mut j = i + usize::from(joiner);
            if tokens.get(j).is_some_and(|t| t.eq_ignore_ascii_case("then")) {
                j += 1;
            }
            if let Some(next) = tokens.get(j) {
                let w = text::words(next).into_iter().next().unwrap_or_default();
                if is_verb(&w) && !current.is_empty() {
                    clauses.push(current.join(" ").trim_end_matches(',').to_string());
                    current.clear();
                    i = j;
                    continue;
                }
            }
        }
        current.push(tok);
        i += 1;
    }
    if !current.is_empty() {
        clauses.push(current.join(" ").trim_end_matches(',').to_string());
    }
    clauses
        .into_iter()
        .flat_map(|c| split_list(&c))
        .map(|c| crate::session::as_sentence(&c))
        .collect()
}

/// "Add salt, sugar, and vanilla extract" becomes one clause per item.
fn split_list(clause: &str) -> Vec<String> {
    let Some((verb, rest)) = clause.split_once(' ') else {
        return vec![clause.to_string()];
    };
    if !rest.contains(',') {
        return vec![clause.to_string()];
    }
    let parts: Vec<String> = rest
        .split(',')
        .flat_map(|p| {
            let p = p.trim();
            let p = p.strip_prefix("and ").unwrap_or(p);
            match p.split_once(" and ") {
                Some((a, b)) => vec![a.to_string(), b.to_string()],
                None => vec![p.to_string()],
            }
        })
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect();
    let short = parts.iter().all(|p| p.split(' ').count() <= 4);
    if parts.len() >= 3 && short {
        parts.into_iter().map(|p| format!("{verb} {p}")).collect()
    } else {
        vec![clause.to_string()]
    }
}

fn step_name(instruction: &str) -> String {
    let words: Vec<String> = text::words(instruction);
    let verb = words.first().cloned().unwrap_or_default();
    let obj = action_object(instruction);
    if obj.is_empty() {
        text::capitalize(&verb)
    } else {
        text::capitalize(&format!("{verb} {obj}"))
    }
}

fn hierarchy(prompt: &str) -> String {
    let rows: Vec<Row> = text::fenced_json(prompt, 0)
        .and_then(|b| serde_json::from_str(b).ok())
        .unwrap_or_default();
    let meta: Meta = text::fenced_json(prompt, 1)
        .and_then(|b| serde_json::from_str::<Option<Meta>>(b).ok())
        .flatten()
        .unwrap_or_default();
    let mut steps: Vec<(Vec<Value>, String)> = Vec::new();
    for row in rows.iter().filter(|r| r.role == "Method") {
        let (_, cued) = strip_lead_ins(&row.text);
        if cued || steps.is_empty() {
            steps.push((Vec::new(), String::new()));
        }
        let (actions, text_acc) = steps.last_mut().expect("a step exists");
        for instruction in split_actions(&row.text) {
            text_acc.push_str(&instruction);
            text_acc.push(' ');
            actions.push(json!({
                "instruction": instruction,
                "supplementary": [],
                "sources": [row.id],
                "start": row.start,
            }));
        }
    }
    let steps: Vec<Value> = steps
        .into_iter()
        .filter(|(a, _)| !a.is_empty())
        .map(|(actions, step_text)| {
            let (tools, materials) = extract_items(&step_text, &meta);
            let first = actions[0]["instruction"].as_str().unwrap_or("").to_string();
            json!({
                "step_name": step_name(&first),
                "actions": actions,
                "tools": tools,
                "materials": materials,
            })
        })
        .collect();
    json!({ "steps": steps }).to_string()
}

// ---- descriptions ----

fn describe(prompt: &str, captions: &[String]) -> String {
    let block: Value = text::fenced_json(prompt, 0)
        .and_then(|b| serde_json::from_str(b).ok())
        .unwrap_or(Value::Null);
    let instruction = block["instruction"].as_str().unwrap_or("").trim();
    let mut parts = vec![format!(
        "The person demonstrates how to {}.",
        lower_first(instruction.trim_end_matches('.'))
    )];
    let mut seen = BTreeSet::new();
    for c in captions.iter().filter(|c| !c.is_empty()) {
        if seen.insert(text::normalize(c)) && seen.len() <= 3 {
            parts.push(crate::session::as_sentence(c));
        }
    }
    parts.join(" ")
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

// ---- criteria ----

const PREPOSITIONS: &[&str] = &[
    "into", "in", "onto", "on", "with", "until", "for", "to", "over", "from", "through", "across", "inside", "at",
    "under", "around",
];
const DEST_PREPS: &[&str] = &["into", "in", "onto", "on", "inside", "over"];
/// In order of preference when a step names several.
const CONTAINERS: &[&str] = &[
    "bowl", "pan", "pot", "skillet", "dish", "tray", "sheet", "tin", "mold", "jar", "box", "cup",
];
const NON_CONTAINERS: &[&str] = &["mixture", "batter", "dough", "it", "them"];

/// Object phrase after the verb, without amounts: "Put 1 cup of flour into
/// the bowl." gives "flour".
pub fn action_object(instruction: &str) -> String {
    let words = text::words(instruction);
    let mut obj = Vec::new();
    for w in words.iter().skip(1) {
        if PREPOSITIONS.contains(&w.as_str()) || w == "and" || (!obj.is_empty() && is_verb(w)) {
            break;
        }
        obj.push(w.clone());
    }
    strip_quantity(&obj.join(" "))
}

fn after_prep(instruction: &str, preps: &[&str]) -> Option<String> {
    let words = text::words(instruction);
    let idx = words.iter().position(|w| preps.contains(&w.as_str()))?;
    let mut out = Vec::new();
    for w in &words[idx + 1..] {
        if PREPOSITIONS.contains(&w.as_str()) || w == "and" || w == "until" {
            break;
        }
        if ["the", "a", "an", "your", "our"].contains(&w.as_str()) {
            continue;
        }
        out.push(w.clone());
    }
    (!out.is_empty()).then(|| out.join(" "))
}

fn until_clause(instruction: &str) -> Option<String> {
    let lower = instruction.to_lowercase();
    let idx = lower.find(" until ")?;
    Some(instruction[idx + 7..].trim().trim_end_matches('.').to_string())
}

fn number_word(n: u32) -> String {
    const W: [&str; 13] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    ];
    W.get(n as usize).map_or(n.to_string(), |w| w.to_string())
}

fn singular(noun: &str) -> String {
    match noun.rsplit_once(' ') {
        Some((head, last)) => format!("{head} {}", text::stem(last)),
        None => text::stem(noun),
    }
}

fn container(dest: Option<&str>, tools: &[String], description: &str) -> String {
    if let Some(d) = dest {
        let last = d.split(' ').next_back().unwrap_or(d);
        if !NON_CONTAINERS.contains(&last) {
            return d.to_string();
        }
    }
    let from_tools = CONTAINERS
        .iter()
        .find(|c| {
            tools
                .iter()
                .any(|t| text::words(t).iter().any(|w| text::stem(w) == **c))
        })
        .map(|c| c.to_string());
    if let Some(c) = from_tools {
        return c;
    }
    let desc_words: Vec<String> = text::words(description).iter().map(|w| text::stem(w)).collect();
    if let Some(c) = CONTAINERS.iter().find(|c| desc_words.iter().any(|w| w == **c)) {
        return c.to_string();
    }
    dest.unwrap_or("work area").to_string()
}

const TOUCH: &[&str] = &[
    "smooth", "soft", "firm", "sticky", "crispy", "crisp", "dry", "thick", "fluffy", "tender", "melted",
];
const SMELL: &[&str] = &["brown", "golden", "toasted", "toasty", "caramelized", "fragrant"];

fn nonvisual_for(subject: &str, completion_adj: &str) -> Vec<String> {
    let words = text::words(completion_adj);
    if let Some(adj) = words.iter().find(|w| TOUCH.contains(&w.as_str())) {
        return vec![format!("{} feels {adj} to the touch.", text::capitalize(subject))];
    }
    if words.iter().any(|w| SMELL.contains(&w.as_str())) {
        return vec![format!("{} smells toasty.", text::capitalize(subject))];
    }
    if words.iter().any(|w| w.starts_with("boil") || w.starts_with("bubbl")) {
        return vec!["You can hear it bubbling.".into()];
    }
    Vec::new()
}

fn utensil(verb: &str, tools: &[String]) -> String {
    const UTENSILS: &[&str] = &["whisk", "spatula", "spoon", "mixer", "fork"];
    if verb == "whisk" {
        return "whisk".into();
    }
    tools
        .iter()
        .find_map(|t| {
            let low = t.to_lowercase();
            UTENSILS.iter().find(|u| low.contains(*u)).map(|u| u.to_string())
        })
        .unwrap_or_else(|| "spoon".into())
}

const MIXING_VERBS: &[&str] = &["whisk", "stir", "mix", "beat", "fold", "blend", "knead", "cream"];
const CONTINUOUS_VERBS: &[&str] = &["simmer", "boil", "bake", "fry", "cook", "toast", "rest", "melt"];

#[derive(Debug, Clone, PartialEq)]
pub struct Criteria {
    pub action_type: ActionType,
    pub in_progress: Vec<String>,
    pub completion: Vec<String>,
    pub mistake: Vec<String>,
    pub nonvisual: Vec<String>,
}

/// Template criteria for one instruction.
pub fn criteria_for(instruction: &str, tools: &[String], description: &str) -> Criteria {
    let verb = text::words(instruction).into_iter().next().unwrap_or_default();
    let mixing = MIXING_VERBS.contains(&verb.as_str());
    let action_type = match heuristic_action_type(instruction) {
        ActionType::Punctual if mixing || CONTINUOUS_VERBS.contains(&verb.as_str()) => ActionType::Durative,
        t => t,
    };
    let obj = action_object(instruction);
    let obj = match obj.as_str() {
        "" | "it" | "them" if mixing => "mixture".to_string(),
        "" | "it" | "them" => "work".to_string(),
        _ => obj,
    };
    let dest = after_prep(instruction, DEST_PREPS).or_else(|| {
        after_prep(instruction, &["with"])
            .filter(|w| w.split(' ').next_back().is_some_and(|last| CONTAINERS.contains(&last)))
    });
    let place = container(dest.as_deref(), tools, description);
    let the_obj = format!("the {obj}");
    let mut c = Criteria {
        action_type,
        in_progress: vec![],
        completion: vec![],
        mistake: vec![],
        nonvisual: vec![],
    };
    match action_type {
        ActionType::Punctual => {
            c.completion.push(format!("The {obj} is visible in the {place}."));
            c.mistake
                .push(format!("{} spills outside the {place}.", text::capitalize(&obj)));
        }
        ActionType::Iterative => {
            let n = text::parse_count(instruction).unwrap_or(2).max(2);
            let nw = number_word(n);
            let partial = match n {
                2 => format!("One {} is visible in the {place}, but not both.", singular(&obj)),
                3 => format!("One or two {obj} are visible in the {place}, but not all three."),
                _ => format!("Fewer than {nw} {obj} are visible in the {place}."),
            };
            c.in_progress.push(partial);
            let all = if n == 2 {
                "Both".to_string()
            } else {
                format!("All {nw}")
            };
            c.completion.push(format!("{all} {obj} are visible in the {place}."));
            c.mistake.push(format!("More than {nw} {obj} added"));
            if text::stem(&obj).contains("egg") {
                c.mistake.push("Eggshell is visible.".into());
            }
        }
        ActionType::Durative => {
            let resting = ["let", "wait", "rest", "cool", "chill", "set"].contains(&verb.as_str());
            c.in_progress.push(if mixing {
                format!("The {} is moving through {the_obj}.", utensil(&verb, tools))
            } else if resting {
                format!("{} sits undisturbed.", text::capitalize(&the_obj))
            } else {
                format!("{} is {}ing.", text::capitalize(&the_obj), verb.trim_end_matches('e'))
            });
            match until_clause(instruction) {
                Some(u) => {
                    let lower = u.to_lowercase();
                    let state = ["it is ", "it's ", "they are ", "it looks ", "it becomes "]
                        .iter()
                        .find_map(|p| lower.strip_prefix(p).map(str::to_string));
                    match state {
                        Some(adj) => {
                            c.completion
                                .push(format!("{} looks {adj}.", text::capitalize(&the_obj)));
                            c.nonvisual = nonvisual_for(&obj, &adj);
                        }
                        None if text::words(&u).len() <= 3 => {
                            c.completion.push(format!("{} looks {u}.", text::capitalize(&the_obj)));
                            c.nonvisual = nonvisual_for(&obj, &u);
                        }
                        None => {
                            c.completion.push(crate::session::as_sentence(&u));
                            c.nonvisual = nonvisual_for(&obj, &u);
                        }
                    }
                }
                None => {
                    let rest = instruction
                        .to_lowercase()
                        .split_once(" for ")
                        .map(|(_, d)| d.trim_end_matches('.').to_string());
                    c.completion.push(match rest {
                        Some(d) => format!("{} has been left for {d}.", text::capitalize(&the_obj)),
                        None if mixing => format!("{} looks evenly combined.", text::capitalize(&the_obj)),
                        None => format!("{} looks finished.", text::capitalize(&the_obj)),
                    });
                }
            }
            c.mistake.push(if mixing {
                format!("{} splashes out of the {place}.", text::capitalize(&the_obj))
            } else if resting {
                format!("{} is disturbed before the time is up.", text::capitalize(&the_obj))
            } else {
                format!("{} looks burnt or blackened.", text::capitalize(&the_obj))
            });
        }
    }
    c
}

fn annotate(prompt: &str) -> String {
    let block: Value = text::fenced_json(prompt, 0)
        .and_then(|b| serde_json::from_str(b).ok())
        .unwrap_or(Value::Null);
    let tools: Vec<String> = block["tools"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
        .unwrap_or_default();
    let actions: Vec<Value> = block["actions"]
        .as_array()
        .cloned()
        .unwrap_or_default()
        .iter()
        .map(|a| {
            let instruction = a["instruction"].as_str().unwrap_or("");
            let description = a["demonstration_description"].as_str().unwrap_or("");
            let c = criteria_for(instruction, &tools, description);
            json!({
                "id": a["id"],
                "action_type": c.action_type.as_str(),
                "in_progress_criteria": c.in_progress,
                "completion_criteria": c.completion,
                "mistake_criteria": c.mistake,
                "nonvisual_completion_criteria": c.nonvisual,
            })
        })
        .collect();
    json!({ "actions": actions }).to_string()
}

// ---- monitoring ----

fn strings(v: &Value) -> Vec<String> {
    v.as_array()
        .map(|a| a.iter().filter_map(|x| x.as_str().map(str::to_string)).collect())
        .unwrap_or_default()
}

const MATCH: f64 = 0.75;

fn best(criteria: &[String], caption: &str) -> Option<(String, f64)> {
    criteria
        .iter()
        .map(|c| (c.clone(), text::coverage(c, caption)))
        .fold(None, |acc: Option<(String, f64)>, (c, s)| match acc {
            Some((_, b)) if b >= s => acc,
            _ => Some((c, s)),
        })
}

fn monitor(prompt: &str, captions: &[String]) -> String {
    let block: Value = text::fenced_json(prompt, 0)
        .and_then(|b| serde_json::from_str(b).ok())
        .unwrap_or(Value::Null);
    let caption = captions.last().cloned().unwrap_or_default();
    let instruction = block["instruction"].as_str().unwrap_or("");
    let in_progress = strings(&block["in_progress_criteria"]);
    let completion = strings(&block["completion_criteria"]);
    let mistakes = strings(&block["mistake_criteria"]);
    let target = block["target_count"].as_u64().map(|n| n as u32);
    let iterative = block["action_type"] == "iterative";
    let verdict = |status: &str, criterion: Option<String>, count: Option<u32>| {
        json!({
            "status": status,
            "rationale": caption,
            "repetition_count": count,
            "criterion": criterion,
        })
        .to_string()
    };
    if caption.is_empty() {
        return json!({"status": "irrelevant", "rationale": "nothing is in view"}).to_string();
    }
    if let Some((c, s)) = best(&mistakes, &caption) {
        if s >= MATCH {
            return verdict("mistake", Some(c), None);
        }
    }
    if iterative {
        if let (Some(n), Some(t)) = (text::parse_count(&caption), target) {
            if n >= t {
                return verdict("complete", None, Some(n));
            }
            return verdict("in_progress", None, Some(n));
        }
    }
    if best(&completion, &caption).is_some_and(|(_, s)| s >= MATCH) {
        return verdict("complete", None, None);
    }
    let mut topic = in_progress.join(" ");
    topic.push(' ');
    topic.push_str(instruction);
    if text::coverage(&caption, &topic) > 0.0 {
        return verdict("in_progress", None, None);
    }
    verdict("irrelevant", None, None)
}

// ---- intents ----

pub fn classify_intent(utterance: &str) -> &'static str {
    let lower = text::normalize(utterance);
    if crate::intent::rule_prepass(utterance, false).is_some()
        || has_any(
            &lower,
            &[
                "go back",
                "next step",
                "repeat",
                "previous step",
                "skip",
                "start over",
                "say that again",
                "step after",
            ],
        )
    {
        return "navigation";
    }
    if has_any(
        &lower,
        &[
            "easier",
            "tip",
            "tips",
            "trick",
            "workaround",
            "safer",
            "without measuring",
            "mess",
            "better way",
        ],
    ) {
        return "tips_workarounds";
    }
    if has_any(
        &lower,
        &[
            "done",
            "ready",
            "finished",
            "enough",
            "look",
            "looking",
            "how's it",
            "how is it",
            "complete",
        ],
    ) {
        return "progress_feedback";
    }
    if has_any(
        &lower,
        &[
            "which",
            "label",
            "read",
            "what color",
            "expiration",
            "in front of me",
            "this one",
            "see",
        ],
    ) {
        return "visual_qa";
    }
    "nonvisual_knowledge"
}

// ---- suggestions ----

fn suggest(prompt: &str) -> String {
    let query = prompt.lines().find_map(|l| l.strip_prefix("Query: ")).unwrap_or("");
    let action = query
        .split_once('"')
        .and_then(|(_, r)| r.split_once('"'))
        .map_or(query, |(a, _)| a);
    let chunks: Vec<Value> = text::fenced_json(prompt, 0)
        .and_then(|b| serde_json::from_str(b).ok())
        .unwrap_or_default();
    let needle = text::content_words(action);
    let mut best_sentence: Option<(usize, String)> = None;
    for chunk in &chunks {
        for s in text::sentences(chunk["text"].as_str().unwrap_or("")) {
            let overlap = text::content_words(&s).intersection(&needle).count();
            if overlap > 0 && best_sentence.as_ref().is_none_or(|(b, _)| overlap > *b) {
                best_sentence = Some((overlap, s));
            }
        }
    }
    match best_sentence {
        Some((_, s)) => s,
        None => I_DONT_KNOW.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_png_description() {
        let mut png = PNG_SIGNATURE.to_vec();
        let data = b"Description\0a bowl of flour";
        png.extend((data.len() as u32).to_be_bytes());
        png.extend(b"tEXt");
        png.extend(data);
        png.extend([0, 0, 0, 0]);
        assert_eq!(caption_of(&png), "a bowl of flour");
        assert_eq!(caption_of(b"  eggs in a bowl "), "eggs in a bowl");
    }

    #[test]
    fn roles() {
        assert_eq!(classify_role("Hey, I'm John Kanell."), "Greeting");
        assert_eq!(
            classify_role("We're going to pour that into our silicone baking cups."),
            "Method"
        );
        assert_eq!(
            classify_role("So if you like this video, please give it a thumbs up and remember to subscribe."),
            "Miscellaneous"
        );
        assert_eq!(classify_role("Today we're making chocolate chip cookies."), "Overview");
        assert_eq!(
            classify_role("Resting the dough helps improve the texture of the cookies."),
            "Explanation"
        );
        assert_eq!(
            classify_role("Use precise measurements for the best results."),
            "Supplementary"
        );
    }

    #[test]
    fn splits_compound_sentences() {
        assert_eq!(split_actions("Add sugar and whisk."), vec!["Add sugar.", "Whisk."]);
        assert_eq!(
            split_actions("Now add salt, sugar, and vanilla extract."),
            vec!["Add salt.", "Add sugar.", "Add vanilla extract."]
        );
        assert_eq!(
            split_actions("Mix the mixture with a spatula until no residue flour is visible."),
            vec!["Mix the mixture with a spatula until no residue flour is visible."]
        );
        assert_eq!(
            split_actions("Crack the eggs, then stir them in."),
            vec!["Crack the eggs.", "Stir them in."]
        );
    }

    #[test]
    fn quantities_are_stripped() {
        assert_eq!(strip_quantity("1 1/3 cups AP flour"), "AP flour");
        assert_eq!(strip_quantity("1/2 tsp salt (kosher)"), "salt");
        assert_eq!(action_object("Put 1 cup of flour into the bowl."), "flour");
        assert_eq!(action_object("Add 3 eggs into the mixture."), "eggs");
        assert_eq!(action_object("Let the dough rest for 30 minutes."), "dough");
    }

    #[test]
    fn criteria_templates() {
        let tools = vec!["whisk".to_string(), "bowl".to_string()];
        let c = criteria_for("Put 1 cup of flour into the bowl.", &tools, "");
        assert_eq!(c.action_type, ActionType::Punctual);
        assert_eq!(c.completion, vec!["The flour is visible in the bowl."]);
        assert_eq!(c.mistake, vec!["Flour spills outside the bowl."]);
        assert!(c.in_progress.is_empty());
        let c = criteria_for("Add 3 eggs into the mixture.", &tools, "");
        assert_eq!(c.action_type, ActionType::Iterative);
        assert_eq!(
            c.in_progress,
            vec!["One or two eggs are visible in the bowl, but not all three."]
        );
        assert_eq!(c.completion, vec!["All three eggs are visible in the bowl."]);
        let c = criteria_for("Whisk the mixture until it is smooth.", &tools, "");
        assert_eq!(c.action_type, ActionType::Durative);
        assert_eq!(c.in_progress, vec!["The whisk is moving through the mixture."]);
        assert_eq!(c.nonvisual, vec!["Mixture feels smooth to the touch."]);
        let tools: Vec<String> = ["Cup", "Mixing bowl", "Whisk"].map(String::from).to_vec();
        let c = criteria_for("Add sugar.", &tools, "");
        assert_eq!(c.completion, vec!["The sugar is visible in the bowl."]);
        let c = criteria_for("Measure the butter with a cup.", &tools, "");
        assert_eq!(c.completion, vec!["The butter is visible in the cup."]);
    }

    #[test]
    fn intents() {
        assert_eq!(classify_intent("go back"), "navigation");
        assert_eq!(classify_intent("What's an easier way to do this?"), "tips_workarounds");
        assert_eq!(classify_intent("Is it done yet?"), "progress_feedback");
        assert_eq!(classify_intent("Which of these is salt?"), "visual_qa");
        assert_eq!(classify_intent("What's half of 3/4 cup?"), "nonvisual_knowledge");
    }

    fn offline_gateway() -> crate::gateway::Gateway {
        use crate::gateway::{Fixtures, Gateway, MockBackend};
        use std::sync::Arc;
        Gateway::new(Arc::new(
            MockBackend::new(Fixtures::default()).with_responder(Arc::new(OfflineResponder)),
        ))
    }

    #[test]
    fn builds_hierarchy_from_method_sentences() {
        use crate::compiler::{build_hierarchy, RecipeMetadata, Role, TranscriptSentence};
        let rows = [
            ("First, measure 1 cup of sugar into the mixing bowl.", Role::Method),
            ("Add sugar and whisk.", Role::Method),
            ("Now add 1 cup of flour into the bowl.", Role::Method),
            (
                "Mix the mixture with a spatula until no residue flour is visible.",
                Role::Method,
            ),
            ("Let the dough rest for 30 minutes.", Role::Method),
            ("Resting the dough helps improve the texture.", Role::Explanation),
        ];
        let sentences: Vec<TranscriptSentence> = rows
            .iter()
            .enumerate()
            .map(|(i, (t, r))| TranscriptSentence {
                id: i,
                text: t.to_string(),
                start: i as f64 * 10.0,
                end: i as f64 * 10.0 + 8.0,
                role: Some(*r),
            })
            .collect();
        let meta = RecipeMetadata {
            title: None,
            ingredients: vec!["1 cup sugar".into(), "1 cup flour".into()],
            tools: vec!["Cup".into(), "Spatula".into(), "Mixing bowl".into(), "Whisk".into()],
        };
        let steps = build_hierarchy(&offline_gateway(), &sentences, Some(&meta)).unwrap();
        assert_eq!(steps.len(), 2);
        let first: Vec<_> = steps[0].actions.iter().map(|a| a.instruction.as_str()).collect();
        assert_eq!(
            first,
            ["Measure 1 cup of sugar into the mixing bowl.", "Add sugar.", "Whisk."]
        );
        assert_eq!(steps[0].actions[1].start, steps[0].actions[2].start);
        let second: Vec<_> = steps[1].actions.iter().map(|a| a.instruction.as_str()).collect();
        assert_eq!(
            second,
            [
                "Add 1 cup of flour into the bowl.",
                "Mix the mixture with a spatula until no residue flour is visible.",
                "Let the dough rest for 30 minutes.",
            ]
        );
        assert_eq!(steps[1].tools, ["Cup", "Spatula", "Mixing bowl"]);
        assert_eq!(steps[1].new_tools, ["Spatula"]);
    }

    #[test]
    fn monitors_from_captions() {
        use crate::gateway::ModelRequest;
        use crate::plan::fixtures::three_step_plan;
        let plan = three_step_plan();
        let eggs = &plan.steps[0].actions[1];
        let prompt = crate::session::monitor_prompt(eggs, None);
        let ask = |caption: &str| {
            let reply = OfflineResponder
                .respond(
                    &ModelRequest::batch(prompt.clone()),
                    &[std::sync::Arc::from(caption.as_bytes())],
                )
                .unwrap();
            crate::session::parse_verdict(&reply, eggs)
        };
        let v = ask("two eggs in the bowl");
        assert_eq!(v.status, crate::session::Status::InProgress);
        assert_eq!(v.repetition_count, Some(2));
        assert_eq!(ask("three eggs in the bowl").status, crate::session::Status::Complete);
        assert_eq!(ask("a cat on the sofa").status, crate::session::Status::Irrelevant);
    }
}
