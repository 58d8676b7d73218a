//! Small text utilities shared by the heuristic backends, lints and matchers.

use std::collections::BTreeSet;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "of", "to", "in", "into", "on", "onto", "at", "for", "with", "by", "from",
    "up", "out", "over", "is", "are", "was", "were", "be", "been", "it", "its", "it's", "this", "that", "these",
    "those", "as", "so", "not", "no", "yet", "all", "some", "any", "you", "your", "we", "our", "i", "my", "me", "they",
    "their", "them", "he", "she", "his", "her", "there", "here", "then", "now", "just", "very", "until", "while", "if",
    "do", "does", "did", "has", "have", "had", "can", "will", "would", "should", "could", "about", "than", "too",
    "also", "what", "which", "when", "where", "how", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "more", "most", "looks", "look", "visible", "seems", "being", "get", "let", "go", "going", "re",
    "ll", "ve", "s", "t",
];

const NUMBER_WORDS: &[(&str, u32)] = &[
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
    ("ten", 10),
    ("eleven", 11),
    ("twelve", 12),
    ("a couple", 2),
    ("dozen", 12),
];

/// Lowercased alphanumeric tokens; apostrophes inside a word are kept.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || (ch == '\'' && !cur.is_empty()) || (ch == '’' && !cur.is_empty()) {
            let ch = if ch == '’' { '\'' } else { ch };
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur).trim_end_matches('\'').to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur.trim_end_matches('\'').to_string());
    }
    out
}

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

/// Crude plural folding so "eggs" and "egg" meet.
pub fn stem(word: &str) -> String {
    if word.len() > 3 && word.ends_with("ies") {
        return format!("{}y", &word[..word.len() - 3]);
    }
    if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Stemmed, stopword-free vocabulary of a text.
pub fn content_words(text: &str) -> BTreeSet<String> {
    words(text)
        .into_iter()
        .filter(|w| !is_stopword(w) && (w.len() > 1 || w.chars().all(|c| c.is_ascii_digit())))
        .map(|w| stem(&w))
        .collect()
}

/// Fraction of `needle`'s content words that also occur in `haystack`.
pub fn coverage(needle: &str, haystack: &str) -> f64 {
    let n = content_words(needle);
    if n.is_empty() {
        return 0.0;
    }
    let h = content_words(haystack);
    n.intersection(&h).count() as f64 / n.len() as f64
}

/// First explicit count in the text, digits or small number words.
/// Fractions such as "1/2" are not counts.
pub fn parse_count(text: &str) -> Option<u32> {
    let toks: Vec<String> = text
        .split_whitespace()
        .filter(|t| !t.contains('/'))
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .collect();
    for (i, tok) in toks.iter().enumerate() {
        if let Ok(n) = tok.parse::<u32>() {
            return Some(n);
        }
        for (word, n) in NUMBER_WORDS {
            let hit = match word.split_once(' ') {
                None => tok == word,
                Some((a, b)) => tok == a && toks.get(i + 1).is_some_and(|t| t == b),
            };
            if hit {
                return Some(*n);
            }
        }
    }
    None
}

/// Lowercase, punctuation-free, single-spaced form used for text matching.
pub fn normalize(text: &str) -> String {
    words(text).join(" ")
}

/// Sentences split on terminal punctuation; trailing text without a terminator
/// becomes the last sentence.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        cur.push(ch);
        if matches!(ch, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some(next) => next.is_whitespace(),
            };
            if boundary {
                let s = cur.trim().to_string();
                if !s.is_empty() {
                    out.push(s);
                }
                cur.clear();
            }
        }
    }
    let s = cur.trim().to_string();
    if !s.is_empty() {
        out.push(s);
    }
    out
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Pulls the first JSON object or array out of a model reply, tolerating
/// code fences and chatter around it.
pub fn extract_json(reply: &str) -> Option<&str> {
    let start = reply.find(['{', '['])?;
    let open = reply[start..].chars().next()?;
    let close = if open == '{' { '}' } else { ']' };
    let end = reply.rfind(close)?;
    (end > start).then(|| &reply[start..=end])
}

/// Contents of the `n`-th fenced ```json block.
pub fn fenced_json(prompt: &str, n: usize) -> Option<&str> {
    let mut rest = prompt;
    let mut idx = 0;
    loop {
        let open = rest.find("```json")?;
        let body = &rest[open + 7..];
        let close = body.find("```")?;
        if idx == n {
            return Some(body[..close].trim());
        }
        idx += 1;
        rest = &body[close + 3..];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_fold_case_and_punctuation() {
        assert_eq!(words("Hey, I'm John!"), vec!["hey", "i'm", "john"]);
    }

    #[test]
    fn content_words_drop_stopwords_and_plurals() {
        let cw = content_words("Add 3 eggs into the mixture.");
        assert!(cw.contains("egg"));
        assert!(cw.contains("3"));
        assert!(!cw.contains("the"));
    }

    #[test]
    fn counts_skip_fractions() {
        assert_eq!(parse_count("Add 3 eggs"), Some(3));
        assert_eq!(parse_count("add three scoops"), Some(3));
        assert_eq!(parse_count("Add 1/2 cup sugar"), None);
        assert_eq!(parse_count("whisk well"), None);
    }

    #[test]
    fn sentence_split_keeps_trailing_fragment() {
        assert_eq!(
            sentences("Hi. Add flour. then mix"),
            vec!["Hi.", "Add flour.", "then mix"]
        );
        assert_eq!(sentences("Costs 3.5 dollars."), vec!["Costs 3.5 dollars."]);
    }

    #[test]
    fn json_extraction() {
        assert_eq!(extract_json("```json\n{\"a\":1}\n```"), Some("{\"a\":1}"));
        assert_eq!(fenced_json("x ```json\n[1]\n``` y ```json\n{}\n```", 1), Some("{}"));
        assert_eq!(extract_json("no json here"), None);
    }
}
