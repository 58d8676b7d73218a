//! Accessibility resource store: ingestion, exact cosine retrieval and
//! retrieval-grounded tips.

use std::cmp::Ordering;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{cosine, ContextId, Gateway, GatewayError, ImageRef};
use crate::text;

pub const MAX_CHUNK_CHARS: usize = 800;
pub const DEFAULT_TOP_K: usize = 3;
pub const I_DONT_KNOW: &str = "I don't know";

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("store line {line}: {msg}")]
    Store { line: usize, msg: String },
    #[error("chunk {chunk_id} has {got} dimensions, store uses {want}")]
    Dimensions { chunk_id: String, got: usize, want: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    ImageCaption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceChunk {
    pub chunk_id: String,
    pub source: String,
    pub modality: Modality,
    pub text: String,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_span: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<ImageRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UserProfile {
    pub vision_level: Option<String>,
    pub task_experience: Option<String>,
    pub available_tools: Vec<String>,
    pub environment_notes: Option<String>,
}

impl UserProfile {
    /// One line per set field, always in the same order.
    pub fn serialize_for_query(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.vision_level.as_deref().filter(|s| !s.trim().is_empty()) {
            parts.push(format!("vision level: {v}"));
        }
        if let Some(v) = self.task_experience.as_deref().filter(|s| !s.trim().is_empty()) {
            parts.push(format!("task experience: {v}"));
        }
        if !self.available_tools.is_empty() {
            parts.push(format!("available tools: {}", self.available_tools.join(", ")));
        }
        if let Some(v) = self.environment_notes.as_deref().filter(|s| !s.trim().is_empty()) {
            parts.push(format!("environment: {v}"));
        }
        if parts.is_empty() {
            "none given".into()
        } else {
            parts.join("; ")
        }
    }
}

/// Paragraph-aligned chunks of at most [`MAX_CHUNK_CHARS`] characters, as
/// `(char_start, char_end, text)`. Consecutive paragraphs are packed while
/// they fit; a paragraph that is too long on its own is split by sentences.
pub fn chunk_text(doc: &str) -> Vec<(usize, usize, String)> {
    let chars: Vec<char> = doc.chars().collect();
    let paragraphs = paragraph_spans(&chars);
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    for (s, e) in paragraphs {
        if e - s <= MAX_CHUNK_CHARS {
            pieces.push((s, e));
        } else {
            pieces.extend(split_long(&chars, s, e));
        }
    }
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (s, e) in pieces {
        match out.last_mut() {
            Some(last) if e - last.0 <= MAX_CHUNK_CHARS && is_paragraph_gap(&chars, last.1, s) => last.1 = e,
            _ => out.push((s, e)),
        }
    }
    out.into_iter()
        .map(|(s, e)| (s, e, chars[s..e].iter().collect()))
        .collect()
}

fn is_paragraph_gap(chars: &[char], from: usize, to: usize) -> bool {
    chars[from..to].iter().filter(|c| **c == '\n').count() >= 2
}

fn paragraph_spans(chars: &[char]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut i = 0;
    let n = chars.len();
    while i < n {
        while i < n && chars[i].is_whitespace() {
            i += 1;
        }
        if i >= n {
            break;
        }
        let start = i;
        let mut end = i;
        loop {
            if i >= n {
                break;
            }
            if chars[i] == '\n' {
                let mut j = i + 1;
                while j < n && chars[j] != '\n' && chars[j].is_whitespace() {
                    j += 1;
                }
                if j >= n || chars[j] == '\n' {
                    break;
                }
            }
            if !chars[i].is_whitespace() {
                end = i + 1;
            }
            i += 1;
        }
        spans.push((start, end));
    }
    spans
}

/// Sentence-packed pieces of one oversize paragraph; sentences longer than
/// the limit are cut at the last space that fits.
fn split_long(chars: &[char], start: usize, end: usize) -> Vec<(usize, usize)> {
    let mut sentences = Vec::new();
    let mut s = start;
    let mut i = start;
    while i < end {
        if matches!(chars[i], '.' | '!' | '?') && (i + 1 == end || chars[i + 1].is_whitespace()) {
            sentences.push((s, i + 1));
            s = i + 1;
            while s < end && chars[s].is_whitespace() {
                s += 1;
            }
            i = s;
            continue;
        }
        i += 1;
    }
    if s < end {
        sentences.push((s, end));
    }
    let mut bounded = Vec::new();
    for (mut s, e) in sentences {
        while e - s > MAX_CHUNK_CHARS {
            let limit = s + MAX_CHUNK_CHARS;
            let cut = (s + 1..limit)
                .rev()
                .find(|k| chars[*k].is_whitespace())
                .unwrap_or(limit);
            let mut piece_end = cut;
            while piece_end > s && chars[piece_end - 1].is_whitespace() {
                piece_end -= 1;
            }
            bounded.push((s, piece_end));
            s = cut;
            while s < e && chars[s].is_whitespace() {
                s += 1;
            }
        }
        if s < e {
            bounded.push((s, e));
        }
    }
    let mut packed: Vec<(usize, usize)> = Vec::new();
    for (s, e) in bounded {
        match packed.last_mut() {
            Some(last) if e - last.0 <= MAX_CHUNK_CHARS => last.1 = e,
            _ => packed.push((s, e)),
        }
    }
    packed
}

/// Text with tags, scripts, styles and common entities removed.
pub fn strip_html(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let lower = html.to_ascii_lowercase();
    let mut i = 0;
    let bytes = html.as_bytes();
    while i < html.len() {
        if bytes[i] == b'<' {
            for skip in ["script", "style"] {
                if lower[i + 1..].starts_with(skip) {
                    if let Some(close) = lower[i..].find(&format!("</{skip}>")) {
                        i += close;
                    }
                }
            }
            let tag_end = html[i..].find('>').map_or(html.len(), |p| i + p + 1);
            let tag = &lower[i..tag_end];
            if ["<p", "</p", "<br", "<div", "</div", "<h", "</h", "<li", "</li"]
                .iter()
                .any(|t| tag.starts_with(t))
            {
                out.push_str("\n\n");
            }
            i = tag_end;
            continue;
        }
        let ch = html[i..].chars().next().expect("in bounds");
        out.push(ch);
        i += ch.len_utf8();
    }
    let out = out
        .replace("&nbsp;", " ")
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'");
    let mut collapsed = String::new();
    let mut blank_run = 0;
    for line in out.lines() {
        let line = line.trim();
        if line.is_empty() {
            blank_run += 1;
            continue;
        }
        if !collapsed.is_empty() {
            collapsed.push_str(if blank_run > 0 { "\n\n" } else { "\n" });
        }
        collapsed.push_str(line);
        blank_run = 0;
    }
    collapsed
}

/// `{name, sources: [path or URL]}`; relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub sources: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), KnowledgeError> {
        let raw = std::fs::read_to_string(path).map_err(|e| KnowledgeError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let manifest: Manifest = serde_json::from_str(&raw).map_err(|e| KnowledgeError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, base))
    }
}

enum Document {
    Text(String),
    Image(Vec<u8>),
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "gif", "webp"];

fn read_source(source: &str, base: &Path) -> Result<Document, String> {
    let ext = source
        .rsplit('.')
        .next()
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = if source.starts_with("http://") || source.starts_with("https://") {
        let resp = ureq::get(source).call().map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        resp.into_reader().read_to_end(&mut buf).map_err(|e| e.to_string())?;
        buf
    } else {
        std::fs::read(base.join(source)).map_err(|e| e.to_string())?
    };
    if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
        return Ok(Document::Image(bytes));
    }
    let body = String::from_utf8(bytes).map_err(|_| "not UTF-8 text".to_string())?;
    if matches!(ext.as_str(), "html" | "htm") || body.trim_start().starts_with('<') {
        Ok(Document::Text(strip_html(&body)))
    } else {
        Ok(Document::Text(body))
    }
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub added: usize,
    pub skipped: Vec<(String, String)>,
}

/// In-memory view of a JSONL chunk store.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    chunks: Vec<ResourceChunk>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn chunks(&self) -> &[ResourceChunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dims(&self) -> Option<usize> {
        self.chunks.first().map(|c| c.embedding.len())
    }

    pub fn insert(&mut self, chunk: ResourceChunk) -> Result<(), KnowledgeError> {
        if let Some(want) = self.dims() {
            if chunk.embedding.len() != want {
                return Err(KnowledgeError::Dimensions {
                    chunk_id: chunk.chunk_id,
                    got: chunk.embedding.len(),
                    want,
                });
            }
        }
        self.chunks.push(chunk);
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let file = std::fs::File::open(path).map_err(|e| KnowledgeError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut kb = KnowledgeBase::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| KnowledgeError::Store {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: ResourceChunk = serde_json::from_str(&line).map_err(|e| KnowledgeError::Store {
                line: i + 1,
                msg: e.to_string(),
            })?;
            kb.insert(chunk)?;
        }
        Ok(kb)
    }

    /// Appends chunks to a JSONL file.
    pub fn append_to(path: &Path, chunks: &[ResourceChunk]) -> Result<(), KnowledgeError> {
        let io = |e: std::io::Error| KnowledgeError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        };
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        for chunk in chunks {
            let line = serde_json::to_string(chunk).expect("chunk serializes");
            writeln!(file, "{line}").map_err(io)?;
        }
        Ok(())
    }

    /// Reads, chunks, captions and embeds every manifest source. Unreadable
    /// sources and empty documents are skipped and reported.
    pub fn ingest_manifest(
        &mut self,
        gateway: &Gateway,
        manifest: &Manifest,
        base: &Path,
    ) -> Result<(Vec<ResourceChunk>, IngestReport), KnowledgeError> {
        let mut report = IngestReport::default();
        let mut added = Vec::new();
        let offset = self
            .chunks
            .iter()
            .filter_map(|c| c.chunk_id.split(':').next()?.parse::<usize>().ok())
            .max()
            .map_or(0, |m| m + 1);
        for (i, source) in manifest.sources.iter().enumerate() {
            let doc_index = offset + i;
            match read_source(source, base) {
                Err(msg) => {
                    tracing::warn!(%source, %msg, "skipping unreadable source");
                    report.skipped.push((source.clone(), msg));
                }
                Ok(doc) => {
                    let chunks = self.ingest_document(gateway, doc_index, source, doc)?;
                    if chunks.is_empty() {
                        tracing::warn!(%source, "source produced no chunks");
                        report.skipped.push((source.clone(), "empty document".into()));
                    }
                    added.extend(chunks);
                }
            }
        }
        report.added = added.len();
        Ok((added, report))
    }

    fn ingest_document(
        &mut self,
        gateway: &Gateway,
        doc_index: usize,
        source: &str,
        doc: Document,
    ) -> Result<Vec<ResourceChunk>, KnowledgeError> {
        let mut out = Vec::new();
        match doc {
            Document::Text(body) => {
                for (n, (s, e, text)) in chunk_text(&body).into_iter().enumerate() {
                    let chunk = ResourceChunk {
                        chunk_id: format!("{doc_index:04}:{n:04}"),
                        source: source.to_string(),
                        modality: Modality::Text,
                        embedding: gateway.embed(&text)?,
                        text,
                        char_span: Some((s, e)),
                        image_ref: None,
                    };
                    self.insert(chunk.clone())?;
                    out.push(chunk);
                }
            }
            Document::Image(bytes) => {
                let image = gateway.images().put(&bytes);
                let caption = gateway.caption(&image)?;
                let chunk = ResourceChunk {
                    chunk_id: format!("{doc_index:04}:0000"),
                    source: source.to_string(),
                    modality: Modality::ImageCaption,
                    embedding: gateway.embed(&caption)?,
                    text: caption,
                    char_span: None,
                    image_ref: Some(image),
                };
                self.insert(chunk.clone())?;
                out.push(chunk);
            }
        }
        Ok(out)
    }

    /// Top-k chunks by cosine to `query`, descending; ties by chunk id.
    pub fn retrieve_vec(&self, query: &[f64], k: usize) -> Vec<(&ResourceChunk, f64)> {
        let mut scored: Vec<(&ResourceChunk, f64)> =
            self.chunks.iter().map(|c| (c, cosine(&c.embedding, query))).collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.chunk_id.cmp(&b.0.chunk_id))
        });
        scored.truncate(k);
        scored
    }

    pub fn retrieve(
        &self,
        gateway: &Gateway,
        query: &str,
        k: usize,
    ) -> Result<Vec<(&ResourceChunk, f64)>, KnowledgeError> {
        if self.chunks.is_empty() {
            return Ok(Vec::new());
        }
        let q = gateway.embed(query)?;
        Ok(self.retrieve_vec(&q, k))
    }
}

pub const SUGGEST_PROMPT_HEAD: &str =
    "Answer the query below using the given context. If the context holds nothing relevant, answer exactly \"I don't know\".";

pub fn suggestion_query(instruction: &str, profile: &UserProfile) -> String {
    format!(
        "User is currently performing {:?}, what are useful tips and workarounds?\nUser_info: {}",
        instruction.trim().trim_end_matches('.'),
        profile.serialize_for_query()
    )
}

#[derive(Serialize)]
struct ContextChunk<'a> {
    chunk_id: &'a str,
    source: &'a str,
    text: &'a str,
}

pub fn suggest_prompt(query: &str, profile: &UserProfile, context: &[(&ResourceChunk, f64)]) -> String {
    let rows: Vec<ContextChunk> = context
        .iter()
        .map(|(c, _)| ContextChunk {
            chunk_id: &c.chunk_id,
            source: &c.source,
            text: &c.text,
        })
        .collect();
    let query_line = query.lines().next().unwrap_or(query);
    format!(
        "{SUGGEST_PROMPT_HEAD}\nUser_info: {}\nQuery: {query_line}\nContext:\n```json\n{}\n```\nResponse:",
        profile.serialize_for_query(),
        serde_json::to_string(&rows).expect("context serializes")
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub text: String,
    pub query: String,
    /// `(chunk_id, source, score)` of the chunks given to the model.
    pub context: Vec<(String, String, f64)>,
}

/// Retrieval-grounded tips for one action. With no chunk scoring above
/// `min_relevance` the model is not called and the answer is "I don't know".
pub fn suggest(
    gateway: &Gateway,
    kb: &KnowledgeBase,
    instruction: &str,
    profile: &UserProfile,
    min_relevance: f64,
    ctx: &ContextId,
) -> Result<Suggestion, KnowledgeError> {
    let query = suggestion_query(instruction, profile);
    let hits: Vec<(&ResourceChunk, f64)> = kb
        .retrieve(gateway, &query, DEFAULT_TOP_K)?
        .into_iter()
        .filter(|(_, s)| *s > min_relevance)
        .collect();
    let context: Vec<(String, String, f64)> = hits
        .iter()
        .map(|(c, s)| (c.chunk_id.clone(), c.source.clone(), *s))
        .collect();
    if hits.is_empty() {
        tracing::info!(%instruction, "no relevant chunks, not asking the model");
        return Ok(Suggestion {
            text: I_DONT_KNOW.into(),
            query,
            context,
        });
    }
    for (id, source, score) in &context {
        tracing::info!(chunk = %id, %source, score, "suggestion context");
    }
    let reply = gateway.complete_text(suggest_prompt(&query, profile, &hits), &[], ctx)?;
    let reply = reply.trim();
    let text = if text::normalize(reply) == text::normalize(I_DONT_KNOW) || reply.is_empty() {
        I_DONT_KNOW.to_string()
    } else {
        reply.to_string()
    };
    Ok(Suggestion { text, query, context })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{FixtureValue, Fixtures, MockBackend, ModelRequest};

    fn chunk(id: &str, v: Vec<f64>) -> ResourceChunk {
        ResourceChunk {
            chunk_id: id.into(),
            source: format!("{id}.txt"),
            modality: Modality::Text,
            text: id.into(),
            embedding: v,
            char_span: None,
            image_ref: None,
        }
    }

    #[test]
    fn paragraph_packing() {
        let para = |c: char| std::iter::repeat_n(c, 660).collect::<String>();
        let doc = format!("{}\n\n{}\n\n{}", para('a'), para('b'), para('c'));
        assert_eq!(doc.chars().count(), 1984);
        let chunks = chunk_text(&doc);
        assert_eq!(chunks.len(), 3);
        assert!(chunks.iter().all(|(_, _, t)| t.chars().count() <= MAX_CHUNK_CHARS));
        assert_eq!(chunks[1].2, para('b'));

        let small = "One.\n\nTwo.\n\nThree.";
        let chunks = chunk_text(small);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].2, small);
        assert!(chunk_text("  \n\n ").is_empty());
    }

    #[test]
    fn oversize_paragraph_splits_on_sentences() {
        let sentence = "Keep the knife flat against the board. ";
        let doc: String = sentence.repeat(40);
        let chunks = chunk_text(&doc);
        assert!(chunks.len() >= 2);
        for (_, _, t) in &chunks {
            assert!(t.chars().count() <= MAX_CHUNK_CHARS);
            assert!(t.ends_with('.'));
        }
        let long_word = "x".repeat(2000);
        assert!(chunk_text(&long_word)
            .iter()
            .all(|(_, _, t)| t.len() <= MAX_CHUNK_CHARS));
    }

    #[test]
    fn html_is_stripped() {
        let t = strip_html("<html><style>p{}</style><p>Use a &amp; b.</p><p>Second</p><script>x()</script></html>");
        assert_eq!(t, "Use a & b.\n\nSecond");
    }

    #[test]
    fn retrieval_order_and_ties() {
        let mut kb = KnowledgeBase::new();
        kb.insert(chunk("a", vec![1.0, 0.0])).unwrap();
        kb.insert(chunk("b", vec![0.0, 1.0])).unwrap();
        kb.insert(chunk("c", vec![0.6, 0.8])).unwrap();
        let r = kb.retrieve_vec(&[1.0, 0.0], 3);
        let ids: Vec<_> = r.iter().map(|(c, _)| c.chunk_id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
        let scores: Vec<_> = r.iter().map(|(_, s)| *s).collect();
        assert!((scores[0] - 1.0).abs() < 1e-12 && (scores[1] - 0.6).abs() < 1e-12 && scores[2].abs() < 1e-12);

        let mut kb = KnowledgeBase::new();
        kb.insert(chunk("z", vec![1.0, 0.0])).unwrap();
        kb.insert(chunk("y", vec![1.0, 0.0])).unwrap();
        let r = kb.retrieve_vec(&[1.0, 0.0], 3);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].0.chunk_id, "y");
        assert!(kb.insert(chunk("w", vec![1.0])).is_err());
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        KnowledgeBase::append_to(&path, &[chunk("a", vec![1.0, 0.0]), chunk("b", vec![0.0, 1.0])]).unwrap();
        let kb = KnowledgeBase::load(&path).unwrap();
        assert_eq!(kb.len(), 2);
        assert_eq!(kb.chunks()[1].chunk_id, "b");
    }

    #[test]
    fn ingestion_covers_text_images_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "Crack the egg into a separate bowl first.").unwrap();
        std::fs::write(dir.path().join("empty.txt"), "").unwrap();
        std::fs::write(dir.path().join("p.png"), b"\x89PNG fake").unwrap();
        let manifest = Manifest {
            name: "cooking".into(),
            sources: vec!["a.txt".into(), "missing.txt".into(), "empty.txt".into(), "p.png".into()],
        };
        let mut fx = Fixtures::default();
        let img = ImageRef::of(b"\x89PNG fake");
        fx.insert(
            &ModelRequest::batch(crate::gateway::CAPTION_PROMPT).with_images([img]),
            FixtureValue::Text("A bump dot stuck on an oven dial.".into()),
        );
        let gw = Gateway::new(Arc::new(MockBackend::new(fx).strict(true)));
        let mut kb = KnowledgeBase::new();
        let (added, report) = kb.ingest_manifest(&gw, &manifest, dir.path()).unwrap();
        assert_eq!(added.len(), 2);
        assert_eq!(report.skipped.len(), 2);
        assert_eq!(added[1].modality, Modality::ImageCaption);
        assert_eq!(added[1].chunk_id, "0003:0000");
        assert!(added
            .iter()
            .all(|c| (c.embedding.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn suggestion_contract() {
        let profile = UserProfile {
            available_tools: vec!["talking scale".into()],
            ..Default::default()
        };
        let q = suggestion_query("Crack 2 eggs.", &profile);
        assert!(q.contains("talking scale"));
        assert!(q.starts_with("User is currently performing \"Crack 2 eggs\""));

        let gw = Gateway::new(Arc::new(MockBackend::new(Fixtures::default()).strict(true)));
        let s = suggest(
            &gw,
            &KnowledgeBase::new(),
            "Crack 2 eggs.",
            &profile,
            0.0,
            &ContextId::default(),
        )
        .unwrap();
        assert_eq!(s.text, I_DONT_KNOW);
        assert!(s.context.is_empty());
    }

    #[test]
    fn suggestion_uses_fixtured_answer_over_context() {
        let profile = UserProfile::default();
        let mut kb = KnowledgeBase::new();
        let gw0 = Gateway::new(Arc::new(MockBackend::new(Fixtures::default())));
        let text = "Crack each egg into a separate bowl first, then pour it in.";
        kb.insert(ResourceChunk {
            embedding: gw0.embed(text).unwrap(),
            text: text.into(),
            ..chunk("0000:0000", vec![])
        })
        .unwrap();
        let query = suggestion_query("Crack 2 eggs into the bowl.", &profile);
        let hits = kb.retrieve(&gw0, &query, 3).unwrap();
        let mut fx = Fixtures::default();
        fx.insert(
            &ModelRequest::batch(suggest_prompt(&query, &profile, &hits)),
            FixtureValue::Text("Crack each egg into a separate bowl first so shells are easy to find.".into()),
        );
        let gw = Gateway::new(Arc::new(MockBackend::new(fx).strict(true)));
        let s = suggest(
            &gw,
            &kb,
            "Crack 2 eggs into the bowl.",
            &profile,
            0.0,
            &ContextId::default(),
        )
        .unwrap();
        assert!(s.text.contains("separate bowl"));
        assert_eq!(s.context[0].0, "0000:0000");
    }
}
