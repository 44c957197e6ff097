//! Document ingestion, sentence segmentation and tokenization.
//!
//! Every token keeps character offsets into its document text so that any
//! downstream mention can be traced back to the exact source span.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Abbreviations that never end a sentence and keep their trailing period.
pub const ABBREVIATIONS: &[&str] = &["Inc.", "Co.", "Ltd.", "U.S.", "Corp.", "Mr.", "Ms.", "Dr."];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate doc_id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source: String,
    pub published_at: DateTime<Utc>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    /// Lowercased copy used for case-insensitive matching.
    pub norm: String,
    pub start_char: usize,
    pub end_char: usize,
}

impl Token {
    fn new(surface: &str, start_char: usize) -> Self {
        Token {
            surface: surface.to_string(),
            norm: surface.to_lowercase(),
            start_char,
            end_char: start_char + surface.chars().count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub sent_index: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Normalized sentence text: token surfaces joined by single spaces.
    pub fn text(&self) -> String {
        join_surfaces(&self.tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn join_surfaces(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ")
}

/// A set of documents keyed (and therefore ordered) by `doc_id`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: BTreeMap<String, Document>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, doc: Document) -> Result<(), CorpusError> {
        if self.docs.contains_key(&doc.doc_id) {
            return Err(CorpusError::DuplicateId(doc.doc_id));
        }
        self.docs.insert(doc.doc_id.clone(), doc);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.docs.get(doc_id)
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    /// Segments and tokenizes every document. Documents are processed in
    /// parallel; the result is ordered by `(doc_id, sent_index)`.
    pub fn sentences(&self) -> Vec<Sentence> {
        let docs: Vec<&Document> = self.docs.values().collect();
        docs.par_iter()
            .map(|d| segment(d))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }
}

#[derive(Deserialize)]
struct RawRecord {
    doc_id: Option<String>,
    source: Option<String>,
    published_at: Option<String>,
    text: Option<String>,
}

/// Reads a line-delimited JSON corpus. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn ingest<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_record(&line).map_err(|reason| CorpusError::Malformed { line: lineno, reason })?;
        corpus.insert(doc)?;
    }
    Ok(corpus)
}

pub fn ingest_file(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let f = std::fs::File::open(path)?;
    ingest(std::io::BufReader::new(f))
}

fn parse_record(line: &str) -> Result<Document, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let field = |v: Option<String>, name: &str| v.ok_or_else(|| format!("missing field `{name}`"));
    let doc_id = field(raw.doc_id, "doc_id")?;
    if doc_id.is_empty() {
        return Err("empty doc_id".into());
    }
    let source = field(raw.source, "source")?;
    let published_at = field(raw.published_at, "published_at")?;
    let published_at =
        parse_timestamp(&published_at).ok_or_else(|| format!("invalid published_at `{published_at}`"))?;
    let text = field(raw.text, "text")?;
    if text.trim().is_empty() {
        return Err("empty text".into());
    }
    Ok(Document {
        doc_id,
        source,
        published_at,
        text,
    })
}

/// Accepts RFC 3339 date-times and bare `YYYY-MM-DD` dates (midnight UTC).
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc())
}

/// Writes tokenized sentences as JSON lines (debugging aid).
pub fn write_sentences<W: Write>(mut w: W, sentences: &[Sentence]) -> std::io::Result<()> {
    for s in sentences {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201D}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201C}' | '\u{2018}')
}

/// Splits a document into sentences.
///
/// A boundary is a run of `.`/`!`/`?` (plus closing quotes or brackets)
/// followed by whitespace and then an uppercase letter or an opening quote.
/// A period ending one of [`ABBREVIATIONS`] is never a boundary.
pub fn segment(doc: &Document) -> Vec<Sentence> {
    let chars: Vec<char> = doc.text.chars().collect();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if !is_terminator(chars[i]) {
            i += 1;
            continue;
        }
        let term_at = i;
        let mut end = i + 1;
        while end < chars.len() && (is_terminator(chars[end]) || is_closer(chars[end])) {
            end += 1;
        }
        let mut next = end;
        while next < chars.len() && chars[next].is_whitespace() {
            next += 1;
        }
        let boundary = next > end
            && next < chars.len()
            && (chars[next].is_uppercase() || is_opener(chars[next]))
            && !ends_with_abbreviation(&chars[..=term_at]);
        if boundary {
            spans.push((start, end));
            start = end;
        }
        i = end;
    }
    spans.push((start, chars.len()));

    let mut out = Vec::new();
    for (s, e) in spans {
        let tokens = tokenize_chars(&chars[s..e], s);
        if !tokens.is_empty() {
            out.push(Sentence {
                doc_id: doc.doc_id.clone(),
                sent_index: out.len(),
                tokens,
            });
        }
    }
    out
}

fn ends_with_abbreviation(prefix: &[char]) -> bool {
    let word_start = prefix.iter().rposition(|c| c.is_whitespace()).map_or(0, |p| p + 1);
    let word: String = prefix[word_start..].iter().skip_while(|c| is_opener(**c)).collect();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Tokenizes a piece of text. Offsets are character offsets into `text`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    tokenize_chars(&chars, 0)
}

fn tokenize_chars(chars: &[char], base: usize) -> Vec<Token> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars[start..i], base + start, &mut out);
    }
    out
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits one whitespace-delimited chunk: leading and trailing punctuation
/// become single-character tokens and a possessive `'s` becomes its own token.
fn split_chunk(chunk: &[char], offset: usize, out: &mut Vec<Token>) {
    let mut lo = 0;
    let mut hi = chunk.len();
    let mut lead = Vec::new();
    while lo < hi && is_punct(chunk[lo]) {
        let possessive = is_apostrophe(chunk[lo])
            && lo + 1 < hi
            && (chunk[lo + 1] == 's' || chunk[lo + 1] == 'S')
            && (lo + 2 == hi || is_punct(chunk[lo + 2]));
        if possessive {
            break;
        }
        lead.push(lo);
        lo += 1;
    }
    let mut trail: Vec<(usize, usize)> = Vec::new();
    loop {
        if lo >= hi {
            break;
        }
        let core: String = chunk[lo..hi].iter().collect();
        if ABBREVIATIONS.contains(&core.as_str()) {
            break;
        }
        if is_punct(chunk[hi - 1]) {
            trail.push((hi - 1, hi));
            hi -= 1;
        } else if hi - lo > 2 && is_apostrophe(chunk[hi - 2]) && (chunk[hi - 1] == 's' || chunk[hi - 1] == 'S') {
            trail.push((hi - 2, hi));
            hi -= 2;
        } else {
            break;
        }
    }
    let emit = |a: usize, b: usize, out: &mut Vec<Token>| {
        let s: String = chunk[a..b].iter().collect();
        out.push(Token::new(&s, offset + a));
    };
    for p in lead {
        emit(p, p + 1, out);
    }
    if lo < hi {
        emit(lo, hi, out);
    }
    for (a, b) in trail.into_iter().rev() {
        emit(a, b, out);
    }
}

/// Returns the substring of `text` covered by a token's character offsets.
pub fn slice_chars(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end - start).collect()
}
