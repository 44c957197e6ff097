//! Risk-type taxonomy induction with Hearst-style lexical patterns.
//!
//! Patterns are matched over tokenized sentences. A match yields a hypernym
//! phrase (which must end in `risk`/`risks`) and a list of hyponym phrases;
//! each hyponym becomes an IS-A child of the hypernym, and every hypernym
//! becomes a child of the root type [`ROOT`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, Corpus, CorpusError, Sentence};

pub const ROOT: &str = "risk";

/// Maximum number of tokens in a hypernym or hyponym phrase.
pub const MAX_PHRASE_TOKENS: usize = 4;
/// Maximum number of hyponyms taken from one list.
pub const MAX_LIST_ITEMS: usize = 6;

/// Function words that never belong to a mined phrase. `and`/`or` double as
/// list separators.
pub const STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "against",
    "all",
    "also",
    "although",
    "among",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "being",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "during",
    "each",
    "either",
    "especially",
    "face",
    "faced",
    "faces",
    "facing",
    "few",
    "for",
    "from",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "his",
    "how",
    "i",
    "if",
    "in",
    "include",
    "included",
    "includes",
    "including",
    "into",
    "is",
    "it",
    "its",
    "like",
    "many",
    "may",
    "might",
    "more",
    "most",
    "much",
    "must",
    "no",
    "nor",
    "not",
    "of",
    "on",
    "once",
    "only",
    "or",
    "other",
    "others",
    "our",
    "over",
    "pose",
    "posed",
    "poses",
    "said",
    "says",
    "several",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "them",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "various",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
];

const SEPARATORS: &[&str] = &[",", "and", "or"];
const DETERMINERS: &[&str] = &["a", "an", "the"];

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("no patterns given")]
    NoPatterns,
    #[error("min_support must be at least 1")]
    ZeroSupport,
    #[error("invalid pattern `{template}`: {reason}")]
    InvalidPattern { template: String, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Canonical key for a risk phrase: lowercased, whitespace collapsed, leading
/// determiners dropped and a trailing `risks` singularized.
///
/// Registers use the same function so that register keys and taxonomy nodes
/// stay joinable.
pub fn normalize_phrase(phrase: &str) -> String {
    let lower = phrase.to_lowercase();
    let mut words: Vec<&str> = lower.split_whitespace().collect();
    while words.len() > 1 && DETERMINERS.contains(&words[0]) {
        words.remove(0);
    }
    if let Some(last) = words.last_mut() {
        if *last == "risks" {
            *last = "risk";
        }
    }
    words.join(" ")
}

/// True for a lowercased token that may be part of a mined phrase.
pub fn is_phrase_word(norm: &str) -> bool {
    let mut chars = norm.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    first.is_alphanumeric()
        && chars.all(|c| c.is_alphanumeric() || c == '-' || c == '\'' || c == '\u{2019}')
        && !STOPWORDS.contains(&norm)
}

fn is_risk_head(norm: &str) -> bool {
    norm == "risk" || norm == "risks"
}

fn is_separator(norm: &str) -> bool {
    SEPARATORS.contains(&norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `<hypernym> literal <hyponym list>`, e.g. "X risks such as A, B".
    HyperFirst,
    /// `<hyponym list> literal <hypernym>`, e.g. "A, B and other X risks".
    HypoFirst,
}

impl std::str::FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "hyper-first" => Ok(Direction::HyperFirst),
            "hypo-first" => Ok(Direction::HypoFirst),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::HyperFirst => "hyper-first",
            Direction::HypoFirst => "hypo-first",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotRole {
    Hypernym,
    Hyponyms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemplateElem {
    Literal(String),
    Slot(SlotRole),
}

/// A lexical pattern of the form `<slot> literal tokens <slot>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HearstPattern {
    pub pattern_id: String,
    pub template: Vec<TemplateElem>,
    pub direction: Direction,
}

impl HearstPattern {
    /// Parses a template such as `<X> such as <Y>`. The first slot is the
    /// hypernym when `direction` is [`Direction::HyperFirst`].
    pub fn parse(template: &str, direction: Direction) -> Result<Self, TaxonomyError> {
        let invalid = |reason: &str| TaxonomyError::InvalidPattern {
            template: template.to_string(),
            reason: reason.to_string(),
        };
        let parts: Vec<&str> = template.split_whitespace().collect();
        let is_slot = |p: &str| p.len() > 2 && p.starts_with('<') && p.ends_with('>');
        if parts.len() < 3 || !is_slot(parts[0]) || !is_slot(parts[parts.len() - 1]) {
            return Err(invalid("expected `<slot> literal... <slot>`"));
        }
        let literal = &parts[1..parts.len() - 1];
        if literal.iter().any(|p| is_slot(p)) {
            return Err(invalid("exactly two slots are allowed"));
        }
        let (first, last) = match direction {
            Direction::HyperFirst => (SlotRole::Hypernym, SlotRole::Hyponyms),
            Direction::HypoFirst => (SlotRole::Hyponyms, SlotRole::Hypernym),
        };
        let mut elems = vec![TemplateElem::Slot(first)];
        elems.extend(literal.iter().map(|w| TemplateElem::Literal(w.to_lowercase())));
        elems.push(TemplateElem::Slot(last));
        Ok(HearstPattern {
            pattern_id: literal.iter().map(|w| w.to_lowercase()).collect::<Vec<_>>().join("_"),
            template: elems,
            direction,
        })
    }

    pub fn literal(&self) -> Vec<&str> {
        self.template
            .iter()
            .filter_map(|e| match e {
                TemplateElem::Literal(w) => Some(w.as_str()),
                TemplateElem::Slot(_) => None,
            })
            .collect()
    }

    pub fn template_string(&self) -> String {
        self.template
            .iter()
            .enumerate()
            .map(|(i, e)| match e {
                TemplateElem::Literal(w) => w.clone(),
                TemplateElem::Slot(_) if i == 0 => "<X>".to_string(),
                TemplateElem::Slot(_) => "<Y>".to_string(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn default_patterns() -> Vec<HearstPattern> {
    [
        ("<X> such as <Y>", Direction::HyperFirst),
        ("<X> including <Y>", Direction::HyperFirst),
        ("<X> like <Y>", Direction::HyperFirst),
        ("<X> and other <Y>", Direction::HypoFirst),
        ("<X> or other <Y>", Direction::HypoFirst),
    ]
    .into_iter()
    .map(|(t, d)| HearstPattern::parse(t, d).expect("built-in pattern"))
    .collect()
}

/// Reads a pattern file: one `<template> TAB <direction>` per line. Blank
/// lines and `#` comments are ignored.
pub fn read_patterns<R: BufRead>(reader: R) -> Result<Vec<HearstPattern>, TaxonomyError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let parse_err = |reason: String| TaxonomyError::Parse { line: i + 1, reason };
        let (template, direction) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected `<template>\\t<direction>`".into()))?;
        let direction = direction.parse().map_err(parse_err)?;
        out.push(HearstPattern::parse(template, direction)?);
    }
    Ok(out)
}

/// Source of sentences for taxonomy mining.
pub trait TextSource {
    fn sentences(&self) -> Result<Vec<Sentence>, TaxonomyError>;
}

impl TextSource for Corpus {
    fn sentences(&self) -> Result<Vec<Sentence>, TaxonomyError> {
        Ok(Corpus::sentences(self))
    }
}

impl TextSource for [Sentence] {
    fn sentences(&self) -> Result<Vec<Sentence>, TaxonomyError> {
        Ok(self.to_vec())
    }
}

/// A line-delimited corpus file read on demand.
#[derive(Debug, Clone)]
pub struct FileSource {
    pub path: PathBuf,
}

impl TextSource for FileSource {
    fn sentences(&self) -> Result<Vec<Sentence>, TaxonomyError> {
        Ok(corpus::ingest_file(&self.path)?.sentences())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Hypernym,
    Hyponym,
}

/// One occurrence of a phrase in a pattern slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Occurrence {
    pub doc_id: String,
    pub sent_index: usize,
    pub token_start: usize,
    pub pattern_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskType {
    pub risk_type_id: String,
    pub label: String,
    pub provenance: Vec<Occurrence>,
}

impl RiskType {
    pub fn is_root(&self) -> bool {
        self.risk_type_id == ROOT
    }

    /// Number of pattern hits that produced this type; unbounded for the root.
    pub fn support(&self) -> usize {
        if self.is_root() {
            usize::MAX
        } else {
            self.provenance.len()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeOrigin {
    Mined,
    DefaultAttachment,
}

/// Provenance of one IS-A hit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeHit {
    pub doc_id: String,
    pub sent_index: usize,
    pub token_start: usize,
    pub pattern_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub child: String,
    pub parent: String,
    pub origin: EdgeOrigin,
    pub hits: Vec<EdgeHit>,
    /// Hit count for edges loaded from an export without provenance.
    #[serde(default)]
    pub loaded_hits: usize,
}

impl Edge {
    pub fn hit_count(&self) -> usize {
        self.hits.len().max(self.loaded_hits)
    }
}

/// One pattern match in one sentence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PatternMatch {
    pub pattern_id: String,
    pub doc_id: String,
    pub sent_index: usize,
    /// (token_start, surface phrase)
    pub hypernym: (usize, String),
    pub hyponyms: Vec<(usize, String)>,
}

fn phrase_surface(sentence: &Sentence, start: usize, end: usize) -> String {
    corpus::join_surfaces(&sentence.tokens[start..end])
}

/// Hypernym ending right before `end`: a risk head preceded by up to three
/// phrase words.
fn hypernym_left(norm: &[&str], end: usize) -> Option<(usize, usize)> {
    if end == 0 || !is_risk_head(norm[end - 1]) {
        return None;
    }
    let mut start = end - 1;
    while start > 0 && end - start < MAX_PHRASE_TOKENS && is_phrase_word(norm[start - 1]) {
        start -= 1;
    }
    Some((start, end))
}

/// Hypernym starting at `start`: phrase words up to and including the first
/// risk head, at most four tokens.
fn hypernym_right(norm: &[&str], start: usize) -> Option<(usize, usize)> {
    let mut i = start;
    while i < norm.len() && i - start < MAX_PHRASE_TOKENS && is_phrase_word(norm[i]) {
        if is_risk_head(norm[i]) {
            return Some((start, i + 1));
        }
        i += 1;
    }
    None
}

/// Hyponym list starting at `start`, in text order.
fn list_right(norm: &[&str], start: usize) -> Vec<(usize, usize)> {
    let mut items = Vec::new();
    let mut i = start;
    while items.len() < MAX_LIST_ITEMS {
        let s = i;
        while i < norm.len() && is_phrase_word(norm[i]) {
            i += 1;
        }
        let len = i - s;
        if len == 0 || len > MAX_PHRASE_TOKENS {
            break;
        }
        items.push((s, i));
        let before_sep = i;
        while i < norm.len() && is_separator(norm[i]) {
            i += 1;
        }
        if i == before_sep {
            break;
        }
    }
    items
}

/// Hyponym list ending right before `end`, returned in text order.
fn list_left(norm: &[&str], end: usize) -> Vec<(usize, usize)> {
    let mut items = Vec::new();
    let mut i = end;
    while items.len() < MAX_LIST_ITEMS {
        let e = i;
        while i > 0 && is_phrase_word(norm[i - 1]) {
            i -= 1;
        }
        let len = e - i;
        if len == 0 || len > MAX_PHRASE_TOKENS {
            break;
        }
        items.push((i, e));
        let before_sep = i;
        while i > 0 && is_separator(norm[i - 1]) {
            i -= 1;
        }
        if i == before_sep {
            break;
        }
    }
    items.reverse();
    items
}

/// Finds every match of `patterns` in one sentence.
pub fn scan_sentence(sentence: &Sentence, patterns: &[HearstPattern]) -> Vec<PatternMatch> {
    let norm: Vec<&str> = sentence.tokens.iter().map(|t| t.norm.as_str()).collect();
    let mut out = Vec::new();
    for p in patterns {
        let lit = p.literal();
        if lit.is_empty() || lit.len() > norm.len() {
            continue;
        }
        for i in 0..=norm.len() - lit.len() {
            if norm[i..i + lit.len()] != lit[..] {
                continue;
            }
            let after = i + lit.len();
            let (hyper, items) = match p.direction {
                Direction::HyperFirst => (hypernym_left(&norm, i), list_right(&norm, after)),
                Direction::HypoFirst => (hypernym_right(&norm, after), list_left(&norm, i)),
            };
            let Some((hs, he)) = hyper else { continue };
            if items.is_empty() {
                continue;
            }
            out.push(PatternMatch {
                pattern_id: p.pattern_id.clone(),
                doc_id: sentence.doc_id.clone(),
                sent_index: sentence.sent_index,
                hypernym: (hs, phrase_surface(sentence, hs, he)),
                hyponyms: items
                    .into_iter()
                    .map(|(s, e)| (s, phrase_surface(sentence, s, e)))
                    .collect(),
            });
        }
    }
    out
}

/// IS-A graph of risk types rooted at [`ROOT`]. Edges point child → parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyGraph {
    nodes: BTreeMap<String, RiskType>,
    edges: BTreeMap<(String, String), Edge>,
}

impl Default for TaxonomyGraph {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of [`TaxonomyGraph::lookup`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lookup<'a> {
    pub node: &'a RiskType,
    /// Ancestor paths, nearest parent first, each ending at the root. The
    /// root itself has a single empty path.
    pub paths: Vec<Vec<String>>,
}

impl TaxonomyGraph {
    /// A graph containing only the root.
    pub fn new() -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(
            ROOT.to_string(),
            RiskType {
                risk_type_id: ROOT.to_string(),
                label: ROOT.to_string(),
                provenance: Vec::new(),
            },
        );
        TaxonomyGraph {
            nodes,
            edges: BTreeMap::new(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&RiskType> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &RiskType> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge(&self, child: &str, parent: &str) -> Option<&Edge> {
        self.edges.get(&(child.to_string(), parent.to_string()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Adds a node with no provenance if absent. Returns the normalized id.
    pub fn add_node(&mut self, phrase: &str) -> String {
        let id = normalize_phrase(phrase);
        self.nodes.entry(id.clone()).or_insert_with(|| RiskType {
            risk_type_id: id.clone(),
            label: phrase.trim().to_string(),
            provenance: Vec::new(),
        });
        id
    }

    /// Adds (or reinforces) a mined edge. Self-loops are ignored.
    pub fn add_edge(&mut self, child: &str, parent: &str, hits: Vec<EdgeHit>) {
        let c = self.add_node(child);
        let p = self.add_node(parent);
        if c == p {
            return;
        }
        let e = self.edges.entry((c.clone(), p.clone())).or_insert_with(|| Edge {
            child: c,
            parent: p,
            origin: EdgeOrigin::Mined,
            hits: Vec::new(),
            loaded_hits: 0,
        });
        e.hits.extend(hits);
        e.hits.sort();
    }

    pub fn parents(&self, id: &str) -> Vec<&str> {
        self.edges
            .range((id.to_string(), String::new())..)
            .take_while(|((c, _), _)| c == id)
            .map(|((_, p), _)| p.as_str())
            .collect()
    }

    pub fn children(&self, id: &str) -> Vec<&str> {
        self.edges
            .keys()
            .filter(|(_, p)| p == id)
            .map(|(c, _)| c.as_str())
            .collect()
    }

    /// Nodes that can reach the root by following parent edges.
    pub fn rooted(&self) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([ROOT.to_string()]);
        seen.insert(ROOT.to_string());
        while let Some(n) = queue.pop_front() {
            for c in self.children(&n) {
                if seen.insert(c.to_string()) {
                    queue.push_back(c.to_string());
                }
            }
        }
        seen
    }

    /// Non-root nodes without a path to the root.
    pub fn orphans(&self) -> Vec<String> {
        let rooted = self.rooted();
        self.nodes.keys().filter(|k| !rooted.contains(*k)).cloned().collect()
    }

    /// Attaches every orphan to the root with a `default-attachment` edge.
    ///
    /// Parentless orphans are attached first (smallest id first); an orphan
    /// that only has unrooted parents (a detached cycle) is attached when no
    /// parentless orphan is left.
    pub fn attach_orphans(mut self) -> TaxonomyGraph {
        loop {
            let orphans = self.orphans();
            let Some(pick) = orphans
                .iter()
                .find(|o| self.parents(o).is_empty())
                .or_else(|| orphans.first())
                .cloned()
            else {
                return self;
            };
            self.edges.insert(
                (pick.clone(), ROOT.to_string()),
                Edge {
                    child: pick,
                    parent: ROOT.to_string(),
                    origin: EdgeOrigin::DefaultAttachment,
                    hits: Vec::new(),
                    loaded_hits: 0,
                },
            );
        }
    }

    /// Looks up a phrase by its normalized form and lists every simple
    /// ancestor path to the root.
    pub fn lookup(&self, phrase: &str) -> Option<Lookup<'_>> {
        let id = normalize_phrase(phrase);
        let node = self.nodes.get(&id)?;
        let mut paths = Vec::new();
        if node.is_root() {
            paths.push(Vec::new());
        } else {
            let mut stack = vec![id.clone()];
            self.collect_paths(&id, &mut stack, &mut paths);
        }
        paths.sort();
        Some(Lookup { node, paths })
    }

    fn collect_paths(&self, at: &str, stack: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        for p in self.parents(at) {
            if stack.iter().any(|s| s == p) {
                continue;
            }
            stack.push(p.to_string());
            if p == ROOT {
                out.push(stack[1..].to_vec());
            } else {
                self.collect_paths(p, stack, out);
            }
            stack.pop();
        }
    }

    /// Proper ancestors with their shortest parent-edge distance, nearest
    /// first (ties by id).
    pub fn ancestors(&self, id: &str) -> Vec<(String, usize)> {
        let mut dist: BTreeMap<String, usize> = BTreeMap::new();
        let mut queue = VecDeque::from([(id.to_string(), 0usize)]);
        let mut seen = BTreeSet::from([id.to_string()]);
        while let Some((n, d)) = queue.pop_front() {
            for p in self.parents(&n) {
                if seen.insert(p.to_string()) {
                    dist.insert(p.to_string(), d + 1);
                    queue.push_back((p.to_string(), d + 1));
                }
            }
        }
        let mut v: Vec<(String, usize)> = dist.into_iter().collect();
        v.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    /// Drops non-root nodes with support below `min_support` and the edges
    /// touching them.
    fn prune(&mut self, min_support: usize) {
        self.nodes.retain(|_, n| n.support() >= min_support);
        let nodes = &self.nodes;
        self.edges
            .retain(|(c, p), _| nodes.contains_key(c) && nodes.contains_key(p));
    }

    pub fn write_edges_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in self.edges.values() {
            writeln!(w, "{}\t{}\t{}", e.child, e.parent, e.hit_count())?;
        }
        Ok(())
    }

    pub fn write_nodes_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for n in self.nodes.values() {
            serde_json::to_writer(&mut w, n)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads an edge export. A support of 0 marks a default attachment.
    pub fn read_edges_tsv<R: BufRead>(reader: R) -> Result<TaxonomyGraph, TaxonomyError> {
        let mut g = TaxonomyGraph::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: &str| TaxonomyError::Parse {
                line: i + 1,
                reason: reason.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(parse_err("expected `child\\tparent\\tsupport`"));
            }
            let support: usize = cols[2].trim().parse().map_err(|_| parse_err("bad support"))?;
            let c = g.add_node(cols[0]);
            let p = g.add_node(cols[1]);
            if c == p {
                return Err(parse_err("self-loop"));
            }
            g.edges.insert(
                (c.clone(), p.clone()),
                Edge {
                    child: c,
                    parent: p,
                    origin: if support == 0 {
                        EdgeOrigin::DefaultAttachment
                    } else {
                        EdgeOrigin::Mined
                    },
                    hits: Vec::new(),
                    loaded_hits: support,
                },
            );
        }
        Ok(g)
    }

    /// Merges node labels and provenance from a node export.
    pub fn read_nodes_jsonl<R: BufRead>(&mut self, reader: R) -> Result<(), TaxonomyError> {
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let node: RiskType = serde_json::from_str(&line).map_err(|e| TaxonomyError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            self.nodes.insert(node.risk_type_id.clone(), node);
        }
        Ok(())
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph taxonomy {\n  rankdir=BT;\n");
        for n in self.nodes.values() {
            let _ = writeln!(s, "  \"{}\";", n.risk_type_id.replace('"', "\\\""));
        }
        for e in self.edges.values() {
            let style = match e.origin {
                EdgeOrigin::Mined => String::new(),
                EdgeOrigin::DefaultAttachment => " style=dashed".to_string(),
            };
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [label=\"{}\"{}];",
                e.child.replace('"', "\\\""),
                e.parent.replace('"', "\\\""),
                e.hit_count(),
                style
            );
        }
        s.push_str("}\n");
        s
    }
}

/// Mines an IS-A taxonomy from `source`.
pub fn mine_taxonomy<S: TextSource + ?Sized>(
    source: &S,
    patterns: &[HearstPattern],
    min_support: usize,
) -> Result<TaxonomyGraph, TaxonomyError> {
    if patterns.is_empty() {
        return Err(TaxonomyError::NoPatterns);
    }
    if min_support == 0 {
        return Err(TaxonomyError::ZeroSupport);
    }
    let sentences = source.sentences()?;
    let mut matches: Vec<PatternMatch> = sentences
        .par_iter()
        .flat_map_iter(|s| scan_sentence(s, patterns))
        .collect();
    matches.sort();

    let mut g = TaxonomyGraph::new();
    for m in &matches {
        let (h_start, h_surface) = &m.hypernym;
        let hyper = normalize_phrase(h_surface);
        let hit = |token_start: usize| EdgeHit {
            doc_id: m.doc_id.clone(),
            sent_index: m.sent_index,
            token_start,
            pattern_id: m.pattern_id.clone(),
        };
        let occ = |token_start: usize, role: Role| Occurrence {
            doc_id: m.doc_id.clone(),
            sent_index: m.sent_index,
            token_start,
            pattern_id: m.pattern_id.clone(),
            role,
        };
        if hyper != ROOT {
            g.record_occurrence(&hyper, h_surface, occ(*h_start, Role::Hypernym));
            g.add_edge(&hyper, ROOT, vec![hit(*h_start)]);
        }
        for (start, surface) in &m.hyponyms {
            let hypo = normalize_phrase(surface);
            if hypo == hyper || hypo == ROOT {
                continue;
            }
            g.record_occurrence(&hypo, surface, occ(*start, Role::Hyponym));
            g.add_edge(&hypo, &hyper, vec![hit(*start)]);
        }
    }
    for n in g.nodes.values_mut() {
        n.provenance.sort();
    }
    g.prune(min_support);
    Ok(g)
}

impl TaxonomyGraph {
    fn record_occurrence(&mut self, id: &str, surface: &str, occ: Occurrence) {
        let node = self.nodes.entry(id.to_string()).or_insert_with(|| RiskType {
            risk_type_id: id.to_string(),
            label: surface.to_string(),
            provenance: Vec::new(),
        });
        node.provenance.push(occ);
    }
}
