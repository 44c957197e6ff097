//! Gazetteer tagging of company and risk mentions, and candidate pairing.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{self, Corpus, Sentence};
use crate::taxonomy::{normalize_phrase, TaxonomyGraph, ROOT};

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("entity `{0}` has an empty alias")]
    EmptyAlias(String),
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(String),
    #[error("gazetteer has no entries")]
    EmptyGazetteer,
    #[error("span from {found} does not belong to sentence {expected}")]
    ForeignSpan { expected: String, found: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanyEntity {
    pub entity_id: String,
    pub canonical_name: String,
    pub aliases: BTreeSet<String>,
}

impl CompanyEntity {
    /// Builds an entity; the canonical name is always added to the aliases.
    pub fn new<I, S>(entity_id: &str, canonical_name: &str, aliases: I) -> Result<Self, TaggerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        set.insert(canonical_name.trim().to_string());
        for a in aliases {
            set.insert(a.into().trim().to_string());
        }
        if set.iter().any(|a| a.is_empty()) {
            return Err(TaggerError::EmptyAlias(entity_id.to_string()));
        }
        Ok(CompanyEntity {
            entity_id: entity_id.to_string(),
            canonical_name: canonical_name.trim().to_string(),
            aliases: set,
        })
    }
}

/// Reads `entity_id TAB canonical_name TAB alias1|alias2|...` lines. The alias
/// column is optional.
pub fn read_entities<R: BufRead>(reader: R) -> Result<Vec<CompanyEntity>, TaggerError> {
    let mut out: Vec<CompanyEntity> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 || cols.len() > 3 || cols[0].trim().is_empty() {
            return Err(TaggerError::Parse {
                line: i + 1,
                reason: "expected `entity_id\\tcanonical_name\\talias|alias`".into(),
            });
        }
        let aliases: Vec<&str> = match cols.get(2) {
            Some(a) => a.split('|').collect(),
            None => Vec::new(),
        };
        let e = CompanyEntity::new(cols[0].trim(), cols[1], aliases)?;
        if !seen.insert(e.entity_id.clone()) {
            return Err(TaggerError::DuplicateEntity(e.entity_id));
        }
        out.push(e);
    }
    Ok(out)
}

/// Key used to compare a token against gazetteer entries.
pub fn match_key(norm: &str) -> String {
    let lower = norm.to_lowercase();
    if lower == "risks" {
        "risk".to_string()
    } else {
        lower
    }
}

fn phrase_keys(phrase: &str) -> Vec<String> {
    corpus::tokenize(phrase).iter().map(|t| match_key(&t.norm)).collect()
}

#[derive(Debug, Default, Clone)]
struct TrieNode {
    children: HashMap<String, usize>,
    owners: Vec<String>,
}

/// A trie over token sequences.
#[derive(Debug, Clone)]
struct TokenTrie {
    nodes: Vec<TrieNode>,
    patterns: usize,
}

impl TokenTrie {
    fn new() -> Self {
        TokenTrie {
            nodes: vec![TrieNode::default()],
            patterns: 0,
        }
    }

    fn insert(&mut self, keys: &[String], owner: &str) {
        if keys.is_empty() {
            return;
        }
        let mut at = 0;
        for k in keys {
            at = match self.nodes[at].children.get(k) {
                Some(&n) => n,
                None => {
                    self.nodes.push(TrieNode::default());
                    let n = self.nodes.len() - 1;
                    self.nodes[at].children.insert(k.clone(), n);
                    n
                }
            };
        }
        let owners = &mut self.nodes[at].owners;
        if owners.is_empty() {
            self.patterns += 1;
        }
        if !owners.iter().any(|o| o == owner) {
            owners.push(owner.to_string());
            owners.sort();
        }
    }

    /// Longest entry starting at `start` that avoids masked tokens.
    fn longest_at(&self, keys: &[String], start: usize, masked: &[bool]) -> Option<(usize, &[String])> {
        let mut at = 0;
        let mut best = None;
        for (i, k) in keys.iter().enumerate().skip(start) {
            if masked[i] {
                break;
            }
            match self.nodes[at].children.get(k) {
                Some(&n) => at = n,
                None => break,
            }
            if !self.nodes[at].owners.is_empty() {
                best = Some((i + 1, self.nodes[at].owners.as_slice()));
            }
        }
        best
    }

    fn get(&self, keys: &[String]) -> Option<&[String]> {
        let mut at = 0;
        for k in keys {
            at = *self.nodes[at].children.get(k)?;
        }
        let owners = &self.nodes[at].owners;
        (!owners.is_empty()).then_some(owners.as_slice())
    }

    /// Leftmost-longest, non-overlapping scan.
    fn scan(&self, keys: &[String], masked: &[bool]) -> Vec<(usize, usize, Vec<String>)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < keys.len() {
            match self.longest_at(keys, i, masked) {
                Some((end, owners)) => {
                    out.push((i, end, owners.to_vec()));
                    i = end;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Immutable multi-pattern matcher over company aliases and risk phrases.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    companies: TokenTrie,
    risks: TokenTrie,
}

impl Gazetteer {
    /// Builds a gazetteer from company entities and risk phrases. Risk
    /// phrases resolve to their normalized risk-type id.
    pub fn build<I, S>(entities: &[CompanyEntity], risk_phrases: I) -> Result<Self, TaggerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut companies = TokenTrie::new();
        for e in entities {
            for alias in &e.aliases {
                let keys = phrase_keys(alias);
                if keys.is_empty() {
                    return Err(TaggerError::EmptyAlias(e.entity_id.clone()));
                }
                companies.insert(&keys, &e.entity_id);
            }
        }
        let mut risks = TokenTrie::new();
        for p in risk_phrases {
            let p = p.as_ref();
            let keys = phrase_keys(p);
            if !keys.is_empty() {
                risks.insert(&keys, &normalize_phrase(p));
            }
        }
        if companies.patterns + risks.patterns == 0 {
            return Err(TaggerError::EmptyGazetteer);
        }
        Ok(Gazetteer { companies, risks })
    }

    /// Uses every taxonomy node except the root as a risk phrase.
    pub fn from_taxonomy(entities: &[CompanyEntity], taxonomy: &TaxonomyGraph) -> Result<Self, TaggerError> {
        let phrases: Vec<String> = taxonomy
            .nodes()
            .filter(|n| n.risk_type_id != ROOT)
            .map(|n| n.risk_type_id.clone())
            .collect();
        Self::build(entities, phrases)
    }

    pub fn company_patterns(&self) -> usize {
        self.companies.patterns
    }

    pub fn risk_patterns(&self) -> usize {
        self.risks.patterns
    }

    pub fn pattern_count(&self) -> usize {
        self.companies.patterns + self.risks.patterns
    }

    /// All entities owning an alias.
    pub fn company_owners(&self, alias: &str) -> Vec<String> {
        self.companies
            .get(&phrase_keys(alias))
            .map(<[String]>::to_vec)
            .unwrap_or_default()
    }

    pub fn risk_owner(&self, phrase: &str) -> Option<String> {
        self.risks.get(&phrase_keys(phrase)).and_then(|o| o.first().cloned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MentionKind {
    Company,
    Risk,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MentionSpan {
    pub doc_id: String,
    pub sent_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub kind: MentionKind,
    /// Entity id for companies, risk-type id for risks.
    pub resolved_id: String,
    /// The matched alias belongs to more than one entity.
    #[serde(default)]
    pub ambiguous: bool,
}

impl MentionSpan {
    pub fn overlaps(&self, other: &MentionSpan) -> bool {
        self.token_start < other.token_end && other.token_start < self.token_end
    }
}

/// Tags a sentence. Company matches are found first and their tokens are
/// masked before the risk scan. An ambiguous alias yields one span per owner.
pub fn tag(sentence: &Sentence, gazetteer: &Gazetteer) -> Vec<MentionSpan> {
    let keys: Vec<String> = sentence.tokens.iter().map(|t| match_key(&t.norm)).collect();
    let mut masked = vec![false; keys.len()];
    let mut out = Vec::new();
    let mut push = |start: usize, end: usize, kind: MentionKind, owners: &[String]| {
        for o in owners {
            out.push(MentionSpan {
                doc_id: sentence.doc_id.clone(),
                sent_index: sentence.sent_index,
                token_start: start,
                token_end: end,
                kind,
                resolved_id: o.clone(),
                ambiguous: owners.len() > 1,
            });
        }
    };
    for (s, e, owners) in gazetteer.companies.scan(&keys, &masked) {
        push(s, e, MentionKind::Company, &owners);
        masked[s..e].iter_mut().for_each(|m| *m = true);
    }
    for (s, e, owners) in gazetteer.risks.scan(&keys, &masked) {
        push(s, e, MentionKind::Risk, &owners);
    }
    out.sort();
    out
}

/// A company mention and a risk mention from the same sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "CandidateRecord", try_from = "CandidateRecord")]
pub struct CandidatePair {
    pub pair_id: String,
    pub company: MentionSpan,
    pub risk: MentionSpan,
    pub doc_id: String,
    pub sent_index: usize,
    /// Sentence tokens joined by single spaces.
    pub snippet: String,
    pub published_at: DateTime<Utc>,
}

impl CandidatePair {
    pub fn entity_id(&self) -> &str {
        &self.company.resolved_id
    }

    pub fn risk_type_id(&self) -> &str {
        &self.risk.resolved_id
    }

    pub fn ambiguous(&self) -> bool {
        self.company.ambiguous
    }

    /// Sentence tokens recovered from the snippet.
    pub fn tokens(&self) -> Vec<&str> {
        if self.snippet.is_empty() {
            Vec::new()
        } else {
            self.snippet.split(' ').collect()
        }
    }

    /// Builds a pair with its deterministic id.
    pub fn new(company: MentionSpan, risk: MentionSpan, snippet: String, published_at: DateTime<Utc>) -> Self {
        let pair_id = pair_id(&company, &risk);
        CandidatePair {
            pair_id,
            doc_id: company.doc_id.clone(),
            sent_index: company.sent_index,
            company,
            risk,
            snippet,
            published_at,
        }
    }
}

/// Flat wire format for candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub pair_id: String,
    pub entity_id: String,
    pub risk_type_id: String,
    pub doc_id: String,
    pub sent_index: usize,
    pub company_start: usize,
    pub company_end: usize,
    pub risk_start: usize,
    pub risk_end: usize,
    pub snippet: String,
    pub published_at: DateTime<Utc>,
    #[serde(default)]
    pub ambiguous: bool,
}

impl From<CandidatePair> for CandidateRecord {
    fn from(p: CandidatePair) -> Self {
        CandidateRecord {
            entity_id: p.company.resolved_id,
            risk_type_id: p.risk.resolved_id,
            company_start: p.company.token_start,
            company_end: p.company.token_end,
            risk_start: p.risk.token_start,
            risk_end: p.risk.token_end,
            ambiguous: p.company.ambiguous,
            pair_id: p.pair_id,
            doc_id: p.doc_id,
            sent_index: p.sent_index,
            snippet: p.snippet,
            published_at: p.published_at,
        }
    }
}

impl TryFrom<CandidateRecord> for CandidatePair {
    type Error = String;

    fn try_from(r: CandidateRecord) -> Result<Self, Self::Error> {
        let span = |s: usize, e: usize, kind, id: &str, ambiguous| MentionSpan {
            doc_id: r.doc_id.clone(),
            sent_index: r.sent_index,
            token_start: s,
            token_end: e,
            kind,
            resolved_id: id.to_string(),
            ambiguous,
        };
        let company = span(
            r.company_start,
            r.company_end,
            MentionKind::Company,
            &r.entity_id,
            r.ambiguous,
        );
        let risk = span(r.risk_start, r.risk_end, MentionKind::Risk, &r.risk_type_id, false);
        if company.token_start >= company.token_end || risk.token_start >= risk.token_end {
            return Err(format!("pair {}: empty span", r.pair_id));
        }
        if company.overlaps(&risk) {
            return Err(format!("pair {}: overlapping spans", r.pair_id));
        }
        Ok(CandidatePair {
            pair_id: r.pair_id,
            company,
            risk,
            doc_id: r.doc_id,
            sent_index: r.sent_index,
            snippet: r.snippet,
            published_at: r.published_at,
        })
    }
}

/// Deterministic pair id: the first 16 hex digits of a SHA-256 over the
/// sentence reference, both spans and both resolved ids.
pub fn pair_id(company: &MentionSpan, risk: &MentionSpan) -> String {
    let mut h = Sha256::new();
    let key = format!(
        "{}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}",
        company.doc_id,
        company.sent_index,
        company.token_start,
        company.token_end,
        risk.token_start,
        risk.token_end,
        company.resolved_id,
        risk.resolved_id
    );
    h.update(key.as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Cross product of company and risk spans within one sentence.
pub fn pair_candidates(
    sentence: &Sentence,
    published_at: DateTime<Utc>,
    spans: &[MentionSpan],
) -> Result<Vec<CandidatePair>, TaggerError> {
    for s in spans {
        if s.doc_id != sentence.doc_id || s.sent_index != sentence.sent_index {
            return Err(TaggerError::ForeignSpan {
                expected: format!("{}#{}", sentence.doc_id, sentence.sent_index),
                found: format!("{}#{}", s.doc_id, s.sent_index),
            });
        }
    }
    let snippet = sentence.text();
    let companies = spans.iter().filter(|s| s.kind == MentionKind::Company);
    let mut out = Vec::new();
    for c in companies {
        for r in spans.iter().filter(|s| s.kind == MentionKind::Risk) {
            out.push(CandidatePair::new(c.clone(), r.clone(), snippet.clone(), published_at));
        }
    }
    Ok(out)
}

/// Tags every sentence of a corpus in parallel. Output order follows
/// `(doc_id, sent_index)`.
pub fn tag_corpus(corpus: &Corpus, gazetteer: &Gazetteer) -> Vec<CandidatePair> {
    let sentences = corpus.sentences();
    sentences
        .par_iter()
        .map(|s| {
            let published_at = corpus
                .get(&s.doc_id)
                .map(|d| d.published_at)
                .expect("sentence from corpus");
            let spans = tag(s, gazetteer);
            pair_candidates(s, published_at, &spans).expect("spans from the same sentence")
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
