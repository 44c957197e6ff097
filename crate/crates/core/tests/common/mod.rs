//! Fixture loaders and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use rand::Rng;
use regex::Regex;

use riskmine::corpus::{ingest_file, parse_timestamp, Corpus, Document};
use riskmine::ecosystem::SupplyChainGraph;
use riskmine::register::{RiskEntry, RiskRegister, SwanClass};
use riskmine::relation::{read_examples, train, Featurizer, Hyperparams, LabeledExample, RelationModel};
use riskmine::tagger::{read_entities, tag_corpus, CandidatePair, CompanyEntity, Gazetteer};
use riskmine::taxonomy::{TaxonomyGraph, STOPWORDS};

pub const SENTENCE_A: &str = "Microsoft are facing a fine, said Bill Gates.";
pub const SENTENCE_B: &str = "I feel fine, said Microsoft's Bill Gates.";

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn reader(rel: &str) -> BufReader<File> {
    BufReader::new(File::open(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}")))
}

pub fn labeled_examples() -> Vec<LabeledExample> {
    read_examples(reader("labeled.jsonl")).unwrap()
}

pub fn trained_model() -> RelationModel {
    train(&labeled_examples(), &Hyperparams::default(), &Featurizer::default()).unwrap()
}

pub struct Acme {
    pub corpus: Corpus,
    pub entities: Vec<CompanyEntity>,
    pub taxonomy: TaxonomyGraph,
}

pub fn acme() -> Acme {
    Acme {
        corpus: ingest_file(fixture("acme/news.jsonl")).unwrap(),
        entities: read_entities(reader("acme/entities.tsv")).unwrap(),
        taxonomy: TaxonomyGraph::read_edges_tsv(reader("acme/taxonomy.tsv")).unwrap(),
    }
}

pub fn acme_expected_counts() -> BTreeMap<String, u64> {
    [
        ("office fire risk", 1),
        ("cash-flow risk", 2),
        ("copyright litigation risk", 1),
        ("demand risk", 14),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Candidate pairs for a one-sentence document about Microsoft and a fine.
pub fn microsoft_pair(text: &str) -> CandidatePair {
    let mut corpus = Corpus::new();
    corpus
        .insert(Document {
            doc_id: "ms".into(),
            source: "test".into(),
            published_at: parse_timestamp("2015-03-01").unwrap(),
            text: text.into(),
        })
        .unwrap();
    let ms = CompanyEntity::new("MICROSOFT", "Microsoft", ["Microsoft"]).unwrap();
    let gaz = Gazetteer::build(&[ms], ["fine"]).unwrap();
    let mut pairs = tag_corpus(&corpus, &gaz);
    assert_eq!(pairs.len(), 1, "{text}");
    pairs.remove(0)
}

pub fn date(s: &str) -> chrono::NaiveDate {
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

/// A machine-free register with one mention per type.
pub fn register_of(entity: &str, types: &[&str]) -> RiskRegister {
    let mut r = RiskRegister::empty(entity);
    for t in types {
        r.entries.insert(
            t.to_string(),
            RiskEntry {
                risk_type: t.to_string(),
                mention_count: 1,
                first_seen: date("2015-01-01"),
                last_seen: date("2015-01-01"),
                likelihood: None,
                impact: None,
                swan_class: SwanClass::Unclassified,
                provenance: vec![format!("{entity}/{t}")],
            },
        );
    }
    r
}

// ---------------------------------------------------------------------------
// Taxonomy: synthetic corpus and regex-scan oracle

const MODIFIERS: &[&str] = &[
    "financial",
    "legal",
    "market",
    "credit",
    "operational",
    "political",
    "cyber",
    "supply",
    "chain",
    "global",
];
const HYPONYMS: &[&str] = &[
    "fraud",
    "bribery",
    "bankruptcy",
    "currency devaluation",
    "strike",
    "flood",
    "data breach",
    "recall",
    "cash-flow risk",
    "demand risk",
    "fire",
    "sanctions",
    "price war",
    "hurricane damage",
    "key staff loss",
    "patent troll lawsuit threat",
    "very long named exotic tail event",
    "risk",
];
const FILLERS: &[&str] = &[
    "analysts", "warned", "about", "the", "firms", "face", "many", "of", "we", "track", "new", "were",
];
const TAILS: &[&str] = &["", " were discussed", " in the report", " remain", " of the year"];
const NOISE: &[&str] = &[
    "Products such as phones and tablets sold well.",
    "The board met in March.",
    "Costs like rent and wages rose.",
    "Nothing such as that happened.",
    "Risk managers met the board.",
];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn synthetic_list<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..=8);
    let items: Vec<&str> = (0..n).map(|_| pick(rng, HYPONYMS)).collect();
    if n == 1 {
        return items[0].to_string();
    }
    let last_sep = if rng.random_bool(0.5) { " and " } else { " or " };
    let oxford = if rng.random_bool(0.3) { "," } else { "" };
    format!("{}{}{}{}", items[..n - 1].join(", "), oxford, last_sep, items[n - 1])
}

fn synthetic_hypernym<R: Rng>(rng: &mut R) -> String {
    let mods: Vec<&str> = (0..rng.random_range(0..=5)).map(|_| pick(rng, MODIFIERS)).collect();
    let head = if rng.random_bool(0.8) { "risks" } else { "risk" };
    if mods.is_empty() {
        head.to_string()
    } else {
        format!("{} {head}", mods.join(" "))
    }
}

/// One synthetic sentence: a hyper-first or hypo-first Hearst construction,
/// or noise.
pub fn synthetic_sentence<R: Rng>(rng: &mut R) -> String {
    let fillers: Vec<&str> = (0..rng.random_range(0..=3)).map(|_| pick(rng, FILLERS)).collect();
    let lead = if fillers.is_empty() {
        String::new()
    } else {
        format!("{} ", fillers.join(" "))
    };
    let body = match rng.random_range(0..10) {
        0..=4 => {
            let lit = pick(rng, &["such as", "including", "like"]);
            format!(
                "{lead}{} {lit} {}{}",
                synthetic_hypernym(rng),
                synthetic_list(rng),
                pick(rng, TAILS)
            )
        }
        5..=8 => {
            let lit = pick(rng, &["and other", "or other"]);
            format!(
                "{lead}{} {lit} {}{}",
                synthetic_list(rng),
                synthetic_hypernym(rng),
                pick(rng, TAILS)
            )
        }
        _ => return pick(rng, NOISE).to_string(),
    };
    format!("{}.", capitalize(body.trim()))
}

/// `n` sentences spread over documents of one to three sentences.
pub fn synthetic_corpus<R: Rng>(rng: &mut R, n: usize) -> (Corpus, Vec<String>) {
    let sentences: Vec<String> = (0..n).map(|_| synthetic_sentence(rng)).collect();
    let mut corpus = Corpus::new();
    let mut i = 0;
    let mut doc = 0;
    while i < n {
        let k = rng.random_range(1..=3).min(n - i);
        corpus
            .insert(Document {
                doc_id: format!("syn-{doc:05}"),
                source: "synthetic".into(),
                published_at: parse_timestamp("2015-01-01").unwrap(),
                text: sentences[i..i + k].join(" "),
            })
            .unwrap();
        i += k;
        doc += 1;
    }
    (corpus, sentences)
}

pub struct TaxonomyOracle {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

fn oracle_normalize(words: &[&str]) -> String {
    let mut w: Vec<&str> = words.to_vec();
    while w.len() > 1 && matches!(w[0], "a" | "an" | "the") {
        w.remove(0);
    }
    let mut s = w.join(" ");
    if s == "risks" || s.ends_with(" risks") {
        s.truncate(s.len() - 1);
    }
    s
}

/// Independent scan: each sentence is lowercased and split on spaces and
/// punctuation; every token is mapped to a class letter (`h` risk head, `w`
/// other phrase word, `s` separator, `x` anything else) and the Hearst
/// constructions are found with regexes over that class string.
pub fn taxonomy_oracle(sentences: &[String], min_support: usize) -> TaxonomyOracle {
    let token_re = Regex::new(r"[a-z0-9][a-z0-9'-]*|[^\sa-z0-9]").unwrap();
    let literals = [
        (Regex::new(r"\bsuch as\b").unwrap(), true),
        (Regex::new(r"\bincluding\b").unwrap(), true),
        (Regex::new(r"\blike\b").unwrap(), true),
        (Regex::new(r"\band other\b").unwrap(), false),
        (Regex::new(r"\bor other\b").unwrap(), false),
    ];
    let hyper_before = Regex::new(r"[wh]{0,3}h$").unwrap();
    let hyper_after = Regex::new(r"^w{0,3}h").unwrap();
    let run = Regex::new(r"^[wh]+").unwrap();
    let seps = Regex::new(r"^s+").unwrap();

    // Greedy list: maximal word runs of 1..=4 tokens joined by separators,
    // at most six items. Works on a class string read away from the literal.
    let list = |classes: &str| -> Vec<(usize, usize)> {
        let mut items = Vec::new();
        let mut pos = 0;
        while items.len() < 6 {
            let Some(m) = run.find(&classes[pos..]) else { break };
            if m.len() > 4 {
                break;
            }
            items.push((pos, pos + m.len()));
            pos += m.len();
            match seps.find(&classes[pos..]) {
                Some(s) => pos += s.len(),
                None => break,
            }
        }
        items
    };

    let mut support: BTreeMap<String, usize> = BTreeMap::new();
    let mut raw_edges: BTreeSet<(String, String)> = BTreeSet::new();
    let mut has_root = false;
    for sentence in sentences {
        let lower = sentence.to_lowercase();
        let toks: Vec<&str> = token_re.find_iter(&lower).map(|m| m.as_str()).collect();
        let class: String = toks
            .iter()
            .map(|t| {
                if matches!(*t, "," | "and" | "or") {
                    's'
                } else if !t.chars().next().unwrap().is_alphanumeric() || STOPWORDS.contains(t) {
                    'x'
                } else if matches!(*t, "risk" | "risks") {
                    'h'
                } else {
                    'w'
                }
            })
            .collect();
        let joined = toks.join(" ");
        for (lit, hyper_first) in &literals {
            for m in lit.find_iter(&joined) {
                let at = joined[..m.start()].matches(' ').count();
                let after = at + m.as_str().split(' ').count();
                let (hyper, items) = if *hyper_first {
                    let Some(h) = hyper_before.find(&class[..at]) else {
                        continue;
                    };
                    let items = list(&class[after..])
                        .into_iter()
                        .map(|(s, e)| (after + s, after + e))
                        .collect::<Vec<_>>();
                    ((h.start(), h.end()), items)
                } else {
                    let Some(h) = hyper_after.find(&class[after..]) else {
                        continue;
                    };
                    let rev: String = class[..at].chars().rev().collect();
                    let items = list(&rev)
                        .into_iter()
                        .map(|(s, e)| (at - e, at - s))
                        .collect::<Vec<_>>();
                    ((after + h.start(), after + h.end()), items)
                };
                if items.is_empty() {
                    continue;
                }
                let hyper = oracle_normalize(&toks[hyper.0..hyper.1]);
                if hyper != "risk" {
                    *support.entry(hyper.clone()).or_default() += 1;
                    raw_edges.insert((hyper.clone(), "risk".into()));
                    has_root = true;
                }
                for (s, e) in items {
                    let hypo = oracle_normalize(&toks[s..e]);
                    if hypo == hyper || hypo == "risk" {
                        continue;
                    }
                    *support.entry(hypo.clone()).or_default() += 1;
                    if hyper == "risk" {
                        has_root = true;
                    }
                    raw_edges.insert((hypo, hyper.clone()));
                }
            }
        }
    }
    let mut nodes: BTreeSet<String> = support
        .into_iter()
        .filter(|(_, n)| *n >= min_support)
        .map(|(k, _)| k)
        .collect();
    if has_root {
        nodes.insert("risk".into());
    }
    let edges = raw_edges
        .into_iter()
        .filter(|(c, p)| nodes.contains(c) && nodes.contains(p))
        .collect();
    TaxonomyOracle { nodes, edges }
}

// ---------------------------------------------------------------------------
// Supply chains: random DAGs and path enumeration

pub struct RandomChain {
    pub graph: SupplyChainGraph,
    pub registers: BTreeMap<String, RiskRegister>,
}

/// A random DAG over `n` nodes (edges only from lower to higher index) with
/// λ = 1, no rules and random one-to-three-type registers.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p_edge: f64) -> RandomChain {
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut graph = SupplyChainGraph::new();
    for name in &names {
        graph.add_node(name);
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p_edge) {
                graph.add_edge(&names[i], &names[j], 1.0, BTreeMap::new()).unwrap();
            }
        }
    }
    let pool = ["risk a", "risk b", "risk c", "risk d"];
    let mut registers = BTreeMap::new();
    for name in &names {
        if rng.random_bool(0.6) {
            let k = rng.random_range(1..=3);
            let types: BTreeSet<&str> = (0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect();
            let types: Vec<&str> = types.into_iter().collect();
            registers.insert(name.clone(), register_of(name, &types));
        }
    }
    RandomChain { graph, registers }
}

/// (target, risk type, origin, path) for every walk along supplier edges with
/// distinct nodes and at most `max_hops` edges, found by extending every node
/// sequence one node at a time.
pub fn enumerate_paths(chain: &RandomChain, max_hops: usize) -> BTreeSet<(String, String, String, Vec<String>)> {
    let nodes: Vec<String> = chain.graph.nodes().map(String::from).collect();
    let mut out = BTreeSet::new();
    let mut frontier: Vec<Vec<String>> = nodes.iter().map(|n| vec![n.clone()]).collect();
    for _ in 0..max_hops {
        let mut next = Vec::new();
        for seq in &frontier {
            for n in &nodes {
                if seq.contains(n) || chain.graph.edge(seq.last().unwrap(), n).is_none() {
                    continue;
                }
                let mut s = seq.clone();
                s.push(n.clone());
                if let Some(reg) = chain.registers.get(&s[0]) {
                    for t in reg.entries.keys() {
                        out.insert((n.clone(), t.clone(), s[0].clone(), s.clone()));
                    }
                }
                next.push(s);
            }
        }
        frontier = next;
    }
    out
}

// ---------------------------------------------------------------------------
// Pooling

/// Precision, recall and F1 from plain set arithmetic.
pub fn pooled_oracle(system: &BTreeSet<String>, correct: &BTreeSet<String>) -> (f64, f64, f64) {
    let tp = system.intersection(correct).count() as f64;
    let p = if system.is_empty() {
        1.0
    } else {
        tp / system.len() as f64
    };
    let r = if correct.is_empty() {
        0.0
    } else {
        tp / correct.len() as f64
    };
    let f = if tp == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

// ---------------------------------------------------------------------------
// Mentions

/// Random classified mentions of one entity, each with a distinct pair id.
pub fn random_mentions<R: Rng>(rng: &mut R, n: usize, entity: &str) -> Vec<riskmine::relation::RiskMention> {
    use riskmine::relation::{Judgment, RiskMention, Verdict};
    use riskmine::tagger::{MentionKind, MentionSpan};
    let types = ["demand risk", "fraud", "office fire risk", "cash-flow risk", "strike"];
    (0..n)
        .map(|i| {
            let doc_id = format!("m{i:05}");
            let risk = types[rng.random_range(0..types.len())];
            let span = |s, e, kind, id: &str| MentionSpan {
                doc_id: doc_id.clone(),
                sent_index: 0,
                token_start: s,
                token_end: e,
                kind,
                resolved_id: id.to_string(),
                ambiguous: false,
            };
            let day = rng.random_range(1..=28);
            let month = rng.random_range(1..=12);
            let pair = CandidatePair::new(
                span(0, 1, MentionKind::Company, entity),
                span(2, 3, MentionKind::Risk, risk),
                "Acme faces risk".into(),
                parse_timestamp(&format!("2014-{month:02}-{day:02}")).unwrap(),
            );
            let score: f64 = rng.random();
            RiskMention {
                pair,
                score,
                verdict: if score >= 0.5 {
                    Verdict::Accepted
                } else {
                    Verdict::Rejected
                },
                judgment: match rng.random_range(0..4) {
                    0 => Judgment::Correct,
                    1 => Judgment::Incorrect,
                    _ => Judgment::Unreviewed,
                },
                model_version: 1,
            }
        })
        .collect()
}
