//! Risk registers across a supply chain and across an investment portfolio.
//!
//! Propagation walks simple supplier paths backward from each entity, maps
//! each upstream type through the per-edge rules and multiplies the edge
//! attenuations. Propagated entries are reported next to, never inside, the
//! receiving entity's own register.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::register::RiskRegister;
use crate::taxonomy::normalize_phrase;

pub const DEFAULT_MAX_HOPS: usize = 3;

#[derive(Debug, Error)]
pub enum EcosystemError {
    #[error("self edge on {0}")]
    SelfEdge(String),
    #[error("edge {0} -> {1}: lambda {2} outside (0, 1]")]
    BadLambda(String, String, f64),
    #[error("max_hops must be at least 1")]
    ZeroHops,
    #[error("entity {0} is not in the supply-chain graph")]
    UnknownEntity(String),
    #[error("no register for holding {0}")]
    MissingRegister(String),
    #[error("portfolio {0} is empty")]
    EmptyPortfolio(String),
    #[error("portfolio {0} lists {1} twice")]
    DuplicateHolding(String, String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(line: usize, reason: impl Into<String>) -> EcosystemError {
    EcosystemError::Parse {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyEdge {
    pub supplier: String,
    pub customer: String,
    pub lambda: f64,
    /// Upstream risk type → downstream risk type, exact match only.
    pub rules: BTreeMap<String, String>,
}

impl SupplyEdge {
    pub fn transform<'a>(&'a self, risk_type: &'a str) -> &'a str {
        self.rules.get(risk_type).map_or(risk_type, String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupplyChainGraph {
    nodes: BTreeSet<String>,
    edges: BTreeMap<(String, String), SupplyEdge>,
}

impl SupplyChainGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: &str) {
        self.nodes.insert(id.to_string());
    }

    /// Adds or replaces the edge `supplier -> customer`.
    pub fn add_edge(
        &mut self,
        supplier: &str,
        customer: &str,
        lambda: f64,
        rules: BTreeMap<String, String>,
    ) -> Result<(), EcosystemError> {
        if supplier == customer {
            return Err(EcosystemError::SelfEdge(supplier.to_string()));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(EcosystemError::BadLambda(supplier.into(), customer.into(), lambda));
        }
        self.add_node(supplier);
        self.add_node(customer);
        let rules = rules
            .into_iter()
            .map(|(k, v)| (normalize_phrase(&k), normalize_phrase(&v)))
            .collect();
        self.edges.insert(
            (supplier.to_string(), customer.to_string()),
            SupplyEdge {
                supplier: supplier.to_string(),
                customer: customer.to_string(),
                lambda,
                rules,
            },
        );
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &SupplyEdge> {
        self.edges.values()
    }

    pub fn edge(&self, supplier: &str, customer: &str) -> Option<&SupplyEdge> {
        self.edges.get(&(supplier.to_string(), customer.to_string()))
    }

    /// In-edges of `customer`, ordered by supplier.
    pub fn suppliers_of(&self, customer: &str) -> Vec<&SupplyEdge> {
        self.edges.values().filter(|e| e.customer == customer).collect()
    }

    /// Reads `supplier TAB customer [TAB lambda [TAB src->dst|...]]` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<SupplyChainGraph, EcosystemError> {
        let mut g = SupplyChainGraph::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() < 2 {
                return Err(parse_err(i + 1, "expected supplier and customer"));
            }
            let lambda = match f.get(2).map(|s| s.trim()).filter(|s| !s.is_empty()) {
                Some(s) => s.parse().map_err(|_| parse_err(i + 1, format!("bad lambda {s:?}")))?,
                None => 1.0,
            };
            let mut rules = BTreeMap::new();
            if let Some(spec) = f.get(3).filter(|s| !s.trim().is_empty()) {
                for r in spec.split('|') {
                    let (src, dst) = r
                        .split_once("->")
                        .ok_or_else(|| parse_err(i + 1, format!("rule {r:?} lacks `->`")))?;
                    rules.insert(src.trim().to_string(), dst.trim().to_string());
                }
            }
            g.add_edge(f[0].trim(), f[1].trim(), lambda, rules)
                .map_err(|e| match e {
                    EcosystemError::Io(_) => e,
                    other => parse_err(i + 1, other.to_string()),
                })?;
        }
        Ok(g)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in self.edges.values() {
            let rules: Vec<String> = e.rules.iter().map(|(s, d)| format!("{s}->{d}")).collect();
            writeln!(w, "{}\t{}\t{}\t{}", e.supplier, e.customer, e.lambda, rules.join("|"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Directness {
    Indirect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatedEntry {
    /// Type as received, after the edge rules.
    pub risk_type: String,
    /// Type in the origin's own register.
    pub source_type: String,
    pub origin_entity: String,
    pub hop_count: usize,
    /// Origin first, receiving entity last.
    pub path: Vec<String>,
    pub weight: f64,
    pub directness: Directness,
}

fn sort_key(e: &PropagatedEntry) -> (&str, &str, usize, &[String], &str) {
    (&e.risk_type, &e.origin_entity, e.hop_count, &e.path, &e.source_type)
}

/// Propagated entries for every graph node. Entities without a register are
/// treated as having an empty one.
pub fn propagate(
    graph: &SupplyChainGraph,
    registers: &BTreeMap<String, RiskRegister>,
    max_hops: usize,
) -> Result<BTreeMap<String, Vec<PropagatedEntry>>, EcosystemError> {
    if max_hops == 0 {
        return Err(EcosystemError::ZeroHops);
    }
    if let Some(unknown) = registers.keys().find(|k| !graph.contains(k)) {
        return Err(EcosystemError::UnknownEntity(unknown.clone()));
    }
    let targets: Vec<&String> = graph.nodes.iter().collect();
    Ok(targets
        .par_iter()
        .map(|t| ((*t).clone(), propagate_to(graph, registers, t, max_hops)))
        .collect())
}

fn propagate_to(
    graph: &SupplyChainGraph,
    registers: &BTreeMap<String, RiskRegister>,
    target: &str,
    max_hops: usize,
) -> Vec<PropagatedEntry> {
    // Reversed path: target first.
    let mut out = Vec::new();
    let mut stack = vec![target.to_string()];
    walk(graph, registers, &mut stack, max_hops, &mut out);
    out.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    out
}

fn walk(
    graph: &SupplyChainGraph,
    registers: &BTreeMap<String, RiskRegister>,
    rev_path: &mut Vec<String>,
    max_hops: usize,
    out: &mut Vec<PropagatedEntry>,
) {
    let head = rev_path.last().expect("non-empty path").clone();
    for edge in graph.suppliers_of(&head) {
        if rev_path.contains(&edge.supplier) {
            continue;
        }
        rev_path.push(edge.supplier.clone());
        let path: Vec<String> = rev_path.iter().rev().cloned().collect();
        if let Some(reg) = registers.get(&edge.supplier) {
            let hops: Vec<&SupplyEdge> = path
                .windows(2)
                .map(|w| graph.edge(&w[0], &w[1]).expect("path follows edges"))
                .collect();
            let weight: f64 = hops.iter().map(|e| e.lambda).product();
            for source in reg.entries.keys() {
                let mut t = source.as_str();
                for e in &hops {
                    t = e.transform(t);
                }
                out.push(PropagatedEntry {
                    risk_type: t.to_string(),
                    source_type: source.clone(),
                    origin_entity: edge.supplier.clone(),
                    hop_count: hops.len(),
                    path: path.clone(),
                    weight,
                    directness: Directness::Indirect,
                });
            }
        }
        if rev_path.len() <= max_hops {
            walk(graph, registers, rev_path, max_hops, out);
        }
        rev_path.pop();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SinglePoint {
    pub origin_entity: String,
    pub risk_type: String,
    /// Other suppliers of the origin's customer that are not exposed to the
    /// origin's source risk type; 0 flags a single point of failure.
    pub alternatives: usize,
}

/// For every propagated risk reaching `entity`, counts alternative suppliers
/// at the origin's tier. With several paths the smallest count is kept.
pub fn single_point_of_failure(
    graph: &SupplyChainGraph,
    registers: &BTreeMap<String, RiskRegister>,
    entity: &str,
    max_hops: usize,
) -> Result<Vec<SinglePoint>, EcosystemError> {
    if !graph.contains(entity) {
        return Err(EcosystemError::UnknownEntity(entity.to_string()));
    }
    let propagated = propagate(graph, registers, max_hops)?;
    let exposed = |supplier: &str, source_type: &str| {
        registers
            .get(supplier)
            .is_some_and(|r| r.entries.contains_key(source_type))
            || propagated[supplier].iter().any(|p| p.source_type == source_type)
    };
    let mut best: BTreeMap<(String, String), usize> = BTreeMap::new();
    for p in &propagated[entity] {
        let customer = &p.path[1];
        let alternatives = graph
            .suppliers_of(customer)
            .into_iter()
            .filter(|e| e.supplier != p.origin_entity && !exposed(&e.supplier, &p.source_type))
            .count();
        best.entry((p.origin_entity.clone(), p.risk_type.clone()))
            .and_modify(|n| *n = (*n).min(alternatives))
            .or_insert(alternatives);
    }
    Ok(best
        .into_iter()
        .map(|((origin_entity, risk_type), alternatives)| SinglePoint {
            origin_entity,
            risk_type,
            alternatives,
        })
        .collect())
}

pub fn write_propagated_jsonl<W: Write>(
    mut w: W,
    propagated: &BTreeMap<String, Vec<PropagatedEntry>>,
) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Rec<'a> {
        entity_id: &'a str,
        #[serde(flatten)]
        entry: &'a PropagatedEntry,
    }
    for (entity_id, entries) in propagated {
        for entry in entries {
            serde_json::to_writer(&mut w, &Rec { entity_id, entry })?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Portfolio {
    pub portfolio_id: String,
    pub holdings: Vec<String>,
}

impl Portfolio {
    pub fn new(portfolio_id: &str, holdings: Vec<String>) -> Result<Portfolio, EcosystemError> {
        if holdings.is_empty() {
            return Err(EcosystemError::EmptyPortfolio(portfolio_id.to_string()));
        }
        let mut seen = BTreeSet::new();
        for h in &holdings {
            if !seen.insert(h) {
                return Err(EcosystemError::DuplicateHolding(portfolio_id.to_string(), h.clone()));
            }
        }
        Ok(Portfolio {
            portfolio_id: portfolio_id.to_string(),
            holdings,
        })
    }
}

/// Reads portfolios: a `#portfolio <id>` header followed by one entity id
/// per line.
pub fn read_portfolios<R: BufRead>(reader: R) -> Result<BTreeMap<String, Portfolio>, EcosystemError> {
    let mut raw: Vec<(String, usize, Vec<String>)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let l = line.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(id) = l.strip_prefix("#portfolio") {
            let id = id.trim();
            if id.is_empty() {
                return Err(parse_err(i + 1, "portfolio header without id"));
            }
            raw.push((id.to_string(), i + 1, Vec::new()));
        } else if l.starts_with('#') {
            continue;
        } else {
            let cur = raw
                .last_mut()
                .ok_or_else(|| parse_err(i + 1, "holding before any `#portfolio` header"))?;
            cur.2.push(l.to_string());
        }
    }
    let mut out = BTreeMap::new();
    for (id, line, holdings) in raw {
        let p = Portfolio::new(&id, holdings).map_err(|e| parse_err(line, e.to_string()))?;
        if out.insert(id.clone(), p).is_some() {
            return Err(parse_err(line, format!("portfolio {id} defined twice")));
        }
    }
    Ok(out)
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSimilarity {
    pub a: String,
    pub b: String,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub portfolio_id: String,
    pub holdings: Vec<String>,
    pub risk_types: Vec<String>,
    /// `occupancy[i][j]`: holding `i` is exposed to risk type `j`.
    pub occupancy: Vec<Vec<bool>>,
    pub pairs: Vec<PairSimilarity>,
    /// One minus the mean pairwise Jaccard; 1 for a single holding.
    pub diversity: f64,
}

impl Overlap {
    pub fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .map(|p| p.jaccard)
    }

    /// Rows are holdings, columns risk types, cells 0/1, then a
    /// `diversity,<score>` footer.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EcosystemError> {
        let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
        let mut header = vec!["entity_id".to_string()];
        header.extend(self.risk_types.iter().cloned());
        out.write_record(&header)?;
        for (h, row) in self.holdings.iter().zip(&self.occupancy) {
            let mut rec = vec![h.clone()];
            rec.extend(row.iter().map(|&b| if b { "1" } else { "0" }.to_string()));
            out.write_record(&rec)?;
        }
        out.write_record(["diversity".to_string(), self.diversity.to_string()])?;
        out.flush()?;
        Ok(())
    }
}

pub fn portfolio_overlap(
    portfolio: &Portfolio,
    registers: &BTreeMap<String, RiskRegister>,
) -> Result<Overlap, EcosystemError> {
    let sets: Vec<BTreeSet<String>> = portfolio
        .holdings
        .iter()
        .map(|h| {
            registers
                .get(h)
                .map(RiskRegister::qualitative_view)
                .ok_or_else(|| EcosystemError::MissingRegister(h.clone()))
        })
        .collect::<Result<_, _>>()?;
    let risk_types: Vec<String> = sets
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let occupancy = sets
        .iter()
        .map(|s| risk_types.iter().map(|t| s.contains(t)).collect())
        .collect();
    let mut pairs = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            pairs.push(PairSimilarity {
                a: portfolio.holdings[i].clone(),
                b: portfolio.holdings[j].clone(),
                jaccard: jaccard(&sets[i], &sets[j]),
            });
        }
    }
    let diversity = if pairs.is_empty() {
        1.0
    } else {
        1.0 - pairs.iter().map(|p| p.jaccard).sum::<f64>() / pairs.len() as f64
    };
    Ok(Overlap {
        portfolio_id: portfolio.portfolio_id.clone(),
        holdings: portfolio.holdings.clone(),
        risk_types,
        occupancy,
        pairs,
        diversity,
    })
}
