//! Per-entity risk registers built from accepted mentions, plus management
//! plans, surprise scoring and pooled evaluation.
//!
//! Likelihood and impact are only ever written through
//! [`RiskRegister::assess`]; nothing derived from mention counts reaches them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relation::RiskMention;
use crate::taxonomy::{normalize_phrase, TaxonomyGraph};

#[derive(Debug, Error)]
pub enum RegisterError {
    #[error("mention {pair_id} belongs to {found}, not {expected}")]
    ForeignMention {
        pair_id: String,
        expected: String,
        found: String,
    },
    #[error("cannot merge register of {0} into register of {1}")]
    EntityMismatch(String, String),
    #[error("corpus statistics are empty")]
    EmptyStats,
    #[error("pool for {entity} does not judge: {}", types.join(", "))]
    Unjudged { entity: String, types: Vec<String> },
    #[error("risk type {0:?} is not in the register")]
    UnknownType(String),
    #[error("invalid assessment: {0}")]
    InvalidAssessment(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(line: usize, reason: impl Into<String>) -> RegisterError {
    RegisterError::Parse {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodBand {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpactBand {
    Low,
    Medium,
    High,
    Fatal,
}

/// R_L: a band or a probability, entered by an analyst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Likelihood {
    Band(LikelihoodBand),
    Probability(f64),
}

/// R_I: a band or a monetary loss triple, entered by an analyst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Impact {
    Band(ImpactBand),
    Loss { min: f64, expected: f64, max: f64 },
}

fn band_name<T: Serialize>(b: &T) -> String {
    serde_json::to_value(b)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl fmt::Display for Likelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Likelihood::Band(b) => f.write_str(&band_name(b)),
            Likelihood::Probability(p) => write!(f, "{p}"),
        }
    }
}

impl fmt::Display for Impact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Impact::Band(b) => f.write_str(&band_name(b)),
            Impact::Loss { min, expected, max } => write!(f, "{min}/{expected}/{max}"),
        }
    }
}

impl FromStr for Likelihood {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Ok(p) = s.parse::<f64>() {
            return Ok(Likelihood::Probability(p));
        }
        serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
            .map(Likelihood::Band)
            .map_err(|_| format!("unknown likelihood {s:?}"))
    }
}

impl FromStr for Impact {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() == 3 {
            let n = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("bad loss amount {x:?}"));
            return Ok(Impact::Loss {
                min: n(parts[0])?,
                expected: n(parts[1])?,
                max: n(parts[2])?,
            });
        }
        serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
            .map(Impact::Band)
            .map_err(|_| format!("unknown impact {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SwanClass {
    Obvious,
    Gray,
    #[default]
    Unclassified,
}

impl fmt::Display for SwanClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwanClass::Obvious => "OBVIOUS",
            SwanClass::Gray => "GRAY",
            SwanClass::Unclassified => "UNCLASSIFIED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEntry {
    pub risk_type: String,
    pub mention_count: u64,
    pub first_seen: NaiveDate,
    pub last_seen: NaiveDate,
    pub likelihood: Option<Likelihood>,
    pub impact: Option<Impact>,
    #[serde(default)]
    pub swan_class: SwanClass,
    /// Sorted pair ids, one per counted mention.
    pub provenance: Vec<String>,
}

impl RiskEntry {
    fn absorb(&mut self, other: RiskEntry) {
        self.mention_count += other.mention_count;
        self.first_seen = self.first_seen.min(other.first_seen);
        self.last_seen = self.last_seen.max(other.last_seen);
        self.likelihood = self.likelihood.or(other.likelihood);
        self.impact = self.impact.or(other.impact);
        if self.swan_class == SwanClass::Unclassified {
            self.swan_class = other.swan_class;
        }
        self.provenance.extend(other.provenance);
        self.provenance.sort();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegisterForm {
    Qualitative,
    #[default]
    Quantitative,
}

impl FromStr for RegisterForm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "qualitative" => Ok(RegisterForm::Qualitative),
            "quantitative" => Ok(RegisterForm::Quantitative),
            _ => Err(format!("unknown register view {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRegister {
    pub entity_id: String,
    pub entries: BTreeMap<String, RiskEntry>,
    pub as_of: DateTime<Utc>,
}

impl RiskRegister {
    pub fn empty(entity_id: impl Into<String>) -> Self {
        RiskRegister {
            entity_id: entity_id.into(),
            entries: BTreeMap::new(),
            as_of: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn qualitative_view(&self) -> BTreeSet<String> {
        self.entries.keys().cloned().collect()
    }

    /// Risk type → mention count.
    pub fn quantitative_view(&self) -> BTreeMap<String, u64> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.mention_count)).collect()
    }

    pub fn total_mentions(&self) -> u64 {
        self.entries.values().map(|e| e.mention_count).sum()
    }

    /// Combines two partial registers of the same entity.
    pub fn merge(mut self, other: RiskRegister) -> Result<RiskRegister, RegisterError> {
        if self.entity_id != other.entity_id {
            return Err(RegisterError::EntityMismatch(other.entity_id, self.entity_id));
        }
        self.as_of = self.as_of.max(other.as_of);
        for (k, e) in other.entries {
            match self.entries.get_mut(&k) {
                Some(mine) => mine.absorb(e),
                None => {
                    self.entries.insert(k, e);
                }
            }
        }
        Ok(self)
    }

    /// The manual input path for R_L and R_I.
    pub fn assess(
        &mut self,
        risk_type: &str,
        likelihood: Option<Likelihood>,
        impact: Option<Impact>,
    ) -> Result<(), RegisterError> {
        if let Some(Likelihood::Probability(p)) = likelihood {
            if !(0.0..=1.0).contains(&p) {
                return Err(RegisterError::InvalidAssessment(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
        }
        if let Some(Impact::Loss { min, expected, max }) = impact {
            if !(min <= expected && expected <= max) {
                return Err(RegisterError::InvalidAssessment(format!(
                    "loss triple {min}/{expected}/{max} is not ordered"
                )));
            }
        }
        let key = normalize_phrase(risk_type);
        let entry = self
            .entries
            .get_mut(&key)
            .ok_or(RegisterError::UnknownType(key.clone()))?;
        if likelihood.is_some() {
            entry.likelihood = likelihood;
        }
        if impact.is_some() {
            entry.impact = impact;
        }
        Ok(())
    }

    pub fn apply_swan_classes(&mut self, scores: &BTreeMap<String, Surprise>) {
        for (k, e) in self.entries.iter_mut() {
            e.swan_class = scores.get(k).map_or(SwanClass::Unclassified, |s| s.class);
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), RegisterError> {
        write_registers_csv(w, std::slice::from_ref(self))
    }
}

/// Builds `entity`'s register from the mentions that are accepted after
/// judgment precedence.
pub fn aggregate(mentions: &[RiskMention], entity: &str) -> Result<RiskRegister, RegisterError> {
    let mut reg = RiskRegister::empty(entity);
    for m in mentions {
        if m.pair.entity_id() != entity {
            return Err(RegisterError::ForeignMention {
                pair_id: m.pair.pair_id.clone(),
                expected: entity.to_string(),
                found: m.pair.entity_id().to_string(),
            });
        }
        reg.as_of = reg.as_of.max(m.pair.published_at);
        if !m.is_accepted() {
            continue;
        }
        let day = m.pair.published_at.date_naive();
        let key = normalize_phrase(m.pair.risk_type_id());
        reg.entries
            .entry(key.clone())
            .and_modify(|e| {
                e.mention_count += 1;
                e.first_seen = e.first_seen.min(day);
                e.last_seen = e.last_seen.max(day);
                e.provenance.push(m.pair.pair_id.clone());
            })
            .or_insert_with(|| RiskEntry {
                risk_type: key,
                mention_count: 1,
                first_seen: day,
                last_seen: day,
                likelihood: None,
                impact: None,
                swan_class: SwanClass::Unclassified,
                provenance: vec![m.pair.pair_id.clone()],
            });
    }
    for e in reg.entries.values_mut() {
        e.provenance.sort();
    }
    Ok(reg)
}

/// One register per entity appearing in `mentions`.
pub fn aggregate_all(mentions: &[RiskMention]) -> BTreeMap<String, RiskRegister> {
    let mut by_entity: BTreeMap<&str, Vec<RiskMention>> = BTreeMap::new();
    for m in mentions {
        by_entity.entry(m.pair.entity_id()).or_default().push(m.clone());
    }
    by_entity
        .into_iter()
        .map(|(e, ms)| {
            let reg = aggregate(&ms, e).expect("mentions grouped by entity");
            (e.to_string(), reg)
        })
        .collect()
}

/// Global mention distribution over risk types.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub counts: BTreeMap<String, u64>,
}

impl CorpusStats {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn from_registers<'a>(regs: impl IntoIterator<Item = &'a RiskRegister>) -> Self {
        let mut counts = BTreeMap::new();
        for r in regs {
            for (k, e) in &r.entries {
                *counts.entry(k.clone()).or_insert(0) += e.mention_count;
            }
        }
        CorpusStats { counts }
    }
}

/// Operational cut-offs in bits for the swan classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwanThresholds {
    pub obvious: f64,
    pub gray: f64,
}

impl Default for SwanThresholds {
    fn default() -> Self {
        SwanThresholds {
            obvious: 3.0,
            gray: 7.0,
        }
    }
}

impl SwanThresholds {
    pub fn classify(&self, bits: f64) -> SwanClass {
        if bits <= self.obvious {
            SwanClass::Obvious
        } else if bits >= self.gray {
            SwanClass::Gray
        } else {
            SwanClass::Unclassified
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surprise {
    /// Information content in bits; `None` when the type is absent from the
    /// statistics.
    pub bits: Option<f64>,
    pub class: SwanClass,
}

pub fn surprise_score(
    register: &RiskRegister,
    stats: &CorpusStats,
    thresholds: &SwanThresholds,
) -> Result<BTreeMap<String, Surprise>, RegisterError> {
    let total = stats.total();
    if total == 0 {
        return Err(RegisterError::EmptyStats);
    }
    Ok(register
        .entries
        .keys()
        .map(|k| {
            let s = match stats.counts.get(k).copied().filter(|&c| c > 0) {
                Some(c) => {
                    let bits = -(c as f64 / total as f64).log2();
                    Surprise {
                        bits: Some(bits),
                        class: thresholds.classify(bits),
                    }
                }
                None => Surprise {
                    bits: None,
                    class: SwanClass::Unclassified,
                },
            };
            (k.clone(), s)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PoolJudgment {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldPool {
    pub entity_id: String,
    pub judged: BTreeMap<String, PoolJudgment>,
}

impl GoldPool {
    pub fn correct(&self) -> BTreeSet<&str> {
        self.judged
            .iter()
            .filter(|(_, j)| **j == PoolJudgment::Correct)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

/// Reads `entity TAB risk_type TAB CORRECT|INCORRECT TAB judge` lines.
/// Conflicting judgments of one type are rejected.
pub fn read_pools<R: BufRead>(reader: R) -> Result<BTreeMap<String, GoldPool>, RegisterError> {
    let mut pools: BTreeMap<String, GoldPool> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 3 {
            return Err(parse_err(i + 1, "expected entity, risk type, judgment, judge"));
        }
        let j = match f[2].trim() {
            "CORRECT" => PoolJudgment::Correct,
            "INCORRECT" => PoolJudgment::Incorrect,
            other => return Err(parse_err(i + 1, format!("unknown judgment {other:?}"))),
        };
        let pool = pools.entry(f[0].to_string()).or_insert_with(|| GoldPool {
            entity_id: f[0].to_string(),
            judged: BTreeMap::new(),
        });
        let key = normalize_phrase(f[1]);
        if let Some(prev) = pool.judged.insert(key.clone(), j) {
            if prev != j {
                return Err(parse_err(i + 1, format!("conflicting judgments for {key:?}")));
            }
        }
    }
    Ok(pools)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub system_size: usize,
    pub correct_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostMetadata {
    pub wall_clock_secs: Option<f64>,
    pub annotation_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    pub entity_id: String,
    pub systems: BTreeMap<String, PoolMetrics>,
    pub cost: Option<CostMetadata>,
}

/// Precision and pool-relative recall for each system. An empty system has
/// precision 1; recall with no correct types is 0.
pub fn evaluate_pooled(systems: &[(String, RiskRegister)], pool: &GoldPool) -> Result<PoolReport, RegisterError> {
    let mut unjudged = BTreeSet::new();
    for (_, reg) in systems {
        if reg.entity_id != pool.entity_id {
            return Err(RegisterError::EntityMismatch(
                reg.entity_id.clone(),
                pool.entity_id.clone(),
            ));
        }
        unjudged.extend(reg.entries.keys().filter(|k| !pool.judged.contains_key(*k)).cloned());
    }
    if !unjudged.is_empty() {
        return Err(RegisterError::Unjudged {
            entity: pool.entity_id.clone(),
            types: unjudged.into_iter().collect(),
        });
    }
    let correct = pool.correct();
    let systems = systems
        .iter()
        .map(|(id, reg)| {
            let tp = reg.entries.keys().filter(|k| correct.contains(k.as_str())).count();
            let n = reg.entries.len();
            let precision = if n == 0 { 1.0 } else { tp as f64 / n as f64 };
            let recall = if correct.is_empty() {
                0.0
            } else {
                tp as f64 / correct.len() as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            (
                id.clone(),
                PoolMetrics {
                    precision,
                    recall,
                    f1,
                    true_positives: tp,
                    system_size: n,
                    correct_size: correct.len(),
                },
            )
        })
        .collect();
    Ok(PoolReport {
        entity_id: pool.entity_id.clone(),
        systems,
        cost: None,
    })
}

/// Lead time in days between first sighting and materialization.
pub fn currency(register: &RiskRegister, materializations: &BTreeMap<String, NaiveDate>) -> BTreeMap<String, i64> {
    materializations
        .iter()
        .filter_map(|(t, day)| {
            let e = register.entries.get(&normalize_phrase(t))?;
            Some((e.risk_type.clone(), (*day - e.first_seen).num_days()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Avoid,
    Transfer,
    Mitigate,
    Accept,
}

impl FromStr for Action {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AVOID" => Ok(Action::Avoid),
            "TRANSFER" => Ok(Action::Transfer),
            "MITIGATE" => Ok(Action::Mitigate),
            "ACCEPT" => Ok(Action::Accept),
            _ => Err(format!("unknown action {s:?}")),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Avoid => "AVOID",
            Action::Transfer => "TRANSFER",
            Action::Mitigate => "MITIGATE",
            Action::Accept => "ACCEPT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub action: Action,
    pub note: String,
}

/// Risk type (or ancestor type) → rule.
pub type PlanRules = BTreeMap<String, Rule>;

/// Reads `risk_type TAB ACTION [TAB note]` lines.
pub fn read_rules<R: BufRead>(reader: R) -> Result<PlanRules, RegisterError> {
    let mut rules = PlanRules::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 2 {
            return Err(parse_err(i + 1, "expected risk type and action"));
        }
        let action = f[1].parse().map_err(|e: String| parse_err(i + 1, e))?;
        rules.insert(
            normalize_phrase(f[0]),
            Rule {
                action,
                note: f.get(2).map_or(String::new(), |s| s.trim().to_string()),
            },
        );
    }
    Ok(rules)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rule", rename_all = "kebab-case")]
pub enum RuleMatch {
    Exact,
    Ancestor(String),
    Default,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedAction {
    pub action: Action,
    pub note: String,
    pub matched: RuleMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagementPlan {
    pub entity_id: String,
    pub actions: BTreeMap<String, PlannedAction>,
}

impl ManagementPlan {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), RegisterError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["entity_id", "risk_type", "action", "note", "matched_rule"])?;
        for (t, a) in &self.actions {
            let matched = match &a.matched {
                RuleMatch::Exact => t.clone(),
                RuleMatch::Ancestor(r) => r.clone(),
                RuleMatch::Default => String::new(),
            };
            out.write_record([self.entity_id.as_str(), t, &a.action.to_string(), &a.note, &matched])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Maps each register entry to the most specific rule: exact type, else the
/// nearest taxonomy ancestor with a rule, else accept.
pub fn make_plan(register: &RiskRegister, rules: &PlanRules, taxonomy: Option<&TaxonomyGraph>) -> ManagementPlan {
    let actions = register
        .entries
        .keys()
        .map(|t| {
            let planned = if let Some(r) = rules.get(t) {
                PlannedAction {
                    action: r.action,
                    note: r.note.clone(),
                    matched: RuleMatch::Exact,
                }
            } else if let Some((anc, r)) = taxonomy.and_then(|g| {
                g.ancestors(t)
                    .into_iter()
                    .find_map(|(a, _)| rules.get(&a).map(|r| (a, r)))
            }) {
                PlannedAction {
                    action: r.action,
                    note: r.note.clone(),
                    matched: RuleMatch::Ancestor(anc),
                }
            } else {
                PlannedAction {
                    action: Action::Accept,
                    note: "do nothing".to_string(),
                    matched: RuleMatch::Default,
                }
            };
            (t.clone(), planned)
        })
        .collect();
    ManagementPlan {
        entity_id: register.entity_id.clone(),
        actions,
    }
}

/// `entity_id,risk_type,count,first_seen,last_seen,likelihood,impact,swan_class`
pub fn write_registers_csv<W: Write>(w: W, registers: &[RiskRegister]) -> Result<(), RegisterError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "entity_id",
        "risk_type",
        "count",
        "first_seen",
        "last_seen",
        "likelihood",
        "impact",
        "swan_class",
    ])?;
    for r in registers {
        for e in r.entries.values() {
            out.write_record([
                r.entity_id.clone(),
                e.risk_type.clone(),
                e.mention_count.to_string(),
                e.first_seen.to_string(),
                e.last_seen.to_string(),
                e.likelihood.map(|l| l.to_string()).unwrap_or_default(),
                e.impact.map(|i| i.to_string()).unwrap_or_default(),
                e.swan_class.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// An analyst's likelihood/impact input for one register entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub entity_id: String,
    pub risk_type: String,
    pub likelihood: Option<Likelihood>,
    pub impact: Option<Impact>,
}

/// Reads `entity TAB risk_type TAB likelihood TAB impact` lines; an empty
/// column leaves that field untouched.
pub fn read_assessments<R: BufRead>(reader: R) -> Result<Vec<Assessment>, RegisterError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 3 {
            return Err(parse_err(i + 1, "expected entity, risk type, likelihood, impact"));
        }
        let col = |k: usize| f.get(k).map(|s| s.trim()).filter(|s| !s.is_empty());
        out.push(Assessment {
            entity_id: f[0].trim().to_string(),
            risk_type: f[1].trim().to_string(),
            likelihood: col(2).map(str::parse).transpose().map_err(|e| parse_err(i + 1, e))?,
            impact: col(3).map(str::parse).transpose().map_err(|e| parse_err(i + 1, e))?,
        });
    }
    Ok(out)
}

/// Applies assessments to the matching registers.
pub fn apply_assessments(
    registers: &mut BTreeMap<String, RiskRegister>,
    assessments: &[Assessment],
) -> Result<(), RegisterError> {
    for a in assessments {
        let reg = registers
            .get_mut(&a.entity_id)
            .ok_or_else(|| RegisterError::UnknownType(format!("{} (entity {})", a.risk_type, a.entity_id)))?;
        reg.assess(&a.risk_type, a.likelihood, a.impact)?;
    }
    Ok(())
}

/// One register entry as a line-delimited record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub entity_id: String,
    pub as_of: DateTime<Utc>,
    #[serde(flatten)]
    pub entry: RiskEntry,
}

pub fn write_registers_jsonl<W: Write>(mut w: W, registers: &[RiskRegister]) -> std::io::Result<()> {
    for r in registers {
        for e in r.entries.values() {
            let rec = EntryRecord {
                entity_id: r.entity_id.clone(),
                as_of: r.as_of,
                entry: e.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn read_registers_jsonl<R: BufRead>(reader: R) -> Result<BTreeMap<String, RiskRegister>, RegisterError> {
    let mut regs: BTreeMap<String, RiskRegister> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EntryRecord = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        let e = rec.entry;
        if e.mention_count != e.provenance.len() as u64 || e.mention_count == 0 {
            return Err(parse_err(
                i + 1,
                "mention_count must equal the provenance size and be at least 1",
            ));
        }
        if e.first_seen > e.last_seen {
            return Err(parse_err(i + 1, "first_seen after last_seen"));
        }
        let reg = regs
            .entry(rec.entity_id.clone())
            .or_insert_with(|| RiskRegister::empty(rec.entity_id.clone()));
        reg.as_of = reg.as_of.max(rec.as_of);
        let key = normalize_phrase(&e.risk_type);
        if reg.entries.contains_key(&key) {
            return Err(parse_err(i + 1, format!("duplicate risk type {key:?}")));
        }
        reg.entries.insert(
            key,
            RiskEntry {
                risk_type: normalize_phrase(&e.risk_type),
                ..e
            },
        );
    }
    Ok(regs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_timestamp;
    use crate::relation::{Judgment, Verdict};
    use crate::tagger::{CandidatePair, MentionKind, MentionSpan};

    fn mention(n: usize, entity: &str, risk: &str, date: &str, verdict: Verdict, judgment: Judgment) -> RiskMention {
        let doc = format!("d{n}");
        let span = |kind, s, e, id: &str| MentionSpan {
            doc_id: doc.clone(),
            sent_index: 0,
            token_start: s,
            token_end: e,
            kind,
            resolved_id: id.to_string(),
            ambiguous: false,
        };
        RiskMention {
            pair: CandidatePair::new(
                span(MentionKind::Company, 0, 1, entity),
                span(MentionKind::Risk, 2, 3, risk),
                "X faces y .".into(),
                parse_timestamp(date).unwrap(),
            ),
            score: 0.9,
            verdict,
            judgment,
            model_version: 1,
        }
    }

    fn acc(n: usize, risk: &str, date: &str) -> RiskMention {
        mention(n, "ACME", risk, date, Verdict::Accepted, Judgment::Unreviewed)
    }

    #[test]
    fn three_mentions_two_docs() {
        let ms = [
            acc(1, "demand risk", "2015-03-01"),
            acc(2, "demand risk", "2015-01-10"),
            acc(2, "demand risk", "2015-01-10"),
        ];
        let reg = aggregate(&ms, "ACME").unwrap();
        let e = &reg.entries["demand risk"];
        assert_eq!(e.mention_count, 3);
        assert_eq!(e.first_seen.to_string(), "2015-01-10");
        assert_eq!(e.last_seen.to_string(), "2015-03-01");
        assert_eq!(e.provenance.len(), 3);
        assert!(e.likelihood.is_none());
    }

    #[test]
    fn empty_and_foreign() {
        assert!(aggregate(&[], "ACME").unwrap().is_empty());
        let m = mention(1, "MSFT", "fine", "2015-01-01", Verdict::Accepted, Judgment::Unreviewed);
        assert!(matches!(
            aggregate(&[m], "ACME"),
            Err(RegisterError::ForeignMention { .. })
        ));
    }

    #[test]
    fn judgment_precedence() {
        let ms = [
            mention(1, "ACME", "fine", "2015-01-01", Verdict::Accepted, Judgment::Incorrect),
            mention(2, "ACME", "fraud", "2015-01-01", Verdict::Rejected, Judgment::Correct),
            mention(
                3,
                "ACME",
                "strike",
                "2015-01-01",
                Verdict::Rejected,
                Judgment::Unreviewed,
            ),
        ];
        let reg = aggregate(&ms, "ACME").unwrap();
        assert_eq!(reg.qualitative_view().into_iter().collect::<Vec<_>>(), ["fraud"]);
    }

    #[test]
    fn merge_matches_whole() {
        let ms: Vec<_> = (0..6)
            .map(|i| acc(i, ["a risk", "b risk"][i % 2], &format!("2015-01-0{}", i + 1)))
            .collect();
        let whole = aggregate(&ms, "ACME").unwrap();
        let parts = aggregate(&ms[..2], "ACME")
            .unwrap()
            .merge(aggregate(&ms[2..], "ACME").unwrap())
            .unwrap();
        assert_eq!(whole, parts);
        assert!(RiskRegister::empty("X").merge(RiskRegister::empty("Y")).is_err());
    }

    #[test]
    fn surprise_bits() {
        let ms: Vec<_> = (0..8).map(|i| acc(i, &format!("t{i}"), "2015-01-01")).collect();
        let reg = aggregate(&ms, "ACME").unwrap();
        let stats = CorpusStats::from_registers([&reg]);
        let s = surprise_score(&reg, &stats, &SwanThresholds::default()).unwrap();
        assert!(s.values().all(|x| x.bits == Some(3.0) && x.class == SwanClass::Obvious));

        let mut stats = CorpusStats::default();
        stats.counts.insert("t0".into(), 1);
        stats.counts.insert("other".into(), 15);
        let s = surprise_score(&reg, &stats, &SwanThresholds::default()).unwrap();
        assert_eq!(s["t0"].bits, Some(4.0));
        assert_eq!(s["t0"].class, SwanClass::Unclassified);
        assert_eq!(s["t1"].bits, None);
        assert_eq!(s["t1"].class, SwanClass::Unclassified);
        assert!(matches!(
            surprise_score(&reg, &CorpusStats::default(), &SwanThresholds::default()),
            Err(RegisterError::EmptyStats)
        ));
    }

    fn reg_of(types: &[&str]) -> RiskRegister {
        let ms: Vec<_> = types.iter().enumerate().map(|(i, t)| acc(i, t, "2015-01-01")).collect();
        aggregate(&ms, "ACME").unwrap()
    }

    fn pool(correct: &[&str], incorrect: &[&str]) -> GoldPool {
        let mut judged = BTreeMap::new();
        for c in correct {
            judged.insert(c.to_string(), PoolJudgment::Correct);
        }
        for c in incorrect {
            judged.insert(c.to_string(), PoolJudgment::Incorrect);
        }
        GoldPool {
            entity_id: "ACME".into(),
            judged,
        }
    }

    #[test]
    fn pooled_metrics() {
        let p = pool(&["a", "b", "d"], &["c"]);
        let r = evaluate_pooled(
            &[
                ("s1".into(), reg_of(&["a", "b", "c"])),
                ("s2".into(), reg_of(&[])),
                ("s3".into(), reg_of(&["a", "b", "d"])),
            ],
            &p,
        )
        .unwrap();
        let s1 = r.systems["s1"];
        assert!((s1.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s1.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s1.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.systems["s2"].precision, r.systems["s2"].recall), (1.0, 0.0));
        assert_eq!(r.systems["s3"].f1, 1.0);

        let err = evaluate_pooled(&[("s".into(), reg_of(&["a", "z"]))], &p).unwrap_err();
        assert!(matches!(err, RegisterError::Unjudged { types, .. } if types == ["z"]));
    }

    #[test]
    fn pool_file() {
        let text = "ACME\tdemand risks\tCORRECT\tann\nACME\tfire\tINCORRECT\tbob\n";
        let pools = read_pools(text.as_bytes()).unwrap();
        assert_eq!(pools["ACME"].judged["demand risk"], PoolJudgment::Correct);
        assert!(read_pools("ACME\tx\tCORRECT\ta\nACME\tx\tINCORRECT\tb\n".as_bytes()).is_err());
        assert!(read_pools("ACME\tx\tMAYBE\ta\n".as_bytes()).is_err());
    }

    #[test]
    fn currency_lead_days() {
        let reg = reg_of(&["fire"]);
        let mut mat = BTreeMap::new();
        mat.insert("fire".to_string(), NaiveDate::from_ymd_opt(2015, 3, 2).unwrap());
        mat.insert("flood".to_string(), NaiveDate::from_ymd_opt(2015, 3, 2).unwrap());
        assert_eq!(currency(&reg, &mat), BTreeMap::from([("fire".to_string(), 60)]));
        mat.insert("fire".to_string(), NaiveDate::from_ymd_opt(2014, 12, 31).unwrap());
        assert_eq!(currency(&reg, &mat)["fire"], -1);
        assert!(currency(&reg, &BTreeMap::new()).is_empty());
    }

    #[test]
    fn plan_rules() {
        let reg = reg_of(&["office fire risk", "cash-flow risk", "demand risk"]);
        let rules = read_rules(
            "office fire risk\tTRANSFER\tbuy fire insurance\nfinancial risk\tMITIGATE\tapply for credit line\n"
                .as_bytes(),
        )
        .unwrap();
        let mut tax = TaxonomyGraph::new();
        tax.add_edge("cash-flow risk", "financial risk", vec![]);
        tax.add_edge("financial risk", "risk", vec![]);
        let plan = make_plan(&reg, &rules, Some(&tax));
        assert_eq!(plan.actions["office fire risk"].action, Action::Transfer);
        assert_eq!(
            plan.actions["cash-flow risk"].matched,
            RuleMatch::Ancestor("financial risk".into())
        );
        assert_eq!(plan.actions["demand risk"].action, Action::Accept);
        assert_eq!(plan.actions["demand risk"].note, "do nothing");

        let none = make_plan(&reg, &PlanRules::new(), None);
        assert!(none.actions.values().all(|a| a.action == Action::Accept));
        assert!(read_rules("x\tIGNORE\n".as_bytes()).is_err());
    }

    #[test]
    fn manual_assessment_only() {
        let mut reg = reg_of(&["cash-flow risk"]);
        reg.assess(
            "cash-flow risks",
            Some("medium".parse().unwrap()),
            Some("fatal".parse().unwrap()),
        )
        .unwrap();
        let e = &reg.entries["cash-flow risk"];
        assert_eq!(e.likelihood, Some(Likelihood::Band(LikelihoodBand::Medium)));
        assert_eq!(e.impact, Some(Impact::Band(ImpactBand::Fatal)));
        assert!(reg.assess("nope", None, None).is_err());
        assert!(reg
            .assess("cash-flow risk", Some(Likelihood::Probability(1.5)), None)
            .is_err());
        assert!(reg
            .assess("cash-flow risk", None, Some("3/2/1".parse().unwrap()))
            .is_err());
    }

    #[test]
    fn exports_round_trip() {
        let mut reg = reg_of(&["demand risk", "fire"]);
        reg.assess(
            "fire",
            Some(Likelihood::Probability(0.25)),
            Some("1/2/3".parse().unwrap()),
        )
        .unwrap();
        let mut buf = Vec::new();
        reg.write_csv(&mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        assert!(csv.starts_with("entity_id,risk_type,count,first_seen,last_seen,likelihood,impact,swan_class\n"));
        assert!(csv.contains("ACME,fire,1,2015-01-01,2015-01-01,0.25,1/2/3,UNCLASSIFIED"));

        let mut buf = Vec::new();
        write_registers_jsonl(&mut buf, &[reg.clone()]).unwrap();
        let back = read_registers_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back["ACME"], reg);
    }

    #[test]
    fn assessment_file() {
        let mut regs = BTreeMap::from([("ACME".to_string(), reg_of(&["cash-flow risk", "demand risk"]))]);
        let a =
            read_assessments("ACME\tcash-flow risk\tmedium\tfatal\nACME\tdemand risk\t\t1/5/9\n".as_bytes()).unwrap();
        apply_assessments(&mut regs, &a).unwrap();
        let r = &regs["ACME"];
        assert_eq!(
            r.entries["cash-flow risk"].impact,
            Some(Impact::Band(ImpactBand::Fatal))
        );
        assert_eq!(r.entries["demand risk"].likelihood, None);
        assert!(read_assessments("ACME\tx\tsometimes\t\n".as_bytes()).is_err());
        let other = read_assessments("OTHER\tx\tlow\t\n".as_bytes()).unwrap();
        assert!(apply_assessments(&mut regs, &other).is_err());
    }

    #[test]
    fn band_parsing() {
        assert_eq!(
            "High".parse::<Likelihood>().unwrap(),
            Likelihood::Band(LikelihoodBand::High)
        );
        assert!("fatal".parse::<Likelihood>().is_err());
        assert_eq!(Impact::Band(ImpactBand::Fatal).to_string(), "fatal");
    }
}
