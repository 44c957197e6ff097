//! Binary classification of candidate pairs: does the sentence express that
//! the company is exposed to the risk?
//!
//! The model is an L2-regularized logistic regression over sparse, named
//! features, fit by full-batch gradient descent from a zero start. Training
//! is a pure function of the deduplicated example set and hyperparameters,
//! which is recorded as a SHA-256 manifest.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tagger::CandidatePair;
use crate::taxonomy::TaxonomyGraph;

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("degenerate labels: training needs at least one POSITIVE and one NEGATIVE example")]
    DegenerateLabels,
    #[error("no judgments to incorporate")]
    NoJudgments,
    #[error("pair {0}: span outside its sentence")]
    DanglingSpan(String),
    #[error("invalid hyperparameter: {0}")]
    Hyperparams(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    fn target(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    #[serde(flatten)]
    pub pair: CandidatePair,
    pub label: Label,
    pub annotator: String,
    pub labeled_at: DateTime<Utc>,
}

pub fn read_examples<R: BufRead>(reader: R) -> Result<Vec<LabeledExample>, RelationError> {
    read_jsonl(reader)
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, RelationError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RelationError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> std::io::Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Sparse feature map; values are counts or 0/1 indicators.
pub type FeatureVector = BTreeMap<String, f64>;

const BOS: &str = "<s>";
const EOS: &str = "</s>";

fn is_possessive(tok: &str) -> bool {
    tok == "'s" || tok == "\u{2019}s" || tok == "'S"
}

pub fn distance_bucket(gap: usize) -> &'static str {
    match gap {
        0 => "0",
        1..=3 => "1-3",
        4..=7 => "4-7",
        _ => "8+",
    }
}

/// Turns a candidate pair into sentential-context features.
#[derive(Debug, Clone, Default)]
pub struct Featurizer {
    taxonomy: Option<TaxonomyGraph>,
}

impl Featurizer {
    pub fn new(taxonomy: Option<TaxonomyGraph>) -> Self {
        Featurizer { taxonomy }
    }

    /// Features emitted:
    ///
    /// * `btw=<tok>`: lowercased tokens between the spans (counts)
    /// * `dist=<bucket>`: gap size bucket `0`, `1-3`, `4-7`, `8+`
    /// * `order=company-first|risk-first`
    /// * `l1=`/`l2=`: two tokens left of the earlier span
    /// * `r1=`/`r2=`: two tokens right of the later span
    /// * `poss_adj`: a possessive `'s` touches either span
    /// * `risk=<id>` and `hyper=<parent>` for each taxonomy parent
    pub fn featurize(&self, pair: &CandidatePair) -> Result<FeatureVector, RelationError> {
        let toks: Vec<String> = pair.tokens().iter().map(|t| t.to_lowercase()).collect();
        let (c, r) = (&pair.company, &pair.risk);
        if c.token_end > toks.len()
            || r.token_end > toks.len()
            || c.token_start >= c.token_end
            || r.token_start >= r.token_end
        {
            return Err(RelationError::DanglingSpan(pair.pair_id.clone()));
        }
        let company_first = c.token_start < r.token_start;
        let (first, second) = if company_first { (c, r) } else { (r, c) };
        if first.token_end > second.token_start {
            return Err(RelationError::DanglingSpan(pair.pair_id.clone()));
        }

        let mut f = FeatureVector::new();
        let mut bump = |k: String| *f.entry(k).or_insert(0.0) += 1.0;
        for t in &toks[first.token_end..second.token_start] {
            bump(format!("btw={t}"));
        }
        bump(format!(
            "dist={}",
            distance_bucket(second.token_start - first.token_end)
        ));
        bump(format!(
            "order={}",
            if company_first { "company-first" } else { "risk-first" }
        ));
        let at = |i: isize| -> &str {
            if i < 0 {
                BOS
            } else {
                toks.get(i as usize).map_or(EOS, String::as_str)
            }
        };
        let l = first.token_start as isize;
        let rr = second.token_end as isize;
        bump(format!("l1={}", at(l - 1)));
        bump(format!("l2={}", at(l - 2)));
        bump(format!("r1={}", at(rr)));
        bump(format!("r2={}", at(rr + 1)));
        let touches = [c, r]
            .iter()
            .any(|s| is_possessive(at(s.token_end as isize)) || is_possessive(at(s.token_start as isize - 1)));
        if touches {
            bump("poss_adj".to_string());
        }
        bump(format!("risk={}", pair.risk_type_id()));
        if let Some(tax) = &self.taxonomy {
            for p in tax.parents(pair.risk_type_id()) {
                bump(format!("hyper={p}"));
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    /// Stop once the gradient norm drops below this value.
    pub tolerance: f64,
    pub threshold: f64,
    /// Weight each class by `n / (2 * n_class)`.
    pub class_weighting: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.1,
            l2: 1e-4,
            epochs: 500,
            tolerance: 1e-6,
            threshold: 0.5,
            class_weighting: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), RelationError> {
        let bad = |m: &str| Err(RelationError::Hyperparams(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return bad("tolerance must be non-negative");
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// One training row: sparse features by column index, target and weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub features: Vec<(usize, f64)>,
    pub target: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub rows: Vec<Row>,
}

impl Dataset {
    fn margin(row: &Row, weights: &[f64], bias: f64) -> f64 {
        bias + row.features.iter().map(|&(j, x)| weights[j] * x).sum::<f64>()
    }

    /// Weighted mean logistic loss plus `l2/2 * |w|^2` (bias unregularized).
    pub fn loss(&self, weights: &[f64], bias: f64, l2: f64) -> f64 {
        let total: f64 = self.rows.iter().map(|r| r.weight).sum();
        let data: f64 = self
            .rows
            .iter()
            .map(|r| {
                let z = Self::margin(r, weights, bias);
                r.weight * (softplus(z) - r.target * z)
            })
            .sum();
        data / total + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Analytic gradient of [`Dataset::loss`]: `(d/dw, d/db)`.
    pub fn gradient(&self, weights: &[f64], bias: f64, l2: f64) -> (Vec<f64>, f64) {
        let total: f64 = self.rows.iter().map(|r| r.weight).sum();
        let mut gw = vec![0.0; self.dim];
        let mut gb = 0.0;
        for r in &self.rows {
            let err = r.weight * (sigmoid(Self::margin(r, weights, bias)) - r.target);
            for &(j, x) in &r.features {
                gw[j] += err * x;
            }
            gb += err;
        }
        for (g, w) in gw.iter_mut().zip(weights) {
            *g = *g / total + l2 * w;
        }
        (gw, gb / total)
    }

    /// Full-batch gradient descent from zero. Returns weights, bias and the
    /// number of update steps taken.
    pub fn fit(&self, hp: &Hyperparams) -> (Vec<f64>, f64, usize) {
        let mut w = vec![0.0; self.dim];
        let mut b = 0.0;
        for epoch in 0..hp.epochs {
            let (gw, gb) = self.gradient(&w, b, hp.l2);
            let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
            if norm < hp.tolerance {
                return (w, b, epoch);
            }
            for (wi, gi) in w.iter_mut().zip(&gw) {
                *wi -= hp.learning_rate * gi;
            }
            b -= hp.learning_rate * gb;
        }
        (w, b, hp.epochs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Judgment {
    Correct,
    Incorrect,
    #[default]
    Unreviewed,
}

/// A classified candidate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMention {
    #[serde(flatten)]
    pub pair: CandidatePair,
    pub score: f64,
    pub verdict: Verdict,
    #[serde(default)]
    pub judgment: Judgment,
    pub model_version: u64,
}

impl RiskMention {
    /// Whether the mention counts toward a register: an analyst judgment
    /// overrides the classifier verdict.
    pub fn is_accepted(&self) -> bool {
        match self.judgment {
            Judgment::Correct => true,
            Judgment::Incorrect => false,
            Judgment::Unreviewed => self.verdict == Verdict::Accepted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationModel {
    pub model_version: u64,
    pub weights: BTreeMap<String, f64>,
    pub bias: f64,
    pub threshold: f64,
    pub training_manifest: String,
    pub hyperparams: Hyperparams,
    /// Examples the model was fit on; empty when loaded from a model file
    /// without its training set.
    pub training_set: Vec<LabeledExample>,
}

impl RelationModel {
    /// Score in `[0, 1]`; features outside the model's dictionary are ignored.
    pub fn score(&self, features: &FeatureVector) -> f64 {
        sigmoid(self.margin(features))
    }

    pub fn margin(&self, features: &FeatureVector) -> f64 {
        self.bias
            + features
                .iter()
                .filter_map(|(k, v)| self.weights.get(k).map(|w| w * v))
                .sum::<f64>()
    }

    pub fn verdict(&self, score: f64) -> Verdict {
        if score >= self.threshold {
            Verdict::Accepted
        } else {
            Verdict::Rejected
        }
    }

    pub fn classify(&self, featurizer: &Featurizer, pair: &CandidatePair) -> Result<RiskMention, RelationError> {
        let score = self.score(&featurizer.featurize(pair)?);
        Ok(RiskMention {
            pair: pair.clone(),
            score,
            verdict: self.verdict(score),
            judgment: Judgment::Unreviewed,
            model_version: self.model_version,
        })
    }

    /// Writes the versioned flat model format.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#riskmine-relation-model")?;
        writeln!(w, "version\t{}", self.model_version)?;
        writeln!(w, "threshold\t{}", self.threshold)?;
        writeln!(w, "manifest\t{}", self.training_manifest)?;
        writeln!(w, "hyperparams\t{}", serde_json::to_string(&self.hyperparams)?)?;
        writeln!(w, "weights\t{}", self.weights.len())?;
        for (k, v) in &self.weights {
            writeln!(w, "{k}\t{v}")?;
        }
        writeln!(w, "bias\t{}", self.bias)
    }

    pub fn read<R: BufRead>(reader: R) -> Result<RelationModel, RelationError> {
        let mut lines = reader.lines().enumerate();
        let mut next = |want: &str| -> Result<(usize, String), RelationError> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(RelationError::Parse {
                    line: 0,
                    reason: format!("unexpected end of file, expected {want}"),
                }),
            }
        };
        let err = |line: usize, reason: String| RelationError::Parse { line, reason };
        let (n, magic) = next("header")?;
        if magic.trim() != "#riskmine-relation-model" {
            return Err(err(n, "not a relation model file".into()));
        }
        fn field(
            next: &mut impl FnMut(&str) -> Result<(usize, String), RelationError>,
            key: &str,
        ) -> Result<(usize, String), RelationError> {
            let (n, l) = next(key)?;
            match l.split_once('\t') {
                Some((k, v)) if k == key => Ok((n, v.to_string())),
                _ => Err(RelationError::Parse {
                    line: n,
                    reason: format!("expected `{key}`"),
                }),
            }
        }
        let (n, v) = field(&mut next, "version")?;
        let model_version = v.parse().map_err(|_| err(n, "bad version".into()))?;
        let (n, v) = field(&mut next, "threshold")?;
        let threshold = v.parse().map_err(|_| err(n, "bad threshold".into()))?;
        let (_, training_manifest) = field(&mut next, "manifest")?;
        let (n, v) = field(&mut next, "hyperparams")?;
        let hyperparams = serde_json::from_str(&v).map_err(|e| err(n, e.to_string()))?;
        let (n, v) = field(&mut next, "weights")?;
        let count: usize = v.parse().map_err(|_| err(n, "bad weight count".into()))?;
        let mut weights = BTreeMap::new();
        for _ in 0..count {
            let (n, l) = next("weight")?;
            let (k, v) = l
                .rsplit_once('\t')
                .ok_or_else(|| err(n, "expected `feature\\tweight`".into()))?;
            let v: f64 = v.parse().map_err(|_| err(n, "bad weight".into()))?;
            weights.insert(k.to_string(), v);
        }
        let (n, v) = field(&mut next, "bias")?;
        let bias = v.parse().map_err(|_| err(n, "bad bias".into()))?;
        Ok(RelationModel {
            model_version,
            weights,
            bias,
            threshold,
            training_manifest,
            hyperparams,
            training_set: Vec::new(),
        })
    }
}

/// Deduplicates by `pair_id` (later examples win) and sorts by `pair_id`.
fn dedup_examples(examples: impl IntoIterator<Item = LabeledExample>) -> Vec<LabeledExample> {
    let mut by_id: BTreeMap<String, LabeledExample> = BTreeMap::new();
    for e in examples {
        by_id.insert(e.pair.pair_id.clone(), e);
    }
    by_id.into_values().collect()
}

struct Prepared {
    dataset: Dataset,
    columns: Vec<String>,
    manifest: String,
}

fn prepare(examples: &[LabeledExample], hp: &Hyperparams, featurizer: &Featurizer) -> Result<Prepared, RelationError> {
    let pos = examples.iter().filter(|e| e.label == Label::Positive).count();
    let neg = examples.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(RelationError::DegenerateLabels);
    }
    let feats = examples
        .iter()
        .map(|e| featurizer.featurize(&e.pair))
        .collect::<Result<Vec<_>, _>>()?;
    let mut columns: Vec<String> = feats.iter().flat_map(|f| f.keys().cloned()).collect();
    columns.sort();
    columns.dedup();
    let index: BTreeMap<&str, usize> = columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let n = examples.len() as f64;
    let class_weight = |l: Label| {
        if !hp.class_weighting {
            return 1.0;
        }
        let k = if l == Label::Positive { pos } else { neg } as f64;
        n / (2.0 * k)
    };
    let rows = examples
        .iter()
        .zip(&feats)
        .map(|(e, f)| Row {
            features: f.iter().map(|(k, v)| (index[k.as_str()], *v)).collect(),
            target: e.label.target(),
            weight: class_weight(e.label),
        })
        .collect();

    let mut h = Sha256::new();
    h.update(serde_json::to_vec(hp).expect("hyperparams serialize"));
    for (e, f) in examples.iter().zip(&feats) {
        h.update(b"\n");
        h.update(e.pair.pair_id.as_bytes());
        h.update(format!("\t{:?}", e.label).as_bytes());
        for (k, v) in f {
            h.update(format!("\t{k}={v}").as_bytes());
        }
    }
    Ok(Prepared {
        dataset: Dataset {
            dim: columns.len(),
            rows,
        },
        columns,
        manifest: hex::encode(h.finalize()),
    })
}

/// Fits a new model (version 1).
pub fn train(
    examples: &[LabeledExample],
    hp: &Hyperparams,
    featurizer: &Featurizer,
) -> Result<RelationModel, RelationError> {
    fit_version(dedup_examples(examples.iter().cloned()), hp, featurizer, 1)
}

fn fit_version(
    examples: Vec<LabeledExample>,
    hp: &Hyperparams,
    featurizer: &Featurizer,
    version: u64,
) -> Result<RelationModel, RelationError> {
    hp.validate()?;
    let prepared = prepare(&examples, hp, featurizer)?;
    let (w, bias, _) = prepared.dataset.fit(hp);
    Ok(RelationModel {
        model_version: version,
        weights: prepared.columns.into_iter().zip(w).collect(),
        bias,
        threshold: hp.threshold,
        training_manifest: prepared.manifest,
        hyperparams: *hp,
        training_set: examples,
    })
}

/// Manifest hash for an example set, as [`train`] would record it.
pub fn manifest_of(
    examples: &[LabeledExample],
    hp: &Hyperparams,
    featurizer: &Featurizer,
) -> Result<String, RelationError> {
    let examples = dedup_examples(examples.iter().cloned());
    Ok(prepare(&examples, hp, featurizer)?.manifest)
}

/// Retrains on the model's training set plus analyst judgments. A judgment on
/// a pair already in the training set replaces that example.
pub fn incorporate_judgments(
    model: &RelationModel,
    judgments: &[LabeledExample],
    featurizer: &Featurizer,
) -> Result<RelationModel, RelationError> {
    if judgments.is_empty() {
        return Err(RelationError::NoJudgments);
    }
    let examples = dedup_examples(model.training_set.iter().cloned().chain(judgments.iter().cloned()));
    fit_version(examples, &model.hyperparams, featurizer, model.model_version + 1)
}

/// Every model version produced so far; the latest is current.
#[derive(Debug, Clone, Default)]
pub struct ModelHistory {
    versions: Vec<Arc<RelationModel>>,
}

impl ModelHistory {
    pub fn new(initial: RelationModel) -> Self {
        ModelHistory {
            versions: vec![Arc::new(initial)],
        }
    }

    pub fn current(&self) -> Option<Arc<RelationModel>> {
        self.versions.last().cloned()
    }

    pub fn get(&self, version: u64) -> Option<Arc<RelationModel>> {
        self.versions.iter().find(|m| m.model_version == version).cloned()
    }

    pub fn versions(&self) -> impl Iterator<Item = &Arc<RelationModel>> {
        self.versions.iter()
    }

    pub fn push(&mut self, model: RelationModel) -> Arc<RelationModel> {
        let m = Arc::new(model);
        self.versions.push(m.clone());
        m
    }

    pub fn retrain(
        &mut self,
        judgments: &[LabeledExample],
        featurizer: &Featurizer,
    ) -> Result<Arc<RelationModel>, RelationError> {
        let current = self.current().ok_or(RelationError::DegenerateLabels)?;
        let next = incorporate_judgments(&current, judgments, featurizer)?;
        Ok(self.push(next))
    }
}
