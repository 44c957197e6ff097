//! File-backed state behind the review service.
//!
//! Layout of a data directory:
//!
//! ```text
//! store.json                 marker written on initialization
//! mentions.jsonl             scored mentions, rewritten after each retrain
//! judgments.log              append-only judgment records, one per line
//! judgments.snapshot.json    compacted active judgments + log position
//! models/v<N>.model          every model version
//! models/v<N>.examples.jsonl training set of that version
//! entities.tsv taxonomy.tsv rules.tsv portfolios.txt   optional inputs
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{write_atomic, Config};
use crate::ecosystem::{portfolio_overlap, read_portfolios, EcosystemError, Overlap, Portfolio};
use crate::register::{
    make_plan, read_rules, surprise_score, CorpusStats, ManagementPlan, PlanRules, RegisterError, RegisterForm,
    RiskEntry, RiskRegister,
};
use crate::relation::{
    read_examples, train, write_jsonl, Featurizer, Judgment, Label, LabeledExample, ModelHistory, RelationError,
    RelationModel, RiskMention,
};
use crate::tagger::{read_entities, CandidatePair, CompanyEntity, TaggerError};
use crate::taxonomy::{TaxonomyError, TaxonomyGraph};

const MARKER: &str = "store.json";
const MENTIONS: &str = "mentions.jsonl";
const JUDGMENT_LOG: &str = "judgments.log";
const JUDGMENT_SNAPSHOT: &str = "judgments.snapshot.json";
const MODELS: &str = "models";
const ENTITIES: &str = "entities.tsv";
const TAXONOMY: &str = "taxonomy.tsv";
const RULES: &str = "rules.tsv";
const PORTFOLIOS: &str = "portfolios.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0} is not an initialized data directory")]
    NotInitialized(PathBuf),
    #[error("unknown pair {0}")]
    UnknownPair(String),
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("unknown portfolio {0}")]
    UnknownPortfolio(String),
    #[error("invalid request")]
    Invalid(Vec<FieldError>),
    #[error("no judgments since the last retrain")]
    NothingToRetrain,
    #[error("no model loaded")]
    NoModel,
    #[error("model version {got} is stale; current is {current}")]
    StaleModel { got: u64, current: u64 },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Ecosystem(#[from] EcosystemError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn file_err<E: std::error::Error + Send + Sync + 'static>(path: &Path) -> impl FnOnce(E) -> StoreError + '_ {
    move |e| StoreError::File {
        path: path.to_path_buf(),
        source: Box::new(e),
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>, StoreError> {
    Ok(BufReader::new(fs::File::open(path).map_err(file_err(path))?))
}

/// An analyst decision on one candidate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub pair_id: String,
    pub judgment: Judgment,
    pub annotator: String,
    pub judged_at: DateTime<Utc>,
    pub model_version_at_judgment: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Active {
    seq: u64,
    record: JudgmentRecord,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Snapshot {
    /// Log lines already folded into `active`.
    log_entries: u64,
    /// Highest log sequence number included in a retrain.
    retrained_through: u64,
    active: Vec<Active>,
}

/// Files copied into a fresh data directory.
#[derive(Debug, Clone, Default)]
pub struct ImportSpec {
    pub mentions: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub portfolios: Option<PathBuf>,
}

impl ImportSpec {
    pub fn is_empty(&self) -> bool {
        self.mentions.is_none()
            && self.candidates.is_none()
            && self.examples.is_none()
            && self.model.is_none()
            && self.entities.is_none()
            && self.taxonomy.is_none()
            && self.rules.is_none()
            && self.portfolios.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateQuery {
    /// `None` lists every status.
    pub status: Option<Judgment>,
    pub entity: Option<String>,
    /// 1-based.
    pub page: usize,
    pub page_size: usize,
    /// Adds this annotator's own active judgment to each item.
    pub annotator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateItem {
    #[serde(flatten)]
    pub mention: RiskMention,
    pub entity_name: Option<String>,
    pub my_judgment: Option<Judgment>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidatePage {
    pub items: Vec<CandidateItem>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegisterView {
    pub entity_id: String,
    pub entity_name: Option<String>,
    pub form: RegisterForm,
    pub as_of: DateTime<Utc>,
    pub model_version: u64,
    pub risk_types: Vec<String>,
    /// Present in the quantitative view only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<RiskEntry>>,
}

/// Work captured for a retrain that runs outside the store lock.
pub struct RetrainJob {
    base: Arc<RelationModel>,
    judgments: Vec<LabeledExample>,
    featurizer: Featurizer,
    through: u64,
}

impl RetrainJob {
    pub fn base_version(&self) -> u64 {
        self.base.model_version
    }

    pub fn run(self) -> Result<TrainedModel, StoreError> {
        let model = crate::relation::incorporate_judgments(&self.base, &self.judgments, &self.featurizer)?;
        Ok(TrainedModel {
            model,
            through: self.through,
        })
    }
}

pub struct TrainedModel {
    model: RelationModel,
    through: u64,
}

pub struct Store {
    dir: PathBuf,
    config: Config,
    mentions: BTreeMap<String, RiskMention>,
    entities: BTreeMap<String, CompanyEntity>,
    taxonomy: Option<TaxonomyGraph>,
    rules: PlanRules,
    portfolios: BTreeMap<String, Portfolio>,
    models: ModelHistory,
    /// (pair_id, annotator) → latest record.
    active: BTreeMap<(String, String), Active>,
    log_entries: u64,
    retrained_through: u64,
    appends_since_snapshot: usize,
}

impl Store {
    pub fn is_initialized(dir: &Path) -> bool {
        dir.join(MARKER).exists()
    }

    /// Creates a data directory from the given inputs.
    pub fn init(dir: &Path, spec: &ImportSpec, config: &Config) -> Result<(), StoreError> {
        fs::create_dir_all(dir.join(MODELS))?;
        let copy = |src: &Option<PathBuf>, name: &str| -> Result<(), StoreError> {
            if let Some(src) = src {
                let bytes = fs::read(src).map_err(file_err(src))?;
                write_atomic(&dir.join(name), &bytes).map_err(|e| StoreError::File {
                    path: dir.join(name),
                    source: e.into(),
                })?;
            }
            Ok(())
        };
        copy(&spec.entities, ENTITIES)?;
        copy(&spec.taxonomy, TAXONOMY)?;
        copy(&spec.rules, RULES)?;
        copy(&spec.portfolios, PORTFOLIOS)?;

        let taxonomy = load_taxonomy(dir)?;
        let featurizer = Featurizer::new(taxonomy);
        let examples = match &spec.examples {
            Some(p) => read_examples(open(p)?).map_err(file_err(p))?,
            None => Vec::new(),
        };
        let model = match (&spec.model, examples.is_empty()) {
            (Some(p), _) => {
                let mut m = RelationModel::read(open(p)?).map_err(file_err(p))?;
                m.training_set = examples;
                Some(m)
            }
            (None, false) => Some(train(&examples, &config.relation, &featurizer)?),
            (None, true) => None,
        };
        if let Some(m) = &model {
            save_model(dir, m)?;
        }

        let mut mentions: Vec<RiskMention> = Vec::new();
        if let Some(p) = &spec.mentions {
            mentions.extend(crate::relation::read_jsonl::<RiskMention, _>(open(p)?).map_err(file_err(p))?);
        }
        if let Some(p) = &spec.candidates {
            let m = model.as_ref().ok_or(StoreError::NoModel)?;
            let pairs: Vec<CandidatePair> = crate::relation::read_jsonl(open(p)?).map_err(file_err(p))?;
            for pair in &pairs {
                mentions.push(m.classify(&featurizer, pair)?);
            }
        }
        save_mentions(dir, mentions.iter())?;
        write_atomic(
            &dir.join(MARKER),
            &serde_json::to_vec_pretty(&serde_json::json!({
                "format": 1,
                "created_at": Utc::now(),
            }))
            .expect("marker serializes"),
        )
        .map_err(|e| StoreError::File {
            path: dir.join(MARKER),
            source: e.into(),
        })?;
        Ok(())
    }

    pub fn open(dir: &Path, config: Config) -> Result<Store, StoreError> {
        if !Store::is_initialized(dir) {
            return Err(StoreError::NotInitialized(dir.to_path_buf()));
        }
        let entities = match optional(dir, ENTITIES)? {
            Some(r) => read_entities(r)
                .map_err(|e: TaggerError| file_err(&dir.join(ENTITIES))(e))?
                .into_iter()
                .map(|e| (e.entity_id.clone(), e))
                .collect(),
            None => BTreeMap::new(),
        };
        let rules = match optional(dir, RULES)? {
            Some(r) => read_rules(r).map_err(file_err(&dir.join(RULES)))?,
            None => PlanRules::new(),
        };
        let portfolios = match optional(dir, PORTFOLIOS)? {
            Some(r) => read_portfolios(r).map_err(file_err(&dir.join(PORTFOLIOS)))?,
            None => BTreeMap::new(),
        };
        let mentions = match optional(dir, MENTIONS)? {
            Some(r) => crate::relation::read_jsonl::<RiskMention, _>(r)
                .map_err(file_err(&dir.join(MENTIONS)))?
                .into_iter()
                .map(|m| (m.pair.pair_id.clone(), m))
                .collect(),
            None => BTreeMap::new(),
        };
        let mut store = Store {
            taxonomy: load_taxonomy(dir)?,
            models: load_models(dir)?,
            dir: dir.to_path_buf(),
            config,
            mentions,
            entities,
            rules,
            portfolios,
            active: BTreeMap::new(),
            log_entries: 0,
            retrained_through: 0,
            appends_since_snapshot: 0,
        };
        store.load_judgments()?;
        Ok(store)
    }

    fn load_judgments(&mut self) -> Result<(), StoreError> {
        let snap_path = self.dir.join(JUDGMENT_SNAPSHOT);
        let snap: Snapshot = if snap_path.exists() {
            serde_json::from_slice(&fs::read(&snap_path)?).map_err(file_err(&snap_path))?
        } else {
            Snapshot::default()
        };
        self.log_entries = snap.log_entries;
        self.retrained_through = snap.retrained_through;
        for a in snap.active {
            self.active
                .insert((a.record.pair_id.clone(), a.record.annotator.clone()), a);
        }
        if let Some(r) = optional(&self.dir, JUDGMENT_LOG)? {
            let log_path = self.dir.join(JUDGMENT_LOG);
            for (i, line) in r.lines().enumerate() {
                let line = line?;
                let seq = i as u64 + 1;
                if seq <= snap.log_entries || line.trim().is_empty() {
                    continue;
                }
                let rec: JudgmentRecord = serde_json::from_str(&line).map_err(file_err(&log_path))?;
                self.active.insert(
                    (rec.pair_id.clone(), rec.annotator.clone()),
                    Active { seq, record: rec },
                );
                self.log_entries = seq;
            }
        }
        let pairs: Vec<String> = self.active.keys().map(|(p, _)| p.clone()).collect();
        for p in pairs {
            self.refresh_judgment(&p);
        }
        Ok(())
    }

    pub fn model_version(&self) -> u64 {
        self.models.current().map_or(0, |m| m.model_version)
    }

    pub fn current_model(&self) -> Option<Arc<RelationModel>> {
        self.models.current()
    }

    pub fn model_versions(&self) -> Vec<u64> {
        self.models.versions().map(|m| m.model_version).collect()
    }

    pub fn mention(&self, pair_id: &str) -> Option<&RiskMention> {
        self.mentions.get(pair_id)
    }

    pub fn mention_count(&self) -> usize {
        self.mentions.len()
    }

    pub fn judgment_count(&self) -> usize {
        self.active.len()
    }

    pub fn judgments_for(&self, pair_id: &str) -> Vec<&JudgmentRecord> {
        self.active
            .range((pair_id.to_string(), String::new())..)
            .take_while(|((p, _), _)| p == pair_id)
            .map(|(_, a)| &a.record)
            .collect()
    }

    /// The pair's effective judgment: the most recent write across annotators.
    fn consolidated(&self, pair_id: &str) -> Option<&Active> {
        self.active
            .range((pair_id.to_string(), String::new())..)
            .take_while(|((p, _), _)| p == pair_id)
            .map(|(_, a)| a)
            .max_by_key(|a| a.seq)
    }

    fn refresh_judgment(&mut self, pair_id: &str) {
        let j = self
            .consolidated(pair_id)
            .map_or(Judgment::Unreviewed, |a| a.record.judgment);
        if let Some(m) = self.mentions.get_mut(pair_id) {
            m.judgment = j;
        }
    }

    /// Validates and records a judgment; re-posting for the same
    /// `(pair_id, annotator)` replaces the earlier one.
    pub fn record_judgment(&mut self, body: &serde_json::Value) -> Result<JudgmentRecord, StoreError> {
        let mut errors = Vec::new();
        let mut field = |name: &str, message: &str| {
            errors.push(FieldError {
                field: name.to_string(),
                message: message.to_string(),
            })
        };
        let Some(obj) = body.as_object() else {
            field("body", "expected a JSON object");
            return Err(StoreError::Invalid(errors));
        };
        let text = |k: &str| {
            obj.get(k)
                .and_then(|v| v.as_str())
                .map(str::trim)
                .filter(|s| !s.is_empty())
        };
        let pair_id = text("pair_id");
        if pair_id.is_none() {
            field("pair_id", "required non-empty string");
        }
        let annotator = text("annotator");
        if annotator.is_none() {
            field("annotator", "required non-empty string");
        }
        let judgment = match text("judgment") {
            Some("CORRECT") => Some(Judgment::Correct),
            Some("INCORRECT") => Some(Judgment::Incorrect),
            _ => {
                field("judgment", "must be CORRECT or INCORRECT");
                None
            }
        };
        let judged_at = match obj.get("judged_at") {
            None | Some(serde_json::Value::Null) => Some(Utc::now()),
            Some(v) => match v.as_str().and_then(crate::corpus::parse_timestamp) {
                Some(t) => Some(t),
                None => {
                    field("judged_at", "must be an ISO-8601 timestamp");
                    None
                }
            },
        };
        for k in obj.keys() {
            if ![
                "pair_id",
                "annotator",
                "judgment",
                "judged_at",
                "model_version_at_judgment",
            ]
            .contains(&k.as_str())
            {
                field(k, "unknown field");
            }
        }
        let (Some(pair_id), Some(annotator), Some(judgment), Some(judged_at), true) =
            (pair_id, annotator, judgment, judged_at, errors.is_empty())
        else {
            return Err(StoreError::Invalid(errors));
        };
        if !self.mentions.contains_key(pair_id) {
            return Err(StoreError::UnknownPair(pair_id.to_string()));
        }
        let record = JudgmentRecord {
            pair_id: pair_id.to_string(),
            judgment,
            annotator: annotator.to_string(),
            judged_at,
            model_version_at_judgment: self.model_version(),
        };
        let mut line = serde_json::to_vec(&record).expect("record serializes");
        line.push(b'\n');
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(JUDGMENT_LOG))?;
        f.write_all(&line)?;
        f.sync_data()?;
        self.log_entries += 1;
        self.active.insert(
            (record.pair_id.clone(), record.annotator.clone()),
            Active {
                seq: self.log_entries,
                record: record.clone(),
            },
        );
        self.refresh_judgment(&record.pair_id);
        self.appends_since_snapshot += 1;
        if self.appends_since_snapshot >= self.config.server.snapshot_every.max(1) {
            self.write_snapshot()?;
        }
        Ok(record)
    }

    pub fn write_snapshot(&mut self) -> Result<(), StoreError> {
        let snap = Snapshot {
            log_entries: self.log_entries,
            retrained_through: self.retrained_through,
            active: self.active.values().cloned().collect(),
        };
        let path = self.dir.join(JUDGMENT_SNAPSHOT);
        write_atomic(&path, &serde_json::to_vec(&snap).expect("snapshot serializes")).map_err(|e| {
            StoreError::File {
                path: path.clone(),
                source: e.into(),
            }
        })?;
        self.appends_since_snapshot = 0;
        Ok(())
    }

    pub fn candidates(&self, q: &CandidateQuery) -> CandidatePage {
        let page_size = q.page_size.clamp(1, self.config.server.max_page_size.max(1));
        let page = q.page.max(1);
        let matching: Vec<&RiskMention> = self
            .mentions
            .values()
            .filter(|m| q.status.is_none_or(|s| m.judgment == s))
            .filter(|m| q.entity.as_deref().is_none_or(|e| m.pair.entity_id() == e))
            .collect();
        let items = matching
            .iter()
            .skip((page - 1).saturating_mul(page_size))
            .take(page_size)
            .map(|m| CandidateItem {
                mention: (*m).clone(),
                entity_name: self.entities.get(m.pair.entity_id()).map(|e| e.canonical_name.clone()),
                my_judgment: q.annotator.as_ref().and_then(|a| {
                    self.active
                        .get(&(m.pair.pair_id.clone(), a.clone()))
                        .map(|x| x.record.judgment)
                }),
            })
            .collect();
        CandidatePage {
            items,
            page,
            page_size,
            total: matching.len(),
            model_version: self.model_version(),
        }
    }

    fn known_entity(&self, entity: &str) -> bool {
        self.entities.contains_key(entity) || self.mentions.values().any(|m| m.pair.entity_id() == entity)
    }

    /// Register of `entity` from the current mentions, with swan classes
    /// against the distribution over all entities.
    pub fn register(&self, entity: &str) -> Result<RiskRegister, StoreError> {
        if !self.known_entity(entity) {
            return Err(StoreError::UnknownEntity(entity.to_string()));
        }
        let all = self.all_registers();
        let mut reg = all.get(entity).cloned().unwrap_or_else(|| RiskRegister::empty(entity));
        let stats = CorpusStats::from_registers(all.values());
        if stats.total() > 0 {
            let scores = surprise_score(&reg, &stats, &self.config.register)?;
            reg.apply_swan_classes(&scores);
        }
        Ok(reg)
    }

    fn all_registers(&self) -> BTreeMap<String, RiskRegister> {
        let mentions: Vec<RiskMention> = self.mentions.values().cloned().collect();
        crate::register::aggregate_all(&mentions)
    }

    pub fn register_view(&self, entity: &str, form: RegisterForm) -> Result<RegisterView, StoreError> {
        let reg = self.register(entity)?;
        Ok(RegisterView {
            entity_id: reg.entity_id.clone(),
            entity_name: self.entities.get(entity).map(|e| e.canonical_name.clone()),
            form,
            as_of: reg.as_of,
            model_version: self.model_version(),
            risk_types: reg.qualitative_view().into_iter().collect(),
            entries: (form == RegisterForm::Quantitative).then(|| reg.entries.into_values().collect()),
        })
    }

    pub fn plan(&self, entity: &str) -> Result<ManagementPlan, StoreError> {
        let reg = self.register(entity)?;
        Ok(make_plan(&reg, &self.rules, self.taxonomy.as_ref()))
    }

    pub fn overlap(&self, portfolio_id: &str) -> Result<Overlap, StoreError> {
        let p = self
            .portfolios
            .get(portfolio_id)
            .ok_or_else(|| StoreError::UnknownPortfolio(portfolio_id.to_string()))?;
        let mut regs = self.all_registers();
        for h in &p.holdings {
            regs.entry(h.clone()).or_insert_with(|| RiskRegister::empty(h.clone()));
        }
        Ok(portfolio_overlap(p, &regs)?)
    }

    /// Consolidated judgments as training examples.
    pub fn judged_examples(&self) -> Vec<LabeledExample> {
        let mut pairs: Vec<&str> = self.active.keys().map(|(p, _)| p.as_str()).collect();
        pairs.dedup();
        pairs
            .into_iter()
            .filter_map(|p| {
                let a = self.consolidated(p)?;
                let m = self.mentions.get(p)?;
                Some(LabeledExample {
                    pair: m.pair.clone(),
                    label: if a.record.judgment == Judgment::Correct {
                        Label::Positive
                    } else {
                        Label::Negative
                    },
                    annotator: a.record.annotator.clone(),
                    labeled_at: a.record.judged_at,
                })
            })
            .collect()
    }

    pub fn retrain_job(&self) -> Result<RetrainJob, StoreError> {
        let base = self.models.current().ok_or(StoreError::NoModel)?;
        let newest = self.active.values().map(|a| a.seq).max().unwrap_or(0);
        if newest <= self.retrained_through {
            return Err(StoreError::NothingToRetrain);
        }
        Ok(RetrainJob {
            base,
            judgments: self.judged_examples(),
            featurizer: Featurizer::new(self.taxonomy.clone()),
            through: self.log_entries,
        })
    }

    /// Persists a retrained model, re-scores every mention and makes the
    /// model current.
    pub fn install(&mut self, trained: TrainedModel) -> Result<u64, StoreError> {
        let current = self.model_version();
        if trained.model.model_version != current + 1 {
            return Err(StoreError::StaleModel {
                got: trained.model.model_version,
                current,
            });
        }
        let featurizer = Featurizer::new(self.taxonomy.clone());
        let mut rescored = BTreeMap::new();
        for (id, m) in &self.mentions {
            let mut fresh = trained.model.classify(&featurizer, &m.pair)?;
            fresh.judgment = m.judgment;
            rescored.insert(id.clone(), fresh);
        }
        save_model(&self.dir, &trained.model)?;
        save_mentions(&self.dir, rescored.values())?;
        self.mentions = rescored;
        self.retrained_through = trained.through;
        self.write_snapshot()?;
        let v = trained.model.model_version;
        self.models.push(trained.model);
        Ok(v)
    }

    /// Retrains synchronously.
    pub fn retrain(&mut self) -> Result<u64, StoreError> {
        let job = self.retrain_job()?;
        let trained = job.run()?;
        self.install(trained)
    }
}

fn optional(dir: &Path, name: &str) -> Result<Option<BufReader<fs::File>>, StoreError> {
    let p = dir.join(name);
    if p.exists() {
        Ok(Some(open(&p)?))
    } else {
        Ok(None)
    }
}

fn load_taxonomy(dir: &Path) -> Result<Option<TaxonomyGraph>, StoreError> {
    optional(dir, TAXONOMY)?
        .map(|r| TaxonomyGraph::read_edges_tsv(r).map_err(|e: TaxonomyError| file_err(&dir.join(TAXONOMY))(e)))
        .transpose()
}

fn model_paths(dir: &Path, version: u64) -> (PathBuf, PathBuf) {
    let m = dir.join(MODELS);
    (
        m.join(format!("v{version}.model")),
        m.join(format!("v{version}.examples.jsonl")),
    )
}

fn save_model(dir: &Path, model: &RelationModel) -> Result<(), StoreError> {
    let (mp, ep) = model_paths(dir, model.model_version);
    let mut buf = Vec::new();
    model.write(&mut buf)?;
    let mut ex = Vec::new();
    write_jsonl(&mut ex, &model.training_set)?;
    for (p, b) in [(&ep, ex), (&mp, buf)] {
        write_atomic(p, &b).map_err(|e| StoreError::File {
            path: p.clone(),
            source: e.into(),
        })?;
    }
    Ok(())
}

fn load_models(dir: &Path) -> Result<ModelHistory, StoreError> {
    let mut versions: Vec<u64> = Vec::new();
    let mdir = dir.join(MODELS);
    if mdir.exists() {
        for entry in fs::read_dir(&mdir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(v) = name.strip_prefix('v').and_then(|s| s.strip_suffix(".model")) {
                if let Ok(v) = v.parse() {
                    versions.push(v);
                }
            }
        }
    }
    versions.sort_unstable();
    let mut hist = ModelHistory::default();
    for v in versions {
        let (mp, ep) = model_paths(dir, v);
        let mut m = RelationModel::read(open(&mp)?).map_err(file_err(&mp))?;
        if ep.exists() {
            m.training_set = read_examples(open(&ep)?).map_err(file_err(&ep))?;
        }
        hist.push(m);
    }
    Ok(hist)
}

fn save_mentions<'a>(dir: &Path, mentions: impl Iterator<Item = &'a RiskMention>) -> Result<(), StoreError> {
    let mut buf = Vec::new();
    for m in mentions {
        serde_json::to_writer(&mut buf, m).expect("mention serializes");
        buf.push(b'\n');
    }
    let p = dir.join(MENTIONS);
    write_atomic(&p, &buf).map_err(|e| StoreError::File {
        path: p,
        source: e.into(),
    })
}
