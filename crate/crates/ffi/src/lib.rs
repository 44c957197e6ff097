//! C ABI for riskmine.
//!
//! Every fallible function returns an [`RmStatus`]; on failure a message is
//! available from [`rm_last_error`] on the same thread. Inputs are
//! NUL-terminated UTF-8 strings holding the same text formats the CLI reads
//! (JSON lines, TSV). Strings handed back through `char **` out-parameters
//! are owned by the caller and must be released with [`rm_string_free`].
//! Handles are released with their matching `*_free` function; passing NULL
//! to any free function is a no-op.
//!
//! Pointer arguments must be NULL or valid for the duration of the call.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde::de::DeserializeOwned;

use riskmine::corpus::ingest;
use riskmine::dynprob::{Estimate, EventUniverse};
use riskmine::ecosystem::{portfolio_overlap, propagate, read_portfolios, write_propagated_jsonl, SupplyChainGraph};
use riskmine::register::{
    aggregate, aggregate_all, make_plan, read_registers_jsonl, read_rules, write_registers_jsonl,
};
use riskmine::relation::{read_examples, train, write_jsonl, Featurizer, Hyperparams, RelationModel, RiskMention};
use riskmine::tagger::{read_entities, tag_corpus, CandidatePair, Gazetteer};
use riskmine::taxonomy::{default_patterns, mine_taxonomy, TaxonomyGraph};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInput = 4,
    NotFound = 5,
    Panic = 6,
}

pub struct RmTaxonomy(TaxonomyGraph);

pub struct RmGazetteer(Gazetteer);

pub struct RmModel {
    model: RelationModel,
    featurizer: Featurizer,
}

pub struct RmUniverse(EventUniverse);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(RmStatus, String);

type Outcome = Result<(), Failure>;

fn parse_failure(e: impl Display) -> Failure {
    Failure(RmStatus::Parse, e.to_string())
}

fn invalid(e: impl Display) -> Failure {
    Failure(RmStatus::InvalidInput, e.to_string())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records its failure message and turns panics into a status.
fn guard(f: impl FnOnce() -> Outcome) -> RmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal error: {msg}"));
            RmStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(RmStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(RmStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(RmStatus::NullArgument, format!("{name} is NULL")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(Failure(RmStatus::NullArgument, "out is NULL".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Outcome {
    if out.is_null() {
        return Err(Failure(RmStatus::NullArgument, "out is NULL".into()));
    }
    *out = CString::new(s).map_err(invalid)?.into_raw();
    Ok(())
}

unsafe fn put_bytes(out: *mut *mut c_char, bytes: Vec<u8>) -> Outcome {
    put_string(out, String::from_utf8(bytes).map_err(invalid)?)
}

fn read_lines<T: DeserializeOwned>(s: &str) -> Result<Vec<T>, Failure> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_failure(format!("line {}: {e}", i + 1))))
        .collect()
}

unsafe fn free_box<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the most recent failed call on this thread, or NULL. The
/// pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn rm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn rm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Static library version string.
#[no_mangle]
pub extern "C" fn rm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Taxonomy

/// Mines a taxonomy from a JSON-lines corpus with the default patterns.
#[no_mangle]
pub unsafe extern "C" fn rm_taxonomy_mine(
    corpus_jsonl: *const c_char,
    min_support: usize,
    attach_orphans: bool,
    out: *mut *mut RmTaxonomy,
) -> RmStatus {
    guard(|| {
        let corpus = ingest(text(corpus_jsonl, "corpus_jsonl")?.as_bytes()).map_err(parse_failure)?;
        let mut g = mine_taxonomy(&corpus, &default_patterns(), min_support).map_err(invalid)?;
        if attach_orphans {
            g = g.attach_orphans();
        }
        put(out, RmTaxonomy(g))
    })
}

/// Loads `child TAB parent TAB support` lines.
#[no_mangle]
pub unsafe extern "C" fn rm_taxonomy_from_tsv(tsv: *const c_char, out: *mut *mut RmTaxonomy) -> RmStatus {
    guard(|| {
        let g = TaxonomyGraph::read_edges_tsv(text(tsv, "tsv")?.as_bytes()).map_err(parse_failure)?;
        put(out, RmTaxonomy(g))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rm_taxonomy_to_tsv(taxonomy: *const RmTaxonomy, out: *mut *mut c_char) -> RmStatus {
    guard(|| {
        let g = handle(taxonomy, "taxonomy")?;
        let mut buf = Vec::new();
        g.0.write_edges_tsv(&mut buf).map_err(invalid)?;
        put_bytes(out, buf)
    })
}

/// Node count including the root; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn rm_taxonomy_node_count(taxonomy: *const RmTaxonomy) -> usize {
    taxonomy.as_ref().map_or(0, |g| g.0.node_count())
}

#[no_mangle]
pub unsafe extern "C" fn rm_taxonomy_edge_count(taxonomy: *const RmTaxonomy) -> usize {
    taxonomy.as_ref().map_or(0, |g| g.0.edge_count())
}

#[no_mangle]
pub unsafe extern "C" fn rm_taxonomy_free(taxonomy: *mut RmTaxonomy) {
    free_box(taxonomy)
}

// ---------------------------------------------------------------------------
// Tagging and classification

/// Builds a gazetteer from an entity TSV and every non-root taxonomy node.
#[no_mangle]
pub unsafe extern "C" fn rm_gazetteer_new(
    entities_tsv: *const c_char,
    taxonomy: *const RmTaxonomy,
    out: *mut *mut RmGazetteer,
) -> RmStatus {
    guard(|| {
        let ents = read_entities(text(entities_tsv, "entities_tsv")?.as_bytes()).map_err(parse_failure)?;
        let g = handle(taxonomy, "taxonomy")?;
        put(
            out,
            RmGazetteer(Gazetteer::from_taxonomy(&ents, &g.0).map_err(invalid)?),
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn rm_gazetteer_free(gazetteer: *mut RmGazetteer) {
    free_box(gazetteer)
}

/// Tags a JSON-lines corpus; writes candidate pairs as JSON lines.
#[no_mangle]
pub unsafe extern "C" fn rm_tag(
    gazetteer: *const RmGazetteer,
    corpus_jsonl: *const c_char,
    out_jsonl: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let gaz = handle(gazetteer, "gazetteer")?;
        let corpus = ingest(text(corpus_jsonl, "corpus_jsonl")?.as_bytes()).map_err(parse_failure)?;
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &tag_corpus(&corpus, &gaz.0)).map_err(invalid)?;
        put_bytes(out_jsonl, buf)
    })
}

fn featurizer(taxonomy: *const RmTaxonomy) -> Featurizer {
    // SAFETY: callers pass NULL or a live handle.
    Featurizer::new(unsafe { taxonomy.as_ref() }.map(|g| g.0.clone()))
}

/// Trains a model with default hyperparameters on labeled JSON lines.
/// `taxonomy` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn rm_model_train(
    examples_jsonl: *const c_char,
    taxonomy: *const RmTaxonomy,
    out: *mut *mut RmModel,
) -> RmStatus {
    guard(|| {
        let ex = read_examples(text(examples_jsonl, "examples_jsonl")?.as_bytes()).map_err(parse_failure)?;
        let featurizer = featurizer(taxonomy);
        let model = train(&ex, &Hyperparams::default(), &featurizer).map_err(invalid)?;
        put(out, RmModel { model, featurizer })
    })
}

/// Loads a model file. `taxonomy` may be NULL and must match the one the
/// model was trained with.
#[no_mangle]
pub unsafe extern "C" fn rm_model_read(
    model_text: *const c_char,
    taxonomy: *const RmTaxonomy,
    out: *mut *mut RmModel,
) -> RmStatus {
    guard(|| {
        let model = RelationModel::read(text(model_text, "model_text")?.as_bytes()).map_err(parse_failure)?;
        put(
            out,
            RmModel {
                model,
                featurizer: featurizer(taxonomy),
            },
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn rm_model_write(model: *const RmModel, out: *mut *mut c_char) -> RmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let mut buf = Vec::new();
        m.model.write(&mut buf).map_err(invalid)?;
        put_bytes(out, buf)
    })
}

/// Model version; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn rm_model_version(model: *const RmModel) -> u64 {
    model.as_ref().map_or(0, |m| m.model.model_version)
}

#[no_mangle]
pub unsafe extern "C" fn rm_model_free(model: *mut RmModel) {
    free_box(model)
}

/// Scores candidate JSON lines; writes classified mentions as JSON lines.
#[no_mangle]
pub unsafe extern "C" fn rm_classify(
    model: *const RmModel,
    candidates_jsonl: *const c_char,
    out_jsonl: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let pairs: Vec<CandidatePair> = read_lines(text(candidates_jsonl, "candidates_jsonl")?)?;
        let mentions = pairs
            .iter()
            .map(|p| m.model.classify(&m.featurizer, p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid)?;
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &mentions).map_err(invalid)?;
        put_bytes(out_jsonl, buf)
    })
}

// ---------------------------------------------------------------------------
// Registers and ecosystem

/// Aggregates mention JSON lines into register JSON lines. With a NULL
/// `entity_id` every entity is aggregated.
#[no_mangle]
pub unsafe extern "C" fn rm_aggregate(
    mentions_jsonl: *const c_char,
    entity_id: *const c_char,
    out_jsonl: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let ms: Vec<RiskMention> = read_lines(text(mentions_jsonl, "mentions_jsonl")?)?;
        let regs = if entity_id.is_null() {
            aggregate_all(&ms).into_values().collect()
        } else {
            let e = text(entity_id, "entity_id")?;
            let mine: Vec<RiskMention> = ms.into_iter().filter(|m| m.pair.entity_id() == e).collect();
            vec![aggregate(&mine, e).map_err(invalid)?]
        };
        let mut buf = Vec::new();
        write_registers_jsonl(&mut buf, &regs).map_err(invalid)?;
        put_bytes(out_jsonl, buf)
    })
}

/// Management plan CSV for one entity. `taxonomy` may be NULL, which
/// disables the ancestor fallback.
#[no_mangle]
pub unsafe extern "C" fn rm_plan(
    registers_jsonl: *const c_char,
    entity_id: *const c_char,
    rules_tsv: *const c_char,
    taxonomy: *const RmTaxonomy,
    out_csv: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let regs = read_registers_jsonl(text(registers_jsonl, "registers_jsonl")?.as_bytes()).map_err(parse_failure)?;
        let e = text(entity_id, "entity_id")?;
        let reg = regs
            .get(e)
            .ok_or_else(|| Failure(RmStatus::NotFound, format!("no register for {e}")))?;
        let rules = read_rules(text(rules_tsv, "rules_tsv")?.as_bytes()).map_err(parse_failure)?;
        let plan = make_plan(reg, &rules, taxonomy.as_ref().map(|g| &g.0));
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).map_err(invalid)?;
        put_bytes(out_csv, buf)
    })
}

/// Pairwise overlap of one portfolio's holdings as a JSON object.
#[no_mangle]
pub unsafe extern "C" fn rm_overlap(
    portfolios: *const c_char,
    portfolio_id: *const c_char,
    registers_jsonl: *const c_char,
    out_json: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let ps = read_portfolios(text(portfolios, "portfolios")?.as_bytes()).map_err(parse_failure)?;
        let id = text(portfolio_id, "portfolio_id")?;
        let p = ps
            .get(id)
            .ok_or_else(|| Failure(RmStatus::NotFound, format!("no portfolio {id}")))?;
        let regs = read_registers_jsonl(text(registers_jsonl, "registers_jsonl")?.as_bytes()).map_err(parse_failure)?;
        let o = portfolio_overlap(p, &regs).map_err(|e| Failure(RmStatus::NotFound, e.to_string()))?;
        put_string(out_json, serde_json::to_string(&o).map_err(invalid)?)
    })
}

/// Propagates registers upstream-to-downstream over a supply-chain TSV;
/// writes one JSON line per propagated entry.
#[no_mangle]
pub unsafe extern "C" fn rm_propagate(
    graph_tsv: *const c_char,
    registers_jsonl: *const c_char,
    max_hops: usize,
    out_jsonl: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let g = SupplyChainGraph::read(text(graph_tsv, "graph_tsv")?.as_bytes()).map_err(parse_failure)?;
        let regs = read_registers_jsonl(text(registers_jsonl, "registers_jsonl")?.as_bytes()).map_err(parse_failure)?;
        let p = propagate(&g, &regs, max_hops).map_err(invalid)?;
        let mut buf = Vec::new();
        write_propagated_jsonl(&mut buf, &p).map_err(invalid)?;
        put_bytes(out_jsonl, buf)
    })
}

// ---------------------------------------------------------------------------
// Growing event universe

#[no_mangle]
pub unsafe extern "C" fn rm_universe_new(alpha: f64, out: *mut *mut RmUniverse) -> RmStatus {
    guard(|| put(out, RmUniverse(EventUniverse::new(alpha).map_err(invalid)?)))
}

#[no_mangle]
pub unsafe extern "C" fn rm_universe_observe(universe: *mut RmUniverse, t: u64, outcome: *const c_char) -> RmStatus {
    guard(|| {
        let o = text(outcome, "outcome")?;
        let u = universe
            .as_mut()
            .ok_or_else(|| Failure(RmStatus::NullArgument, "universe is NULL".into()))?;
        u.0.observe(t, o).map_err(invalid)
    })
}

/// Writes the smoothed probability of `outcome` at time `t`. An outcome not
/// yet observed has no probability: `*defined` is set to false and
/// `*probability` to NaN.
#[no_mangle]
pub unsafe extern "C" fn rm_universe_estimate(
    universe: *const RmUniverse,
    t: u64,
    outcome: *const c_char,
    defined: *mut bool,
    probability: *mut f64,
) -> RmStatus {
    guard(|| {
        let u = handle(universe, "universe")?;
        let o = text(outcome, "outcome")?;
        if defined.is_null() || probability.is_null() {
            return Err(Failure(RmStatus::NullArgument, "out is NULL".into()));
        }
        match u.0.estimate(t, o) {
            Estimate::Defined { probability: p, .. } => {
                *defined = true;
                *probability = p;
            }
            Estimate::Undefined => {
                *defined = false;
                *probability = f64::NAN;
            }
        }
        Ok(())
    })
}

/// Number of distinct outcomes observed at or before `t`; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn rm_universe_size(universe: *const RmUniverse, t: u64) -> usize {
    universe.as_ref().map_or(0, |u| u.0.universe_at(t).len())
}

#[no_mangle]
pub unsafe extern "C" fn rm_universe_free(universe: *mut RmUniverse) {
    free_box(universe)
}
