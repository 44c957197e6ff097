//! Command-line front end: one subcommand per pipeline stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use serde_json::json;

use super::server::{self, AppState};
use super::store::{ImportSpec, Store};
use super::{Config, Stage};
use crate::corpus::{ingest, write_sentences};
use crate::dynprob::EventUniverse;
use crate::ecosystem::{
    portfolio_overlap, propagate, read_portfolios, single_point_of_failure, write_propagated_jsonl, SupplyChainGraph,
};
use crate::register::{
    aggregate, aggregate_all, apply_assessments, evaluate_pooled, make_plan, read_assessments, read_pools,
    read_registers_jsonl, read_rules, surprise_score, write_registers_csv, write_registers_jsonl, CorpusStats,
    CostMetadata, RiskRegister,
};
use crate::relation::{read_examples, read_jsonl, train, write_jsonl, Featurizer, RelationModel, RiskMention};
use crate::tagger::{read_entities, tag_corpus, CandidatePair, Gazetteer};
use crate::taxonomy::{default_patterns, mine_taxonomy, read_patterns, TaxonomyGraph};

pub const TOKEN_ENV: &str = "RISKMINE_TOKEN";

#[derive(Debug, Parser)]
#[command(name = "riskmine", version, about = "Risk identification from text")]
pub struct Cli {
    /// TOML file overriding module defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Append a run record (input/output hashes, timing, config) here.
    #[arg(long, global = true)]
    pub run_log: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and dump its tokenized sentences.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Mine an IS-A taxonomy with Hearst patterns.
    MineTaxonomy {
        #[arg(long)]
        corpus: PathBuf,
        /// `template TAB direction` lines; defaults to the built-in set.
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long)]
        min_support: Option<usize>,
        /// Leave unrooted nodes unattached.
        #[arg(long)]
        keep_orphans: bool,
        /// Edge list `child TAB parent TAB hits`.
        #[arg(long)]
        output: PathBuf,
        /// Node records with provenance.
        #[arg(long)]
        nodes: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Tag companies and risks and emit candidate pairs.
    Tag {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        entities: PathBuf,
        /// Taxonomy edge list supplying the risk gazetteer.
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the relation classifier.
    Train {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score candidate pairs.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Aggregate accepted mentions into risk registers.
    Aggregate {
        #[arg(long)]
        mentions: PathBuf,
        /// Only this entity (all entities otherwise).
        #[arg(long)]
        entity: Option<String>,
        /// Manual likelihood/impact input: `entity TAB type TAB likelihood TAB impact`.
        #[arg(long)]
        assessments: Option<PathBuf>,
        /// Classify swan types against the mention distribution of the input.
        #[arg(long)]
        swan: bool,
        /// CSV register export.
        #[arg(long)]
        output: PathBuf,
        /// Line-delimited export with provenance.
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Build a risk management plan.
    Plan {
        #[arg(long)]
        registers: PathBuf,
        #[arg(long)]
        entity: String,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Propagate registers along a supply-chain graph.
    Propagate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        registers: PathBuf,
        #[arg(long)]
        max_hops: Option<usize>,
        #[arg(long)]
        output: PathBuf,
        /// Single-point-of-failure report for every entity.
        #[arg(long)]
        spof: Option<PathBuf>,
    },
    /// Risk overlap across a portfolio's holdings.
    Portfolio {
        #[arg(long)]
        portfolios: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        registers: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Pooled precision/recall of several systems' registers.
    EvalPool {
        #[arg(long)]
        pool: PathBuf,
        /// `NAME=registers.jsonl`, repeatable.
        #[arg(long = "system", required = true)]
        systems: Vec<String>,
        #[arg(long)]
        wall_clock_secs: Option<f64>,
        #[arg(long)]
        annotation_hours: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Query a dynamic event universe.
    Omega(OmegaArgs),
    /// Run the review service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct OmegaArgs {
    /// `t TAB outcome` observation log.
    #[arg(long)]
    pub timeline: PathBuf,
    /// Times to report Ω(t) at; defaults to every observed time.
    #[arg(long = "at")]
    pub at: Vec<u64>,
    /// Outcomes to estimate at each reported time.
    #[arg(long = "query")]
    pub query: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Append this many random observations drawn from the known outcomes.
    #[arg(long, default_value_t = 0)]
    pub simulate: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub mentions: Option<PathBuf>,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long)]
    pub examples: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub entities: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub portfolios: Option<PathBuf>,
}

fn read_taxonomy(stage: &mut Stage, path: &Option<PathBuf>) -> Result<Option<TaxonomyGraph>> {
    path.as_ref()
        .map(|p| {
            let bytes = stage.read(p)?;
            TaxonomyGraph::read_edges_tsv(bytes.as_slice()).with_context(|| format!("parsing {}", p.display()))
        })
        .transpose()
}

fn read_registers(stage: &mut Stage, path: &Path) -> Result<BTreeMap<String, RiskRegister>> {
    let bytes = stage.read(path)?;
    read_registers_jsonl(bytes.as_slice()).with_context(|| format!("parsing {}", path.display()))
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializes");
    b.push(b'\n');
    b
}

/// Runs one invocation and returns a summary line for stdout.
pub fn run(cli: Cli) -> Result<String> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let run_log = cli.run_log.as_deref();
    let mut st = Stage::new(command_name(&cli.command), args);
    let summary = match cli.command {
        Command::Ingest { corpus, output } => {
            let bytes = st.read(&corpus)?;
            let c = ingest(bytes.as_slice()).with_context(|| format!("ingesting {}", corpus.display()))?;
            let sentences = c.sentences();
            let mut out = Vec::new();
            write_sentences(&mut out, &sentences)?;
            st.output(&output, out);
            format!("{} documents, {} sentences", c.len(), sentences.len())
        }
        Command::MineTaxonomy {
            corpus,
            patterns,
            min_support,
            keep_orphans,
            output,
            nodes,
            dot,
        } => {
            let c = ingest(st.read(&corpus)?.as_slice()).with_context(|| format!("ingesting {}", corpus.display()))?;
            let pats = match &patterns {
                Some(p) => read_patterns(st.read(p)?.as_slice()).with_context(|| format!("parsing {}", p.display()))?,
                None => default_patterns(),
            };
            let mut g = mine_taxonomy(&c, &pats, min_support.unwrap_or(config.taxonomy.min_support))?;
            if config.taxonomy.attach_orphans && !keep_orphans {
                g = g.attach_orphans();
            }
            let mut out = Vec::new();
            g.write_edges_tsv(&mut out)?;
            st.output(&output, out);
            if let Some(p) = nodes {
                let mut out = Vec::new();
                g.write_nodes_jsonl(&mut out)?;
                st.output(&p, out);
            }
            if let Some(p) = dot {
                st.output(&p, g.to_dot().into_bytes());
            }
            format!("{} nodes, {} edges", g.node_count(), g.edge_count())
        }
        Command::Tag {
            corpus,
            entities,
            taxonomy,
            output,
        } => {
            let c = ingest(st.read(&corpus)?.as_slice()).with_context(|| format!("ingesting {}", corpus.display()))?;
            let ents = read_entities(st.read(&entities)?.as_slice())
                .with_context(|| format!("parsing {}", entities.display()))?;
            let g = read_taxonomy(&mut st, &Some(taxonomy))?.expect("taxonomy given");
            let gaz = Gazetteer::from_taxonomy(&ents, &g)?;
            let pairs = tag_corpus(&c, &gaz);
            let mut out = Vec::new();
            write_jsonl(&mut out, &pairs)?;
            st.output(&output, out);
            format!("{} candidate pairs", pairs.len())
        }
        Command::Train {
            examples,
            taxonomy,
            output,
        } => {
            let ex = read_examples(st.read(&examples)?.as_slice())
                .with_context(|| format!("parsing {}", examples.display()))?;
            let fz = Featurizer::new(read_taxonomy(&mut st, &taxonomy)?);
            let model = train(&ex, &config.relation, &fz)?;
            let mut out = Vec::new();
            model.write(&mut out)?;
            st.output(&output, out);
            format!(
                "model v{} on {} examples, {} features",
                model.model_version,
                model.training_set.len(),
                model.weights.len()
            )
        }
        Command::Classify {
            model,
            candidates,
            taxonomy,
            output,
        } => {
            let m = RelationModel::read(st.read(&model)?.as_slice())
                .with_context(|| format!("parsing {}", model.display()))?;
            let pairs: Vec<CandidatePair> = read_jsonl(st.read(&candidates)?.as_slice())
                .with_context(|| format!("parsing {}", candidates.display()))?;
            let fz = Featurizer::new(read_taxonomy(&mut st, &taxonomy)?);
            let mentions = pairs
                .iter()
                .map(|p| m.classify(&fz, p))
                .collect::<Result<Vec<_>, _>>()?;
            let accepted = mentions.iter().filter(|m| m.is_accepted()).count();
            let mut out = Vec::new();
            write_jsonl(&mut out, &mentions)?;
            st.output(&output, out);
            format!("{} mentions, {accepted} accepted", mentions.len())
        }
        Command::Aggregate {
            mentions,
            entity,
            assessments,
            swan,
            output,
            jsonl,
        } => {
            let ms: Vec<RiskMention> = read_jsonl(st.read(&mentions)?.as_slice())
                .with_context(|| format!("parsing {}", mentions.display()))?;
            let all = aggregate_all(&ms);
            let stats = CorpusStats::from_registers(all.values());
            let mut regs = match &entity {
                Some(e) => {
                    let mine: Vec<RiskMention> = ms.iter().filter(|m| m.pair.entity_id() == e).cloned().collect();
                    BTreeMap::from([(e.clone(), aggregate(&mine, e)?)])
                }
                None => all,
            };
            if let Some(p) = &assessments {
                let a = read_assessments(st.read(p)?.as_slice()).with_context(|| format!("parsing {}", p.display()))?;
                apply_assessments(&mut regs, &a)?;
            }
            if swan && stats.total() > 0 {
                for r in regs.values_mut() {
                    let s = surprise_score(r, &stats, &config.register)?;
                    r.apply_swan_classes(&s);
                }
            }
            let regs: Vec<RiskRegister> = regs.into_values().collect();
            let mut out = Vec::new();
            write_registers_csv(&mut out, &regs)?;
            st.output(&output, out);
            if let Some(p) = jsonl {
                let mut out = Vec::new();
                write_registers_jsonl(&mut out, &regs)?;
                st.output(&p, out);
            }
            let entries: usize = regs.iter().map(RiskRegister::len).sum();
            format!("{} registers, {entries} entries", regs.len())
        }
        Command::Plan {
            registers,
            entity,
            rules,
            taxonomy,
            output,
        } => {
            let regs = read_registers(&mut st, &registers)?;
            let rules =
                read_rules(st.read(&rules)?.as_slice()).with_context(|| format!("parsing {}", rules.display()))?;
            let tax = read_taxonomy(&mut st, &taxonomy)?;
            let reg = regs
                .get(&entity)
                .cloned()
                .unwrap_or_else(|| RiskRegister::empty(entity.clone()));
            let plan = make_plan(&reg, &rules, tax.as_ref());
            let mut out = Vec::new();
            plan.write_csv(&mut out)?;
            st.output(&output, out);
            format!("{} planned actions", plan.actions.len())
        }
        Command::Propagate {
            graph,
            registers,
            max_hops,
            output,
            spof,
        } => {
            let g = SupplyChainGraph::read(st.read(&graph)?.as_slice())
                .with_context(|| format!("parsing {}", graph.display()))?;
            let regs = read_registers(&mut st, &registers)?;
            let hops = max_hops.unwrap_or(config.ecosystem.max_hops);
            let p = propagate(&g, &regs, hops)?;
            let mut out = Vec::new();
            write_propagated_jsonl(&mut out, &p)?;
            st.output(&output, out);
            if let Some(path) = spof {
                let mut out = Vec::new();
                for e in g.nodes() {
                    for s in single_point_of_failure(&g, &regs, e, hops)? {
                        serde_json::to_writer(&mut out, &json!({ "entity_id": e, "single_point": s }))?;
                        out.push(b'\n');
                    }
                }
                st.output(&path, out);
            }
            format!("{} propagated entries", p.values().map(Vec::len).sum::<usize>())
        }
        Command::Portfolio {
            portfolios,
            id,
            registers,
            output,
        } => {
            let ps = read_portfolios(st.read(&portfolios)?.as_slice())
                .with_context(|| format!("parsing {}", portfolios.display()))?;
            let p = ps.get(&id).with_context(|| format!("no portfolio {id}"))?;
            let regs = read_registers(&mut st, &registers)?;
            let o = portfolio_overlap(p, &regs)?;
            let mut out = Vec::new();
            o.write_csv(&mut out)?;
            st.output(&output, out);
            format!("diversity {}", o.diversity)
        }
        Command::EvalPool {
            pool,
            systems,
            wall_clock_secs,
            annotation_hours,
            output,
        } => {
            let pools =
                read_pools(st.read(&pool)?.as_slice()).with_context(|| format!("parsing {}", pool.display()))?;
            let mut loaded = Vec::new();
            for s in &systems {
                let (name, path) = s
                    .split_once('=')
                    .with_context(|| format!("expected NAME=FILE, got {s:?}"))?;
                loaded.push((name.to_string(), read_registers(&mut st, Path::new(path))?));
            }
            let cost = (wall_clock_secs.is_some() || annotation_hours.is_some()).then_some(CostMetadata {
                wall_clock_secs,
                annotation_hours,
            });
            let mut reports = Vec::new();
            let mut lines = Vec::new();
            for (entity, gold) in &pools {
                let regs: Vec<(String, RiskRegister)> = loaded
                    .iter()
                    .map(|(n, r)| {
                        (
                            n.clone(),
                            r.get(entity)
                                .cloned()
                                .unwrap_or_else(|| RiskRegister::empty(entity.clone())),
                        )
                    })
                    .collect();
                let mut rep = evaluate_pooled(&regs, gold)?;
                rep.cost = cost;
                for (sys, m) in &rep.systems {
                    lines.push(format!(
                        "{entity}\t{sys}\tP={:.4}\tR={:.4}\tF1={:.4}",
                        m.precision, m.recall, m.f1
                    ));
                }
                reports.push(rep);
            }
            if let Some(p) = output {
                st.output(&p, json_bytes(&reports));
            }
            lines.join("\n")
        }
        Command::Omega(a) => {
            let alpha = a.alpha.unwrap_or(config.dynprob.alpha);
            let mut u = EventUniverse::read(alpha, st.read(&a.timeline)?.as_slice())
                .with_context(|| format!("parsing {}", a.timeline.display()))?;
            if a.simulate > 0 {
                let known: Vec<String> = u.universe_at(u64::MAX).into_iter().collect();
                if known.is_empty() {
                    bail!("cannot simulate from an empty timeline");
                }
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
                let start = u.last_time().unwrap_or(0);
                for i in 1..=a.simulate {
                    let o = &known[rng.random_range(0..known.len())];
                    u.observe(start + i, o)?;
                }
            }
            let times: Vec<u64> = if a.at.is_empty() {
                let mut t: Vec<u64> = u.timeline().map(|(t, _)| t).collect();
                t.dedup();
                if t.len() > 20 {
                    t = vec![0, t[0], t[t.len() - 1]];
                }
                t
            } else {
                a.at.clone()
            };
            let report: Vec<serde_json::Value> = times
                .iter()
                .map(|&t| {
                    let estimates: BTreeMap<&str, _> = a.query.iter().map(|q| (q.as_str(), u.estimate(t, q))).collect();
                    json!({
                        "t": t,
                        "omega": u.universe_at(t),
                        "observations": u.total_at(t),
                        "unseen_mass": u.unseen_mass(t),
                        "estimates": estimates,
                    })
                })
                .collect();
            let text = String::from_utf8(json_bytes(&report)).expect("utf-8");
            if let Some(p) = &a.output {
                st.output(p, text.clone().into_bytes());
            }
            text.trim_end().to_string()
        }
        Command::Serve(a) => return serve(a, &config).map(|_| String::new()),
    };
    st.commit(&config, run_log)?;
    Ok(summary)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest { .. } => "ingest",
        Command::MineTaxonomy { .. } => "mine-taxonomy",
        Command::Tag { .. } => "tag",
        Command::Train { .. } => "train",
        Command::Classify { .. } => "classify",
        Command::Aggregate { .. } => "aggregate",
        Command::Plan { .. } => "plan",
        Command::Propagate { .. } => "propagate",
        Command::Portfolio { .. } => "portfolio",
        Command::EvalPool { .. } => "eval-pool",
        Command::Omega(_) => "omega",
        Command::Serve(_) => "serve",
    }
}

fn serve(a: ServeArgs, config: &Config) -> Result<()> {
    let spec = ImportSpec {
        mentions: a.mentions,
        candidates: a.candidates,
        examples: a.examples,
        model: a.model,
        entities: a.entities,
        taxonomy: a.taxonomy,
        rules: a.rules,
        portfolios: a.portfolios,
    };
    if !Store::is_initialized(&a.data) {
        Store::init(&a.data, &spec, config)?;
        tracing::info!(dir = %a.data.display(), "initialized data directory");
    } else if !spec.is_empty() {
        tracing::warn!(dir = %a.data.display(), "data directory already initialized; import flags ignored");
    }
    let store = Store::open(&a.data, config.clone())?;
    let token = std::env::var(TOKEN_ENV).ok();
    if token.is_none() {
        tracing::warn!("{TOKEN_ENV} is not set; the API is unauthenticated");
    }
    let state = AppState::new(store, token, config.server.page_size);
    let bind = a.bind.unwrap_or_else(|| config.server.bind.clone());
    tokio::runtime::Runtime::new()?.block_on(server::serve(state, &bind))
}
