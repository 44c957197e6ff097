mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{pooled_oracle, random_mentions, reader, register_of};
use riskmine::register::{
    aggregate, apply_assessments, evaluate_pooled, make_plan, read_assessments, read_registers_jsonl, read_rules,
    surprise_score, write_registers_jsonl, Action, CorpusStats, GoldPool, Impact, ImpactBand, Likelihood, PoolJudgment,
    RegisterError, RiskRegister, RuleMatch, SwanThresholds,
};
use riskmine::relation::{Judgment, RiskMention, Verdict};
use riskmine::taxonomy::TaxonomyGraph;

fn mentions(seed: u64, n: usize) -> Vec<RiskMention> {
    random_mentions(&mut ChaCha8Rng::seed_from_u64(seed), n, "ACME")
}

/// Judgment first, classifier verdict otherwise.
fn counts_toward_register(m: &RiskMention) -> bool {
    match m.judgment {
        Judgment::Correct => true,
        Judgment::Incorrect => false,
        Judgment::Unreviewed => m.verdict == Verdict::Accepted,
    }
}

proptest! {
    #[test]
    fn counts_are_accepted_mentions_per_type(seed in any::<u64>(), n in 0usize..120) {
        let ms = mentions(seed, n);
        let reg = aggregate(&ms, "ACME").unwrap();
        let mut expected: BTreeMap<String, Vec<&RiskMention>> = BTreeMap::new();
        for m in ms.iter().filter(|m| counts_toward_register(m)) {
            expected.entry(m.pair.risk_type_id().to_string()).or_default().push(m);
        }
        prop_assert_eq!(reg.qualitative_view(), expected.keys().cloned().collect::<BTreeSet<_>>());
        for (t, group) in &expected {
            let e = &reg.entries[t];
            prop_assert_eq!(e.mention_count, group.len() as u64);
            let mut ids: Vec<String> = group.iter().map(|m| m.pair.pair_id.clone()).collect();
            ids.sort();
            prop_assert_eq!(&e.provenance, &ids);
            let days: Vec<_> = group.iter().map(|m| m.pair.published_at.date_naive()).collect();
            prop_assert_eq!(e.first_seen, *days.iter().min().unwrap());
            prop_assert_eq!(e.last_seen, *days.iter().max().unwrap());
            prop_assert!(e.likelihood.is_none() && e.impact.is_none());
        }
        if let Some(latest) = ms.iter().map(|m| m.pair.published_at).max() {
            prop_assert_eq!(reg.as_of, latest);
        }
        prop_assert_eq!(reg.total_mentions(), ms.iter().filter(|m| counts_toward_register(m)).count() as u64);
    }

    #[test]
    fn merge_is_a_commutative_monoid(seed in any::<u64>(), n in 0usize..90, cut1 in 0.0f64..1.0, cut2 in 0.0f64..1.0) {
        let ms = mentions(seed, n);
        let (i, j) = {
            let a = (cut1 * n as f64) as usize;
            let b = (cut2 * n as f64) as usize;
            (a.min(b), a.max(b))
        };
        let part = |r: &[RiskMention]| aggregate(r, "ACME").unwrap();
        let (a, b, c) = (part(&ms[..i]), part(&ms[i..j]), part(&ms[j..]));
        let whole = part(&ms);
        let left = a.clone().merge(b.clone()).unwrap().merge(c.clone()).unwrap();
        let right = a.clone().merge(b.clone().merge(c.clone()).unwrap()).unwrap();
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(&left, &whole);
        prop_assert_eq!(b.clone().merge(a.clone()).unwrap(), a.clone().merge(b).unwrap());
        prop_assert_eq!(a.clone().merge(RiskRegister::empty("ACME")).unwrap(), a);
    }

    #[test]
    fn judgments_override_the_classifier(seed in any::<u64>(), n in 1usize..60, flip in 0usize..60) {
        let mut ms = mentions(seed, n);
        let k = flip % n;
        let t = ms[k].pair.risk_type_id().to_string();
        let before = aggregate(&ms, "ACME").unwrap().entries.get(&t).map_or(0, |e| e.mention_count);
        let was = counts_toward_register(&ms[k]);
        ms[k].judgment = Judgment::Incorrect;
        ms[k].verdict = Verdict::Accepted;
        let after = aggregate(&ms, "ACME").unwrap().entries.get(&t).map_or(0, |e| e.mention_count);
        prop_assert_eq!(after + was as u64, before);
        ms[k].judgment = Judgment::Correct;
        ms[k].verdict = Verdict::Rejected;
        let again = aggregate(&ms, "ACME").unwrap().entries.get(&t).map_or(0, |e| e.mention_count);
        prop_assert_eq!(again, after + 1);
    }

    #[test]
    fn rarer_types_are_more_surprising(counts in prop::collection::btree_map("[a-h]{1,3} risk", 1u64..500, 1..12)) {
        let stats = CorpusStats { counts: counts.clone() };
        let types: Vec<&str> = counts.keys().map(String::as_str).collect();
        let reg = register_of("X", &types);
        let th = SwanThresholds::default();
        let scores = surprise_score(&reg, &stats, &th).unwrap();
        let total = stats.total() as f64;
        for (t, c) in &counts {
            let bits = scores[t].bits.unwrap();
            prop_assert!((bits - (total / *c as f64).log2()).abs() < 1e-12);
            prop_assert_eq!(scores[t].class, th.classify(bits));
            for (u, d) in &counts {
                if c < d {
                    prop_assert!(bits > scores[u].bits.unwrap());
                }
            }
        }
    }

    #[test]
    fn register_lines_round_trip(seed in any::<u64>(), n in 1usize..80) {
        let reg = aggregate(&mentions(seed, n), "ACME").unwrap();
        prop_assume!(!reg.is_empty());
        let mut buf = Vec::new();
        write_registers_jsonl(&mut buf, std::slice::from_ref(&reg)).unwrap();
        let back = read_registers_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(&back["ACME"], &reg);
    }

    #[test]
    fn pooled_metrics_match_set_arithmetic(
        judged in prop::collection::btree_map("[a-f]", prop::bool::ANY, 0..6),
        picks in prop::collection::vec(prop::bool::ANY, 6),
    ) {
        let pool = GoldPool {
            entity_id: "E".into(),
            judged: judged
                .iter()
                .map(|(k, v)| (k.clone(), if *v { PoolJudgment::Correct } else { PoolJudgment::Incorrect }))
                .collect(),
        };
        let system: BTreeSet<String> = judged.keys().zip(&picks).filter(|(_, p)| **p).map(|(k, _)| k.clone()).collect();
        let correct: BTreeSet<String> = judged.iter().filter(|(_, v)| **v).map(|(k, _)| k.clone()).collect();
        let reg = register_of("E", &system.iter().map(String::as_str).collect::<Vec<_>>());
        let report = evaluate_pooled(&[("s".into(), reg)], &pool).unwrap();
        let m = report.systems["s"];
        let (p, r, f) = pooled_oracle(&system, &correct);
        prop_assert!((m.precision - p).abs() < 1e-12);
        prop_assert!((m.recall - r).abs() < 1e-12);
        prop_assert!((m.f1 - f).abs() < 1e-12);
    }
}

#[test]
fn likelihood_and_impact_enter_only_through_assessment() {
    let mut regs = BTreeMap::from([(
        "ACME".to_string(),
        register_of("ACME", &["demand risk", "office fire risk"]),
    )]);
    assert!(regs["ACME"]
        .entries
        .values()
        .all(|e| e.likelihood.is_none() && e.impact.is_none()));
    let tsv = "ACME\tdemand risk\thigh\t\nACME\toffice fire risk\t0.05\t100/2500/90000\n";
    apply_assessments(&mut regs, &read_assessments(tsv.as_bytes()).unwrap()).unwrap();
    let e = &regs["ACME"].entries;
    assert_eq!(e["demand risk"].likelihood, "high".parse::<Likelihood>().ok());
    assert_eq!(e["demand risk"].impact, None);
    assert_eq!(e["office fire risk"].likelihood, Some(Likelihood::Probability(0.05)));
    assert_eq!(
        e["office fire risk"].impact,
        Some(Impact::Loss {
            min: 100.0,
            expected: 2500.0,
            max: 90000.0
        })
    );

    let reg = regs.get_mut("ACME").unwrap();
    assert!(matches!(
        reg.assess("demand risk", Some(Likelihood::Probability(1.5)), None),
        Err(RegisterError::InvalidAssessment(_))
    ));
    assert!(reg
        .assess(
            "demand risk",
            None,
            Some(Impact::Loss {
                min: 5.0,
                expected: 1.0,
                max: 9.0
            })
        )
        .is_err());
    assert!(matches!(
        reg.assess("fraud", None, None),
        Err(RegisterError::UnknownType(_))
    ));
    reg.assess("Demand Risk", None, Some(Impact::Band(ImpactBand::Fatal)))
        .unwrap();
    assert_eq!(reg.entries["demand risk"].impact, Some(Impact::Band(ImpactBand::Fatal)));
    assert!(read_assessments("ACME\tdemand risk\tsomewhat\t\n".as_bytes()).is_err());
}

#[test]
fn plans_fall_back_to_the_nearest_ruled_ancestor() {
    let tax = TaxonomyGraph::read_edges_tsv(reader("acme/taxonomy.tsv")).unwrap();
    let mut rules = read_rules(reader("acme/rules.tsv")).unwrap();
    let reg = register_of("ACME", &["cash-flow risk", "bankruptcy", "strike", "unheard-of risk"]);

    let plan = make_plan(&reg, &rules, Some(&tax));
    assert_eq!(plan.actions["cash-flow risk"].matched, RuleMatch::Exact);
    assert_eq!(plan.actions["cash-flow risk"].action, Action::Mitigate);
    assert_eq!(plan.actions["bankruptcy"].matched, RuleMatch::Default);
    assert_eq!(plan.actions["bankruptcy"].action, Action::Accept);

    rules.extend(read_rules("financial risk\tAVOID\texit the market\nrisk\tACCEPT\tmonitor\n".as_bytes()).unwrap());
    let plan = make_plan(&reg, &rules, Some(&tax));
    assert_eq!(
        plan.actions["bankruptcy"].matched,
        RuleMatch::Ancestor("financial risk".into())
    );
    assert_eq!(plan.actions["bankruptcy"].action, Action::Avoid);
    assert_eq!(plan.actions["strike"].matched, RuleMatch::Ancestor("risk".into()));
    assert_eq!(plan.actions["unheard-of risk"].matched, RuleMatch::Default);
    let no_tax = make_plan(&reg, &rules, None);
    assert_eq!(no_tax.actions["bankruptcy"].matched, RuleMatch::Default);
    assert_eq!(plan.actions.len(), reg.len());
}

#[test]
fn pool_evaluation_refuses_unjudged_types() {
    let pool = GoldPool {
        entity_id: "E".into(),
        judged: BTreeMap::from([("a".to_string(), PoolJudgment::Correct)]),
    };
    let err = evaluate_pooled(&[("s".into(), register_of("E", &["a", "b"]))], &pool).unwrap_err();
    assert!(matches!(err, RegisterError::Unjudged { .. }), "{err}");
    let err = evaluate_pooled(&[("s".into(), register_of("F", &["a"]))], &pool).unwrap_err();
    assert!(matches!(err, RegisterError::EntityMismatch(..)), "{err}");
}

#[test]
fn foreign_mentions_are_rejected() {
    let ms = mentions(7, 5);
    assert!(matches!(
        aggregate(&ms, "GLOBEX"),
        Err(RegisterError::ForeignMention { .. })
    ));
    assert!(matches!(
        RiskRegister::empty("A").merge(RiskRegister::empty("B")),
        Err(RegisterError::EntityMismatch(..))
    ));
}
