mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::{acme, microsoft_pair, SENTENCE_A};
use riskmine::corpus::{ingest, parse_timestamp, segment, slice_chars, Corpus, Document};
use riskmine::relation::write_jsonl;
use riskmine::tagger::{tag, tag_corpus, CandidatePair, CompanyEntity, Gazetteer, MentionKind};

const WORDS: &[&str] = &[
    "Acme", "Inc.", "said", "the", "risk", "of", "fraud", "rose", "U.S.", "café", "naïve", "Globex", "’s", "'s", "(",
    ")", ",", ";", "3.5%", "e-mail", "Dr.", "Smith", "fell", "!", "?", "\"", "co-op", "日本",
];

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(
        (
            prop::sample::select(WORDS),
            prop::sample::select(&[" ", "  ", "\n", ". ", ", ", "\t"][..]),
        ),
        1..40,
    )
    .prop_map(|parts| {
        parts
            .into_iter()
            .map(|(w, sep)| format!("{w}{sep}"))
            .collect::<String>()
    })
    .prop_filter("non-blank", |t| !t.trim().is_empty())
}

fn doc(id: &str, text: &str) -> Document {
    Document {
        doc_id: id.into(),
        source: "test".into(),
        published_at: parse_timestamp("2015-02-03").unwrap(),
        text: text.into(),
    }
}

const COMPANIES: &[&str] = &["Alpha", "Beta Corp.", "Gamma Group", "Delta"];
const RISKS: &[&str] = &["fraud", "strike", "flood risk", "data breach"];

fn gazetteer() -> Gazetteer {
    let ents: Vec<CompanyEntity> = COMPANIES
        .iter()
        .map(|c| CompanyEntity::new(&c.split(' ').next().unwrap().to_uppercase(), c, [*c]).unwrap())
        .collect();
    Gazetteer::build(&ents, RISKS).unwrap()
}

proptest! {
    #[test]
    fn token_offsets_slice_back_to_surfaces(text in text_strategy()) {
        let d = doc("d", &text);
        let sentences = segment(&d);
        let mut surfaces = String::new();
        let mut last_end = 0;
        for (i, s) in sentences.iter().enumerate() {
            prop_assert_eq!(s.sent_index, i);
            prop_assert!(!s.tokens.is_empty());
            for t in &s.tokens {
                prop_assert_eq!(slice_chars(&text, t.start_char, t.end_char), t.surface.clone());
                prop_assert!(t.start_char >= last_end);
                prop_assert_eq!(t.norm.clone(), t.surface.to_lowercase());
                last_end = t.end_char;
                surfaces.push_str(&t.surface);
            }
        }
        let stripped: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(surfaces, stripped);
    }

    #[test]
    fn corpus_lines_round_trip(texts in prop::collection::vec(text_strategy(), 1..6)) {
        let docs: Vec<Document> = texts.iter().enumerate().map(|(i, t)| doc(&format!("d{i}"), t)).collect();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &docs).unwrap();
        let corpus = ingest(buf.as_slice()).unwrap();
        prop_assert_eq!(corpus.len(), docs.len());
        for d in &docs {
            prop_assert_eq!(corpus.get(&d.doc_id), Some(d));
        }
    }

    #[test]
    fn pairs_are_the_full_cross_product(
        companies in prop::collection::vec(0..COMPANIES.len(), 0..4),
        risks in prop::collection::vec(0..RISKS.len(), 0..4),
        filler in prop::collection::vec(prop::sample::select(&["the", "said", "and", "now", ","][..]), 1..4),
    ) {
        let mut words = Vec::new();
        let n = companies.len().max(risks.len());
        for i in 0..n {
            if let Some(&c) = companies.get(i) {
                words.push(COMPANIES[c].to_string());
                words.extend(filler.iter().map(|s| s.to_string()));
            }
            if let Some(&r) = risks.get(i) {
                words.push(RISKS[r].to_string());
                words.extend(filler.iter().map(|s| s.to_string()));
            }
        }
        words.push(".".into());
        let mut corpus = Corpus::new();
        corpus.insert(doc("x", &words.join(" "))).unwrap();
        let gaz = gazetteer();
        let pairs = tag_corpus(&corpus, &gaz);
        prop_assert_eq!(pairs.len(), companies.len() * risks.len());

        let sentence = &corpus.sentences()[0];
        let spans = tag(sentence, &gaz);
        let n_c = spans.iter().filter(|s| s.kind == MentionKind::Company).count();
        prop_assert_eq!(n_c, companies.len());
        prop_assert_eq!(spans.len() - n_c, risks.len());

        let ids: BTreeSet<&str> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
        prop_assert_eq!(ids.len(), pairs.len());
        for p in &pairs {
            prop_assert!(!p.company.overlaps(&p.risk));
            let toks = p.tokens();
            let risk_text = toks[p.risk.token_start..p.risk.token_end].join(" ");
            prop_assert_eq!(risk_text.to_lowercase(), p.risk_type_id());
            let json = serde_json::to_string(p).unwrap();
            let back: CandidatePair = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(&back, p);
        }
    }
}

#[test]
fn company_tokens_are_masked_from_the_risk_scan() {
    let fraudco = CompanyEntity::new("FW", "Fraud Watch", ["Fraud Watch"]).unwrap();
    let gaz = Gazetteer::build(&[fraudco], ["fraud"]).unwrap();
    let mut corpus = Corpus::new();
    corpus.insert(doc("m", "Fraud Watch reported fraud.")).unwrap();
    let pairs = tag_corpus(&corpus, &gaz);
    assert_eq!(pairs.len(), 1);
    assert_eq!((pairs[0].company.token_start, pairs[0].company.token_end), (0, 2));
    assert_eq!((pairs[0].risk.token_start, pairs[0].risk.token_end), (3, 4));
}

#[test]
fn tagging_is_deterministic_across_runs() {
    let a = acme();
    let gaz = Gazetteer::from_taxonomy(&a.entities, &a.taxonomy).unwrap();
    let first = tag_corpus(&a.corpus, &gaz);
    assert!(!first.is_empty());
    for _ in 0..3 {
        assert_eq!(tag_corpus(&a.corpus, &gaz), first);
    }
    let p = microsoft_pair(SENTENCE_A);
    assert_eq!(p.pair_id, microsoft_pair(SENTENCE_A).pair_id);
    assert_eq!(p.pair_id.len(), 16);
}

#[test]
fn malformed_corpus_lines_report_their_line_number() {
    let good = serde_json::to_string(&doc("a", "Hi.")).unwrap();
    let input = format!("{good}\n\n{{\"doc_id\":\"b\",\"source\":\"s\",\"text\":\"x\"}}\n");
    let err = ingest(input.as_bytes()).unwrap_err().to_string();
    assert!(err.contains("line 3") && err.contains("published_at"), "{err}");
    let dup = format!("{good}\n{good}\n");
    assert!(ingest(dup.as_bytes()).unwrap_err().to_string().contains("duplicate"));
}
