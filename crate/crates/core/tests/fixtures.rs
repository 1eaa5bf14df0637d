//! Checks against the bundled fixture corpora.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use reakase_core::bm25::{build_bm25, bm25_top_k, Analyzer, Bm25Params};
use reakase_core::corpus::{
    ingest_corpus, segment_regions, strip_non_english, CorpusHandle, CorpusLayout, LanguageFilter, SegmentationRules,
};
use reakase_core::elements::extract_judgement;
use reakase_core::triplets::{import_triplets, write_triplets, SourceField, TripletOrigin};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn coliee_layout() -> CorpusLayout {
    CorpusLayout {
        case_dir: "cases".into(),
        qrels: Some("qrels.tsv".into()),
        ..CorpusLayout::default()
    }
}

fn extraction_docs() -> Vec<(String, String)> {
    let dir = fixtures().join("extraction").join("docs");
    let mut docs: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            let id = path.file_stem().unwrap().to_string_lossy().into_owned();
            (id, fs::read_to_string(&path).unwrap())
        })
        .collect();
    docs.sort();
    docs
}

#[test]
fn coliee_shaped_fixture_statistics() {
    let handle = ingest_corpus(&fixtures().join("coliee"), &coliee_layout()).unwrap();
    assert_eq!(handle.cases.len(), 10);
    assert_eq!(handle.stats.num_queries, 2);
    assert_eq!(handle.stats.num_candidates, 8);
    assert_eq!(handle.stats.avg_relevant, 3.0);
    assert!(handle.stats.max_tokens as f64 >= handle.stats.avg_tokens);
    assert!(handle.warnings.is_empty());
}

#[test]
fn ingestion_is_idempotent_and_round_trips() {
    let root = fixtures().join("coliee");
    let a = ingest_corpus(&root, &coliee_layout()).unwrap();
    let b = ingest_corpus(&root, &coliee_layout()).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    a.save(dir.path()).unwrap();
    let reloaded = CorpusHandle::load(dir.path()).unwrap();
    assert_eq!(reloaded.cases, a.cases);
    assert_eq!(reloaded.qrels, a.qrels);
    assert_eq!(reloaded.stats, a.stats);
}

#[test]
fn french_filter_is_idempotent_on_fixtures() {
    let filter = LanguageFilter::default();
    for (id, text) in extraction_docs() {
        let once = strip_non_english(&text, &filter);
        assert_eq!(strip_non_english(&once, &filter), once, "{id}");
        assert!(!once.contains("Le demandeur"), "{id}");
    }
}

#[test]
fn segmentation_partitions_fixture_documents() {
    let rules = SegmentationRules::default();
    for (id, text) in extraction_docs() {
        let rebuilt: String = segment_regions(&text, &rules)
            .into_iter()
            .map(|r| r.heading.unwrap_or_default() + &r.body)
            .collect();
        assert_eq!(rebuilt, text, "{id}");
    }
}

#[test]
fn order_heading_keeps_attribution_until_judgement_extraction() {
    // ext-01 has an "Order" heading followed by two attribution lines
    let text = fs::read_to_string(fixtures().join("extraction/docs/ext-01.txt")).unwrap();
    let doc = reakase_core::corpus::CaseDocument::from_text("ext-01", &text, &CorpusLayout::default()).unwrap();
    let conclusion = doc.sections.conclusion_sentences.join(" ");
    assert_eq!(doc.sections.conclusion_sentences[0], "Order");
    assert!(conclusion.contains("Solicitors of record"));
    assert!(conclusion.contains("Counsel for the applicant"));
    let judgement = extract_judgement(&doc.sections);
    assert!(!judgement.contains("Solicitors") && !judgement.contains("Counsel"));
    assert!(judgement.starts_with("The matter is remitted"));
}

#[test]
fn external_triplets_round_trip_byte_identically() {
    let src = fixtures().join("triplets/external_facts.jsonl");
    let set = import_triplets(&src, SourceField::Facts).unwrap();
    assert_eq!(set.origin, TripletOrigin::Imported);
    assert_eq!(set.len(), 5);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("facts.jsonl");
    write_triplets(&out, &set).unwrap();
    assert_eq!(fs::read(&out).unwrap(), fs::read(&src).unwrap());
    assert_eq!(import_triplets(&out, SourceField::Facts).unwrap(), set);
}

#[test]
fn case_text_as_query_ranks_itself_first() {
    let layout = CorpusLayout {
        case_dir: "cases".into(),
        qrels: Some("qrels.tsv".into()),
        ..CorpusLayout::default()
    };
    let corpus = ingest_corpus(&fixtures().join("synthetic"), &layout).unwrap();
    let index = build_bm25(&corpus, Analyzer::default(), Bm25Params::default()).unwrap();
    for id in corpus.candidate_ids().iter().step_by(7) {
        let text = &corpus.case(id).unwrap().raw_text;
        let top = bm25_top_k(&index, text, 3, &BTreeSet::new());
        assert_eq!(&top[0].0, id);
    }
}
