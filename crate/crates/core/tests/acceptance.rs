//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use reakase_core::bm25::{bm25_score, bm25_top_k, mine_hard_negatives, Analyzer, Bm25Index, Bm25Params};
use reakase_core::context::{render_context, render_reasoning_prompt, CaseEmbedding, EmbeddingStore, TemplateId};
use reakase_core::corpus::{CaseDocument, CorpusLayout};
use reakase_core::elements::{extract_issues, extract_judgement, render_fact_prompt, LegalElements, PlaceholderConfig};
use reakase_core::context::Adapter;
use reakase_core::metrics::{evaluate_run, ApNormalizer, MetricsReport, Qrels};
use reakase_core::pipeline::PipelineConfig;
use reakase_core::pipeline::{run_all, TrainLog};
use reakase_core::trainer::{assemble_batch, batch_loss, info_nce_loss, loss_and_grad, Batch, LossConfig, TrainingExample};
use reakase_core::triplets::{RelationTriplet, SourceField, TripletOrigin, TripletSet};
use reakase_core::vector_index::{RankedList, RetrievalRun, ScoredCase, SimilarityKind};

type Outcome = std::result::Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> std::result::Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_secs, || {
        format!("runtime {:.2}s exceeds {limit_secs}s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------- metrics

struct OracleMetrics {
    values: [f64; 7],
}

/// Brute-force metrics over plain id lists, written without the library.
fn oracle_metrics(queries: &[(Vec<String>, HashSet<String>)], k: usize, relevant_normalizer: bool) -> OracleMetrics {
    let nq = queries.len() as f64;
    let (mut p, mut r, mut rr, mut ap, mut ndcg, mut ma_f1) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (ranking, rel) in queries {
        let top: Vec<&String> = ranking.iter().take(k).collect();
        let mut hits = 0usize;
        for id in &top {
            if rel.contains(*id) {
                hits += 1;
            }
        }
        let qp = hits as f64 / k as f64;
        let qr = hits as f64 / rel.len() as f64;
        p += qp;
        r += qr;
        ma_f1 += if hits == 0 { 0.0 } else { 2.0 * qp * qr / (qp + qr) };
        tp += hits;
        fp += k - hits;
        fn_ += rel.len() - hits;
        let mut first = None;
        for (i, id) in top.iter().enumerate() {
            if rel.contains(*id) {
                first = Some(i + 1);
                break;
            }
        }
        rr += first.map_or(0.0, |rank| 1.0 / rank as f64);
        // precision at each relevant rank
        let mut total = 0.0;
        for (i, id) in top.iter().enumerate() {
            if rel.contains(*id) {
                let seen = top[..=i].iter().filter(|x| rel.contains(**x)).count();
                total += seen as f64 / (i + 1) as f64;
            }
        }
        let denom = if relevant_normalizer { rel.len() } else { rel.len().min(k) };
        ap += total / denom as f64;
        let mut dcg = 0.0;
        for (i, id) in top.iter().enumerate() {
            if rel.contains(*id) {
                dcg += 1.0 / ((i + 2) as f64).log2();
            }
        }
        let mut idcg = 0.0;
        for i in 0..rel.len().min(k) {
            idcg += 1.0 / ((i + 2) as f64).log2();
        }
        ndcg += dcg / idcg;
    }
    let mp = tp as f64 / (tp + fp) as f64;
    let mr = tp as f64 / (tp + fn_) as f64;
    let mi_f1 = if tp == 0 { 0.0 } else { 2.0 * mp * mr / (mp + mr) };
    OracleMetrics {
        values: [p / nq, r / nq, mi_f1, ma_f1 / nq, rr / nq, ap / nq, ndcg / nq],
    }
}

fn criterion_metrics() -> Outcome {
    let start = Instant::now();
    let k = 5;
    let mut worst: f64 = 0.0;
    let mut instances = 0usize;
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool: Vec<String> = (0..20).map(|i| format!("d{i:02}")).collect();
        let num_queries = rng.random_range(1..=3);
        let mut qrels = Qrels::new();
        let mut run = RetrievalRun::default();
        let mut plain = Vec::new();
        for q in 0..num_queries {
            let qid = format!("q{q}");
            let len = rng.random_range(1..=20);
            let mut ranking: Vec<String> = pool.choose_multiple(&mut rng, len).cloned().collect();
            ranking.shuffle(&mut rng);
            let n_rel = rng.random_range(1..=8);
            let rel: HashSet<String> = pool.choose_multiple(&mut rng, n_rel).cloned().collect();
            for id in &rel {
                qrels.insert(qid.clone(), id.clone());
            }
            let entries = ranking
                .iter()
                .enumerate()
                .map(|(i, id)| ScoredCase {
                    case_id: id.clone(),
                    score: (len - i) as f64,
                })
                .collect();
            run.ranked.insert(
                qid.clone(),
                RankedList {
                    query_id: qid.clone(),
                    entries,
                },
            );
            plain.push((ranking, rel));
        }
        for (normalizer, rel_norm) in [(ApNormalizer::MinRelevantK, false), (ApNormalizer::Relevant, true)] {
            let report = evaluate_run(&run, &qrels, k, normalizer).map_err(|e| e.to_string())?;
            let oracle = oracle_metrics(&plain, k, rel_norm);
            for (got, want) in report.aggregate.values().iter().zip(oracle.values) {
                worst = worst.max((got - want).abs());
            }
        }
        instances += 1;
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e} over {instances} instances"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("{instances} instances, max deviation {worst:.1e}, {:.2}s", start.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- loss

fn criterion_loss() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (n, m) in [(1usize, 1usize), (3, 2), (10, 5)] {
        for tau in [0.05, 1.0] {
            for s in [0.0, 0.37, -0.8] {
                let loss = info_nce_loss(s, &vec![s; n], &vec![s; m], tau).map_err(|e| e.to_string())?;
                worst = worst.max((loss - ((1 + n + m) as f64).ln()).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("closed-form deviation {worst:e}"))?;
    // independent evaluation of ln(e^1 + e^0 + e^0.5) - 1
    let oracle = (1f64.exp() + 1.0 + 0.5f64.exp()).ln() - 1.0;
    let worked = info_nce_loss(1.0, &[0.0], &[0.5], 1.0).map_err(|e| e.to_string())?;
    ensure((worked - oracle).abs() <= 1e-6 && (oracle - 0.680_269_670_6).abs() <= 1e-9, || {
        format!("worked value {worked:.10}, oracle {oracle:.10}")
    })?;
    within(start.elapsed(), 1.0)?;
    Ok(format!(
        "closed forms within {worst:.1e}; worked value {worked:.10} (oracle {oracle:.10})"
    ))
}

// ---------------------------------------------------------------- gradient

fn random_batch(rng: &mut ChaCha8Rng, dim: usize) -> Batch {
    let examples: Vec<TrainingExample> = (0..3)
        .map(|i| TrainingExample {
            query_id: format!("q{i}"),
            positive_id: format!("p{i}"),
            easy_negative_ids: vec![format!("e{i}")],
            hard_negative_ids: vec![format!("h{i}a"), format!("h{i}b")],
        })
        .collect();
    let mut store = EmbeddingStore::new("random", None, TemplateId::Default);
    for ex in &examples {
        let ids = [&ex.query_id, &ex.positive_id]
            .into_iter()
            .chain(&ex.easy_negative_ids)
            .chain(&ex.hard_negative_ids);
        for id in ids {
            store
                .insert(CaseEmbedding {
                    case_id: id.clone(),
                    vector: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    backend_tag: "random".into(),
                    adapter_version: None,
                    normalized: false,
                })
                .expect("consistent dims");
        }
    }
    assemble_batch(&examples, &store, None).expect("valid batch")
}

fn param(a: &mut Adapter, i: usize) -> &mut f64 {
    let n = a.weights.len();
    if i < n {
        &mut a.weights[i]
    } else {
        &mut a.bias[i - n]
    }
}

fn criterion_gradient() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for kind in [SimilarityKind::Dot, SimilarityKind::Cosine] {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let batch = random_batch(&mut rng, 6);
            let adapter = Adapter::init(6, 4, 0.5, seed);
            let cfg = LossConfig {
                temperature: [0.05, 0.1, 0.5, 1.0][seed as usize % 4],
                similarity_kind: kind,
            };
            let (_, grad) = loss_and_grad(&batch, &adapter, &cfg).map_err(|e| e.to_string())?;
            let analytic: Vec<f64> = grad.weights.iter().chain(&grad.bias).copied().collect();
            for (i, g) in analytic.iter().enumerate() {
                let mut plus = adapter.clone();
                let mut minus = adapter.clone();
                let h = 1e-4 * param(&mut plus, i).abs().max(1.0);
                *param(&mut plus, i) += h;
                *param(&mut minus, i) -= h;
                let lp = batch_loss(&batch, &plus, &cfg).map_err(|e| e.to_string())?;
                let lm = batch_loss(&batch, &minus, &cfg).map_err(|e| e.to_string())?;
                let numeric = (lp - lm) / (2.0 * h);
                let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    within(start.elapsed(), 30.0)?;
    Ok(format!("40 batches, {checked} partials, max relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- extraction

#[derive(Deserialize)]
struct ExpectedExtraction {
    case_id: String,
    issues: Vec<String>,
    judgement: String,
}

fn criterion_extraction() -> Outcome {
    let dir = fixtures().join("extraction");
    let expected: Vec<ExpectedExtraction> =
        serde_json::from_str(&fs::read_to_string(dir.join("expected.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let texts: Vec<(String, String)> = expected
        .iter()
        .map(|e| {
            let text = fs::read_to_string(dir.join("docs").join(format!("{}.txt", e.case_id))).map_err(|e| e.to_string())?;
            Ok((e.case_id.clone(), text))
        })
        .collect::<std::result::Result<_, String>>()?;
    let start = Instant::now();
    let layout = CorpusLayout::default();
    let ph = PlaceholderConfig::default();
    let mut mismatches = Vec::new();
    for (want, (id, text)) in expected.iter().zip(&texts) {
        let doc = CaseDocument::from_text(id.clone(), text, &layout).map_err(|e| e.to_string())?;
        if extract_issues(&doc.sections, &ph) != want.issues {
            mismatches.push(format!("{id} issues"));
        }
        if extract_judgement(&doc.sections) != want.judgement {
            mismatches.push(format!("{id} judgement"));
        }
    }
    let elapsed = start.elapsed();
    ensure(expected.len() == 25, || format!("fixture has {} documents", expected.len()))?;
    ensure(mismatches.is_empty(), || format!("mismatches: {}", mismatches.join(", ")))?;
    within(elapsed, 1.0)?;
    Ok(format!("25/25 documents exact, {:.3}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- bm25

#[derive(Deserialize)]
struct Bm25Doc {
    id: String,
    text: String,
}

#[derive(Deserialize)]
struct Bm25Mining {
    query: String,
    positives: Vec<String>,
    documents: Vec<Bm25Doc>,
}

#[derive(Deserialize)]
struct Bm25Corpus {
    k1: f64,
    b: f64,
    stopwords: Vec<String>,
    documents: Vec<Bm25Doc>,
    mining: Bm25Mining,
}

#[derive(Deserialize)]
struct Bm25Score {
    query: String,
    doc: String,
    score: String,
}

#[derive(Deserialize)]
struct Bm25Expected {
    num_docs: usize,
    avg_doc_length: String,
    doc_lengths: BTreeMap<String, usize>,
    doc_frequencies: BTreeMap<String, usize>,
    scores: Vec<Bm25Score>,
    mined_first: String,
}

/// Okapi weight computed straight from token lists.
fn oracle_scores(docs: &[(String, Vec<String>)], query: &[String], k1: f64, b: f64) -> Vec<(String, f64)> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(|(_, t)| t.len()).sum::<usize>() as f64 / n;
    let mut out: Vec<(String, f64)> = docs
        .iter()
        .map(|(id, toks)| {
            let mut s = 0.0;
            for term in query {
                let tf = toks.iter().filter(|t| *t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|(_, t)| t.contains(term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * toks.len() as f64 / avg));
            }
            (id.clone(), s)
        })
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then_with(|| a.0.cmp(&b.0)));
    out
}

fn criterion_bm25() -> Outcome {
    let dir = fixtures().join("bm25");
    let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(|e| e.to_string());
    let corpus: Bm25Corpus = serde_json::from_str(&read("corpus.json")?).map_err(|e| e.to_string())?;
    let expected: Bm25Expected = serde_json::from_str(&read("expected.json")?).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let params = Bm25Params {
        k1: corpus.k1,
        b: corpus.b,
    };
    let analyzer = Analyzer::with_stopwords(corpus.stopwords.iter().map(String::as_str));
    let index = Bm25Index::from_documents(
        corpus.documents.iter().map(|d| (d.id.as_str(), d.text.as_str())),
        analyzer.clone(),
        params,
    )
    .map_err(|e| e.to_string())?;

    // fixture statistics and scores
    let avg: f64 = expected.avg_doc_length.parse().map_err(|_| "bad avg")?;
    ensure(index.num_docs() == expected.num_docs, || "document count".into())?;
    ensure((index.avg_doc_length - avg).abs() <= 1e-12, || "average length".into())?;
    ensure(index.doc_lengths == expected.doc_lengths, || "document lengths".into())?;
    ensure(index.doc_frequencies == expected.doc_frequencies, || "document frequencies".into())?;
    let mut worst: f64 = 0.0;
    for s in &expected.scores {
        let want: f64 = s.score.parse().map_err(|_| "bad score")?;
        let got = bm25_score(&index, &analyzer.tokenize(&s.query), &s.doc).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
        let ranked = bm25_top_k(&index, &s.query, 5, &BTreeSet::new());
        let listed = ranked.iter().find(|(id, _)| id == &s.doc).map(|(_, v)| *v).ok_or("doc missing from top-k")?;
        worst = worst.max((listed - want).abs());
    }
    ensure(worst <= 1e-9, || format!("fixture score deviation {worst:e}"))?;

    // near-duplicate non-relevant case is mined first
    let m = &corpus.mining;
    let mining_index = Bm25Index::from_documents(
        m.documents.iter().map(|d| (d.id.as_str(), d.text.as_str())),
        analyzer.clone(),
        params,
    )
    .map_err(|e| e.to_string())?;
    let qtext = &m.documents.iter().find(|d| d.id == m.query).ok_or("mining query")?.text;
    let qdoc = CaseDocument::from_text(m.query.clone(), qtext, &CorpusLayout::default()).map_err(|e| e.to_string())?;
    let positives: BTreeSet<String> = m.positives.iter().cloned().collect();
    let mined = mine_hard_negatives(&mining_index, &qdoc, &positives, 2, 5).map_err(|e| e.to_string())?;
    ensure(mined.ids.first() == Some(&expected.mined_first), || format!("mined {:?}", mined.ids))?;

    // seeded corpora against exhaustive scoring
    let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let mut violations = 0usize;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=30);
        let docs: Vec<(String, Vec<String>)> = (0..n)
            .map(|i| {
                let len = rng.random_range(1..=25);
                // skewed vocabulary so frequencies vary
                let toks = (0..len)
                    .map(|_| {
                        let span = rng.random_range(1..=vocab.len());
                        vocab[rng.random_range(0..span)].clone()
                    })
                    .collect();
                (format!("c{i:02}"), toks)
            })
            .collect();
        let texts: Vec<(String, String)> = docs.iter().map(|(id, t)| (id.clone(), t.join(" "))).collect();
        let idx = Bm25Index::from_documents(texts.iter().map(|(a, b)| (a.as_str(), b.as_str())), Analyzer::with_stopwords([]), Bm25Params::default())
            .map_err(|e| e.to_string())?;
        let qlen = rng.random_range(1..=6);
        let query: Vec<String> = (0..qlen).map(|_| vocab.choose(&mut rng).expect("vocab").clone()).collect();
        let exclude: BTreeSet<String> = docs
            .iter()
            .filter(|_| rng.random_bool(0.2))
            .map(|(id, _)| id.clone())
            .collect();
        let k = rng.random_range(1..=35);
        let got = bm25_top_k(&idx, &query.join(" "), k, &exclude);
        let want: Vec<(String, f64)> = oracle_scores(&docs, &query, 1.2, 0.75)
            .into_iter()
            .filter(|(id, _)| !exclude.contains(id))
            .take(k)
            .collect();
        let same = got.len() == want.len()
            && got.iter().zip(&want).all(|(g, w)| g.0 == w.0 && (g.1 - w.1).abs() <= 1e-9);
        if !same {
            violations += 1;
        }
        // mining never returns a positive or the query itself
        let (qid, qtoks) = docs.choose(&mut rng).expect("non-empty");
        let qdoc = CaseDocument::from_text(qid.clone(), &qtoks.join(" "), &CorpusLayout::default()).map_err(|e| e.to_string())?;
        let positives: BTreeSet<String> = docs
            .iter()
            .filter(|_| rng.random_bool(0.3))
            .map(|(id, _)| id.clone())
            .collect();
        let count = rng.random_range(1..=3);
        let mined = mine_hard_negatives(&idx, &qdoc, &positives, count, count + 5).map_err(|e| e.to_string())?;
        if mined.ids.iter().any(|id| positives.contains(id) || id == qid) {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} seeded corpora disagree with the oracle"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "fixture within {worst:.1e}, 100 corpora match, near-duplicate mined first, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- pipeline

struct PipelineRun {
    workspace: PathBuf,
    elapsed: Duration,
}

fn synthetic_config(workspace: &Path, max_in_flight: usize) -> std::result::Result<PipelineConfig, String> {
    let mut cfg = PipelineConfig::load(&fixtures().join("synthetic").join("synthetic.toml")).map_err(|e| e.to_string())?;
    cfg.workspace = workspace.to_path_buf();
    cfg.gateway.max_in_flight = max_in_flight;
    Ok(cfg)
}

fn run_synthetic(workspace: &Path, max_in_flight: usize) -> std::result::Result<PipelineRun, String> {
    let cfg = synthetic_config(workspace, max_in_flight)?;
    let start = Instant::now();
    run_all(&cfg, &cfg.eval.seeds).map_err(|e| e.to_string())?;
    Ok(PipelineRun {
        workspace: workspace.to_path_buf(),
        elapsed: start.elapsed(),
    })
}

fn criterion_training(run: &PipelineRun) -> Outcome {
    let ws = &run.workspace;
    let read = |name: &str| fs::read_to_string(ws.join(name)).map_err(|e| format!("{name}: {e}"));
    let log: TrainLog = serde_json::from_str(&read("train_log.seed0.json")?).map_err(|e| e.to_string())?;
    let mrr = |name: &str| -> std::result::Result<f64, String> {
        let r: MetricsReport = serde_json::from_str(&read(name)?).map_err(|e| e.to_string())?;
        Ok(r.aggregate.mrr)
    };
    let (pre, post, bm25) = (mrr("metrics.base.json")?, mrr("metrics.seed0.json")?, mrr("metrics.bm25.json")?);
    let cfg = synthetic_config(ws, 1)?;
    ensure(
        cfg.encode.dim == 4096 && cfg.train.output_dim == 256 && cfg.train.steps == 200 && log.steps == 200,
        || "synthetic configuration drifted".into(),
    )?;
    let summary = format!(
        "loss {:.4} -> {:.6}, MRR@5 pre {pre:.3} post {post:.3} bm25 {bm25:.3}, {:.1}s",
        log.initial_loss,
        log.final_loss,
        run.elapsed.as_secs_f64()
    );
    ensure(log.final_loss <= 0.8 * log.initial_loss, || format!("loss did not fall enough: {summary}"))?;
    ensure(post >= pre, || format!("post-training MRR below pre-training: {summary}"))?;
    ensure(post >= bm25 - 0.05, || format!("post-training MRR below BM25 margin: {summary}"))?;
    within(run.elapsed, 60.0)?;
    Ok(summary)
}

fn artifact_files(ws: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(ws)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| {
                    n.starts_with("contexts")
                        || n.starts_with("embeddings")
                        || n.starts_with("run.")
                        || n.starts_with("metrics.")
                        || n.starts_with("report.")
                })
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}

fn criterion_determinism(first: &PipelineRun, scratch: &Path) -> Outcome {
    // the second run uses concurrent gateway calls, the first ran serially
    let second = run_synthetic(&scratch.join("second"), 4)?;
    let a = artifact_files(&first.workspace);
    let b = artifact_files(&second.workspace);
    ensure(a == b, || format!("artifact sets differ: {a:?} vs {b:?}"))?;
    for kind in ["contexts", "embeddings", "run.", "metrics."] {
        ensure(a.iter().any(|n| n.starts_with(kind)), || format!("no {kind} artifact produced"))?;
    }
    let mut differing = Vec::new();
    for name in &a {
        let x = fs::read(first.workspace.join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(second.workspace.join(name)).map_err(|e| e.to_string())?;
        if x != y {
            differing.push(name.clone());
        }
    }
    ensure(differing.is_empty(), || format!("files differ: {}", differing.join(", ")))?;
    Ok(format!("{} artifacts byte-identical across two runs", a.len()))
}

// ---------------------------------------------------------------- templates

#[derive(Deserialize)]
struct PromptCase {
    case_id: String,
    background: String,
    facts: String,
    issues: Vec<String>,
    judgement: String,
    reasoning: String,
    fact_triplets: Vec<[String; 3]>,
    issue_triplets: Vec<[String; 3]>,
}

fn triplet_set(rows: &[[String; 3]], field: SourceField) -> TripletSet {
    let triplets = rows
        .iter()
        .enumerate()
        .map(|(i, [h, r, t])| RelationTriplet {
            head: h.clone(),
            relation: r.clone(),
            tail: t.clone(),
            source_sentence_index: i,
        })
        .collect();
    TripletSet::from_triplets(triplets, TripletOrigin::Imported, field)
}

fn criterion_templates(pipeline: &PipelineRun) -> Outcome {
    let dir = fixtures().join("prompts");
    let cases: Vec<PromptCase> =
        serde_json::from_str(&fs::read_to_string(dir.join("cases.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut mismatches = Vec::new();
    let mut compared = 0usize;
    let mut leaks = Vec::new();
    let mut screened = 0usize;
    for case in &cases {
        let elements = LegalElements {
            case_id: case.case_id.clone(),
            facts: case.facts.clone(),
            issues: case.issues.clone(),
            judgement: case.judgement.clone(),
            reasoning: Some(case.reasoning.clone()),
            reasoning_note: None,
        };
        let r_fact = triplet_set(&case.fact_triplets, SourceField::Facts);
        let r_issue = triplet_set(&case.issue_triplets, SourceField::Issues);
        let (system, user) = render_reasoning_prompt(&elements, &r_fact, &r_issue).map_err(|e| e.to_string())?;
        let mut rendered = vec![
            ("fact", render_fact_prompt(&case.background)),
            ("reasoning", format!("{system}\n{user}")),
        ];
        for id in TemplateId::ALL {
            let ctx = render_context(&elements, &r_fact, &r_issue, id, 2048).map_err(|e| e.to_string())?;
            if !case.judgement.is_empty() {
                screened += 1;
                if ctx.user_text.contains(&case.judgement) {
                    leaks.push(format!("{}:{id}", case.case_id));
                }
            }
            rendered.push((id.as_str(), ctx.embedding_input()));
        }
        for (name, text) in rendered {
            let path = dir.join("golden").join(format!("{}.{name}.txt", case.case_id));
            let golden = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            compared += 1;
            if golden != text.as_bytes() {
                mismatches.push(format!("{}.{name}", case.case_id));
            }
        }
    }
    ensure(cases.len() == 5 && compared == 25, || format!("{compared} goldens compared"))?;
    ensure(mismatches.is_empty(), || format!("golden mismatches: {}", mismatches.join(", ")))?;

    // a judgement quoted verbatim in another slot is still withheld
    let judgement = "The application for judicial review is allowed.";
    let leaky = LegalElements {
        case_id: "leak".into(),
        facts: format!("Earlier, the court wrote: {judgement}"),
        issues: vec![format!("Per FRAGMENT_SUPPRESSED, {judgement}")],
        judgement: judgement.into(),
        reasoning: Some(format!("Hence {judgement}")),
        reasoning_note: None,
    };
    let empty = TripletSet::empty(TripletOrigin::Builtin, SourceField::Facts);
    for id in TemplateId::ALL {
        let ctx = render_context(&leaky, &empty, &empty, id, 2048).map_err(|e| e.to_string())?;
        screened += 1;
        if ctx.user_text.contains(judgement) || ctx.system_text.contains(judgement) {
            leaks.push(format!("leak:{id}"));
        }
    }

    // every case of the synthetic pipeline
    let contexts = reakase_core::context::load_contexts(&pipeline.workspace.join("contexts.jsonl")).map_err(|e| e.to_string())?;
    let elements = reakase_core::elements::load_elements(&pipeline.workspace.join("elements.jsonl")).map_err(|e| e.to_string())?;
    let judgements: BTreeMap<&str, &str> = elements.iter().map(|e| (e.case_id.as_str(), e.judgement.as_str())).collect();
    let mut checked = 0usize;
    for ctx in &contexts {
        let j = judgements.get(ctx.case_id.as_str()).copied().unwrap_or("");
        if !j.trim().is_empty() {
            checked += 1;
            screened += 1;
            if ctx.user_text.contains(j) {
                leaks.push(format!("synthetic:{}", ctx.case_id));
            }
        }
    }
    ensure(checked > 0, || "no synthetic case had a judgement".into())?;
    ensure(leaks.is_empty(), || format!("judgement leaked: {}", leaks.join(", ")))?;
    Ok(format!("{compared} goldens byte-exact; judgement absent from {} rendered contexts", screened))
}

// ---------------------------------------------------------------- driver

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let pipeline = run_synthetic(&scratch.path().join("first"), 1);
    let needs_pipeline = |f: &dyn Fn(&PipelineRun) -> Outcome| match &pipeline {
        Ok(run) => f(run),
        Err(e) => Err(format!("pipeline failed: {e}")),
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("1 metric oracle equivalence", criterion_metrics()),
        ("2 contrastive loss closed forms", criterion_loss()),
        ("3 gradient vs finite differences", criterion_gradient()),
        ("4 extraction rule fidelity", criterion_extraction()),
        ("5 bm25 correctness", criterion_bm25()),
        ("6 end-to-end training smoke", needs_pipeline(&criterion_training)),
        ("7 determinism", needs_pipeline(&|run| criterion_determinism(run, scratch.path()))),
        ("8 template fidelity", needs_pipeline(&criterion_templates)),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
