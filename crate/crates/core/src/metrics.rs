//! Ranking evaluation at a cutoff: P@K, R@K, Micro/Macro-F1, MRR@K, MAP@K, NDCG@K.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;
use crate::vector_index::{RankedList, RetrievalRun};

/// Binary relevance judgments.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Qrels {
    relevant: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, case_id: impl Into<String>) {
        self.relevant.entry(query_id.into()).or_default().insert(case_id.into());
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.relevant.get(query_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.relevant.iter()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &String> {
        self.relevant.keys()
    }

    pub fn len(&self) -> usize {
        self.relevant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }

    pub fn parse_tsv(text: &str, source: &Path) -> Result<Self> {
        let mut q = Self::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
                return Err(Error::MalformedRecord {
                    path: source.to_path_buf(),
                    line: idx + 1,
                    reason: "expected `<query_id>\\t<case_id>`".into(),
                });
            }
            q.insert(fields[0], fields[1]);
        }
        Ok(q)
    }

    pub fn from_tsv_file(path: &Path) -> Result<Self> {
        Self::parse_tsv(&util::read_to_string(path)?, path)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (q, rels) in &self.relevant {
            for r in rels {
                writeln!(out, "{q}\t{r}").expect("string write");
            }
        }
        out
    }
}

/// Normalizer of average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApNormalizer {
    /// min(|relevant|, K)
    #[default]
    MinRelevantK,
    /// |relevant|
    Relevant,
}

fn hits_at_k(ranked: &RankedList, relevant: &BTreeSet<String>, k: usize) -> usize {
    ranked.ids().take(k).filter(|id| relevant.contains(*id)).count()
}

/// Precision uses the fixed denominator `k`, even for shorter rankings.
pub fn precision_recall_at_k(ranked: &RankedList, relevant: &BTreeSet<String>, k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if relevant.is_empty() {
        return Err(Error::InvalidArgument(format!("empty relevant set for `{}`", ranked.query_id)));
    }
    let hits = hits_at_k(ranked, relevant, k) as f64;
    Ok((hits / k as f64, hits / relevant.len() as f64))
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Hit count and relevant-set size for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryHits {
    pub hits: usize,
    pub relevant: usize,
}

/// Macro averages per-query F1; micro pools hits across queries.
pub fn micro_macro_f1(per_query: &[QueryHits], k: usize) -> (f64, f64) {
    if per_query.is_empty() {
        return (0.0, 0.0);
    }
    let macro_f1 = per_query
        .iter()
        .map(|q| {
            if q.relevant == 0 {
                0.0
            } else {
                f1(q.hits as f64 / k as f64, q.hits as f64 / q.relevant as f64)
            }
        })
        .sum::<f64>()
        / per_query.len() as f64;
    let total_hits: usize = per_query.iter().map(|q| q.hits).sum();
    let total_rel: usize = per_query.iter().map(|q| q.relevant).sum();
    let pooled_p = total_hits as f64 / (k * per_query.len()) as f64;
    let pooled_r = if total_rel == 0 {
        0.0
    } else {
        total_hits as f64 / total_rel as f64
    };
    (f1(pooled_p, pooled_r), macro_f1)
}

pub fn mrr_at_k(ranked: &RankedList, relevant: &BTreeSet<String>, k: usize) -> f64 {
    ranked
        .ids()
        .take(k)
        .position(|id| relevant.contains(id))
        .map_or(0.0, |pos| 1.0 / (pos + 1) as f64)
}

pub fn average_precision_at_k(
    ranked: &RankedList,
    relevant: &BTreeSet<String>,
    k: usize,
    normalizer: ApNormalizer,
) -> f64 {
    let denom = match normalizer {
        ApNormalizer::MinRelevantK => relevant.len().min(k),
        ApNormalizer::Relevant => relevant.len(),
    };
    if denom == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.ids().take(k).enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / denom as f64
}

/// Binary-gain NDCG with a log2(rank + 1) discount.
pub fn ndcg_at_k(ranked: &RankedList, relevant: &BTreeSet<String>, k: usize) -> f64 {
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .ids()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(*id))
        .map(|(i, _)| discount(i))
        .sum();
    let ideal: f64 = (0..relevant.len().min(k)).map(discount).sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub p_at_k: f64,
    pub r_at_k: f64,
    pub f1_at_k: f64,
    pub rr_at_k: f64,
    pub ap_at_k: f64,
    pub ndcg_at_k: f64,
    pub hits: usize,
    pub num_relevant: usize,
}

impl QueryMetrics {
    fn zero(num_relevant: usize) -> Self {
        Self {
            p_at_k: 0.0,
            r_at_k: 0.0,
            f1_at_k: 0.0,
            rr_at_k: 0.0,
            ap_at_k: 0.0,
            ndcg_at_k: 0.0,
            hits: 0,
            num_relevant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub mrr: f64,
    pub map: f64,
    pub ndcg: f64,
}

impl AggregateMetrics {
    pub const NAMES: [&'static str; 7] = ["P@K", "R@K", "Mi-F1", "Ma-F1", "MRR@K", "MAP", "NDCG@K"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.precision,
            self.recall,
            self.micro_f1,
            self.macro_f1,
            self.mrr,
            self.map,
            self.ndcg,
        ]
    }

    pub fn from_values(v: [f64; 7]) -> Self {
        Self {
            precision: v[0],
            recall: v[1],
            micro_f1: v[2],
            macro_f1: v[3],
            mrr: v[4],
            map: v[5],
            ndcg: v[6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub run_fingerprint: String,
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub aggregate: AggregateMetrics,
    /// Judged queries absent from the run; they score zero.
    pub missing_from_run: Vec<String>,
    /// Run queries without judgments; they are not scored.
    pub missing_qrels: Vec<String>,
}

pub fn evaluate_run(run: &RetrievalRun, qrels: &Qrels, k: usize, normalizer: ApNormalizer) -> Result<MetricsReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut per_query = BTreeMap::new();
    let mut missing_from_run = Vec::new();
    let mut hits = Vec::new();
    for (qid, relevant) in qrels.iter() {
        if relevant.is_empty() {
            continue;
        }
        let metrics = match run.ranked.get(qid) {
            Some(list) => {
                let (p, r) = precision_recall_at_k(list, relevant, k)?;
                QueryMetrics {
                    p_at_k: p,
                    r_at_k: r,
                    f1_at_k: f1(p, r),
                    rr_at_k: mrr_at_k(list, relevant, k),
                    ap_at_k: average_precision_at_k(list, relevant, k, normalizer),
                    ndcg_at_k: ndcg_at_k(list, relevant, k),
                    hits: hits_at_k(list, relevant, k),
                    num_relevant: relevant.len(),
                }
            }
            None => {
                missing_from_run.push(qid.clone());
                QueryMetrics::zero(relevant.len())
            }
        };
        hits.push(QueryHits {
            hits: metrics.hits,
            relevant: metrics.num_relevant,
        });
        per_query.insert(qid.clone(), metrics);
    }
    let missing_qrels = run
        .ranked
        .keys()
        .filter(|q| qrels.relevant(q).is_none_or(|r| r.is_empty()))
        .cloned()
        .collect::<Vec<_>>();
    for q in &missing_qrels {
        log::warn!("run query `{q}` has no relevance judgments");
    }
    for q in &missing_from_run {
        log::warn!("judged query `{q}` missing from run");
    }
    let n = per_query.len().max(1) as f64;
    let mean = |f: fn(&QueryMetrics) -> f64| per_query.values().map(f).sum::<f64>() / n;
    let (micro_f1, macro_f1) = micro_macro_f1(&hits, k);
    let aggregate = AggregateMetrics {
        precision: mean(|m| m.p_at_k),
        recall: mean(|m| m.r_at_k),
        micro_f1,
        macro_f1,
        mrr: mean(|m| m.rr_at_k),
        map: mean(|m| m.ap_at_k),
        ndcg: mean(|m| m.ndcg_at_k),
    };
    Ok(MetricsReport {
        k,
        run_fingerprint: run.config_fingerprint.clone(),
        per_query,
        aggregate,
        missing_from_run,
        missing_qrels,
    })
}

fn header(k: usize) -> Vec<String> {
    AggregateMetrics::NAMES
        .iter()
        .map(|n| n.replace('K', &k.to_string()))
        .collect()
}

/// Aligned table of aggregates as percentages with one decimal.
pub fn format_table(rows: &[(&str, &AggregateMetrics)], k: usize) -> String {
    let cols = header(k);
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Run".len());
    let mut out = format!("{:<name_w$}", "Run");
    for c in &cols {
        write!(out, " {c:>7}").expect("string write");
    }
    out.push('\n');
    for (name, agg) in rows {
        write!(out, "{name:<name_w$}").expect("string write");
        for v in agg.values() {
            write!(out, " {:>7.1}", v * 100.0).expect("string write");
        }
        out.push('\n');
    }
    out
}

impl MetricsReport {
    pub fn to_table(&self, name: &str) -> String {
        format_table(&[(name, &self.aggregate)], self.k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&util::read_to_string(path)?)?)
    }
}

/// Arithmetic mean of aggregate values across reports.
pub fn average_aggregates(reports: &[MetricsReport]) -> Option<AggregateMetrics> {
    if reports.is_empty() {
        return None;
    }
    let mut acc = [0.0; 7];
    for r in reports {
        for (a, v) in acc.iter_mut().zip(r.aggregate.values()) {
            *a += v;
        }
    }
    Some(AggregateMetrics::from_values(acc.map(|a| a / reports.len() as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_difference: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub queries: usize,
    pub resamples: usize,
    pub seed: u64,
    pub tests: Vec<PairedTest>,
}

/// Two-sided paired sign-flip permutation test over the queries both reports judge.
pub fn sign_flip_test(differences: &[f64], resamples: usize, seed: u64) -> f64 {
    if differences.is_empty() || resamples == 0 {
        return 1.0;
    }
    let n = differences.len() as f64;
    let observed = (differences.iter().sum::<f64>() / n).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..resamples {
        let s: f64 = differences
            .iter()
            .map(|d| if rng.random::<bool>() { *d } else { -*d })
            .sum();
        if (s / n).abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (resamples + 1) as f64
}

type MetricGetter = fn(&QueryMetrics) -> f64;

pub fn compare_reports(a: &MetricsReport, b: &MetricsReport, resamples: usize, seed: u64) -> Comparison {
    let common: Vec<&String> = a.per_query.keys().filter(|q| b.per_query.contains_key(*q)).collect();
    let metrics: [(&str, MetricGetter); 6] = [
        ("P@K", |m| m.p_at_k),
        ("R@K", |m| m.r_at_k),
        ("F1@K", |m| m.f1_at_k),
        ("MRR@K", |m| m.rr_at_k),
        ("MAP", |m| m.ap_at_k),
        ("NDCG@K", |m| m.ndcg_at_k),
    ];
    let n = common.len().max(1) as f64;
    let tests = metrics
        .iter()
        .map(|(name, get)| {
            let va: Vec<f64> = common.iter().map(|q| get(&a.per_query[*q])).collect();
            let vb: Vec<f64> = common.iter().map(|q| get(&b.per_query[*q])).collect();
            let diffs: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x - y).collect();
            PairedTest {
                metric: name.replace('K', &a.k.to_string()),
                mean_a: va.iter().sum::<f64>() / n,
                mean_b: vb.iter().sum::<f64>() / n,
                mean_difference: diffs.iter().sum::<f64>() / n,
                p_value: sign_flip_test(&diffs, resamples, seed),
            }
        })
        .collect();
    Comparison {
        queries: common.len(),
        resamples,
        seed,
        tests,
    }
}
