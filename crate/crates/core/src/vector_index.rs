//! Exact dense retrieval over case embeddings and run-file I/O.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::{CaseEmbedding, EmbeddingStore, TemplateId};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    Dot,
    #[default]
    Cosine,
}

impl std::str::FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Self::Dot),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::InvalidArgument(format!("unknown similarity `{other}`"))),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn similarity(a: &[f64], b: &[f64], kind: SimilarityKind) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let d = dot(a, b);
    match kind {
        SimilarityKind::Dot => Ok(d),
        SimilarityKind::Cosine => {
            let norms = l2_norm(a) * l2_norm(b);
            if norms == 0.0 {
                return Err(Error::ZeroNorm);
            }
            Ok((d / norms).clamp(-1.0, 1.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCase {
    pub case_id: String,
    pub score: f64,
}

/// Candidates for one query, best first, ties broken by ascending case id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<ScoredCase>,
}

/// Descending score, then ascending id.
pub fn rank_order(a: &ScoredCase, b: &ScoredCase) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.case_id.cmp(&b.case_id))
}

impl RankedList {
    /// Sorts `scored` with the tie rule, drops the query itself and keeps
    /// the first `k`. Duplicate ids keep their best-ranked occurrence.
    pub fn from_scores(query_id: impl Into<String>, mut scored: Vec<ScoredCase>, k: usize) -> Self {
        let query_id = query_id.into();
        scored.sort_by(rank_order);
        let mut seen = BTreeSet::new();
        let entries = scored
            .into_iter()
            .filter(|s| s.case_id != query_id && seen.insert(s.case_id.clone()))
            .take(k)
            .collect();
        Self { query_id, entries }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.case_id.as_str())
    }

    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for pair in self.entries.windows(2) {
            if rank_order(&pair[0], &pair[1]) != std::cmp::Ordering::Less {
                return Err(Error::InvalidArgument(format!(
                    "ranking for `{}` is not in rank order at `{}`",
                    self.query_id, pair[1].case_id
                )));
            }
        }
        for e in &self.entries {
            if e.case_id == self.query_id || !seen.insert(&e.case_id) {
                return Err(Error::InvalidArgument(format!(
                    "ranking for `{}` repeats or contains `{}`",
                    self.query_id, e.case_id
                )));
            }
        }
        Ok(())
    }
}

/// Exhaustive top-`k` similarity search.
pub fn search<'a>(
    query: &CaseEmbedding,
    candidates: impl IntoIterator<Item = &'a CaseEmbedding>,
    k: usize,
    exclude: &BTreeSet<String>,
    kind: SimilarityKind,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut scored = Vec::new();
    for cand in candidates {
        if exclude.contains(&cand.case_id) || cand.case_id == query.case_id {
            continue;
        }
        scored.push(ScoredCase {
            case_id: cand.case_id.clone(),
            score: similarity(&query.vector, &cand.vector, kind)?,
        });
    }
    Ok(RankedList::from_scores(query.case_id.clone(), scored, k))
}

/// Everything that determines a dense run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub backend_tag: String,
    pub adapter_version: Option<String>,
    pub template_id: TemplateId,
    pub similarity: SimilarityKind,
    pub k: usize,
}

impl RunSettings {
    pub fn fingerprint(&self) -> String {
        util::hash_json(self)[..16].to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalRun {
    pub ranked: BTreeMap<String, RankedList>,
    pub config_fingerprint: String,
}

pub fn produce_run(
    queries: &[String],
    candidates: &[String],
    store: &EmbeddingStore,
    settings: &RunSettings,
) -> Result<RetrievalRun> {
    let cand_embs: Vec<&CaseEmbedding> = candidates
        .iter()
        .map(|id| store.get(id).ok_or_else(|| Error::MissingEmbedding(id.clone())))
        .collect::<Result<_>>()?;
    let mut ranked = BTreeMap::new();
    for qid in queries {
        let q = store.get(qid).ok_or_else(|| Error::MissingEmbedding(qid.clone()))?;
        let list = search(q, cand_embs.iter().copied(), settings.k, &BTreeSet::new(), settings.similarity)?;
        ranked.insert(qid.clone(), list);
    }
    Ok(RetrievalRun {
        ranked,
        config_fingerprint: settings.fingerprint(),
    })
}

impl RetrievalRun {
    /// `<query_id>\t<rank>\t<case_id>\t<score>` lines, ranks from 1, scores to 6 places.
    pub fn to_run_file(&self) -> String {
        let mut out = String::new();
        for (qid, list) in &self.ranked {
            for (i, e) in list.entries.iter().enumerate() {
                writeln!(out, "{qid}\t{}\t{}\t{:.6}", i + 1, e.case_id, e.score).expect("string write");
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        util::write_bytes(path, self.to_run_file().as_bytes())
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut rows: BTreeMap<String, Vec<(usize, ScoredCase)>> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: &str| Error::MalformedRecord {
                path: source.to_path_buf(),
                line: idx + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(malformed("expected 4 tab-separated fields"));
            }
            let rank: usize = fields[1].parse().map_err(|_| malformed("bad rank"))?;
            let score: f64 = fields[3].parse().map_err(|_| malformed("bad score"))?;
            rows.entry(fields[0].to_string()).or_default().push((
                rank,
                ScoredCase {
                    case_id: fields[2].to_string(),
                    score,
                },
            ));
        }
        let ranked = rows
            .into_iter()
            .map(|(qid, mut entries)| {
                entries.sort_by_key(|(rank, _)| *rank);
                let list = RankedList {
                    query_id: qid.clone(),
                    entries: entries.into_iter().map(|(_, e)| e).collect(),
                };
                (qid, list)
            })
            .collect();
        Ok(Self {
            ranked,
            config_fingerprint: util::sha256_hex(text)[..16].to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&util::read_to_string(path)?, path)
    }
}
