//! Okapi BM25 over raw case texts, used as a lexical baseline and for
//! hard-negative mining.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CaseDocument, CorpusHandle};
use crate::error::{Error, Result};
use crate::util;

pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "he", "her", "his", "in", "is", "it", "its",
    "of", "on", "or", "she", "that", "the", "their", "this", "to", "was", "were", "which", "with",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analyzer {
    pub stopwords: BTreeSet<String>,
}

impl Default for Analyzer {
    fn default() -> Self {
        Self::with_stopwords(DEFAULT_STOPWORDS.iter().copied())
    }
}

impl Analyzer {
    pub fn with_stopwords<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            stopwords: words.into_iter().map(str::to_lowercase).collect(),
        }
    }

    /// Lowercased alphanumeric runs minus stopwords.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !self.stopwords.contains(*t))
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub params: Bm25Params,
    pub analyzer: Analyzer,
    pub doc_frequencies: BTreeMap<String, usize>,
    pub doc_lengths: BTreeMap<String, usize>,
    pub avg_doc_length: f64,
    /// Per term, `(case_id, tf)` sorted by case id.
    pub postings: BTreeMap<String, Vec<(String, usize)>>,
}

impl Bm25Index {
    pub fn from_documents<'a>(
        docs: impl IntoIterator<Item = (&'a str, &'a str)>,
        analyzer: Analyzer,
        params: Bm25Params,
    ) -> Result<Self> {
        let mut doc_lengths = BTreeMap::new();
        let mut postings: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
        let mut sorted: Vec<(&str, &str)> = docs.into_iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(b.0));
        for (id, text) in sorted {
            let tokens = analyzer.tokenize(text);
            if doc_lengths.insert(id.to_string(), tokens.len()).is_some() {
                return Err(Error::DuplicateCaseId(id.to_string()));
            }
            let mut tf: BTreeMap<String, usize> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((id.to_string(), count));
            }
        }
        if doc_lengths.is_empty() {
            return Err(Error::InvalidArgument("cannot index an empty corpus".into()));
        }
        let avg_doc_length = doc_lengths.values().sum::<usize>() as f64 / doc_lengths.len() as f64;
        let doc_frequencies = postings.iter().map(|(t, p)| (t.clone(), p.len())).collect();
        Ok(Self {
            params,
            analyzer,
            doc_frequencies,
            doc_lengths,
            avg_doc_length,
            postings,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.doc_frequencies.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn term_frequency(&self, term: &str, case_id: &str) -> usize {
        self.postings
            .get(term)
            .and_then(|p| p.binary_search_by(|(id, _)| id.as_str().cmp(case_id)).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    fn term_weight(&self, idf: f64, tf: usize, len: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = if self.avg_doc_length > 0.0 {
            1.0 - b + b * len as f64 / self.avg_doc_length
        } else {
            1.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_bytes(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&util::read_to_string(path)?)?)
    }
}

/// Indexes every candidate case of the corpus.
pub fn build_bm25(corpus: &CorpusHandle, analyzer: Analyzer, params: Bm25Params) -> Result<Bm25Index> {
    let ids = corpus.candidate_ids();
    let docs = ids
        .iter()
        .filter_map(|id| corpus.case(id))
        .map(|c| (c.case_id.as_str(), c.raw_text.as_str()));
    Bm25Index::from_documents(docs, analyzer, params)
}

/// Sums term weights in query order; repeated query terms count repeatedly.
pub fn bm25_score(index: &Bm25Index, query_terms: &[String], case_id: &str) -> Result<f64> {
    let len = *index
        .doc_lengths
        .get(case_id)
        .ok_or_else(|| Error::UnknownCase(case_id.to_string()))?;
    let mut score = 0.0;
    for term in query_terms {
        let tf = index.term_frequency(term, case_id);
        if tf > 0 {
            score += index.term_weight(index.idf(term), tf, len);
        }
    }
    Ok(score)
}

/// Term-at-a-time scoring of every indexed case; descending score, ties by
/// ascending case id.
pub fn bm25_top_k(index: &Bm25Index, query_text: &str, k: usize, exclude: &BTreeSet<String>) -> Vec<(String, f64)> {
    let terms = index.analyzer.tokenize(query_text);
    let mut acc: BTreeMap<&str, f64> = index.doc_lengths.keys().map(|id| (id.as_str(), 0.0)).collect();
    for term in &terms {
        let Some(postings) = index.postings.get(term) else { continue };
        let idf = index.idf(term);
        for (id, tf) in postings {
            let len = index.doc_lengths[id];
            *acc.get_mut(id.as_str()).expect("posting ids are indexed") += index.term_weight(idf, *tf, len);
        }
    }
    let mut ranked: Vec<(String, f64)> = acc
        .into_iter()
        .filter(|(id, _)| !exclude.contains(*id))
        .map(|(id, s)| (id.to_string(), s))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinedNegatives {
    pub ids: Vec<String>,
    /// Fewer than the requested count survived exclusion.
    pub short: bool,
}

pub fn mine_hard_negatives(
    index: &Bm25Index,
    query: &CaseDocument,
    positives: &BTreeSet<String>,
    count: usize,
    pool_depth: usize,
) -> Result<MinedNegatives> {
    if count == 0 || pool_depth < count {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= count <= pool_depth, got count {count}, pool_depth {pool_depth}"
        )));
    }
    let ids: Vec<String> = bm25_top_k(index, &query.raw_text, pool_depth, &BTreeSet::new())
        .into_iter()
        .map(|(id, _)| id)
        .filter(|id| id != &query.case_id && !positives.contains(id))
        .take(count)
        .collect();
    Ok(MinedNegatives {
        short: ids.len() < count,
        ids,
    })
}

/// `<query_id>\t<negative_id>` lines.
pub fn write_negatives(path: &Path, negatives: &BTreeMap<String, Vec<String>>) -> Result<()> {
    let mut out = String::new();
    for (q, negs) in negatives {
        for n in negs {
            out.push_str(&format!("{q}\t{n}\n"));
        }
    }
    util::write_bytes(path, out.as_bytes())
}

pub fn read_negatives(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = util::read_to_string(path)?;
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (q, n) = line.split_once('\t').ok_or_else(|| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            reason: "expected `<query_id>\\t<negative_id>`".into(),
        })?;
        out.entry(q.to_string()).or_default().push(n.trim_end().to_string());
    }
    Ok(out)
}
