//! Case corpus ingestion, language filtering, segmentation and persistence.

mod language;
mod segment;
mod sentences;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use language::{strip_non_english, LanguageFilter, DEFAULT_FRENCH_WORDS};
pub use segment::{
    is_heading, normalize_heading, segment_regions, segment_sections, CaseSections, Region,
    SectionKind, SegmentationRules,
};
pub use sentences::{split_sentences, SentenceSplitter, DEFAULT_ABBREVIATIONS};

use crate::error::{Error, Result};
use crate::metrics::Qrels;
use crate::util;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDocument {
    pub case_id: String,
    pub raw_text: String,
    pub sections: CaseSections,
    pub token_count: usize,
}

impl CaseDocument {
    /// Filters language, segments and counts tokens for one case.
    pub fn from_text(case_id: impl Into<String>, text: &str, layout: &CorpusLayout) -> Result<Self> {
        let case_id = case_id.into();
        if case_id.is_empty() {
            return Err(Error::InvalidArgument("empty case id".into()));
        }
        let raw_text = strip_non_english(text, &layout.language);
        if raw_text.trim().is_empty() {
            return Err(Error::EmptyCase(case_id));
        }
        let sections = segment_sections(&raw_text, &layout.segmentation);
        Ok(Self {
            token_count: util::whitespace_tokens(&raw_text),
            case_id,
            raw_text,
            sections,
        })
    }
}

/// Where case files and relevance judgments live under a corpus root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLayout {
    /// Directory of candidate case files, relative to the root.
    pub case_dir: PathBuf,
    /// Optional separate directory of query case files.
    pub query_dir: Option<PathBuf>,
    pub extension: String,
    /// Tab-separated `<query_id>\t<relevant_case_id>` lines.
    pub qrels: Option<PathBuf>,
    pub language: LanguageFilter,
    pub segmentation: SegmentationRules,
}

impl Default for CorpusLayout {
    fn default() -> Self {
        Self {
            case_dir: PathBuf::from("."),
            query_dir: None,
            extension: "txt".into(),
            qrels: None,
            language: LanguageFilter::default(),
            segmentation: SegmentationRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_queries: usize,
    pub num_candidates: usize,
    pub avg_relevant: f64,
    pub avg_tokens: f64,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusHandle {
    pub corpus_id: String,
    /// Sorted by case id.
    pub cases: Vec<CaseDocument>,
    pub qrels: Option<Qrels>,
    pub stats: CorpusStats,
    /// Non-fatal ingestion problems, such as qrels naming unknown candidates.
    pub warnings: Vec<String>,
}

impl CorpusHandle {
    pub fn new(mut cases: Vec<CaseDocument>, qrels: Option<Qrels>) -> Result<Self> {
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        for pair in cases.windows(2) {
            if pair[0].case_id == pair[1].case_id {
                return Err(Error::DuplicateCaseId(pair[0].case_id.clone()));
            }
        }
        let mut warnings = Vec::new();
        if let Some(q) = &qrels {
            let ids: BTreeSet<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
            for (query, relevant) in q.iter() {
                if !ids.contains(query.as_str()) {
                    return Err(Error::UnknownCase(query.clone()));
                }
                for rel in relevant {
                    if !ids.contains(rel.as_str()) {
                        warnings.push(format!("qrels: query `{query}` references unknown candidate `{rel}`"));
                    }
                }
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        let corpus_id = corpus_fingerprint(&cases);
        let mut handle = Self {
            corpus_id,
            cases,
            qrels,
            stats: CorpusStats {
                num_queries: 0,
                num_candidates: 0,
                avg_relevant: 0.0,
                avg_tokens: 0.0,
                max_tokens: 0,
            },
            warnings,
        };
        handle.stats = handle.compute_stats();
        Ok(handle)
    }

    pub fn case(&self, case_id: &str) -> Option<&CaseDocument> {
        self.cases
            .binary_search_by(|c| c.case_id.as_str().cmp(case_id))
            .ok()
            .map(|i| &self.cases[i])
    }

    /// Query ids from the qrels, sorted.
    pub fn query_ids(&self) -> Vec<String> {
        self.qrels
            .as_ref()
            .map(|q| q.query_ids().cloned().collect())
            .unwrap_or_default()
    }

    /// Every case that is not a query, sorted.
    pub fn candidate_ids(&self) -> Vec<String> {
        let queries: BTreeSet<String> = self.query_ids().into_iter().collect();
        self.cases
            .iter()
            .filter(|c| !queries.contains(&c.case_id))
            .map(|c| c.case_id.clone())
            .collect()
    }

    fn compute_stats(&self) -> CorpusStats {
        let candidates = self.candidate_ids();
        let tokens: Vec<usize> = candidates
            .iter()
            .filter_map(|id| self.case(id))
            .map(|c| c.token_count)
            .collect();
        let (num_queries, avg_relevant) = match &self.qrels {
            Some(q) if !q.is_empty() => {
                let total: usize = q.iter().map(|(_, r)| r.len()).sum();
                (q.len(), total as f64 / q.len() as f64)
            }
            _ => (0, 0.0),
        };
        CorpusStats {
            num_queries,
            num_candidates: candidates.len(),
            avg_relevant,
            avg_tokens: if tokens.is_empty() {
                0.0
            } else {
                tokens.iter().sum::<usize>() as f64 / tokens.len() as f64
            },
            max_tokens: tokens.iter().copied().max().unwrap_or(0),
        }
    }

    /// Writes `corpus.jsonl` and, when present, `qrels.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_cases(&dir.join(CORPUS_FILE), &self.cases)?;
        if let Some(q) = &self.qrels {
            util::write_bytes(&dir.join(QRELS_FILE), q.to_tsv().as_bytes())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cases = load_cases(&dir.join(CORPUS_FILE))?;
        let qrels_path = dir.join(QRELS_FILE);
        let qrels = if qrels_path.exists() {
            Some(Qrels::from_tsv_file(&qrels_path)?)
        } else {
            None
        };
        Self::new(cases, qrels)
    }
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const QRELS_FILE: &str = "qrels.tsv";

fn corpus_fingerprint(cases: &[CaseDocument]) -> String {
    let parts: Vec<(&str, &str)> = cases
        .iter()
        .map(|c| (c.case_id.as_str(), c.raw_text.as_str()))
        .collect();
    util::hash_json(&parts)[..16].to_string()
}

pub fn save_cases(path: &Path, cases: &[CaseDocument]) -> Result<()> {
    util::write_jsonl(path, cases)
}

pub fn load_cases(path: &Path) -> Result<Vec<CaseDocument>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    util::read_jsonl(path)
}

fn case_files(dir: &Path, extension: &str) -> Result<Vec<(String, PathBuf)>> {
    if !dir.is_dir() {
        return Err(Error::MissingPath(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some(extension) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            files.push((stem.to_string(), path.clone()));
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every `<case_id>.<ext>` file of the layout into a corpus handle.
pub fn ingest_corpus(root: &Path, layout: &CorpusLayout) -> Result<CorpusHandle> {
    if !root.exists() {
        return Err(Error::MissingPath(root.to_path_buf()));
    }
    let mut files = case_files(&root.join(&layout.case_dir), &layout.extension)?;
    if let Some(qdir) = &layout.query_dir {
        files.extend(case_files(&root.join(qdir), &layout.extension)?);
    }
    if files.is_empty() {
        return Err(Error::NoCaseFiles(root.to_path_buf()));
    }
    let mut seen = BTreeSet::new();
    let mut cases = Vec::with_capacity(files.len());
    for (case_id, path) in files {
        if !seen.insert(case_id.clone()) {
            return Err(Error::DuplicateCaseId(case_id));
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let text = String::from_utf8(bytes).map_err(|e| {
            Error::io(&path, std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })?;
        cases.push(CaseDocument::from_text(case_id, &text, layout)?);
    }
    let qrels = match &layout.qrels {
        Some(rel) => {
            let path = root.join(rel);
            if !path.exists() {
                return Err(Error::MissingPath(path));
            }
            Some(Qrels::from_tsv_file(&path)?)
        }
        None => None,
    };
    CorpusHandle::new(cases, qrels)
}
