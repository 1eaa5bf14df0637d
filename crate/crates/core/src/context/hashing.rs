//! Deterministic feature-hashing embedder.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::util::{splitmix64, stable_hash64};

use super::EmbeddingBackend;

pub const MIN_DIM: usize = 8;
pub const DEFAULT_DIM: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct HashedVector {
    pub values: Vec<f64>,
    /// False only for the zero vector produced by text without any terms.
    pub normalized: bool,
}

fn terms(text: &str) -> BTreeMap<String, usize> {
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .collect();
    let mut counts = BTreeMap::new();
    for w in &words {
        *counts.entry((*w).to_string()).or_insert(0) += 1;
    }
    for pair in words.windows(2) {
        *counts.entry(format!("{} {}", pair[0], pair[1])).or_insert(0) += 1;
    }
    counts
}

/// Hashes lowercased unigrams and bigrams into `dim` signed buckets with
/// `1 + ln(count)` weights and L2-normalizes the result.
pub fn local_embed(text: &str, dim: usize, seed: u64) -> Result<HashedVector> {
    if dim < MIN_DIM {
        return Err(Error::InvalidArgument(format!("embedding dimension must be at least {MIN_DIM}, got {dim}")));
    }
    let mut values = vec![0.0; dim];
    for (term, count) in terms(text) {
        let h = stable_hash64(seed, term.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if splitmix64(h) & 1 == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign * (1.0 + (count as f64).ln());
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(HashedVector { values, normalized: false });
    }
    for v in &mut values {
        *v /= norm;
    }
    Ok(HashedVector { values, normalized: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl LocalEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(Error::InvalidArgument(format!("embedding dimension must be at least {MIN_DIM}, got {dim}")));
        }
        Ok(Self { dim, seed })
    }
}

impl EmbeddingBackend for LocalEmbedder {
    fn tag(&self) -> String {
        format!("local-hash-d{}-s{}", self.dim, self.seed)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        texts.iter().map(|t| local_embed(t, self.dim, self.seed).map(|v| v.values)).collect()
    }
}
