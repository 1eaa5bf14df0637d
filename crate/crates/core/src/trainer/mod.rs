//! Contrastive adapter training over frozen base embeddings.

mod checkpoint;
mod loss;
mod optim;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use loss::info_nce_loss;
pub use optim::{Adam, AdamMoments};

use crate::context::{Adapter, EmbeddingStore, DEFAULT_OUTPUT_DIM};
use crate::error::{Error, Result};
use crate::metrics::Qrels;
use crate::util;
use crate::vector_index::SimilarityKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub query_id: String,
    pub positive_id: String,
    pub easy_negative_ids: Vec<String>,
    pub hard_negative_ids: Vec<String>,
}

impl TrainingExample {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::BatchConstruction(msg));
        let easy: BTreeSet<&String> = self.easy_negative_ids.iter().collect();
        let hard: BTreeSet<&String> = self.hard_negative_ids.iter().collect();
        if easy.contains(&self.positive_id) || hard.contains(&self.positive_id) {
            return fail(format!("positive `{}` is also a negative of `{}`", self.positive_id, self.query_id));
        }
        if self.positive_id == self.query_id || easy.contains(&self.query_id) || hard.contains(&self.query_id) {
            return fail(format!("query `{}` appears among its own candidates", self.query_id));
        }
        if let Some(id) = easy.intersection(&hard).next() {
            return fail(format!("`{id}` is both an easy and a hard negative of `{}`", self.query_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub temperature: f64,
    pub similarity_kind: SimilarityKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.05,
            similarity_kind: SimilarityKind::Cosine,
        }
    }
}

/// One example's indices into [`Batch::ids`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchItem {
    pub query_id: String,
    pub query: usize,
    pub positive: usize,
    pub easy: Vec<usize>,
    pub hard: Vec<usize>,
}

/// Distinct vectors referenced by a batch plus per-example index lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<String>,
    pub inputs: Vec<Vec<f64>>,
    pub items: Vec<BatchItem>,
}

struct Interner<'a> {
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
    store: &'a EmbeddingStore,
    inputs: Vec<Vec<f64>>,
}

impl Interner<'_> {
    fn get(&mut self, id: &str) -> Result<usize> {
        if let Some(&i) = self.index.get(id) {
            return Ok(i);
        }
        let emb = self.store.get(id).ok_or_else(|| Error::MissingEmbedding(id.to_string()))?;
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        self.inputs.push(emb.vector.clone());
        Ok(i)
    }
}

/// Expands easy negatives with every other example's ids (in-batch
/// negatives). Ids relevant to the query in `known_relevant` are never used
/// as its in-batch negatives.
pub fn assemble_batch(examples: &[TrainingExample], store: &EmbeddingStore, known_relevant: Option<&Qrels>) -> Result<Batch> {
    if examples.is_empty() {
        return Err(Error::BatchConstruction("empty batch".into()));
    }
    let mut interner = Interner {
        ids: Vec::new(),
        index: BTreeMap::new(),
        store,
        inputs: Vec::new(),
    };
    let empty = BTreeSet::new();
    let mut items = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        ex.validate()?;
        let relevant = known_relevant.and_then(|q| q.relevant(&ex.query_id)).unwrap_or(&empty);
        let hard: BTreeSet<&str> = ex.hard_negative_ids.iter().map(String::as_str).collect();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut easy_ids: Vec<&str> = Vec::new();
        for id in &ex.easy_negative_ids {
            if seen.insert(id) {
                easy_ids.push(id);
            }
        }
        for (j, other) in examples.iter().enumerate() {
            if j == i {
                continue;
            }
            let pool = std::iter::once(&other.positive_id)
                .chain(&other.easy_negative_ids)
                .chain(&other.hard_negative_ids);
            for id in pool {
                let id = id.as_str();
                if id == ex.positive_id || id == ex.query_id || hard.contains(id) || relevant.contains(id) {
                    continue;
                }
                if seen.insert(id) {
                    easy_ids.push(id);
                }
            }
        }
        let query = interner.get(&ex.query_id)?;
        let positive = interner.get(&ex.positive_id)?;
        let easy = easy_ids.iter().map(|id| interner.get(id)).collect::<Result<Vec<_>>>()?;
        let mut hard_idx = Vec::new();
        let mut seen_hard = BTreeSet::new();
        for id in &ex.hard_negative_ids {
            if seen_hard.insert(id) {
                hard_idx.push(interner.get(id)?);
            }
        }
        if easy.is_empty() && hard_idx.is_empty() {
            return Err(Error::BatchConstruction(format!("example for `{}` has no negatives", ex.query_id)));
        }
        if easy.contains(&positive) || hard_idx.contains(&positive) {
            return Err(Error::BatchConstruction(format!("positive of `{}` used as its negative", ex.query_id)));
        }
        items.push(BatchItem {
            query_id: ex.query_id.clone(),
            query,
            positive,
            easy,
            hard: hard_idx,
        });
    }
    Ok(Batch {
        ids: interner.ids,
        inputs: interner.inputs,
        items,
    })
}

/// Gradient with the adapter's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn forward(batch: &Batch, adapter: &Adapter) -> Result<Vec<Vec<f64>>> {
    batch.inputs.iter().map(|x| adapter.apply(x)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean loss over the batch with its analytic gradient.
pub fn loss_and_grad(batch: &Batch, adapter: &Adapter, cfg: &LossConfig) -> Result<(f64, AdapterGrad)> {
    let (loss, grad_y) = loss_and_output_grad(batch, adapter, cfg)?;
    let d_out = adapter.d_out;
    let mut gw = vec![0.0; adapter.weights.len()];
    let mut gb = vec![0.0; d_out];
    for (x, g) in batch.inputs.iter().zip(&grad_y) {
        if g.iter().all(|v| *v == 0.0) {
            continue;
        }
        for (b, gj) in gb.iter_mut().zip(g) {
            *b += gj;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &mut gw[i * d_out..(i + 1) * d_out];
            for (w, gj) in row.iter_mut().zip(g) {
                *w += xi * gj;
            }
        }
    }
    Ok((loss, AdapterGrad { weights: gw, bias: gb }))
}

/// Mean loss and its gradient with respect to each adapted vector.
fn loss_and_output_grad(batch: &Batch, adapter: &Adapter, cfg: &LossConfig) -> Result<(f64, Vec<Vec<f64>>)> {
    if !(cfg.temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {}", cfg.temperature)));
    }
    let ys = forward(batch, adapter)?;
    let cosine = cfg.similarity_kind == SimilarityKind::Cosine;
    let norms: Vec<f64> = ys.iter().map(|y| dot(y, y).sqrt()).collect();
    if cosine && norms.contains(&0.0) {
        return Err(Error::ZeroNorm);
    }
    let units: Vec<Vec<f64>> = if cosine {
        ys.iter().zip(&norms).map(|(y, n)| y.iter().map(|v| v / n).collect()).collect()
    } else {
        ys.clone()
    };
    let scale = 1.0 / batch.items.len() as f64;
    let tau = cfg.temperature;
    let mut grads = vec![vec![0.0; adapter.d_out]; ys.len()];
    let mut total = 0.0;
    for item in &batch.items {
        let docs: Vec<usize> = std::iter::once(item.positive)
            .chain(item.easy.iter().copied())
            .chain(item.hard.iter().copied())
            .collect();
        let q = item.query;
        let sims: Vec<f64> = docs.iter().map(|&d| dot(&units[q], &units[d])).collect();
        let z: Vec<f64> = sims.iter().map(|s| s / tau).collect();
        let (loss, probs) = loss::nce_from_logits(&z);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step: 0,
                query_id: item.query_id.clone(),
            });
        }
        total += loss;
        for (j, &d) in docs.iter().enumerate() {
            let coeff = scale * (probs[j] - if j == 0 { 1.0 } else { 0.0 }) / tau;
            if coeff == 0.0 {
                continue;
            }
            let s = sims[j];
            // ds/dy_q and ds/dy_d, through the normalization under cosine
            for k in 0..adapter.d_out {
                let (gq, gd) = if cosine {
                    (
                        (units[d][k] - s * units[q][k]) / norms[q],
                        (units[q][k] - s * units[d][k]) / norms[d],
                    )
                } else {
                    (ys[d][k], ys[q][k])
                };
                grads[q][k] += coeff * gq;
                grads[d][k] += coeff * gd;
            }
        }
    }
    Ok((total * scale, grads))
}

/// Mean batch loss without gradients.
pub fn batch_loss(batch: &Batch, adapter: &Adapter, cfg: &LossConfig) -> Result<f64> {
    loss_and_output_grad(batch, adapter, cfg).map(|(l, _)| l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub temperature: f64,
    pub similarity_kind: SimilarityKind,
    pub seed: u64,
    /// Zero disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub easy_negatives: usize,
    pub output_dim: usize,
    pub init_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 2,
            lr: 1e-3,
            weight_decay: 1e-5,
            temperature: 0.05,
            similarity_kind: SimilarityKind::Cosine,
            seed: 0,
            checkpoint_every: 0,
            easy_negatives: 1,
            output_dim: DEFAULT_OUTPUT_DIM,
            init_noise: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            temperature: self.temperature,
            similarity_kind: self.similarity_kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.temperature > 0.0) {
            return bad("train.temperature must be > 0");
        }
        if self.batch_size == 0 {
            return bad("train.batch_size must be >= 1");
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return bad("train.lr must be > 0 and train.weight_decay >= 0");
        }
        if self.output_dim == 0 {
            return bad("train.output_dim must be >= 1");
        }
        if self.easy_negatives == 0 {
            return bad("train.easy_negatives must be >= 1");
        }
        Ok(())
    }

    /// Fingerprint of everything except the seed.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        util::hash_json(&c)[..16].to_string()
    }
}

/// Queries with their relevant candidates, the candidate pool and mined
/// hard negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub qrels: Qrels,
    pub candidates: Vec<String>,
    pub hard_negatives: BTreeMap<String, Vec<String>>,
}

impl TrainingData {
    fn queries(&self) -> Vec<(&String, Vec<&String>)> {
        self.qrels
            .iter()
            .filter(|(_, rel)| !rel.is_empty())
            .map(|(q, rel)| (q, rel.iter().collect()))
            .collect()
    }

    fn hard_for(&self, query: &str, relevant: &BTreeSet<String>) -> Vec<String> {
        self.hard_negatives
            .get(query)
            .map(|v| v.iter().filter(|id| !relevant.contains(*id) && id.as_str() != query).cloned().collect())
            .unwrap_or_default()
    }

    fn easy_pool(&self, query: &str, relevant: &BTreeSet<String>, hard: &[String]) -> Vec<&String> {
        self.candidates
            .iter()
            .filter(|c| c.as_str() != query && !relevant.contains(*c) && !hard.contains(c))
            .collect()
    }

    fn sample_example(&self, rng: &mut ChaCha8Rng, query: &str, positives: &[&String], easy_count: usize) -> Result<TrainingExample> {
        let empty = BTreeSet::new();
        let relevant = self.qrels.relevant(query).unwrap_or(&empty);
        let positive = (*positives.choose(rng).expect("queries have positives")).clone();
        let hard = self.hard_for(query, relevant);
        let pool = self.easy_pool(query, relevant, &hard);
        let easy = pool.choose_multiple(rng, easy_count).map(|s| (*s).clone()).collect();
        Ok(TrainingExample {
            query_id: query.to_string(),
            positive_id: positive,
            easy_negative_ids: easy,
            hard_negative_ids: hard,
        })
    }

    /// A fixed, seed-determined example set covering every (query, positive)
    /// pair, scored one example at a time.
    pub fn evaluation_examples(&self, easy_count: usize, seed: u64) -> Result<Vec<TrainingExample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7a1);
        let mut out = Vec::new();
        for (q, positives) in self.queries() {
            let relevant = self.qrels.relevant(q).expect("listed query");
            let hard = self.hard_for(q, relevant);
            for p in positives {
                let pool = self.easy_pool(q, relevant, &hard);
                let easy = pool.choose_multiple(&mut rng, easy_count).map(|s| (*s).clone()).collect();
                out.push(TrainingExample {
                    query_id: q.clone(),
                    positive_id: p.clone(),
                    easy_negative_ids: easy,
                    hard_negative_ids: hard.clone(),
                });
            }
        }
        Ok(out)
    }
}

/// Mean per-example loss over `examples` without in-batch expansion.
pub fn evaluation_loss(examples: &[TrainingExample], store: &EmbeddingStore, adapter: &Adapter, cfg: &LossConfig) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::DegenerateLoss("no evaluation examples".into()));
    }
    let mut total = 0.0;
    for ex in examples {
        let batch = assemble_batch(std::slice::from_ref(ex), store, None)?;
        total += batch_loss(&batch, adapter, cfg)?;
    }
    Ok(total / examples.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub adapter: Adapter,
    pub step: usize,
    pub rng_seed: u64,
    pub optimizer_moments: AdamMoments,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory for periodic checkpoints and divergence dumps.
    pub checkpoint_dir: Option<PathBuf>,
}

pub fn checkpoint_path(dir: &Path, seed: u64, step: usize) -> PathBuf {
    dir.join(format!("adapter.seed{seed}.step{step}.ckpt"))
}

fn adapter_version(cfg: &TrainConfig, step: usize) -> String {
    format!("adapter-{}-s{}-t{step}", cfg.fingerprint(), cfg.seed)
}

/// Trains the adapter on base vectors from `store`.
pub fn train(store: &EmbeddingStore, data: &TrainingData, cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainState> {
    cfg.validate()?;
    let d_in = store.dim().ok_or_else(|| Error::MissingEmbedding("<empty store>".into()))?;
    for id in data.qrels.iter().flat_map(|(q, r)| std::iter::once(q).chain(r)).chain(&data.candidates) {
        if store.get(id).is_none() {
            return Err(Error::MissingEmbedding(id.clone()));
        }
    }
    let queries = data.queries();
    if queries.is_empty() && cfg.steps > 0 {
        return Err(Error::BatchConstruction("no query has a relevant candidate".into()));
    }
    let mut adapter = Adapter::init(d_in, cfg.output_dim, cfg.init_noise, cfg.seed);
    let n_w = adapter.weights.len();
    let mut state = TrainState {
        optimizer_moments: Adam::moments(adapter.num_params()),
        adapter: adapter.clone(),
        step: 0,
        rng_seed: cfg.seed,
        loss_history: Vec::with_capacity(cfg.steps),
    };
    let opt = Adam::new(cfg.lr, cfg.weight_decay);
    let loss_cfg = cfg.loss_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for step in 1..=cfg.steps {
        let chosen: Vec<&(&String, Vec<&String>)> = if cfg.batch_size <= queries.len() {
            queries.choose_multiple(&mut rng, cfg.batch_size).collect()
        } else {
            (0..cfg.batch_size).map(|_| queries.choose(&mut rng).expect("non-empty")).collect()
        };
        let examples = chosen
            .iter()
            .map(|(q, pos)| data.sample_example(&mut rng, q, pos, cfg.easy_negatives))
            .collect::<Result<Vec<_>>>()?;
        let batch = assemble_batch(&examples, store, Some(&data.qrels))?;
        let (loss, grad) = match loss_and_grad(&batch, &adapter, &loss_cfg) {
            Ok(v) => v,
            Err(Error::Divergence { query_id, .. }) => {
                dump_state(opts, cfg, &adapter, step);
                return Err(Error::Divergence { step, query_id });
            }
            Err(e) => return Err(e),
        };
        let (w, b) = (&mut adapter.weights, &mut adapter.bias);
        opt.step(&mut [w.as_mut_slice(), b.as_mut_slice()], &[&grad.weights, &grad.bias], &mut state.optimizer_moments);
        debug_assert_eq!(state.optimizer_moments.m.len(), n_w + adapter.d_out);
        if adapter.weights.iter().chain(&adapter.bias).any(|v| !v.is_finite()) {
            dump_state(opts, cfg, &adapter, step);
            return Err(Error::Divergence {
                step,
                query_id: batch.items[0].query_id.clone(),
            });
        }
        state.loss_history.push(loss);
        state.step = step;
        if step % 50 == 0 {
            log::debug!("step {step}: loss {loss:.6}");
        }
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            if let Some(dir) = &opts.checkpoint_dir {
                adapter.version = adapter_version(cfg, step);
                checkpoint_for(cfg, &adapter, step).save(&checkpoint_path(dir, cfg.seed, step))?;
            }
        }
    }
    if cfg.steps > 0 {
        adapter.version = adapter_version(cfg, cfg.steps);
    }
    state.adapter = adapter;
    Ok(state)
}

pub fn checkpoint_for(cfg: &TrainConfig, adapter: &Adapter, step: usize) -> Checkpoint {
    Checkpoint {
        adapter: adapter.clone(),
        step: step as u64,
        seed: cfg.seed,
        config_fingerprint: cfg.fingerprint(),
    }
}

fn dump_state(opts: &TrainOptions, cfg: &TrainConfig, adapter: &Adapter, step: usize) {
    if let Some(dir) = &opts.checkpoint_dir {
        let path = dir.join(format!("divergence.seed{}.step{step}.ckpt", cfg.seed));
        match checkpoint_for(cfg, adapter, step).save(&path) {
            Ok(()) => log::error!("training diverged at step {step}; state written to {}", path.display()),
            Err(e) => log::error!("training diverged at step {step}; state dump failed: {e}"),
        }
    }
}

#[cfg(test)]
mod tests;
