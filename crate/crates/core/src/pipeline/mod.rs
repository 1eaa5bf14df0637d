//! Stage orchestration over a workspace of artifact files.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use config::{
    Bm25Section, CorpusSection, EmbeddingBackendKind, EncodeSection, EvalSection, ExtractSection, GatewayMode, GatewaySection,
    MiningSection, PipelineConfig, TrainSection, TripletSource, TripletsSection,
};

use crate::bm25::{self, build_bm25, bm25_top_k, mine_hard_negatives, Bm25Index};
use crate::context::{
    encode_cases, generate_reasoning, load_contexts, render_context, save_contexts, ContextualisedCase, EmbeddingBackend,
    EmbeddingStore, LocalEmbedder, Reasoning,
};
use crate::corpus::{ingest_corpus, CorpusHandle, CORPUS_FILE, QRELS_FILE};
use crate::elements::{extract_elements, load_elements, save_elements, LegalElements};
use crate::error::{Error, Result};
use crate::gateway::{DecodeParams, Gateway, OpenAiUpstream, RetryPolicy};
use crate::metrics::{compare_reports, evaluate_run, format_table, AggregateMetrics, Comparison, MetricsReport};
use crate::trainer::{self, Checkpoint, TrainOptions, TrainingData};
use crate::triplets::{extract_triplets, import_triplets, CaseTriplets, SourceField, TripletOrigin, TripletSet};
use crate::util;
use crate::vector_index::{produce_run, RankedList, RetrievalRun, RunSettings, ScoredCase, SimilarityKind};

pub const ELEMENTS_FILE: &str = "elements.jsonl";
pub const TRIPLETS_FILE: &str = "triplets.jsonl";
pub const REASONING_FILE: &str = "reasoning.jsonl";
pub const CONTEXTS_FILE: &str = "contexts.jsonl";
pub const BASE_EMBEDDINGS_FILE: &str = "embeddings.base.jsonl";
pub const BM25_FILE: &str = "bm25.json";
pub const BM25_RUN_FILE: &str = "run.bm25.tsv";
pub const BASE_RUN_FILE: &str = "run.base.tsv";
pub const NEGATIVES_FILE: &str = "hard_negatives.tsv";
pub const STATS_FILE: &str = "corpus_stats.json";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const BASE_URL_ENV: &str = "REAKASE_BASE_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Extract,
    Triplets,
    Reason,
    Encode,
    Index,
    Mine,
    Train,
    Retrieve,
    Eval,
    Compare,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 12] = [
        Stage::Ingest,
        Stage::Extract,
        Stage::Triplets,
        Stage::Reason,
        Stage::Encode,
        Stage::Index,
        Stage::Mine,
        Stage::Train,
        Stage::Retrieve,
        Stage::Eval,
        Stage::Compare,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Triplets => "triplets",
            Stage::Reason => "reason",
            Stage::Encode => "encode",
            Stage::Index => "index",
            Stage::Mine => "mine",
            Stage::Train => "train",
            Stage::Retrieve => "retrieve",
            Stage::Eval => "eval",
            Stage::Compare => "compare",
            Stage::Report => "report",
        }
    }

    fn per_seed(self) -> bool {
        matches!(self, Stage::Train | Stage::Retrieve | Stage::Eval | Stage::Compare)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Process exit status for an error: 2 config, 3 missing dependency, 4 runtime.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::UnknownTemplate(_) => 2,
        Error::MissingArtifact { .. } | Error::MissingPath(_) => 3,
        _ => 4,
    }
}

/// Artifact paths inside a workspace directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn adapter(&self, seed: u64) -> PathBuf {
        self.path(&format!("adapter.seed{seed}.ckpt"))
    }

    pub fn train_log(&self, seed: u64) -> PathBuf {
        self.path(&format!("train_log.seed{seed}.json"))
    }

    pub fn embeddings(&self, seed: u64) -> PathBuf {
        self.path(&format!("embeddings.seed{seed}.jsonl"))
    }

    pub fn run(&self, seed: u64) -> PathBuf {
        self.path(&format!("run.seed{seed}.tsv"))
    }

    pub fn metrics(&self, name: &str) -> PathBuf {
        self.path(&format!("metrics.{name}.json"))
    }

    pub fn metrics_table(&self, name: &str) -> PathBuf {
        self.path(&format!("metrics.{name}.txt"))
    }

    pub fn compare(&self, seed: u64) -> PathBuf {
        self.path(&format!("compare.seed{seed}.json"))
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.path("checkpoints")
    }

    /// Errors unless `path` exists, naming the stage that produces it.
    fn require(&self, path: PathBuf, stage: Stage) -> Result<PathBuf> {
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact {
                stage: stage.as_str().to_string(),
                path,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub duration_ms: u64,
}

pub fn read_manifest(ws: &Workspace) -> Result<Vec<ManifestEntry>> {
    util::read_jsonl(&ws.path(MANIFEST_FILE))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub duration: Duration,
}

struct StageIo {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl StageIo {
    fn new() -> Self {
        Self {
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, p: PathBuf) -> PathBuf {
        self.inputs.push(p.clone());
        p
    }

    fn output(&mut self, p: PathBuf) -> PathBuf {
        self.outputs.push(p.clone());
        p
    }
}

fn hash_files(ws: &Workspace, paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for p in paths {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let name = p.strip_prefix(&ws.root).unwrap_or(p).display().to_string();
        out.insert(name, util::sha256_hex(&bytes));
    }
    Ok(out)
}

/// Runs one stage. Per-seed stages run once for each seed.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, seeds: &[u64]) -> Result<Vec<StageOutcome>> {
    cfg.validate()?;
    cfg.check_paths().map_err(|e| Error::Config(e.to_string()))?;
    let ws = Workspace::new(&cfg.workspace);
    std::fs::create_dir_all(&ws.root).map_err(|e| Error::io(&ws.root, e))?;
    let seeds: Vec<u64> = if seeds.is_empty() { cfg.eval.seeds.clone() } else { seeds.to_vec() };
    let mut outcomes = Vec::new();
    if stage.per_seed() {
        for &seed in &seeds {
            outcomes.push(run_one(stage, cfg, &ws, Some(seed), &seeds)?);
        }
    } else {
        outcomes.push(run_one(stage, cfg, &ws, None, &seeds)?);
    }
    Ok(outcomes)
}

/// Every stage in order.
pub fn run_all(cfg: &PipelineConfig, seeds: &[u64]) -> Result<Vec<StageOutcome>> {
    let mut out = Vec::new();
    for stage in Stage::ALL {
        out.extend(run_stage(stage, cfg, seeds)?);
    }
    Ok(out)
}

fn run_one(stage: Stage, cfg: &PipelineConfig, ws: &Workspace, seed: Option<u64>, seeds: &[u64]) -> Result<StageOutcome> {
    let start = Instant::now();
    let mut io = StageIo::new();
    let s = seed.unwrap_or(0);
    match stage {
        Stage::Ingest => stage_ingest(cfg, ws, &mut io)?,
        Stage::Extract => stage_extract(cfg, ws, &mut io)?,
        Stage::Triplets => stage_triplets(cfg, ws, &mut io)?,
        Stage::Reason => stage_reason(cfg, ws, &mut io)?,
        Stage::Encode => stage_encode(cfg, ws, &mut io)?,
        Stage::Index => stage_index(cfg, ws, &mut io)?,
        Stage::Mine => stage_mine(cfg, ws, &mut io)?,
        Stage::Train => stage_train(cfg, ws, &mut io, s)?,
        Stage::Retrieve => stage_retrieve(cfg, ws, &mut io, s)?,
        Stage::Eval => stage_eval(cfg, ws, &mut io, s)?,
        Stage::Compare => stage_compare(cfg, ws, &mut io, s)?,
        Stage::Report => stage_report(ws, &mut io, seeds)?,
    }
    let duration = start.elapsed();
    let entry = ManifestEntry {
        stage,
        seed,
        inputs: hash_files(ws, &io.inputs)?,
        outputs: hash_files(ws, &io.outputs)?,
        duration_ms: duration.as_millis() as u64,
    };
    util::append_line(&ws.path(MANIFEST_FILE), &serde_json::to_string(&entry)?)?;
    log::info!("stage {stage} done in {:.2}s", duration.as_secs_f64());
    Ok(StageOutcome {
        stage,
        seed,
        outputs: io.outputs,
        duration,
    })
}

pub fn build_gateway(cfg: &PipelineConfig) -> Result<Gateway> {
    let g = &cfg.gateway;
    let live = || -> Result<Gateway> {
        let base_url = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| g.base_url.clone());
        let api_key = std::env::var(&g.api_key_env).ok();
        let upstream = OpenAiUpstream::new(base_url, api_key, Duration::from_secs(g.timeout_secs))?;
        Ok(Gateway::new(Box::new(upstream), g.chat_model.clone(), g.embedding_model.clone()))
    };
    let gateway = match g.mode {
        GatewayMode::Mock => {
            let gw = Gateway::mock(g.mock_seed, cfg.encode.dim);
            match &g.transcript {
                Some(t) => gw.recording(t)?,
                None => gw,
            }
        }
        GatewayMode::Live => live()?,
        GatewayMode::Record => live()?.recording(g.transcript.as_ref().expect("validated"))?,
        GatewayMode::Replay => Gateway::replay(g.transcript.as_ref().expect("validated"), g.chat_model.clone(), g.embedding_model.clone())?,
    };
    Ok(gateway
        .with_retry(RetryPolicy {
            max_retries: g.max_retries,
            ..RetryPolicy::default()
        })
        .with_max_in_flight(g.max_in_flight)
        .with_default_params(DecodeParams {
            temperature: g.temperature,
            max_output_tokens: g.max_output_tokens,
        }))
}

/// Order-preserving map over `items` on up to `workers` threads.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    let parts: Vec<Result<Vec<R>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(f).collect::<Result<Vec<R>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn load_corpus(ws: &Workspace, io: &mut StageIo) -> Result<CorpusHandle> {
    io.input(ws.require(ws.path(CORPUS_FILE), Stage::Ingest)?);
    if ws.path(QRELS_FILE).exists() {
        io.input(ws.path(QRELS_FILE));
    }
    CorpusHandle::load(&ws.root)
}

fn require_qrels(corpus: &CorpusHandle) -> Result<&crate::metrics::Qrels> {
    corpus
        .qrels
        .as_ref()
        .ok_or_else(|| Error::Config("this stage needs relevance judgments; set corpus.qrels".into()))
}

fn stage_ingest(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo) -> Result<()> {
    let layout = cfg.layout();
    let corpus = ingest_corpus(&cfg.corpus.root, &layout)?;
    for w in &corpus.warnings {
        log::warn!("{w}");
    }
    corpus.save(&ws.root)?;
    io.output(ws.path(CORPUS_FILE));
    if corpus.qrels.is_some() {
        io.output(ws.path(QRELS_FILE));
    }
    let stats = io.output(ws.path(STATS_FILE));
    util::write_bytes(&stats, serde_json::to_string_pretty(&corpus.stats)?.as_bytes())?;
    Ok(())
}

fn stage_extract(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo) -> Result<()> {
    let corpus = load_corpus(ws, io)?;
    let gateway = build_gateway(cfg)?;
    let ph = cfg.placeholders()?;
    let rules = cfg.judgement_rules();
    let elements = parallel_map(&corpus.cases, cfg.gateway.max_in_flight, |c| {
        extract_elements(&c.case_id, &c.sections, &ph, &rules, &gateway)
    })?;
    save_elements(&io.output(ws.path(ELEMENTS_FILE)), &elements)
}

fn import_or_empty(dir: &Path, case_id: &str, field: SourceField) -> Result<TripletSet> {
    let suffix = match field {
        SourceField::Facts => "facts",
        SourceField::Issues => "issues",
    };
    let path = dir.join(format!("{case_id}.{suffix}.jsonl"));
    if path.exists() {
        import_triplets(&path, field)
    } else {
        log::warn!("no imported {suffix} triplets for `{case_id}`");
        Ok(TripletSet::empty(TripletOrigin::Imported, field))
    }
}

fn stage_triplets(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo) -> Result<()> {
    let elements = load_elements(&io.input(ws.require(ws.path(ELEMENTS_FILE), Stage::Extract)?))?;
    let sets = elements
        .iter()
        .map(|e| {
            let (facts, issues) = match cfg.triplets.source {
                TripletSource::Builtin => (
                    extract_triplets(&e.facts, SourceField::Facts),
                    extract_triplets(&e.issues_text(), SourceField::Issues),
                ),
                TripletSource::Import => {
                    let dir = cfg.triplets.import_dir.as_ref().expect("validated");
                    (import_or_empty(dir, &e.case_id, SourceField::Facts)?, import_or_empty(dir, &e.case_id, SourceField::Issues)?)
                }
            };
            Ok(CaseTriplets {
                case_id: e.case_id.clone(),
                facts,
                issues,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    util::write_jsonl(&io.output(ws.path(TRIPLETS_FILE)), &sets)
}

fn load_triplets(ws: &Workspace, io: &mut StageIo) -> Result<BTreeMap<String, CaseTriplets>> {
    let sets: Vec<CaseTriplets> = util::read_jsonl(&io.input(ws.require(ws.path(TRIPLETS_FILE), Stage::Triplets)?))?;
    Ok(sets.into_iter().map(|t| (t.case_id.clone(), t)).collect())
}

fn triplets_for<'a>(map: &'a BTreeMap<String, CaseTriplets>, id: &str) -> Result<&'a CaseTriplets> {
    map.get(id).ok_or_else(|| Error::MissingArtifact {
        stage: Stage::Triplets.as_str().into(),
        path: PathBuf::from(format!("{TRIPLETS_FILE} (case `{id}`)")),
    })
}

fn stage_reason(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo) -> Result<()> {
    let elements = load_elements(&io.input(ws.require(ws.path(ELEMENTS_FILE), Stage::Extract)?))?;
    let triplets = load_triplets(ws, io)?;
    let gateway = build_gateway(cfg)?;
    let reasoning = parallel_map(&elements, cfg.gateway.max_in_flight, |e| {
        let t = triplets_for(&triplets, &e.case_id)?;
        let r = generate_reasoning(e, &t.facts, &t.issues, &gateway)?;
        if let Some(note) = &r.note {
            log::warn!("case `{}`: {note}", e.case_id);
        }
        Ok(r)
    })?;
    util::write_jsonl(&io.output(ws.path(REASONING_FILE)), &reasoning)
}

/// Elements with their generated reasoning attached.
pub fn load_reasoned_elements(ws: &Workspace) -> Result<Vec<LegalElements>> {
    let mut io = StageIo::new();
    reasoned_elements(ws, &mut io)
}

fn reasoned_elements(ws: &Workspace, io: &mut StageIo) -> Result<Vec<LegalElements>> {
    let mut elements = load_elements(&io.input(ws.require(ws.path(ELEMENTS_FILE), Stage::Extract)?))?;
    let reasoning: Vec<Reasoning> = util::read_jsonl(&io.input(ws.require(ws.path(REASONING_FILE), Stage::Reason)?))?;
    let by_id: BTreeMap<&str, &Reasoning> = reasoning.iter().map(|r| (r.case_id.as_str(), r)).collect();
    for e in &mut elements {
        let r = by_id.get(e.case_id.as_str()).ok_or_else(|| Error::MissingArtifact {
            stage: Stage::Reason.as_str().into(),
            path: PathBuf::from(format!("{REASONING_FILE} (case `{}`)", e.case_id)),
        })?;
        e.reasoning = Some(r.text.clone());
        e.reasoning_note = r.note.clone();
    }
    Ok(elements)
}

fn stage_encode(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo) -> Result<()> {
    let elements = reasoned_elements(ws, io)?;
    let triplets = load_triplets(ws, io)?;
    let contexts = elements
        .iter()
        .map(|e| {
            let t = triplets_for(&triplets, &e.case_id)?;
            render_context(e, &t.facts, &t.issues, cfg.encode.template, cfg.encode.budget)
        })
        .collect::<Result<Vec<ContextualisedCase>>>()?;
    let truncated = contexts.iter().filter(|c| c.truncated).count();
    if truncated > 0 {
        log::info!("{truncated} contexts truncated to {} tokens", cfg.encode.budget);
    }
    save_contexts(&io.output(ws.path(CONTEXTS_FILE)), &contexts)?;
    let backend: Box<dyn EmbeddingBackend> = match cfg.encode.backend {
        EmbeddingBackendKind::Local => Box::new(LocalEmbedder::new(cfg.encode.dim, cfg.encode.embed_seed)?),
        EmbeddingBackendKind::Gateway => Box::new(build_gateway(cfg)?),
    };
    // raw backend vectors; the adapter and normalization apply at retrieval
    let embeddings = encode_cases(&contexts, backend.as_ref(), None, SimilarityKind::Dot)?;
    let mut store = EmbeddingStore::new(backend.tag(), None, cfg.encode.template);
    for e in embeddings {
        store.insert(e)?;
    }
    store.save(&io.output(ws.path(BASE_EMBEDDINGS_FILE)))
}

fn bm25_run(index: &Bm25Index, corpus: &CorpusHandle, k: usize) -> Result<RetrievalRun> {
    let mut ranked = BTreeMap::new();
    for qid in corpus.query_ids() {
        let query = corpus.case(&qid).ok_or_else(|| Error::UnknownCase(qid.clone()))?;
        let hits = bm25_top_k(index, &query.raw_text, k, &BTreeSet::from([qid.clone()]));
        let entries = hits.into_iter().map(|(case_id, score)| ScoredCase { case_id, score }).collect();
        ranked.insert(qid.clone(), RankedList { query_id: qid, entries });
    }
    Ok(RetrievalRun {
        ranked,
        config_fingerprint: util::hash_json(&(index.params, k))[..16].to_string(),
    })
}

fn stage_index(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo) -> Result<()> {
    let corpus = load_corpus(ws, io)?;
    let index = build_bm25(&corpus, cfg.analyzer(), cfg.bm25_params())?;
    index.save(&io.output(ws.path(BM25_FILE)))?;
    if corpus.qrels.is_some() {
        bm25_run(&index, &corpus, cfg.eval.k)?.write(&io.output(ws.path(BM25_RUN_FILE)))?;
    }
    Ok(())
}

fn stage_mine(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo) -> Result<()> {
    let corpus = load_corpus(ws, io)?;
    let qrels = require_qrels(&corpus)?;
    let index = Bm25Index::load(&io.input(ws.require(ws.path(BM25_FILE), Stage::Index)?))?;
    let mut negatives = BTreeMap::new();
    for (qid, relevant) in qrels.iter() {
        let query = corpus.case(qid).ok_or_else(|| Error::UnknownCase(qid.clone()))?;
        let mined = mine_hard_negatives(&index, query, relevant, cfg.mining.count, cfg.mining.pool_depth)?;
        if mined.short {
            log::warn!("query `{qid}`: only {} of {} hard negatives available", mined.ids.len(), cfg.mining.count);
        }
        negatives.insert(qid.clone(), mined.ids);
    }
    bm25::write_negatives(&io.output(ws.path(NEGATIVES_FILE)), &negatives)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub steps: usize,
    pub config_fingerprint: String,
    pub adapter_version: String,
    /// Mean loss over a fixed example set before and after training.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub loss_history: Vec<f64>,
}

fn training_inputs(ws: &Workspace, io: &mut StageIo) -> Result<(EmbeddingStore, TrainingData)> {
    let corpus = load_corpus(ws, io)?;
    let qrels = require_qrels(&corpus)?.clone();
    let store = EmbeddingStore::load(&io.input(ws.require(ws.path(BASE_EMBEDDINGS_FILE), Stage::Encode)?))?;
    let hard_negatives = bm25::read_negatives(&io.input(ws.require(ws.path(NEGATIVES_FILE), Stage::Mine)?))?;
    let data = TrainingData {
        qrels,
        candidates: corpus.candidate_ids(),
        hard_negatives,
    };
    Ok((store, data))
}

fn stage_train(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo, seed: u64) -> Result<()> {
    let (store, data) = training_inputs(ws, io)?;
    let tcfg = cfg.train_config(seed);
    let opts = TrainOptions {
        checkpoint_dir: (tcfg.checkpoint_every > 0).then(|| ws.checkpoints()),
    };
    let state = trainer::train(&store, &data, &tcfg, &opts)?;
    let examples = data.evaluation_examples(tcfg.easy_negatives, seed)?;
    let init = crate::context::Adapter::init(store.dim().unwrap_or(0), tcfg.output_dim, tcfg.init_noise, seed);
    let loss_cfg = tcfg.loss_config();
    let log = TrainLog {
        seed,
        steps: state.step,
        config_fingerprint: tcfg.fingerprint(),
        adapter_version: state.adapter.version.clone(),
        initial_loss: trainer::evaluation_loss(&examples, &store, &init, &loss_cfg)?,
        final_loss: trainer::evaluation_loss(&examples, &store, &state.adapter, &loss_cfg)?,
        loss_history: state.loss_history.clone(),
    };
    log::info!("seed {seed}: loss {:.4} -> {:.4}", log.initial_loss, log.final_loss);
    trainer::checkpoint_for(&tcfg, &state.adapter, state.step).save(&io.output(ws.adapter(seed)))?;
    util::write_bytes(&io.output(ws.train_log(seed)), serde_json::to_string_pretty(&log)?.as_bytes())
}

fn dense_run(store: &EmbeddingStore, corpus: &CorpusHandle, cfg: &PipelineConfig) -> Result<RetrievalRun> {
    let settings = RunSettings {
        backend_tag: store.backend_tag.clone(),
        adapter_version: store.adapter_version.clone(),
        template_id: store.template_id,
        similarity: cfg.encode.similarity,
        k: cfg.eval.k,
    };
    produce_run(&corpus.query_ids(), &corpus.candidate_ids(), store, &settings)
}

fn stage_retrieve(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo, seed: u64) -> Result<()> {
    let corpus = load_corpus(ws, io)?;
    let base = EmbeddingStore::load(&io.input(ws.require(ws.path(BASE_EMBEDDINGS_FILE), Stage::Encode)?))?;
    let ckpt = Checkpoint::load(&io.input(ws.require(ws.adapter(seed), Stage::Train)?))?;
    let kind = cfg.encode.similarity;
    let unadapted = base.projected(None, kind)?;
    dense_run(&unadapted, &corpus, cfg)?.write(&io.output(ws.path(BASE_RUN_FILE)))?;
    let adapted = base.projected(Some(&ckpt.adapter), kind)?;
    adapted.save(&io.output(ws.embeddings(seed)))?;
    dense_run(&adapted, &corpus, cfg)?.write(&io.output(ws.run(seed)))
}

fn write_report(ws: &Workspace, io: &mut StageIo, name: &str, label: &str, report: &MetricsReport) -> Result<()> {
    util::write_bytes(&io.output(ws.metrics(name)), report.to_json()?.as_bytes())?;
    util::write_bytes(&io.output(ws.metrics_table(name)), report.to_table(label).as_bytes())
}

fn stage_eval(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo, seed: u64) -> Result<()> {
    let corpus = load_corpus(ws, io)?;
    let qrels = require_qrels(&corpus)?;
    let run_path = io.input(ws.require(ws.run(seed), Stage::Retrieve)?);
    let (k, norm) = (cfg.eval.k, cfg.eval.ap_normalizer);
    let report = evaluate_run(&RetrievalRun::read(&run_path)?, qrels, k, norm)?;
    write_report(ws, io, &format!("seed{seed}"), &format!("Adapter (seed {seed})"), &report)?;
    for (file, name, label) in [(BASE_RUN_FILE, "base", "Base embeddings"), (BM25_RUN_FILE, "bm25", "BM25")] {
        let p = ws.path(file);
        if p.exists() {
            let report = evaluate_run(&RetrievalRun::read(&io.input(p))?, qrels, k, norm)?;
            write_report(ws, io, name, label, &report)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareFile {
    pub seed: u64,
    pub against: BTreeMap<String, Comparison>,
}

fn stage_compare(cfg: &PipelineConfig, ws: &Workspace, io: &mut StageIo, seed: u64) -> Result<()> {
    let ours = MetricsReport::read(&io.input(ws.require(ws.metrics(&format!("seed{seed}")), Stage::Eval)?))?;
    let mut against = BTreeMap::new();
    for name in ["bm25", "base"] {
        let p = ws.metrics(name);
        if p.exists() {
            let other = MetricsReport::read(&io.input(p))?;
            against.insert(name.to_string(), compare_reports(&ours, &other, cfg.eval.resamples, seed));
        }
    }
    if against.is_empty() {
        return Err(Error::MissingArtifact {
            stage: Stage::Eval.as_str().into(),
            path: ws.metrics("bm25"),
        });
    }
    let out = CompareFile { seed, against };
    util::write_bytes(&io.output(ws.compare(seed)), serde_json::to_string_pretty(&out)?.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub k: usize,
    pub seeds: Vec<u64>,
    pub mean: AggregateMetrics,
    pub per_seed: BTreeMap<String, AggregateMetrics>,
    pub baselines: BTreeMap<String, AggregateMetrics>,
}

fn stage_report(ws: &Workspace, io: &mut StageIo, seeds: &[u64]) -> Result<()> {
    let mut reports = Vec::new();
    let mut per_seed = BTreeMap::new();
    for &s in seeds {
        let r = MetricsReport::read(&io.input(ws.require(ws.metrics(&format!("seed{s}")), Stage::Eval)?))?;
        per_seed.insert(format!("seed{s}"), r.aggregate.clone());
        reports.push(r);
    }
    let k = reports[0].k;
    let mean = crate::metrics::average_aggregates(&reports).expect("at least one seed");
    let mut baselines = BTreeMap::new();
    for name in ["bm25", "base"] {
        let p = ws.metrics(name);
        if p.exists() {
            baselines.insert(name.to_string(), MetricsReport::read(&io.input(p))?.aggregate);
        }
    }
    let label = format!("Adapter (mean of {})", seeds.len());
    let mut rows: Vec<(&str, &AggregateMetrics)> = Vec::new();
    if let Some(b) = baselines.get("bm25") {
        rows.push(("BM25", b));
    }
    if let Some(b) = baselines.get("base") {
        rows.push(("Base embeddings", b));
    }
    rows.push((&label, &mean));
    let table = format_table(&rows, k);
    let report = SeedReport {
        k,
        seeds: seeds.to_vec(),
        mean: mean.clone(),
        per_seed,
        baselines,
    };
    util::write_bytes(&io.output(ws.path(REPORT_JSON)), serde_json::to_string_pretty(&report)?.as_bytes())?;
    util::write_bytes(&io.output(ws.path(REPORT_TXT)), table.as_bytes())
}

/// Contexts rendered by the encode stage.
pub fn load_workspace_contexts(ws: &Workspace) -> Result<Vec<ContextualisedCase>> {
    load_contexts(&ws.require(ws.path(CONTEXTS_FILE), Stage::Encode)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("evaluate".parse::<Stage>().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::MissingArtifact { stage: "retrieve".into(), path: "run.tsv".into() }), 3);
        assert_eq!(exit_code(&Error::ZeroNorm), 4);
    }

    #[test]
    fn eval_without_run_names_retrieve() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("c1.txt"), "BACKGROUND\nThe claimant filed an appeal.\n").unwrap();
        std::fs::write(dir.path().join("c2.txt"), "BACKGROUND\nThe officer refused a visa.\n").unwrap();
        std::fs::write(dir.path().join("qrels.tsv"), "c1\tc2\n").unwrap();
        let cfg = PipelineConfig::from_toml_str("[corpus]\nqrels = \"qrels.tsv\"\n", dir.path()).unwrap();
        run_stage(Stage::Ingest, &cfg, &[]).unwrap();
        let err = run_stage(Stage::Eval, &cfg, &[]).unwrap_err();
        assert!(err.to_string().contains("run stage 'retrieve' first"), "{err}");
        assert_eq!(exit_code(&err), 3);
    }

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<u32> = (0..37).collect();
        let out = parallel_map(&items, 4, |x| Ok(x * 2)).unwrap();
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(parallel_map(&items, 3, |x| if *x == 20 { Err(Error::ZeroNorm) } else { Ok(*x) }).is_err());
    }
}
