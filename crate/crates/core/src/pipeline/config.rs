//! Pipeline configuration file: parsing, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bm25::{Analyzer, Bm25Params, DEFAULT_STOPWORDS};
use crate::context::{TemplateId, DEFAULT_DIM, DEFAULT_OUTPUT_DIM, DEFAULT_TOKEN_BUDGET, MIN_DIM};
use crate::corpus::{
    CorpusLayout, LanguageFilter, SegmentationRules, SentenceSplitter, DEFAULT_ABBREVIATIONS, DEFAULT_FRENCH_WORDS,
};
use crate::elements::{JudgementRules, PlaceholderConfig};
use crate::error::{Error, Result};
use crate::metrics::ApNormalizer;
use crate::trainer::TrainConfig;
use crate::util;
use crate::vector_index::SimilarityKind;

fn strings(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub root: PathBuf,
    pub case_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_dir: Option<PathBuf>,
    pub extension: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qrels: Option<PathBuf>,
    pub french_threshold: f64,
    pub french_words: Vec<String>,
    pub abbreviations: Vec<String>,
    pub background_headings: Vec<String>,
    pub analysis_headings: Vec<String>,
    pub conclusion_headings: Vec<String>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let rules = SegmentationRules::default();
        Self {
            root: PathBuf::from("."),
            case_dir: PathBuf::from("."),
            query_dir: None,
            extension: "txt".into(),
            qrels: None,
            french_threshold: 0.5,
            french_words: strings(&DEFAULT_FRENCH_WORDS),
            abbreviations: strings(&DEFAULT_ABBREVIATIONS),
            background_headings: rules.background,
            analysis_headings: rules.analysis,
            conclusion_headings: rules.conclusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSection {
    pub placeholder_tokens: Vec<String>,
    pub judgement_headings: Vec<String>,
    pub attribution_prefixes: Vec<String>,
}

impl Default for ExtractSection {
    fn default() -> Self {
        let rules = JudgementRules::default();
        Self {
            placeholder_tokens: PlaceholderConfig::default().placeholder_tokens,
            judgement_headings: rules.headings,
            attribution_prefixes: rules.attribution_prefixes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletSource {
    #[default]
    Builtin,
    Import,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletsSection {
    pub source: TripletSource,
    /// Directory of `<case_id>.facts.jsonl` / `<case_id>.issues.jsonl` files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub import_dir: Option<PathBuf>,
}

impl Default for TripletsSection {
    fn default() -> Self {
        Self {
            source: TripletSource::Builtin,
            import_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayMode {
    #[default]
    Mock,
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewaySection {
    pub mode: GatewayMode,
    pub base_url: String,
    pub chat_model: String,
    pub embedding_model: String,
    /// Transcript file for record and replay modes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub max_retries: usize,
    pub timeout_secs: u64,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub mock_seed: u64,
}

impl Default for GatewaySection {
    fn default() -> Self {
        Self {
            mode: GatewayMode::Mock,
            base_url: "https://api.openai.com".into(),
            chat_model: "gpt-4o-mini".into(),
            embedding_model: "text-embedding-3-small".into(),
            transcript: None,
            api_key_env: "REAKASE_API_KEY".into(),
            max_in_flight: 4,
            max_retries: 3,
            timeout_secs: 120,
            temperature: 0.0,
            max_output_tokens: 256,
            mock_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackendKind {
    #[default]
    Local,
    Gateway,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodeSection {
    pub template: TemplateId,
    pub budget: usize,
    pub backend: EmbeddingBackendKind,
    pub dim: usize,
    pub embed_seed: u64,
    pub similarity: SimilarityKind,
}

impl Default for EncodeSection {
    fn default() -> Self {
        Self {
            template: TemplateId::Default,
            budget: DEFAULT_TOKEN_BUDGET,
            backend: EmbeddingBackendKind::Local,
            dim: DEFAULT_DIM,
            embed_seed: 0,
            similarity: SimilarityKind::Cosine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bm25Section {
    pub k1: f64,
    pub b: f64,
    pub stopwords: Vec<String>,
}

impl Default for Bm25Section {
    fn default() -> Self {
        let p = Bm25Params::default();
        Self {
            k1: p.k1,
            b: p.b,
            stopwords: strings(DEFAULT_STOPWORDS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningSection {
    pub count: usize,
    pub pool_depth: usize,
}

impl Default for MiningSection {
    fn default() -> Self {
        Self { count: 1, pool_depth: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub temperature: f64,
    pub checkpoint_every: usize,
    pub easy_negatives: usize,
    pub output_dim: usize,
    pub init_noise: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            steps: t.steps,
            batch_size: t.batch_size,
            lr: t.lr,
            weight_decay: t.weight_decay,
            temperature: t.temperature,
            checkpoint_every: t.checkpoint_every,
            easy_negatives: t.easy_negatives,
            output_dim: DEFAULT_OUTPUT_DIM,
            init_noise: t.init_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub k: usize,
    pub ap_normalizer: ApNormalizer,
    pub seeds: Vec<u64>,
    pub resamples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            k: 5,
            ap_normalizer: ApNormalizer::default(),
            seeds: vec![0],
            resamples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub workspace: PathBuf,
    pub corpus: CorpusSection,
    pub extract: ExtractSection,
    pub triplets: TripletsSection,
    pub gateway: GatewaySection,
    pub encode: EncodeSection,
    pub bm25: Bm25Section,
    pub mining: MiningSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

/// Every accepted key, per section; the empty section name is the top level.
const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("", &["workspace", "corpus", "extract", "triplets", "gateway", "encode", "bm25", "mining", "train", "eval"]),
    (
        "corpus",
        &[
            "root", "case_dir", "query_dir", "extension", "qrels", "french_threshold", "french_words", "abbreviations",
            "background_headings", "analysis_headings", "conclusion_headings",
        ],
    ),
    ("extract", &["placeholder_tokens", "judgement_headings", "attribution_prefixes"]),
    ("triplets", &["source", "import_dir"]),
    (
        "gateway",
        &[
            "mode", "base_url", "chat_model", "embedding_model", "transcript", "api_key_env", "max_in_flight", "max_retries",
            "timeout_secs", "temperature", "max_output_tokens", "mock_seed",
        ],
    ),
    ("encode", &["template", "budget", "backend", "dim", "embed_seed", "similarity"]),
    ("bm25", &["k1", "b", "stopwords"]),
    ("mining", &["count", "pool_depth"]),
    (
        "train",
        &["steps", "batch_size", "lr", "weight_decay", "temperature", "checkpoint_every", "easy_negatives", "output_dim", "init_noise"],
    ),
    ("eval", &["k", "ap_normalizer", "seeds", "resamples"]),
];

fn nearest<'a>(key: &str, candidates: &[&'a str]) -> Option<&'a str> {
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(key, c), *c))
        .min()
        .filter(|(d, _)| *d <= 3)
        .map(|(_, c)| c)
}

fn unknown_key(section: &str, key: &str, known: &[&str]) -> Error {
    let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
    match nearest(key, known) {
        Some(s) => Error::Config(format!("unknown key `{full}`; did you mean `{s}`?")),
        None => Error::Config(format!("unknown key `{full}`")),
    }
}

fn check_keys(table: &toml::Table) -> Result<()> {
    let top = KNOWN_KEYS[0].1;
    for (key, value) in table {
        if !top.contains(&key.as_str()) {
            return Err(unknown_key("", key, top));
        }
        let Some(inner) = value.as_table() else { continue };
        let known = KNOWN_KEYS.iter().find(|(s, _)| s == key).map(|(_, k)| *k).unwrap_or(&[]);
        for k in inner.keys() {
            if !known.contains(&k.as_str()) {
                return Err(unknown_key(key, k, known));
            }
        }
    }
    Ok(())
}

impl PipelineConfig {
    /// Parses, checks keys and constraints, and resolves relative paths
    /// against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        check_keys(&table)?;
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.workspace.as_os_str().is_empty() {
            cfg.workspace = PathBuf::from("workspace");
        }
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("config file {} does not exist", path.display())));
        }
        let text = util::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut self.workspace);
        abs(&mut self.corpus.root);
        if let Some(p) = &mut self.gateway.transcript {
            abs(p);
        }
        if let Some(p) = &mut self.triplets.import_dir {
            abs(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.train.temperature > 0.0) {
            return bad(format!("train.temperature must be > 0, got {}", self.train.temperature));
        }
        if self.eval.k < 1 {
            return bad("eval.k must be >= 1".into());
        }
        if self.encode.budget < 1 {
            return bad("encode.budget must be >= 1".into());
        }
        if self.encode.dim < MIN_DIM {
            return bad(format!("encode.dim must be >= {MIN_DIM}"));
        }
        if !(0.0..=1.0).contains(&self.corpus.french_threshold) {
            return bad("corpus.french_threshold must lie in [0, 1]".into());
        }
        if self.extract.placeholder_tokens.is_empty() || self.extract.placeholder_tokens.iter().any(String::is_empty) {
            return bad("extract.placeholder_tokens must be non-empty strings".into());
        }
        if self.mining.count < 1 || self.mining.pool_depth < self.mining.count {
            return bad("mining needs 1 <= count <= pool_depth".into());
        }
        if self.bm25.k1 < 0.0 || !(0.0..=1.0).contains(&self.bm25.b) {
            return bad("bm25 needs k1 >= 0 and b in [0, 1]".into());
        }
        if self.eval.seeds.is_empty() {
            return bad("eval.seeds must list at least one seed".into());
        }
        if self.eval.resamples < 1 {
            return bad("eval.resamples must be >= 1".into());
        }
        if !(self.gateway.temperature >= 0.0) || self.gateway.max_output_tokens == 0 {
            return bad("gateway needs temperature >= 0 and max_output_tokens >= 1".into());
        }
        if matches!(self.gateway.mode, GatewayMode::Record | GatewayMode::Replay) && self.gateway.transcript.is_none() {
            return bad("gateway.transcript is required in record and replay modes".into());
        }
        if self.triplets.source == TripletSource::Import && self.triplets.import_dir.is_none() {
            return bad("triplets.import_dir is required when triplets.source = \"import\"".into());
        }
        self.train_config(0).validate()
    }

    /// Paths that must exist before any stage runs.
    pub fn check_paths(&self) -> Result<()> {
        let mut required = vec![self.corpus.root.clone()];
        if self.gateway.mode == GatewayMode::Replay {
            required.extend(self.gateway.transcript.clone());
        }
        if self.triplets.source == TripletSource::Import {
            required.extend(self.triplets.import_dir.clone());
        }
        match required.into_iter().find(|p| !p.exists()) {
            Some(p) => Err(Error::MissingPath(p)),
            None => Ok(()),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn layout(&self) -> CorpusLayout {
        let c = &self.corpus;
        CorpusLayout {
            case_dir: c.case_dir.clone(),
            query_dir: c.query_dir.clone(),
            extension: c.extension.clone(),
            qrels: c.qrels.clone(),
            language: LanguageFilter {
                french_words: c.french_words.clone(),
                threshold: c.french_threshold,
            },
            segmentation: SegmentationRules {
                background: c.background_headings.clone(),
                analysis: c.analysis_headings.clone(),
                conclusion: c.conclusion_headings.clone(),
                splitter: SentenceSplitter {
                    abbreviations: c.abbreviations.clone(),
                },
            },
        }
    }

    pub fn placeholders(&self) -> Result<PlaceholderConfig> {
        PlaceholderConfig::new(self.extract.placeholder_tokens.clone())
    }

    pub fn judgement_rules(&self) -> JudgementRules {
        JudgementRules {
            headings: self.extract.judgement_headings.clone(),
            attribution_prefixes: self.extract.attribution_prefixes.clone(),
        }
    }

    pub fn analyzer(&self) -> Analyzer {
        Analyzer::with_stopwords(self.bm25.stopwords.iter().map(String::as_str))
    }

    pub fn bm25_params(&self) -> Bm25Params {
        Bm25Params {
            k1: self.bm25.k1,
            b: self.bm25.b,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            steps: t.steps,
            batch_size: t.batch_size,
            lr: t.lr,
            weight_decay: t.weight_decay,
            temperature: t.temperature,
            similarity_kind: self.encode.similarity,
            seed,
            checkpoint_every: t.checkpoint_every,
            easy_negatives: t.easy_negatives,
            output_dim: t.output_dim,
            init_noise: t.init_noise,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig> {
        PipelineConfig::from_toml_str(text, Path::new("/base"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.train.temperature, 0.05);
        assert_eq!(cfg.eval.k, 5);
        assert_eq!(cfg.encode.budget, 2048);
        assert_eq!(cfg.train.batch_size, 2);
        assert_eq!(cfg.workspace, PathBuf::from("/base/workspace"));
        assert_eq!(cfg.corpus.root, PathBuf::from("/base/."));
    }

    #[test]
    fn constraints_are_enforced() {
        assert!(matches!(parse("[train]\ntemperature = 0.0\n"), Err(Error::Config(_))));
        assert!(matches!(parse("[eval]\nk = 0\n"), Err(Error::Config(_))));
        assert!(matches!(parse("[encode]\nbudget = 0\n"), Err(Error::Config(_))));
        assert!(matches!(parse("[gateway]\nmode = \"replay\"\n"), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let err = parse("[train]\ntemprature = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("train.temprature") && err.contains("did you mean `temperature`"), "{err}");
        let err = parse("[evall]\nk = 3\n").unwrap_err().to_string();
        assert!(err.contains("did you mean `eval`"), "{err}");
    }

    #[test]
    fn type_mismatch_is_a_config_error() {
        assert!(matches!(parse("[eval]\nk = \"five\"\n"), Err(Error::Config(_))));
        assert!(matches!(parse("[encode]\ntemplate = \"prompt9\"\n"), Err(Error::Config(_))));
    }

    #[test]
    fn normalized_config_round_trips() {
        let cfg = parse("[encode]\ntemplate = \"prompt1\"\n[gateway]\nmode = \"mock\"\n").unwrap();
        let again = PipelineConfig::from_toml_str(&cfg.to_toml().unwrap(), Path::new("/elsewhere")).unwrap();
        assert_eq!(cfg, again);
    }
}
