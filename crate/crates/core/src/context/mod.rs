//! Reasoning generation, contextualised case rendering and case encoding.

mod adapter;
mod hashing;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adapter::{Adapter, DEFAULT_OUTPUT_DIM};
pub use hashing::{local_embed, HashedVector, LocalEmbedder, DEFAULT_DIM, MIN_DIM};

use crate::elements::LegalElements;
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway};
use crate::templates::{self, Template};
use crate::triplets::{render_triplets, TripletSet};
use crate::util;
use crate::vector_index::SimilarityKind;

pub const DEFAULT_TOKEN_BUDGET: usize = 2048;
/// Slot value for an empty text field.
pub const EMPTY_SLOT: &str = "(none)";
pub const NO_JUDGEMENT_SLOT: &str = "(no judgement extracted)";
pub const JUDGEMENT_MISSING_NOTE: &str = "no judgement extracted";
/// Replaces a verbatim copy of the judgement found inside another slot.
pub const WITHHELD_JUDGEMENT: &str = "[judgement withheld]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateId {
    #[default]
    Default,
    Prompt1,
    Prompt2,
}

impl TemplateId {
    pub const ALL: [TemplateId; 3] = [TemplateId::Default, TemplateId::Prompt1, TemplateId::Prompt2];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Default => "default",
            TemplateId::Prompt1 => "prompt1",
            TemplateId::Prompt2 => "prompt2",
        }
    }

    pub fn template(self) -> Template {
        match self {
            TemplateId::Default => templates::encode_default(),
            TemplateId::Prompt1 => templates::encode_prompt1(),
            TemplateId::Prompt2 => templates::encode_prompt2(),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTemplate(s.to_string()))
    }
}

fn or_empty(text: &str) -> String {
    if text.trim().is_empty() {
        EMPTY_SLOT.to_string()
    } else {
        text.to_string()
    }
}

/// The reasoning prompt as `(system, user)`.
pub fn render_reasoning_prompt(elements: &LegalElements, r_fact: &TripletSet, r_issue: &TripletSet) -> Result<(String, String)> {
    let template = templates::reasoning();
    let judgement = if elements.judgement.trim().is_empty() {
        NO_JUDGEMENT_SLOT.to_string()
    } else {
        elements.judgement.clone()
    };
    let slots = BTreeMap::from([
        ("facts", or_empty(&elements.facts)),
        ("fact_triplets", render_triplets(r_fact)),
        ("issues", or_empty(&elements.issues_text())),
        ("issue_triplets", render_triplets(r_issue)),
        ("judgement", judgement),
    ]);
    let user = template.render_user(&slots)?;
    Ok((template.system, user))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reasoning {
    pub case_id: String,
    pub text: String,
    /// Provenance note, set when the judgement slot was empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn generate_reasoning(elements: &LegalElements, r_fact: &TripletSet, r_issue: &TripletSet, gateway: &Gateway) -> Result<Reasoning> {
    let (system, user) = render_reasoning_prompt(elements, r_fact, r_issue)?;
    let req = ChatRequest::new(system, user).with_params(gateway.default_params);
    let text = gateway.chat_complete(&req)?;
    let note = elements
        .judgement
        .trim()
        .is_empty()
        .then(|| JUDGEMENT_MISSING_NOTE.to_string());
    Ok(Reasoning {
        case_id: elements.case_id.clone(),
        text,
        note,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextualisedCase {
    pub case_id: String,
    pub template_id: TemplateId,
    pub system_text: String,
    pub user_text: String,
    pub truncated: bool,
}

impl ContextualisedCase {
    /// The single string sent to the embedding backend.
    pub fn embedding_input(&self) -> String {
        format!("{}\n{}", self.system_text, self.user_text)
    }
}

/// Keeps the first `budget` whitespace tokens, joined by single spaces.
pub fn truncate_to_budget(text: &str, budget: usize) -> (String, bool) {
    let budget = budget.max(1);
    if util::whitespace_tokens(text) <= budget {
        return (text.to_string(), false);
    }
    let kept: Vec<&str> = text.split_whitespace().take(budget).collect();
    (kept.join(" "), true)
}

fn withhold(text: String, judgement: &str) -> String {
    let judgement = judgement.trim();
    if judgement.is_empty() || !text.contains(judgement) {
        return text;
    }
    text.replace(judgement, WITHHELD_JUDGEMENT)
}

/// Renders the encoding template. The judgement never reaches the output:
/// it has no slot, and verbatim copies inside other slots are withheld.
pub fn render_context(
    elements: &LegalElements,
    r_fact: &TripletSet,
    r_issue: &TripletSet,
    template_id: TemplateId,
    budget: usize,
) -> Result<ContextualisedCase> {
    if budget == 0 {
        return Err(Error::InvalidArgument("token budget must be at least 1".into()));
    }
    let reasoning = elements
        .reasoning
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("case `{}` has no generated reasoning", elements.case_id)))?;
    let template = template_id.template();
    let j = &elements.judgement;
    let slots = BTreeMap::from([
        ("facts", withhold(or_empty(&elements.facts), j)),
        ("fact_triplets", withhold(render_triplets(r_fact), j)),
        ("issues", withhold(or_empty(&elements.issues_text()), j)),
        ("issue_triplets", withhold(render_triplets(r_issue), j)),
        ("reasoning", withhold(or_empty(reasoning), j)),
    ]);
    let rendered = withhold(template.render_user(&slots)?, j);
    let (user_text, truncated) = truncate_to_budget(&rendered, budget);
    Ok(ContextualisedCase {
        case_id: elements.case_id.clone(),
        template_id,
        system_text: template.system,
        user_text,
        truncated,
    })
}

/// Source of base vectors.
pub trait EmbeddingBackend {
    fn tag(&self) -> String;
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEmbedding {
    pub case_id: String,
    pub vector: Vec<f64>,
    pub backend_tag: String,
    pub adapter_version: Option<String>,
    pub normalized: bool,
}

pub fn l2_normalize(v: &mut [f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    for x in v {
        *x /= norm;
    }
    Ok(())
}

/// Applies the optional adapter, then normalizes under cosine similarity.
pub fn project(base: &[f64], adapter: Option<&Adapter>, kind: SimilarityKind) -> Result<(Vec<f64>, bool)> {
    let mut v = match adapter {
        Some(a) => a.apply(base)?,
        None => base.to_vec(),
    };
    let normalized = kind == SimilarityKind::Cosine;
    if normalized {
        l2_normalize(&mut v)?;
    }
    Ok((v, normalized))
}

pub fn encode_case(
    ctx: &ContextualisedCase,
    backend: &dyn EmbeddingBackend,
    adapter: Option<&Adapter>,
    kind: SimilarityKind,
) -> Result<CaseEmbedding> {
    let mut out = encode_cases(std::slice::from_ref(ctx), backend, adapter, kind)?;
    Ok(out.remove(0))
}

pub fn encode_cases(
    ctxs: &[ContextualisedCase],
    backend: &dyn EmbeddingBackend,
    adapter: Option<&Adapter>,
    kind: SimilarityKind,
) -> Result<Vec<CaseEmbedding>> {
    let inputs: Vec<String> = ctxs.iter().map(ContextualisedCase::embedding_input).collect();
    let bases = backend.embed_texts(&inputs)?;
    if bases.len() != ctxs.len() {
        return Err(Error::DimensionMismatch {
            expected: ctxs.len(),
            actual: bases.len(),
        });
    }
    let tag = backend.tag();
    ctxs.iter()
        .zip(bases)
        .map(|(ctx, base)| {
            let (vector, normalized) = project(&base, adapter, kind)?;
            Ok(CaseEmbedding {
                case_id: ctx.case_id.clone(),
                vector,
                backend_tag: tag.clone(),
                adapter_version: adapter.map(|a| a.version.clone()),
                normalized,
            })
        })
        .collect()
}

/// Embeddings for one corpus run, keyed by case id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStore {
    pub backend_tag: String,
    pub adapter_version: Option<String>,
    pub template_id: TemplateId,
    pub embeddings: BTreeMap<String, CaseEmbedding>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredEmbedding {
    case_id: String,
    backend_tag: String,
    adapter_version: Option<String>,
    template_id: TemplateId,
    normalized: bool,
    vector: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(backend_tag: impl Into<String>, adapter_version: Option<String>, template_id: TemplateId) -> Self {
        Self {
            backend_tag: backend_tag.into(),
            adapter_version,
            template_id,
            embeddings: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.embeddings.values().next().map(|e| e.vector.len())
    }

    pub fn insert(&mut self, emb: CaseEmbedding) -> Result<()> {
        if let Some(d) = self.dim() {
            if emb.vector.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: emb.vector.len(),
                });
            }
        }
        self.embeddings.insert(emb.case_id.clone(), emb);
        Ok(())
    }

    pub fn get(&self, case_id: &str) -> Option<&CaseEmbedding> {
        self.embeddings.get(case_id)
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    /// Re-projects every base vector through `adapter`.
    pub fn projected(&self, adapter: Option<&Adapter>, kind: SimilarityKind) -> Result<EmbeddingStore> {
        let mut out = EmbeddingStore::new(self.backend_tag.clone(), adapter.map(|a| a.version.clone()), self.template_id);
        for e in self.embeddings.values() {
            let (vector, normalized) = project(&e.vector, adapter, kind)?;
            out.insert(CaseEmbedding {
                case_id: e.case_id.clone(),
                vector,
                backend_tag: e.backend_tag.clone(),
                adapter_version: out.adapter_version.clone(),
                normalized,
            })?;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_jsonl(
            path,
            self.embeddings.values().map(|e| StoredEmbedding {
                case_id: e.case_id.clone(),
                backend_tag: e.backend_tag.clone(),
                adapter_version: e.adapter_version.clone(),
                template_id: self.template_id,
                normalized: e.normalized,
                vector: e.vector.clone(),
            }),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<StoredEmbedding> = util::read_jsonl(path)?;
        let first = records.first().ok_or_else(|| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: 1,
            reason: "embedding file is empty".into(),
        })?;
        let mut store = EmbeddingStore::new(first.backend_tag.clone(), first.adapter_version.clone(), first.template_id);
        for (i, r) in records.into_iter().enumerate() {
            if r.backend_tag != store.backend_tag || r.adapter_version != store.adapter_version || r.template_id != store.template_id {
                return Err(Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: "mixed backend, adapter or template keys".into(),
                });
            }
            store.insert(CaseEmbedding {
                case_id: r.case_id,
                vector: r.vector,
                backend_tag: r.backend_tag,
                adapter_version: r.adapter_version,
                normalized: r.normalized,
            })?;
        }
        Ok(store)
    }
}

pub fn save_contexts(path: &Path, contexts: &[ContextualisedCase]) -> Result<()> {
    util::write_jsonl(path, contexts)
}

pub fn load_contexts(path: &Path) -> Result<Vec<ContextualisedCase>> {
    util::read_jsonl(path)
}
