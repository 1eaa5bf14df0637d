//! Extraction of legal facts, issues and judgement from a segmented case.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_heading, CaseSections};
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway};
use crate::templates;
use crate::util;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LegalElements {
    pub case_id: String,
    pub facts: String,
    pub issues: Vec<String>,
    pub judgement: String,
    pub reasoning: Option<String>,
    /// Set when reasoning was generated without an extracted judgement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_note: Option<String>,
}

impl LegalElements {
    pub fn issues_text(&self) -> String {
        self.issues.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderConfig {
    pub placeholder_tokens: Vec<String>,
}

impl Default for PlaceholderConfig {
    fn default() -> Self {
        Self {
            placeholder_tokens: vec!["FRAGMENT_SUPPRESSED".into()],
        }
    }
}

impl PlaceholderConfig {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() || tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::InvalidArgument("placeholder tokens must be non-empty".into()));
        }
        Ok(Self {
            placeholder_tokens: tokens,
        })
    }

    /// Literal substring match.
    pub fn matches(&self, sentence: &str) -> bool {
        self.placeholder_tokens.iter().any(|t| sentence.contains(t.as_str()))
    }
}

/// Analysis sentences that cite a precedent through a placeholder, in order.
pub fn extract_issues(sections: &CaseSections, ph: &PlaceholderConfig) -> Vec<String> {
    sections
        .analysis_sentences
        .iter()
        .filter(|s| ph.matches(s))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgementRules {
    pub headings: Vec<String>,
    /// Sentences starting with one of these (case-insensitive) are editorial, not judicial.
    pub attribution_prefixes: Vec<String>,
}

impl Default for JudgementRules {
    fn default() -> Self {
        Self {
            headings: vec!["Judgment".into(), "Judgement".into(), "Order".into()],
            attribution_prefixes: vec!["Editor".into(), "Solicitor".into(), "Counsel".into()],
        }
    }
}

impl JudgementRules {
    fn is_attribution(&self, sentence: &str) -> bool {
        let lower = sentence.trim_start().to_lowercase();
        self.attribution_prefixes
            .iter()
            .any(|p| lower.starts_with(&p.to_lowercase()))
    }
}

pub fn extract_judgement(sections: &CaseSections) -> String {
    extract_judgement_with(sections, &JudgementRules::default())
}

/// Concluding sentences after the first judgement heading, minus headings
/// and attribution notes, joined by single spaces.
pub fn extract_judgement_with(sections: &CaseSections, rules: &JudgementRules) -> String {
    let Some(start) = sections
        .conclusion_sentences
        .iter()
        .position(|s| is_heading(s, &rules.headings))
    else {
        return String::new();
    };
    sections.conclusion_sentences[start + 1..]
        .iter()
        .filter(|s| !is_heading(s, &rules.headings) && !rules.is_attribution(s))
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(" ")
}

/// The fact-summarization prompt for a background section.
pub fn render_fact_prompt(background: &str) -> String {
    let slots = std::collections::BTreeMap::from([("background", background.to_string())]);
    templates::fact().render_user(&slots).expect("fact template has one slot")
}

/// Summarizes the background through the gateway. Empty background yields
/// an empty summary without a gateway call.
pub fn extract_facts(sections: &CaseSections, gateway: &Gateway) -> Result<String> {
    let background = sections.background.trim();
    if background.is_empty() {
        return Ok(String::new());
    }
    let req = ChatRequest::new("", render_fact_prompt(background)).with_params(gateway.default_params);
    gateway.chat_complete(&req)
}

/// Runs all three extractors; reasoning is left empty.
pub fn extract_elements(
    case_id: &str,
    sections: &CaseSections,
    ph: &PlaceholderConfig,
    rules: &JudgementRules,
    gateway: &Gateway,
) -> Result<LegalElements> {
    Ok(LegalElements {
        case_id: case_id.to_string(),
        facts: extract_facts(sections, gateway)?,
        issues: extract_issues(sections, ph),
        judgement: extract_judgement_with(sections, rules),
        reasoning: None,
        reasoning_note: None,
    })
}

pub fn save_elements(path: &Path, elements: &[LegalElements]) -> Result<()> {
    util::write_jsonl(path, elements)
}

pub fn load_elements(path: &Path) -> Result<Vec<LegalElements>> {
    util::read_jsonl(path)
}
