//! Splits a case document into background, analysis and concluding regions.

use serde::{Deserialize, Serialize};

use super::sentences::SentenceSplitter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Background,
    Analysis,
    Conclusion,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CaseSections {
    pub background: String,
    pub analysis_sentences: Vec<String>,
    pub conclusion_sentences: Vec<String>,
}

/// Heading keywords per section, matched case-insensitively against whole
/// lines after enumerators ("I.", "2)") and trailing ':' or '.' are removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationRules {
    pub background: Vec<String>,
    pub analysis: Vec<String>,
    pub conclusion: Vec<String>,
    #[serde(default)]
    pub splitter: SentenceSplitter,
}

impl Default for SegmentationRules {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            background: owned(&["BACKGROUND"]),
            analysis: owned(&["ANALYSIS", "REASONS"]),
            conclusion: owned(&["JUDGMENT", "JUDGEMENT", "ORDER"]),
            splitter: SentenceSplitter::default(),
        }
    }
}

impl SegmentationRules {
    fn patterns(&self, kind: SectionKind) -> &[String] {
        match kind {
            SectionKind::Background => &self.background,
            SectionKind::Analysis => &self.analysis,
            SectionKind::Conclusion => &self.conclusion,
        }
    }
}

/// Reduces a candidate heading line to its comparable keyword form.
pub fn normalize_heading(line: &str) -> String {
    let mut s = line.trim();
    // leading enumerator: roman numerals, digits or a single letter, then '.' or ')'
    if let Some((head, rest)) = s.split_once(['.', ')']) {
        let is_enum = !head.is_empty()
            && head.len() <= 5
            && (head.chars().all(|c| c.is_ascii_digit())
                || head.chars().all(|c| matches!(c, 'I' | 'V' | 'X' | 'L' | 'i' | 'v' | 'x' | 'l'))
                || (head.chars().count() == 1 && head.chars().all(|c| c.is_ascii_alphabetic())));
        if is_enum && !rest.trim().is_empty() {
            s = rest.trim();
        }
    }
    s.trim_end_matches([':', '.']).trim().to_lowercase()
}

/// True when `line` is a heading for one of `patterns`.
pub fn is_heading(line: &str, patterns: &[String]) -> bool {
    let norm = normalize_heading(line);
    !norm.is_empty() && patterns.iter().any(|p| p.to_lowercase() == norm)
}

/// A contiguous slice of the source document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub kind: SectionKind,
    /// The heading line that opened the region, verbatim including its newline.
    pub heading: Option<String>,
    /// Everything after the heading up to the next region, verbatim.
    pub body: String,
}

/// Partitions `text` into regions. Sections open at the first matching
/// heading and only move forward (background, analysis, conclusion);
/// concatenating every heading and body reproduces `text` exactly.
pub fn segment_regions(text: &str, rules: &SegmentationRules) -> Vec<Region> {
    let order = [SectionKind::Background, SectionKind::Analysis, SectionKind::Conclusion];
    let mut regions = vec![Region {
        kind: SectionKind::Background,
        heading: None,
        body: String::new(),
    }];
    let mut current = 0usize;
    let mut background_heading_seen = false;
    for line in text.split_inclusive('\n') {
        let opens = order.iter().enumerate().find(|(idx, kind)| {
            let allowed = if **kind == SectionKind::Background {
                current == 0 && !background_heading_seen
            } else {
                *idx > current
            };
            allowed && is_heading(line, rules.patterns(**kind))
        });
        match opens {
            Some((idx, kind)) => {
                background_heading_seen = true;
                current = idx;
                regions.push(Region {
                    kind: *kind,
                    heading: Some(line.to_string()),
                    body: String::new(),
                });
            }
            None => regions.last_mut().expect("non-empty").body.push_str(line),
        }
    }
    regions
}

/// Segments a document into sections.
///
/// The concluding heading line is kept as the first entry of
/// `conclusion_sentences` so judgement extraction can see which heading the
/// text follows; further heading lines inside the conclusion stay as
/// standalone entries.
pub fn segment_sections(text: &str, rules: &SegmentationRules) -> CaseSections {
    let mut background = String::new();
    let mut analysis_text = String::new();
    let mut conclusion = Vec::new();
    for region in segment_regions(text, rules) {
        match region.kind {
            SectionKind::Background => background.push_str(&region.body),
            SectionKind::Analysis => analysis_text.push_str(&region.body),
            SectionKind::Conclusion => {
                if let Some(h) = &region.heading {
                    conclusion.push(h.trim().to_string());
                }
                let mut chunk = String::new();
                for line in region.body.split_inclusive('\n') {
                    if is_heading(line, &rules.conclusion) {
                        conclusion.extend(rules.splitter.split(&chunk));
                        chunk.clear();
                        conclusion.push(line.trim().to_string());
                    } else {
                        chunk.push_str(line);
                    }
                }
                conclusion.extend(rules.splitter.split(&chunk));
            }
        }
    }
    CaseSections {
        background: background.trim().to_string(),
        analysis_sentences: rules.splitter.split(&analysis_text),
        conclusion_sentences: conclusion,
    }
}
