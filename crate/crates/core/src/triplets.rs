//! Relation triplets (head, relation, tail) from facts and issues.
//!
//! The built-in extractor is a single subject-verb-object chunking rule over
//! a small verb lexicon; richer extraction can be imported from external tools.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::split_sentences;
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationTriplet {
    pub head: String,
    pub relation: String,
    pub tail: String,
    #[serde(rename = "sentence_index")]
    pub source_sentence_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletOrigin {
    Builtin,
    Imported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceField {
    Facts,
    Issues,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletSet {
    pub triplets: Vec<RelationTriplet>,
    pub origin: TripletOrigin,
    pub source_field: SourceField,
}

impl TripletSet {
    pub fn empty(origin: TripletOrigin, source_field: SourceField) -> Self {
        Self {
            triplets: Vec::new(),
            origin,
            source_field,
        }
    }

    /// Builds a set, dropping repeated (head, relation, tail) after the first.
    pub fn from_triplets(triplets: Vec<RelationTriplet>, origin: TripletOrigin, source_field: SourceField) -> Self {
        let mut seen = HashSet::new();
        let triplets = triplets
            .into_iter()
            .filter(|t| seen.insert((t.head.clone(), t.relation.clone(), t.tail.clone())))
            .collect();
        Self {
            triplets,
            origin,
            source_field,
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

const DETERMINERS: &[&str] = &["the", "a", "an", "this", "that", "these", "those"];

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "has", "have", "had", "does", "do", "did",
    "will", "shall", "may", "might", "must", "can", "could", "would", "should",
];

const GROUP_ADVERBS: &[&str] = &["not", "also", "never", "then", "subsequently", "further", "again"];

const VERBS: &[&str] = &[
    "held", "found", "made", "took", "gave", "brought", "sought", "said", "told", "knew", "left",
    "met", "paid", "heard", "chose", "wrote", "won", "lost", "began", "became", "came", "went",
    "got", "kept", "led", "ran", "saw", "sent", "spent", "stood", "struck", "swore", "thought",
    "understood", "upheld", "withdrew", "fled", "fought", "sold", "bought", "built", "caught",
    "felt", "drew", "fell", "grew", "rose", "spoke", "bore", "bound", "dealt", "forbade", "hung",
    "lent", "shook", "stuck", "wore", "been", "done", "given", "taken", "known", "shown", "seen",
    "written", "chosen", "sworn", "argues", "submits", "contends", "claims", "seeks", "states",
    "holds", "finds", "says", "applies", "requires", "provides", "supports", "establishes",
    "concludes", "asserts", "alleges", "notes", "denies", "grants", "allows", "dismisses",
    "rejects", "accepts", "raises", "relies", "fails", "agrees", "considers", "determines",
    "orders", "challenges", "explains", "includes", "governs", "permits", "prohibits",
    "confirms", "shows", "demonstrates", "indicates", "suggests", "means", "remains",
    "constitutes", "involves", "concerns", "addresses", "defines", "owns", "fears", "faces",
];

const NOT_VERBS: &[&str] = &[
    "need", "indeed", "speed", "seed", "bed", "red", "hundred", "sacred", "kindred", "naked",
    "wicked", "creed", "greed", "deed", "breed", "feed", "shed", "wed", "bled",
];

const EDGE_PUNCT: &[char] = &[
    '.', ',', ';', ':', '!', '?', '"', '\'', '(', ')', '[', ']', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}',
];

fn core(token: &str) -> String {
    token.trim_matches(EDGE_PUNCT).to_lowercase()
}

fn is_clause_break(token: &str) -> bool {
    token
        .trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}'])
        .ends_with([',', ';', ':'])
}

fn is_aux(word: &str) -> bool {
    AUXILIARIES.contains(&word)
}

fn is_main_verb(token: &str, prev: Option<&str>) -> bool {
    let word = core(token);
    let raw = token.trim_matches(EDGE_PUNCT);
    if raw.chars().next().is_some_and(char::is_uppercase) {
        return false;
    }
    if VERBS.contains(&word.as_str()) {
        return true;
    }
    let regular = word.len() >= 5
        && word.ends_with("ed")
        && word.chars().all(|c| c.is_alphabetic() || c == '-')
        && !NOT_VERBS.contains(&word.as_str());
    // "the alleged agent": a determiner before an -ed word marks an adjective
    regular && !prev.is_some_and(|p| DETERMINERS.contains(&core(p).as_str()))
}

fn is_verbish(token: &str, prev: Option<&str>) -> bool {
    is_aux(&core(token)) || is_main_verb(token, prev)
}

/// Start and end (exclusive) of the verb group opening at `start`.
fn verb_group(tokens: &[&str], start: usize) -> Option<(usize, usize)> {
    let mut last_verb = None;
    let mut i = start;
    while i < tokens.len() {
        let prev = i.checked_sub(1).map(|p| tokens[p]);
        let word = core(tokens[i]);
        if is_verbish(tokens[i], prev) {
            last_verb = Some(i);
        } else if !(GROUP_ADVERBS.contains(&word.as_str()) || (word.ends_with("ly") && word.len() > 3)) || last_verb.is_none() {
            break;
        }
        if is_clause_break(tokens[i]) {
            break;
        }
        i += 1;
    }
    last_verb.map(|v| (start, v + 1))
}

fn join_trimmed(tokens: &[&str]) -> String {
    tokens.join(" ").trim_matches(EDGE_PUNCT).trim().to_string()
}

/// Applies the chunking rule to one whitespace-normalized sentence.
pub fn triplet_from_sentence(sentence: &str, index: usize) -> Option<RelationTriplet> {
    let tokens: Vec<&str> = sentence.split_whitespace().collect();
    for start in 1..tokens.len() {
        let prev = Some(tokens[start - 1]);
        if !is_verbish(tokens[start], prev) {
            continue;
        }
        let Some((vs, ve)) = verb_group(&tokens, start) else {
            continue;
        };
        // head: noun phrase after the last clause break before the verb, determiners dropped
        let clause_start = tokens[..vs]
            .iter()
            .rposition(|t| is_clause_break(t))
            .map_or(0, |p| p + 1);
        let mut head_tokens = &tokens[clause_start..vs];
        while let Some(first) = head_tokens.first() {
            if DETERMINERS.contains(&core(first).as_str()) {
                head_tokens = &head_tokens[1..];
            } else {
                break;
            }
        }
        let head = join_trimmed(head_tokens);
        if head.is_empty() || head_tokens.iter().any(|t| is_aux(&core(t))) {
            continue;
        }
        let relation = join_trimmed(&tokens[vs..ve]);
        if is_clause_break(tokens[ve - 1]) {
            return None;
        }
        let tail_end = tokens[ve..]
            .iter()
            .position(|t| is_clause_break(t))
            .map_or(tokens.len(), |p| ve + p + 1);
        let tail = join_trimmed(&tokens[ve..tail_end]);
        if tail.is_empty() || relation.is_empty() {
            return None;
        }
        return Some(RelationTriplet {
            head,
            relation,
            tail,
            source_sentence_index: index,
        });
    }
    None
}

/// At most one triplet per sentence, in sentence order.
pub fn extract_triplets(text: &str, source_field: SourceField) -> TripletSet {
    let triplets = split_sentences(text)
        .iter()
        .enumerate()
        .filter_map(|(i, s)| triplet_from_sentence(s, i))
        .collect();
    TripletSet::from_triplets(triplets, TripletOrigin::Builtin, source_field)
}

/// `(h, r, t)` items joined by "; ", or "(none)".
pub fn render_triplets(set: &TripletSet) -> String {
    if set.is_empty() {
        return "(none)".into();
    }
    set.triplets
        .iter()
        .map(|t| format!("({}, {}, {})", t.head, t.relation, t.tail))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportRecord {
    head: String,
    relation: String,
    tail: String,
    sentence_index: usize,
}

/// Reads line-delimited `{head, relation, tail, sentence_index}` records.
pub fn import_triplets(path: &Path, source_field: SourceField) -> Result<TripletSet> {
    let text = util::read_to_string(path)?;
    let mut triplets = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        let rec: ImportRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let (head, relation, tail) = (rec.head.trim(), rec.relation.trim(), rec.tail.trim());
        if head.is_empty() || relation.is_empty() || tail.is_empty() {
            return Err(malformed("empty head, relation or tail".into()));
        }
        triplets.push(RelationTriplet {
            head: head.to_string(),
            relation: relation.to_string(),
            tail: tail.to_string(),
            source_sentence_index: rec.sentence_index,
        });
    }
    Ok(TripletSet::from_triplets(triplets, TripletOrigin::Imported, source_field))
}

/// Writes a set in the import format.
pub fn write_triplets(path: &Path, set: &TripletSet) -> Result<()> {
    util::write_jsonl(path, &set.triplets)
}

/// R_Fact and R_Issue of one case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseTriplets {
    pub case_id: String,
    pub facts: TripletSet,
    pub issues: TripletSet,
}
