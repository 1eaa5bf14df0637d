//! Rule-based sentence splitting.

use serde::{Deserialize, Serialize};

pub const DEFAULT_ABBREVIATIONS: [&str; 30] = [
    "v.", "No.", "Nos.", "Inc.", "Ltd.", "Co.", "Corp.", "Mr.", "Mrs.", "Ms.", "Dr.", "St.",
    "Jr.", "Sr.", "s.", "ss.", "para.", "paras.", "art.", "e.g.", "i.e.", "etc.", "cf.", "al.",
    "c.", "R.S.C.", "S.C.R.", "F.C.", "F.C.A.", "S.C.",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceSplitter {
    pub abbreviations: Vec<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        Self {
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl SentenceSplitter {
    /// Splits `text` after `.`, `!` or `?` when the next token starts with an
    /// uppercase letter, or at end of text. Sentences joined by single spaces
    /// give back the whitespace-normalized input.
    pub fn split(&self, text: &str) -> Vec<String> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mut sentences = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for (i, token) in tokens.iter().enumerate() {
            current.push(token);
            let boundary = match tokens.get(i + 1) {
                None => true,
                Some(next) => self.ends_sentence(token) && starts_uppercase(next),
            };
            if boundary {
                sentences.push(current.join(" "));
                current.clear();
            }
        }
        sentences
    }

    fn ends_sentence(&self, token: &str) -> bool {
        let core = token.trim_end_matches(CLOSERS);
        let Some(last) = core.chars().last() else {
            return false;
        };
        if !matches!(last, '.' | '!' | '?') {
            return false;
        }
        if last == '.' && self.is_abbreviation(core) {
            return false;
        }
        true
    }

    fn is_abbreviation(&self, core: &str) -> bool {
        let stripped = core.trim_start_matches(OPENERS);
        if self.abbreviations.iter().any(|a| a == stripped) {
            return true;
        }
        // single-letter initials such as "J." in "J. Smith"
        let mut chars = stripped.chars();
        matches!(
            (chars.next(), chars.next(), chars.next()),
            (Some(c), Some('.'), None) if c.is_uppercase()
        )
    }
}

fn starts_uppercase(token: &str) -> bool {
    token
        .trim_start_matches(OPENERS)
        .chars()
        .next()
        .is_some_and(char::is_uppercase)
}

/// Splits with the default abbreviation list.
pub fn split_sentences(text: &str) -> Vec<String> {
    SentenceSplitter::default().split(text)
}
