//! Line-level removal of French text.

use serde::{Deserialize, Serialize};

/// French function words used to score lines. Fifty entries.
pub const DEFAULT_FRENCH_WORDS: [&str; 50] = [
    "le", "la", "les", "l", "un", "une", "des", "du", "de", "d", "et", "est", "sont", "à", "au",
    "aux", "en", "dans", "par", "pour", "sur", "avec", "sans", "qui", "que", "qu", "ne", "pas",
    "ce", "cette", "ces", "il", "elle", "ils", "elles", "nous", "vous", "son", "sa", "ses",
    "leur", "leurs", "mais", "ou", "où", "donc", "été", "être", "avoir", "a",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageFilter {
    pub french_words: Vec<String>,
    /// A line is dropped when its French function-word ratio is strictly above this.
    pub threshold: f64,
}

impl Default for LanguageFilter {
    fn default() -> Self {
        Self {
            french_words: DEFAULT_FRENCH_WORDS.iter().map(|w| w.to_string()).collect(),
            threshold: 0.5,
        }
    }
}

impl LanguageFilter {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }

    /// Fraction of the line's word tokens that are listed French function words.
    pub fn french_ratio(&self, line: &str) -> f64 {
        let tokens = word_tokens(line);
        if tokens.is_empty() {
            return 0.0;
        }
        let hits = tokens
            .iter()
            .filter(|t| self.french_words.iter().any(|w| w == *t))
            .count();
        hits as f64 / tokens.len() as f64
    }
}

fn word_tokens(line: &str) -> Vec<String> {
    line.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Removes every line whose French ratio exceeds the threshold. Kept lines,
/// including their line terminators, are copied through unchanged.
pub fn strip_non_english(text: &str, config: &LanguageFilter) -> String {
    text.split_inclusive('\n')
        .filter(|line| config.french_ratio(line) <= config.threshold)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn english_passes_through() {
        let f = LanguageFilter::default();
        let text = "The claimant filed an appeal.";
        assert_eq!(strip_non_english(text, &f), text);
    }

    #[test]
    fn french_line_removed_at_point_four() {
        // le, a, un are listed: 3 of 6 tokens = 0.5 > 0.4
        let f = LanguageFilter::with_threshold(0.4);
        let line = "Le demandeur a déposé un appel.";
        assert!((f.french_ratio(line) - 0.5).abs() < 1e-12);
        assert_eq!(strip_non_english(line, &f), "");
        let mixed = "The claimant filed an appeal.\nLe demandeur a déposé un appel.\nCosts follow.\n";
        assert_eq!(
            strip_non_english(mixed, &f),
            "The claimant filed an appeal.\nCosts follow.\n"
        );
    }

    #[test]
    fn ratio_equal_to_threshold_is_kept() {
        let f = LanguageFilter::with_threshold(0.5);
        assert_eq!(strip_non_english("Le demandeur a déposé un appel.", &f), "Le demandeur a déposé un appel.");
    }

    #[test]
    fn empty_input() {
        assert_eq!(strip_non_english("", &LanguageFilter::default()), "");
    }

    #[test]
    fn idempotent_on_fixture() {
        let f = LanguageFilter::with_threshold(0.3);
        let text = "JUDGMENT\nLa demande est rejetée par la Cour.\nThe application is dismissed.\n\nLes dépens sont adjugés.\n";
        let once = strip_non_english(text, &f);
        assert_eq!(strip_non_english(&once, &f), once);
        assert!(!once.contains("rejetée"));
    }
}
