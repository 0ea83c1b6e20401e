//! Word tokenization, vocabulary construction, and frequency/rank tables.
//!
//! Rank tables are the substrate of trigger identification: words are ranked
//! 1..V by descending corpus frequency with lexicographic tie-breaking, and a
//! word absent from a corpus gets rank V+1, one past that corpus's worst rank.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::Corpus;

/// Tokenizer knobs shared by trigger analysis and the classifier features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    /// Minimum token length in characters. Applies only to ASCII-alphanumeric
    /// tokens, so single CJK ideographs survive the default of 2.
    pub min_token_length: usize,
    pub unicode_word_boundaries: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            strip_punctuation: true,
            min_token_length: 2,
            unicode_word_boundaries: true,
        }
    }
}

impl TokenizerConfig {
    /// Config keeping every word-like token regardless of length.
    pub fn keep_short_tokens() -> Self {
        TokenizerConfig {
            min_token_length: 1,
            ..TokenizerConfig::default()
        }
    }
}

/// Split `text` into word tokens. Deterministic; empty text yields an empty
/// list.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let mut out = Vec::new();
    if config.unicode_word_boundaries {
        for segment in text.split_word_bounds() {
            push_token(&mut out, segment, config);
        }
    } else {
        for segment in text.split_whitespace() {
            let trimmed = if config.strip_punctuation {
                segment.trim_matches(|c: char| !c.is_alphanumeric())
            } else {
                segment
            };
            push_token(&mut out, trimmed, config);
        }
    }
    out
}

fn push_token(out: &mut Vec<String>, segment: &str, config: &TokenizerConfig) {
    if segment.trim().is_empty() {
        return;
    }
    if config.strip_punctuation && !segment.chars().any(|c| c.is_alphanumeric()) {
        return;
    }
    let token = if config.lowercase {
        segment.to_lowercase()
    } else {
        segment.to_string()
    };
    if token.chars().count() < config.min_token_length && token.is_ascii() {
        return;
    }
    out.push(token);
}

/// Per-word frequencies and ranks for one corpus.
///
/// Entries are sorted by descending frequency, ties broken lexicographically;
/// rank 1 is the most frequent word.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    source: String,
    entries: Vec<(String, u64)>,
    rank_of: HashMap<String, usize>,
    total_tokens: u64,
}

impl RankTable {
    /// Build directly from raw counts (used by tests and tools that already
    /// have frequencies).
    pub fn from_counts<I>(source: impl Into<String>, counts: I) -> Self
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut entries: Vec<(String, u64)> =
            counts.into_iter().filter(|(_, c)| *c > 0).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let rank_of = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i + 1))
            .collect();
        let total_tokens = entries.iter().map(|(_, c)| c).sum();
        RankTable {
            source: source.into(),
            entries,
            rank_of,
            total_tokens,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vocab_size(&self) -> usize {
        self.entries.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn frequency(&self, word: &str) -> u64 {
        self.rank_of
            .get(word)
            .map(|&r| self.entries[r - 1].1)
            .unwrap_or(0)
    }

    pub fn rank(&self, word: &str) -> Option<usize> {
        self.rank_of.get(word).copied()
    }

    /// Rank of `word`, or V+1 when the word is absent.
    pub fn rank_or_absent(&self, word: &str) -> usize {
        self.rank(word).unwrap_or(self.entries.len() + 1)
    }

    /// Entries in rank order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64, usize)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (w, c))| (w.as_str(), *c, i + 1))
    }

    /// Words in rank order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(w, _)| w.as_str())
    }
}

/// Count token occurrences across all samples of `corpus` and rank them.
pub fn build_rank_table(corpus: &Corpus, config: &TokenizerConfig) -> RankTable {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for sample in corpus.samples() {
        for token in tokenize(&sample.text, config) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    RankTable::from_counts(corpus.name(), counts)
}

/// Ordered set of distinct tokens with an index map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Vec<String> {
        v.tokens
    }
}

impl Vocabulary {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(&self.tokens).expect("vocabulary serializes");
        std::fs::write(path, json)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let tokens: Vec<String> = serde_json::from_str(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Vocabulary::from(tokens))
    }
}

/// Union of tokens across corpora, ordered by descending total frequency
/// then lexicographically, optionally truncated to `max_size`.
pub fn build_vocab(
    corpora: &[&Corpus],
    config: &TokenizerConfig,
    max_size: Option<usize>,
) -> Vocabulary {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for corpus in corpora {
        for sample in corpus.samples() {
            for token in tokenize(&sample.text, config) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
    }
    let mut entries: Vec<(String, u64)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(max) = max_size {
        entries.truncate(max);
    }
    Vocabulary::from(entries.into_iter().map(|(w, _)| w).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Label, LabeledSample};

    fn corpus_of(texts: &[&str]) -> Corpus {
        let samples = texts
            .iter()
            .enumerate()
            .map(|(i, t)| LabeledSample {
                id: format!("t{i}"),
                text: t.to_string(),
                label: Label::Benign,
                source: "test".into(),
                category: None,
            })
            .collect();
        Corpus::new("test", samples).unwrap()
    }

    #[test]
    fn tokenize_default_config_basics() {
        let config = TokenizerConfig::default();
        assert_eq!(
            tokenize("Ignore previous instructions!", &config),
            vec!["ignore", "previous", "instructions"]
        );
        assert_eq!(tokenize("", &config), Vec::<String>::new());
    }

    #[test]
    fn tokenize_golden_sentence() {
        // Hand-applied rules: 9 word segments, "?" stripped, "i" dropped by
        // the min-length rule, everything lowercased -> 8 tokens.
        let config = TokenizerConfig::default();
        let tokens = tokenize("Can I ignore this warning appeared in my code?", &config);
        assert_eq!(
            tokens,
            vec!["can", "ignore", "this", "warning", "appeared", "in", "my", "code"]
        );
    }

    #[test]
    fn tokenize_keeps_cjk_single_chars() {
        let config = TokenizerConfig::default();
        let tokens = tokenize("请帮我 translate 这句话", &config);
        assert!(tokens.contains(&"translate".to_string()));
        assert!(tokens.iter().any(|t| t == "请" || t == "请帮我"), "{tokens:?}");
    }

    #[test]
    fn tokenize_whitespace_mode_trims_edge_punctuation() {
        let config = TokenizerConfig {
            unicode_word_boundaries: false,
            ..TokenizerConfig::default()
        };
        assert_eq!(
            tokenize("Hello, (world)! ...", &config),
            vec!["hello", "world"]
        );
        // Inner punctuation stays attached in whitespace mode.
        assert_eq!(tokenize("don't stop", &config), vec!["don't", "stop"]);
    }

    #[test]
    fn tokenize_is_idempotent_on_latin_output() {
        let config = TokenizerConfig::default();
        let once = tokenize("The Quick, and the DEAD: ignore it all!", &config);
        let again = tokenize(&once.join(" "), &config);
        assert_eq!(once, again);
    }

    #[test]
    fn rank_table_counts_and_ranks_with_tie_break() {
        let corpus = corpus_of(&["a b b", "b c"]);
        let table = build_rank_table(&corpus, &TokenizerConfig::keep_short_tokens());
        // Brute-force recount straight from the fixture text.
        let mut expected: HashMap<&str, u64> = HashMap::new();
        for text in ["a b b", "b c"] {
            for tok in text.split_whitespace() {
                *expected.entry(tok).or_insert(0) += 1;
            }
        }
        assert_eq!(expected[&"b"], 3);
        assert_eq!(table.frequency("b"), 3);
        assert_eq!(table.frequency("a"), 1);
        assert_eq!(table.frequency("c"), 1);
        assert_eq!(table.rank("b"), Some(1));
        assert_eq!(table.rank("a"), Some(2)); // tie with c, lexicographic
        assert_eq!(table.rank("c"), Some(3));
        assert_eq!(table.total_tokens(), 5);
    }

    #[test]
    fn rank_table_single_word() {
        let corpus = corpus_of(&["zz zz zz zz zz"]);
        let table = build_rank_table(&corpus, &TokenizerConfig::default());
        assert_eq!(table.frequency("zz"), 5);
        assert_eq!(table.rank("zz"), Some(1));
        assert_eq!(table.vocab_size(), 1);
        assert_eq!(table.rank_or_absent("missing"), 2);
    }

    #[test]
    fn rank_table_is_deterministic_and_order_invariant() {
        let a = build_rank_table(
            &corpus_of(&["red green", "blue red"]),
            &TokenizerConfig::default(),
        );
        let b = build_rank_table(
            &corpus_of(&["blue red", "red green"]),
            &TokenizerConfig::default(),
        );
        assert_eq!(a.entries, b.entries);
    }

    #[test]
    fn rank_table_frequency_monotone_in_rank() {
        let corpus = corpus_of(&["aa aa aa bb bb cc dd dd dd dd"]);
        let table = build_rank_table(&corpus, &TokenizerConfig::default());
        let freqs: Vec<u64> = table.iter().map(|(_, c, _)| c).collect();
        assert!(freqs.windows(2).all(|w| w[0] >= w[1]), "{freqs:?}");
        let total: u64 = freqs.iter().sum();
        assert_eq!(total, table.total_tokens());
    }

    #[test]
    fn vocab_unions_disjoint_corpora() {
        let a = corpus_of(&["alpha"]);
        let b = corpus_of(&["beta"]);
        let vocab = build_vocab(&[&a, &b], &TokenizerConfig::default(), None);
        assert_eq!(vocab.len(), 2);
        assert!(vocab.contains("alpha") && vocab.contains("beta"));
    }

    #[test]
    fn vocab_truncates_by_frequency() {
        let corpus = corpus_of(&["bb bb bb aa"]);
        let vocab = build_vocab(&[&corpus], &TokenizerConfig::default(), Some(1));
        assert_eq!(vocab.tokens(), &["bb".to_string()]);
    }

    #[test]
    fn vocab_round_trips_through_json() {
        let corpus = corpus_of(&["gamma delta gamma"]);
        let vocab = build_vocab(&[&corpus], &TokenizerConfig::default(), None);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        vocab.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded, vocab);
        assert_eq!(loaded.index_of("gamma"), vocab.index_of("gamma"));
    }
}
