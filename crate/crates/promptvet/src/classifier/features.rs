//! Hashed n-gram feature extraction.
//!
//! Word n-grams run over the token stream; char n-grams run over the
//! space-joined token stream, so they may span token boundaries. Features are
//! hashed with FNV-1a 64 into `[0, hash_dimension)` (dimension is a power of
//! two, so the index is the low bits) and counts accumulate without signs.
//! The same extraction is exposed at occurrence level, tagged with the token
//! each feature starts in, which is what score attribution consumes.

use std::collections::BTreeMap;

use super::{FeatureConfig, MAX_TEXT_CHARS};
use crate::textproc::tokenize;
use crate::util::fnv1a64;

/// One hashed feature occurrence and the index of the token it starts in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureOccurrence {
    pub index: usize,
    pub owner: usize,
}

const WORD_SEP: &[u8] = b"\x1f";

/// Sparse feature vector: hashed index -> occurrence count.
pub fn featurize(text: &str, config: &FeatureConfig) -> BTreeMap<usize, f64> {
    let (_, occurrences) = feature_occurrences(text, config);
    let mut counts = BTreeMap::new();
    for occ in occurrences {
        *counts.entry(occ.index).or_insert(0.0) += 1.0;
    }
    counts
}

/// Tokens plus every feature occurrence with its owning token.
pub fn feature_occurrences(
    text: &str,
    config: &FeatureConfig,
) -> (Vec<String>, Vec<FeatureOccurrence>) {
    let truncated: String = text.chars().take(MAX_TEXT_CHARS).collect();
    let tokens = tokenize(&truncated, &config.tokenizer);
    let mask = config.hash_dimension - 1;
    let mut occurrences = Vec::new();

    // Word n-grams: the window's first token owns the feature.
    for n in config.word_ngrams.iter() {
        if n > tokens.len() {
            break;
        }
        let n_byte = [n as u8];
        for start in 0..=(tokens.len() - n) {
            let mut parts: Vec<&[u8]> = vec![b"w", &n_byte];
            for (j, token) in tokens[start..start + n].iter().enumerate() {
                if j > 0 {
                    parts.push(WORD_SEP);
                }
                parts.push(token.as_bytes());
            }
            occurrences.push(FeatureOccurrence {
                index: (fnv1a64(&parts) as usize) & mask,
                owner: start,
            });
        }
    }

    // Char n-grams over the space-joined token stream. Each joined character
    // position is owned by a token; the single space after token i belongs
    // to token i, so a gram starting on that space still counts toward i.
    let mut joined: Vec<char> = Vec::new();
    let mut owner_of: Vec<usize> = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        if i > 0 {
            joined.push(' ');
            owner_of.push(i - 1);
        }
        for c in token.chars() {
            joined.push(c);
            owner_of.push(i);
        }
    }
    let mut gram = String::new();
    for n in config.char_ngrams.iter() {
        if n > joined.len() {
            break;
        }
        for start in 0..=(joined.len() - n) {
            gram.clear();
            gram.extend(&joined[start..start + n]);
            let index = (fnv1a64(&[b"c", &[n as u8], gram.as_bytes()]) as usize) & mask;
            occurrences.push(FeatureOccurrence {
                index,
                owner: owner_of[start],
            });
        }
    }

    (tokens, occurrences)
}
