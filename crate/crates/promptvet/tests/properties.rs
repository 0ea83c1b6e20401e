//! Property tests for the structural invariants of corpus handling,
//! tokenization, rank tables, and trigger identification.

use std::collections::{BTreeMap, HashMap, HashSet};

use proptest::prelude::*;

use promptvet::corpus::{load_corpus, merge, stratified_split, Corpus, Label, LabeledSample};
use promptvet::textproc::{build_rank_table, tokenize, TokenizerConfig};
use promptvet::trigger::identify_triggers;

fn word_strategy() -> impl Strategy<Value = String> {
    "[a-z]{2,8}"
}

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(word_strategy(), 1..12).prop_map(|words| words.join(" "))
}

fn sample_strategy(tag: &'static str) -> impl Strategy<Value = LabeledSample> {
    (text_strategy(), any::<bool>(), 0u32..1_000_000).prop_map(move |(text, injection, n)| {
        LabeledSample {
            id: format!("{tag}{n}"),
            text,
            label: if injection {
                Label::Injection
            } else {
                Label::Benign
            },
            source: tag.to_string(),
            category: None,
        }
    })
}

fn corpus_strategy(tag: &'static str, max: usize) -> impl Strategy<Value = Corpus> {
    prop::collection::vec(sample_strategy(tag), 1..max).prop_map(move |mut samples| {
        // Re-key ids to guarantee uniqueness regardless of generated n.
        for (i, s) in samples.iter_mut().enumerate() {
            s.id = format!("{tag}:{i}");
        }
        Corpus::new(tag, samples).expect("unique ids")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_jsonl_round_trip_is_exact(corpus in corpus_strategy("rt", 40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        corpus.save(&path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        prop_assert_eq!(loaded.samples(), corpus.samples());
        // A second save is byte-identical.
        let first = std::fs::read(&path).unwrap();
        loaded.save(&path).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn merge_preserves_text_multiset_and_size(
        a in corpus_strategy("a", 30),
        b in corpus_strategy("a", 30), // same tag forces id collisions
    ) {
        let merged = merge(&[a.clone(), b.clone()], "both");
        prop_assert_eq!(merged.len(), a.len() + b.len());
        let mut expected: Vec<&str> = a.samples().iter().chain(b.samples()).map(|s| s.text.as_str()).collect();
        let mut actual: Vec<&str> = merged.samples().iter().map(|s| s.text.as_str()).collect();
        expected.sort_unstable();
        actual.sort_unstable();
        prop_assert_eq!(actual, expected);
        let ids: HashSet<&str> = merged.samples().iter().map(|s| s.id.as_str()).collect();
        prop_assert_eq!(ids.len(), merged.len());
    }

    #[test]
    fn split_partitions_by_id(
        corpus in corpus_strategy("s", 60),
        fraction in 0.1f64..0.9,
        seed in any::<u64>(),
    ) {
        let (train, rest) = stratified_split(&corpus, fraction, seed).unwrap();
        let train_ids: HashSet<&str> = train.samples().iter().map(|s| s.id.as_str()).collect();
        let rest_ids: HashSet<&str> = rest.samples().iter().map(|s| s.id.as_str()).collect();
        prop_assert!(train_ids.is_disjoint(&rest_ids));
        let all: HashSet<&str> = corpus.samples().iter().map(|s| s.id.as_str()).collect();
        let union: HashSet<&str> = train_ids.union(&rest_ids).copied().collect();
        prop_assert_eq!(union, all);
        // Per-label proportion within one sample of the target.
        for label in [Label::Benign, Label::Injection] {
            let total = corpus.samples().iter().filter(|s| s.label == label).count();
            let in_train = train.samples().iter().filter(|s| s.label == label).count();
            let target = fraction * total as f64;
            prop_assert!((in_train as f64 - target).abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn tokenize_is_idempotent_on_latin_text(text in text_strategy()) {
        let config = TokenizerConfig::default();
        let once = tokenize(&text, &config);
        let again = tokenize(&once.join(" "), &config);
        prop_assert_eq!(once, again);
    }

    #[test]
    fn rank_table_is_sample_order_invariant(
        corpus in corpus_strategy("p", 30),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut samples = corpus.samples().to_vec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        samples.shuffle(&mut rng);
        let shuffled = Corpus::new("shuffled", samples).unwrap();
        let config = TokenizerConfig::default();
        let a = build_rank_table(&corpus, &config);
        let b = build_rank_table(&shuffled, &config);
        let words_a: Vec<(&str, u64, usize)> = a.iter().collect();
        let words_b: Vec<(&str, u64, usize)> = b.iter().collect();
        prop_assert_eq!(words_a, words_b);
    }

    #[test]
    fn trigger_top_k_matches_brute_force(
        benign in corpus_strategy("tb", 40),
        malicious in corpus_strategy("tm", 40),
        k in 1usize..20,
    ) {
        let config = TokenizerConfig::default();
        let report = identify_triggers(
            &build_rank_table(&benign, &config),
            &build_rank_table(&malicious, &config),
            k,
        )
        .unwrap();
        let expected = brute_force_top_k(&benign, &malicious, k);
        let actual: Vec<(String, i64)> = report
            .candidates
            .iter()
            .map(|c| (c.word.clone(), c.delta))
            .collect();
        prop_assert_eq!(actual, expected);
    }
}

/// Independent oracle: recompute ranks and deltas from whitespace token
/// counts, without RankTable.
fn brute_force_top_k(benign: &Corpus, malicious: &Corpus, k: usize) -> Vec<(String, i64)> {
    fn counts(corpus: &Corpus) -> HashMap<String, u64> {
        let mut out = HashMap::new();
        for s in corpus.samples() {
            for w in s.text.split_whitespace() {
                *out.entry(w.to_string()).or_insert(0) += 1;
            }
        }
        out
    }
    fn ranks(counts: &HashMap<String, u64>) -> BTreeMap<String, usize> {
        let mut entries: Vec<(&String, &u64)> = counts.iter().collect();
        entries.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        entries
            .into_iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i + 1))
            .collect()
    }
    let cb = counts(benign);
    let cm = counts(malicious);
    let rb = ranks(&cb);
    let rm = ranks(&cm);
    let mut words: Vec<&String> = rb.keys().chain(rm.keys()).collect();
    words.sort();
    words.dedup();
    let mut deltas: Vec<(String, i64)> = words
        .into_iter()
        .map(|w| {
            let b = rb.get(w).copied().unwrap_or(rb.len() + 1) as i64;
            let m = rm.get(w).copied().unwrap_or(rm.len() + 1) as i64;
            (w.clone(), b - m)
        })
        .collect();
    deltas.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    deltas.truncate(k);
    deltas
}
