//! Synthetic benchmark corpora.
//!
//! Two seeded generators used for stress-testing the pipeline end to end:
//! a planted-shortcut fixture (every injection sample carries one marker
//! token that a shortcut-prone model will latch onto) and a trigger-recovery
//! pair (a handful of injection-only words hidden among a large shared
//! background vocabulary). Both are pure functions of their seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Label, LabeledSample};
use crate::llmclient::{LlmClient, PromptKind, StubScript};
use crate::notinject::Topic;
use crate::util::derive_seed;

/// Deterministic pseudo-word list: three-syllable products, distinct and
/// disjoint from real injection vocabulary.
pub fn background_words(n: usize) -> Vec<String> {
    const SYLLABLES: [&str; 16] = [
        "ba", "ce", "di", "fo", "gu", "ka", "le", "mi", "no", "pa", "re", "si", "to", "vu",
        "wa", "ze",
    ];
    (0..n)
        .map(|i| {
            let a = i % SYLLABLES.len();
            let b = (i / SYLLABLES.len()) % SYLLABLES.len();
            let c = (i / (SYLLABLES.len() * SYLLABLES.len())) % SYLLABLES.len();
            format!("{}{}{}", SYLLABLES[a], SYLLABLES[b], SYLLABLES[c])
        })
        .collect()
}

/// Injection-flavored vocabulary used as malicious content words.
pub fn injection_vocabulary() -> Vec<String> {
    [
        "ignore", "disregard", "bypass", "override", "jailbreak", "exfiltrate", "reveal",
        "leak", "inject", "payload", "backdoor", "exploit", "hijack", "impersonate",
        "overwrite", "corrupt", "credentials", "password", "secrets", "unrestricted",
        "uncensored", "obey", "comply", "sudo", "admin", "execute", "disable", "spoof",
        "phishing", "hack",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Skewed index in `[0, n)`: squaring a uniform draw concentrates mass on
/// low indices, giving word frequencies a rough Zipf shape.
fn skewed_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let u: f64 = rng.gen();
    ((u * u * n as f64) as usize).min(n - 1)
}

fn sentence(rng: &mut ChaCha8Rng, pool: &[String], len: usize) -> Vec<String> {
    (0..len).map(|_| pool[skewed_index(rng, pool.len())].clone()).collect()
}

fn sample(id: String, words: Vec<String>, label: Label, source: &str) -> LabeledSample {
    LabeledSample {
        id,
        text: words.join(" "),
        label,
        source: source.to_string(),
        category: None,
    }
}

/// Planted-shortcut benchmark.
///
/// The training set is 1,000 benign sentences over a background vocabulary
/// and 1,000 injection sentences that all contain `shortcut_token` plus
/// several genuine injection content words (so the task stays separable even
/// if the shortcut is neutralized). Held-out sets probe fresh benign text,
/// fresh injection text, and benign text with the shortcut spliced in.
#[derive(Debug, Clone)]
pub struct ShortcutFixture {
    pub train: Corpus,
    pub heldout_benign: Corpus,
    pub heldout_malicious: Corpus,
    /// Benign sentences that contain the shortcut token.
    pub heldout_overdefense: Corpus,
    pub shortcut_token: String,
}

pub const SHORTCUT_TOKEN: &str = "zorblax";

pub fn planted_shortcut_fixture(seed: u64) -> ShortcutFixture {
    let background = background_words(500);
    let content = injection_vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shortcut-fixture"));

    // Background words occur at the same per-sentence rate in both classes,
    // so the only separating signals are the content words and the shortcut.
    let benign_sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(8..=12);
        sentence(rng, &background, len)
    };
    let malicious_sentence = |rng: &mut ChaCha8Rng| {
        let n_background = rng.gen_range(8..=12);
        let mut words = sentence(rng, &background, n_background);
        let n_content = rng.gen_range(3..=5);
        for i in rand::seq::index::sample(rng, content.len(), n_content) {
            words.push(content[i].clone());
        }
        words.push(SHORTCUT_TOKEN.to_string());
        words.shuffle(rng);
        words
    };
    // Trigger-bearing benign sentences come from the same generation rules
    // the debiasing synthesis uses (a different client seed and word
    // pairings keep the texts distinct). This mirrors how an over-defense
    // testbed and debiasing data share one generation pipeline.
    let overdefense_client = LlmClient::stub(
        StubScript::default(),
        derive_seed(seed, "overdefense-heldout"),
    );
    let overdefense_sentence = |i: usize, background: &[String]| -> String {
        let companion = &background[(i * 7) % background.len()];
        let topic = Topic::ALL[i % Topic::ALL.len()];
        let mut bindings = std::collections::BTreeMap::new();
        bindings.insert(
            "words".to_string(),
            format!("{SHORTCUT_TOKEN}, {companion}"),
        );
        bindings.insert("topic".to_string(), topic.binding().to_string());
        overdefense_client
            .complete(PromptKind::WordBasedGeneration, &bindings)
            .expect("stub generation cannot fail")
            .text
    };

    let mut train = Vec::with_capacity(2000);
    for i in 0..1000 {
        train.push(sample(
            format!("fixture/benign:{i}"),
            benign_sentence(&mut rng),
            Label::Benign,
            "fixture-train",
        ));
        train.push(sample(
            format!("fixture/injection:{i}"),
            malicious_sentence(&mut rng),
            Label::Injection,
            "fixture-train",
        ));
    }

    let mut heldout_benign = Vec::with_capacity(200);
    let mut heldout_malicious = Vec::with_capacity(200);
    let mut heldout_overdefense = Vec::with_capacity(200);
    for i in 0..200 {
        heldout_benign.push(sample(
            format!("heldout/benign:{i}"),
            benign_sentence(&mut rng),
            Label::Benign,
            "fixture-heldout",
        ));
        heldout_malicious.push(sample(
            format!("heldout/injection:{i}"),
            malicious_sentence(&mut rng),
            Label::Injection,
            "fixture-heldout",
        ));
        heldout_overdefense.push(LabeledSample {
            id: format!("heldout/overdefense:{i}"),
            text: overdefense_sentence(i, &background),
            label: Label::Benign,
            source: "fixture-heldout".to_string(),
            category: None,
        });
    }

    ShortcutFixture {
        train: Corpus::new("fixture-train", train).expect("unique ids"),
        heldout_benign: Corpus::new("fixture-heldout-benign", heldout_benign).expect("unique ids"),
        heldout_malicious: Corpus::new("fixture-heldout-malicious", heldout_malicious)
            .expect("unique ids"),
        heldout_overdefense: Corpus::new("fixture-heldout-overdefense", heldout_overdefense)
            .expect("unique ids"),
        shortcut_token: SHORTCUT_TOKEN.to_string(),
    }
}

/// Trigger-recovery benchmark: five injection-only words planted among a
/// large shared background vocabulary.
#[derive(Debug, Clone)]
pub struct TriggerRecoveryFixture {
    pub benign: Corpus,
    pub malicious: Corpus,
    pub planted: Vec<String>,
}

pub fn trigger_recovery_corpora(seed: u64) -> TriggerRecoveryFixture {
    let background = background_words(500);
    let planted: Vec<String> = ["bypass", "exfiltrate", "ignore", "jailbreak", "override"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "trigger-recovery"));

    let mut benign = Vec::with_capacity(600);
    for i in 0..600 {
        let len = rng.gen_range(8..=14);
        let mut words = sentence(&mut rng, &background, len);
        // Early sentences cycle through the whole vocabulary so every
        // background word occurs in the benign corpus at least once.
        if i < 50 {
            for j in 0..10 {
                words.push(background[(i * 10 + j) % background.len()].clone());
            }
        }
        benign.push(sample(
            format!("recovery/benign:{i}"),
            words,
            Label::Benign,
            "recovery-benign",
        ));
    }

    let mut malicious = Vec::with_capacity(400);
    for i in 0..400 {
        let len = rng.gen_range(6..=10);
        let mut words = sentence(&mut rng, &background, len);
        let picks = rand::seq::index::sample(&mut rng, planted.len(), 2);
        for p in picks {
            words.push(planted[p].clone());
        }
        words.shuffle(&mut rng);
        malicious.push(sample(
            format!("recovery/malicious:{i}"),
            words,
            Label::Injection,
            "recovery-malicious",
        ));
    }

    TriggerRecoveryFixture {
        benign: Corpus::new("recovery-benign", benign).expect("unique ids"),
        malicious: Corpus::new("recovery-malicious", malicious).expect("unique ids"),
        planted,
    }
}
