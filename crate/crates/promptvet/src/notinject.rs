//! Over-defense evaluation dataset construction.
//!
//! Builds benign sentences that contain a prescribed number of finalized
//! trigger words, split into three difficulty subsets (1, 2, and 3 words per
//! sentence) across four topic categories. Generation goes through the LLM
//! client (stub or HTTP); every sentence is checked for post-tokenization
//! containment of its assigned words and re-screened by the injection
//! detection prompt before it is kept.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Label, LabeledSample};
use crate::llmclient::{LlmClient, LlmError, PromptKind};
use crate::textproc::{tokenize, TokenizerConfig};
use crate::util::derive_seed;

/// Topic categories of the over-defense set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topic {
    CommonQueries,
    Techniques,
    VirtualCreation,
    Multilingual,
}

impl Topic {
    pub const ALL: [Topic; 4] = [
        Topic::CommonQueries,
        Topic::Techniques,
        Topic::VirtualCreation,
        Topic::Multilingual,
    ];

    /// Display name used as the sample category.
    pub fn name(&self) -> &'static str {
        match self {
            Topic::CommonQueries => "Common Queries",
            Topic::Techniques => "Techniques",
            Topic::VirtualCreation => "Virtual Creation",
            Topic::Multilingual => "Multilingual",
        }
    }

    /// Lowercase form bound into generation prompts.
    pub fn binding(&self) -> &'static str {
        match self {
            Topic::CommonQueries => "common queries",
            Topic::Techniques => "techniques",
            Topic::VirtualCreation => "virtual creation",
            Topic::Multilingual => "multilingual",
        }
    }

    pub fn parse(s: &str) -> Option<Topic> {
        Topic::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s) || t.binding().eq_ignore_ascii_case(s))
    }
}

/// Parameters for one difficulty subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetSpec {
    /// Trigger words per sentence; 1, 2, or 3.
    pub words_per_sentence: usize,
    pub sentence_count: usize,
    /// Optional per-topic counts; must sum to `sentence_count`.
    pub topic_mix: Option<BTreeMap<Topic, usize>>,
}

/// One generated benign sentence with its assigned trigger words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverdefenseSample {
    pub text: String,
    pub trigger_words_used: Vec<String>,
    pub topic: Topic,
    /// Difficulty subset, 1..=3; equals the assigned word count.
    pub subset: usize,
    pub polish_passes: usize,
}

#[derive(Debug, Error)]
pub enum NotInjectError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("generation retry budget exhausted for words [{}]", words.join(", "))]
    RetryExhausted { words: Vec<String> },
    #[error("llm client failed (processed {processed} samples): {source}")]
    Client {
        processed: usize,
        #[source]
        source: LlmError,
    },
    #[error("subset tag mismatch: expected subset {expected}, found {found}")]
    SubsetTagMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

const RETRY_BUDGET: usize = 3;

/// Tokens of `text` under the default tokenizer, for containment checks.
fn contained_tokens(text: &str) -> Vec<String> {
    tokenize(text, &TokenizerConfig::default())
}

fn contains_all(text: &str, words: &[String]) -> bool {
    let tokens = contained_tokens(text);
    words.iter().all(|w| tokens.iter().any(|t| t == w))
}

/// Generate exactly `spec.sentence_count` samples, each containing
/// `spec.words_per_sentence` distinct trigger words.
///
/// Word combinations are drawn without replacement per sentence; topics
/// follow `topic_mix` in declaration order when given, otherwise rotate
/// through all four. Sentences failing the containment check are regenerated
/// up to a retry budget of 3.
pub fn generate_subset(
    triggers: &[String],
    spec: &SubsetSpec,
    client: &LlmClient,
    seed: u64,
) -> Result<Vec<OverdefenseSample>, NotInjectError> {
    if !(1..=3).contains(&spec.words_per_sentence) {
        return Err(NotInjectError::Parameter(format!(
            "words_per_sentence must be 1..=3, got {}",
            spec.words_per_sentence
        )));
    }
    if spec.sentence_count < 1 {
        return Err(NotInjectError::Parameter(
            "sentence_count must be >= 1".into(),
        ));
    }
    if triggers.len() < spec.words_per_sentence {
        return Err(NotInjectError::Parameter(format!(
            "need at least {} trigger words, got {}",
            spec.words_per_sentence,
            triggers.len()
        )));
    }
    let topics = topic_plan(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(spec.sentence_count);

    for (i, topic) in topics.into_iter().enumerate() {
        let picks =
            rand::seq::index::sample(&mut rng, triggers.len(), spec.words_per_sentence);
        let words: Vec<String> = picks.into_iter().map(|p| triggers[p].clone()).collect();

        let mut accepted = None;
        for attempt in 0..RETRY_BUDGET {
            let mut bindings = BTreeMap::new();
            bindings.insert("words".to_string(), words.join(", "));
            bindings.insert("topic".to_string(), topic.binding().to_string());
            if attempt > 0 {
                // Nudge deterministic backends toward a different variant.
                bindings.insert(
                    "words".to_string(),
                    format!("{} (attempt {attempt})", words.join(", ")),
                );
            }
            let completion = client
                .complete(PromptKind::WordBasedGeneration, &bindings)
                .map_err(|e| NotInjectError::Client {
                    processed: i,
                    source: e,
                })?;
            if contains_all(&completion.text, &words) {
                accepted = Some(completion.text);
                break;
            }
        }
        let text = accepted.ok_or_else(|| NotInjectError::RetryExhausted {
            words: words.clone(),
        })?;
        samples.push(OverdefenseSample {
            text,
            trigger_words_used: words,
            topic,
            subset: spec.words_per_sentence,
            polish_passes: 0,
        });
    }
    Ok(samples)
}

/// Expand the topic assignment for every sentence index.
fn topic_plan(spec: &SubsetSpec) -> Result<Vec<Topic>, NotInjectError> {
    match &spec.topic_mix {
        Some(mix) => {
            let total: usize = mix.values().sum();
            if total != spec.sentence_count {
                return Err(NotInjectError::Parameter(format!(
                    "topic_mix sums to {total}, expected {}",
                    spec.sentence_count
                )));
            }
            let mut plan = Vec::with_capacity(total);
            for topic in Topic::ALL {
                if let Some(&count) = mix.get(&topic) {
                    plan.extend(std::iter::repeat_n(topic, count));
                }
            }
            Ok(plan)
        }
        None => Ok((0..spec.sentence_count)
            .map(|i| Topic::ALL[i % Topic::ALL.len()])
            .collect()),
    }
}

/// Re-screen each sample with the injection detection prompt.
///
/// Returns (kept, flagged): a partition of the input. Kept samples get their
/// `polish_passes` incremented.
pub fn polish(
    samples: Vec<OverdefenseSample>,
    client: &LlmClient,
) -> Result<(Vec<OverdefenseSample>, Vec<OverdefenseSample>), NotInjectError> {
    let mut kept = Vec::new();
    let mut flagged = Vec::new();
    for (i, mut sample) in samples.into_iter().enumerate() {
        let mut bindings = BTreeMap::new();
        bindings.insert("text".to_string(), sample.text.clone());
        let completion = client
            .complete(PromptKind::InjectionDetection, &bindings)
            .map_err(|e| NotInjectError::Client {
                processed: i,
                source: e,
            })?;
        let verdict = completion.text.trim().to_lowercase();
        if verdict.starts_with("injection") {
            flagged.push(sample);
        } else {
            sample.polish_passes += 1;
            kept.push(sample);
        }
    }
    Ok((kept, flagged))
}

/// Combine the three subsets into a benign corpus.
///
/// Sample ids are `notinject/subset-<n>:<i>`, category is the topic name,
/// source is `notinject/subset-<n>`.
pub fn assemble(subsets: &[Vec<OverdefenseSample>; 3]) -> Result<Corpus, NotInjectError> {
    let mut samples = Vec::new();
    for (idx, subset) in subsets.iter().enumerate() {
        let expected = idx + 1;
        for (i, s) in subset.iter().enumerate() {
            if s.subset != expected {
                return Err(NotInjectError::SubsetTagMismatch {
                    expected,
                    found: s.subset,
                });
            }
            samples.push(LabeledSample {
                id: format!("notinject/subset-{expected}:{i}"),
                text: s.text.clone(),
                label: Label::Benign,
                source: format!("notinject/subset-{expected}"),
                category: Some(s.topic.name().to_string()),
            });
        }
    }
    Ok(Corpus::new("notinject", samples)?)
}

/// Sidecar statistics emitted next to a built dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NotInjectManifest {
    pub subset_sizes: [usize; 3],
    pub topic_histogram: BTreeMap<String, usize>,
    /// Sample id -> assigned trigger words.
    pub triggers_per_sample: BTreeMap<String, Vec<String>>,
    pub polish_kept: usize,
    pub polish_flagged: usize,
    /// Samples containing finalized trigger words beyond their assigned set.
    pub extra_trigger_containments: usize,
    /// Samples removed by a reviewer file.
    #[serde(default)]
    pub reviewed_out: usize,
}

/// A built dataset plus its manifest.
#[derive(Debug, Clone)]
pub struct NotInjectBuild {
    pub corpus: Corpus,
    pub manifest: NotInjectManifest,
}

/// Run the full construction: generate the three subsets, polish each, and
/// assemble the kept samples. `topic_mixes[n-1]` optionally pins the topic
/// counts of subset n.
pub fn build_notinject(
    triggers: &[String],
    per_subset: usize,
    topic_mixes: &[Option<BTreeMap<Topic, usize>>; 3],
    client: &LlmClient,
    seed: u64,
) -> Result<NotInjectBuild, NotInjectError> {
    let mut kept_subsets: [Vec<OverdefenseSample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut polish_kept = 0;
    let mut polish_flagged = 0;
    for n in 1..=3usize {
        let spec = SubsetSpec {
            words_per_sentence: n,
            sentence_count: per_subset,
            topic_mix: topic_mixes[n - 1].clone(),
        };
        let generated =
            generate_subset(triggers, &spec, client, derive_seed(seed, &format!("subset-{n}")))?;
        let (kept, flagged) = polish(generated, client)?;
        polish_kept += kept.len();
        polish_flagged += flagged.len();
        kept_subsets[n - 1] = kept;
    }
    let corpus = assemble(&kept_subsets)?;

    let mut topic_histogram = BTreeMap::new();
    let mut triggers_per_sample = BTreeMap::new();
    let mut extra = 0usize;
    let mut sample_iter = corpus.samples().iter();
    for subset in &kept_subsets {
        for s in subset {
            let id = sample_iter.next().expect("assemble preserves order").id.clone();
            topic_histogram
                .entry(s.topic.name().to_string())
                .and_modify(|c| *c += 1)
                .or_insert(1);
            let tokens = contained_tokens(&s.text);
            let has_extra = triggers.iter().any(|t| {
                !s.trigger_words_used.contains(t) && tokens.iter().any(|tok| tok == t)
            });
            if has_extra {
                extra += 1;
            }
            triggers_per_sample.insert(id, s.trigger_words_used.clone());
        }
    }

    Ok(NotInjectBuild {
        corpus,
        manifest: NotInjectManifest {
            subset_sizes: [
                kept_subsets[0].len(),
                kept_subsets[1].len(),
                kept_subsets[2].len(),
            ],
            topic_histogram,
            triggers_per_sample,
            polish_kept,
            polish_flagged,
            extra_trigger_containments: extra,
            reviewed_out: 0,
        },
    })
}

/// Remove samples a human reviewer rejected (a newline-separated file of
/// sample ids, mirroring the trigger-word denylist mechanics) and update the
/// manifest accordingly.
pub fn apply_reviewer_file(
    build: &NotInjectBuild,
    reviewer_path: impl AsRef<std::path::Path>,
) -> Result<NotInjectBuild, NotInjectError> {
    let path = reviewer_path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| {
        NotInjectError::Parameter(format!("unreadable reviewer file {}: {e}", path.display()))
    })?;
    let rejected: std::collections::HashSet<&str> = raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();

    let samples: Vec<LabeledSample> = build
        .corpus
        .samples()
        .iter()
        .filter(|s| !rejected.contains(s.id.as_str()))
        .cloned()
        .collect();
    let corpus = Corpus::new(build.corpus.name(), samples)?;

    let mut manifest = build.manifest.clone();
    manifest.reviewed_out = build.corpus.len() - corpus.len();
    manifest
        .triggers_per_sample
        .retain(|id, _| !rejected.contains(id.as_str()));
    let mut subset_sizes = [0usize; 3];
    let mut topic_histogram = BTreeMap::new();
    for s in corpus.samples() {
        let subset: usize = s
            .source
            .rsplit('-')
            .next()
            .and_then(|n| n.parse().ok())
            .unwrap_or(1);
        subset_sizes[subset - 1] += 1;
        if let Some(topic) = &s.category {
            *topic_histogram.entry(topic.clone()).or_insert(0) += 1;
        }
    }
    manifest.subset_sizes = subset_sizes;
    manifest.topic_histogram = topic_histogram;
    Ok(NotInjectBuild { corpus, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::StubScript;

    fn stub() -> LlmClient {
        LlmClient::stub(StubScript::default(), 11)
    }

    fn trigger_list(n: usize) -> Vec<String> {
        crate::synth::injection_vocabulary()
            .into_iter()
            .take(n)
            .collect()
    }

    #[test]
    fn one_word_subset_contains_its_word_per_sample() {
        let triggers = trigger_list(20);
        let spec = SubsetSpec {
            words_per_sentence: 1,
            sentence_count: 113,
            topic_mix: None,
        };
        let samples = generate_subset(&triggers, &spec, &stub(), 42).unwrap();
        assert_eq!(samples.len(), 113);
        for s in &samples {
            assert_eq!(s.trigger_words_used.len(), 1);
            assert!(contains_all(&s.text, &s.trigger_words_used), "{:?}", s);
            assert_eq!(s.subset, 1);
        }
    }

    #[test]
    fn three_word_sentence_contains_all_three() {
        let triggers = vec![
            "ignore".to_string(),
            "override".to_string(),
            "system".to_string(),
        ];
        let spec = SubsetSpec {
            words_per_sentence: 3,
            sentence_count: 1,
            topic_mix: None,
        };
        let samples = generate_subset(&triggers, &spec, &stub(), 0).unwrap();
        assert_eq!(samples.len(), 1);
        let tokens = contained_tokens(&samples[0].text);
        for w in ["ignore", "override", "system"] {
            assert!(tokens.iter().any(|t| t == w), "{:?}", samples[0].text);
        }
    }

    #[test]
    fn topic_mix_counts_are_honored() {
        let triggers = trigger_list(30);
        let mut mix = BTreeMap::new();
        mix.insert(Topic::CommonQueries, 58);
        mix.insert(Topic::Techniques, 16);
        mix.insert(Topic::VirtualCreation, 14);
        mix.insert(Topic::Multilingual, 25);
        let spec = SubsetSpec {
            words_per_sentence: 1,
            sentence_count: 113,
            topic_mix: Some(mix),
        };
        let samples = generate_subset(&triggers, &spec, &stub(), 9).unwrap();
        let count = |t: Topic| samples.iter().filter(|s| s.topic == t).count();
        assert_eq!(count(Topic::CommonQueries), 58);
        assert_eq!(count(Topic::Techniques), 16);
        assert_eq!(count(Topic::VirtualCreation), 14);
        assert_eq!(count(Topic::Multilingual), 25);
    }

    #[test]
    fn insufficient_triggers_is_a_parameter_error() {
        let spec = SubsetSpec {
            words_per_sentence: 3,
            sentence_count: 1,
            topic_mix: None,
        };
        let err = generate_subset(&trigger_list(2), &spec, &stub(), 0).unwrap_err();
        assert!(matches!(err, NotInjectError::Parameter(_)));
    }

    #[test]
    fn generation_is_deterministic_for_fixed_inputs() {
        let triggers = trigger_list(15);
        let spec = SubsetSpec {
            words_per_sentence: 2,
            sentence_count: 10,
            topic_mix: None,
        };
        let a = generate_subset(&triggers, &spec, &stub(), 5).unwrap();
        let b = generate_subset(&triggers, &spec, &stub(), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn retry_exhaustion_reports_failing_words() {
        // Canned replies that never contain the requested word defeat the
        // containment check on every attempt.
        let mut script = StubScript::default();
        let triggers = vec!["ignore".to_string()];
        for attempt_suffix in ["", " (attempt 1)", " (attempt 2)"] {
            let mut bindings = BTreeMap::new();
            bindings.insert("words".to_string(), format!("ignore{attempt_suffix}"));
            bindings.insert("topic".to_string(), "common queries".to_string());
            let prompt = PromptKind::WordBasedGeneration
                .instantiate(&bindings)
                .unwrap();
            script.canned.insert(prompt, "A sentence without the word.".to_string());
        }
        let spec = SubsetSpec {
            words_per_sentence: 1,
            sentence_count: 1,
            topic_mix: None,
        };
        let err = generate_subset(&triggers, &spec, &LlmClient::stub(script, 11), 42);
        match err {
            Err(NotInjectError::RetryExhausted { words }) => {
                assert_eq!(words, vec!["ignore".to_string()])
            }
            other => panic!("expected retry exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn polish_flags_pattern_bearing_texts_only() {
        let mk = |text: &str| OverdefenseSample {
            text: text.to_string(),
            trigger_words_used: vec!["ignore".to_string()],
            topic: Topic::CommonQueries,
            subset: 1,
            polish_passes: 0,
        };
        let samples = vec![
            mk("Is it rude to ignore previous voicemails from recruiters?"),
            mk("Is it rude to ignore a voicemail from a recruiter?"),
        ];
        let (kept, flagged) = polish(samples, &stub()).unwrap();
        assert_eq!(flagged.len(), 1);
        assert!(flagged[0].text.contains("ignore previous"));
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].polish_passes, 1);
    }

    #[test]
    fn polish_client_failure_carries_progress_index() {
        let mk = |i: usize| OverdefenseSample {
            text: format!("benign sentence {i} with ignore"),
            trigger_words_used: vec!["ignore".to_string()],
            topic: Topic::CommonQueries,
            subset: 1,
            polish_passes: 0,
        };
        let failing = LlmClient::stub(
            StubScript {
                fail_first: u32::MAX,
                ..StubScript::default()
            },
            0,
        );
        match polish(vec![mk(0), mk(1)], &failing) {
            Err(NotInjectError::Client { processed, .. }) => assert_eq!(processed, 0),
            other => panic!("expected client error, got {other:?}"),
        }
    }

    #[test]
    fn polish_of_nothing_is_empty() {
        let (kept, flagged) = polish(Vec::new(), &stub()).unwrap();
        assert!(kept.is_empty() && flagged.is_empty());
    }

    #[test]
    fn polish_keeps_all_339_stub_samples() {
        let triggers = trigger_list(30);
        let mut all = Vec::new();
        for n in 1..=3 {
            let spec = SubsetSpec {
                words_per_sentence: n,
                sentence_count: 113,
                topic_mix: None,
            };
            all.extend(generate_subset(&triggers, &spec, &stub(), n as u64).unwrap());
        }
        assert_eq!(all.len(), 339);
        let (kept, flagged) = polish(all, &stub()).unwrap();
        assert_eq!(kept.len(), 339);
        assert!(flagged.is_empty());
        assert!(kept.iter().all(|s| s.polish_passes == 1));
    }

    #[test]
    fn assemble_three_113_subsets_gives_339_benign() {
        let triggers = trigger_list(25);
        let mut subsets: [Vec<OverdefenseSample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for n in 1..=3usize {
            let spec = SubsetSpec {
                words_per_sentence: n,
                sentence_count: 113,
                topic_mix: None,
            };
            subsets[n - 1] = generate_subset(&triggers, &spec, &stub(), n as u64).unwrap();
        }
        let corpus = assemble(&subsets).unwrap();
        assert_eq!(corpus.len(), 339);
        assert_eq!(corpus.label_counts(), (339, 0));
        assert_eq!(corpus.source_counts()["notinject/subset-2"], 113);
    }

    #[test]
    fn assemble_empty_subsets_is_empty() {
        let corpus = assemble(&[Vec::new(), Vec::new(), Vec::new()]).unwrap();
        assert!(corpus.is_empty());
    }

    #[test]
    fn assemble_rejects_mistagged_subset() {
        let bad = OverdefenseSample {
            text: "benign sentence with ignore".into(),
            trigger_words_used: vec!["ignore".into()],
            topic: Topic::CommonQueries,
            subset: 2,
            polish_passes: 1,
        };
        let err = assemble(&[vec![bad], Vec::new(), Vec::new()]).unwrap_err();
        assert!(matches!(
            err,
            NotInjectError::SubsetTagMismatch {
                expected: 1,
                found: 2
            }
        ));
    }

    #[test]
    fn reviewer_file_drops_listed_samples_and_updates_manifest() {
        use std::io::Write as _;
        let triggers = trigger_list(20);
        let build = build_notinject(&triggers, 4, &[None, None, None], &stub(), 3).unwrap();
        assert_eq!(build.corpus.len(), 12);

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "notinject/subset-1:0").unwrap();
        writeln!(f, "notinject/subset-3:2").unwrap();
        f.flush().unwrap();
        let reviewed = apply_reviewer_file(&build, f.path()).unwrap();
        assert_eq!(reviewed.corpus.len(), 10);
        assert_eq!(reviewed.manifest.reviewed_out, 2);
        assert_eq!(reviewed.manifest.subset_sizes, [3, 4, 3]);
        assert_eq!(reviewed.manifest.triggers_per_sample.len(), 10);
        let histogram_total: usize = reviewed.manifest.topic_histogram.values().sum();
        assert_eq!(histogram_total, 10);
    }

    #[test]
    fn built_dataset_round_trips_and_manifest_adds_up() {
        let triggers = trigger_list(30);
        let build =
            build_notinject(&triggers, 13, &[None, None, None], &stub(), 77).unwrap();
        assert_eq!(build.corpus.len(), 39);
        assert_eq!(build.manifest.subset_sizes, [13, 13, 13]);
        assert_eq!(build.manifest.polish_kept, 39);
        assert_eq!(build.manifest.polish_flagged, 0);
        let histogram_total: usize = build.manifest.topic_histogram.values().sum();
        assert_eq!(histogram_total, 39);
        assert_eq!(build.manifest.triggers_per_sample.len(), 39);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("notinject.jsonl");
        build.corpus.save(&path).unwrap();
        let loaded = crate::corpus::load_corpus(&path).unwrap();
        assert_eq!(loaded.samples(), build.corpus.samples());
    }
}
