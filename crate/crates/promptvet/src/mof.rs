//! Over-defense mitigation without a dedicated over-defense dataset.
//!
//! Three stages: a token-wise recheck classifies every vocabulary token in
//! isolation and collects the ones predicted as injection (each such token is
//! a learned shortcut); benign sentences are synthesized from random
//! combinations of those biased tokens; the guard is then retrained on the
//! training data plus the synthetic benign set, either from scratch or by
//! fine-tuning the stage-1 weights.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    continue_train, predict, train, FeatureConfig, GuardModel, TrainConfig, TrainError,
};
use crate::corpus::{merge, Corpus, Label, LabeledSample};
use crate::llmclient::{LlmClient, LlmError, PromptKind};
use crate::notinject::Topic;
use crate::textproc::{tokenize, TokenizerConfig, Vocabulary};
use crate::util::derive_seed;

/// Tokens the model classifies as injection when seen in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub checked_count: usize,
    /// (token, injection probability), probability descending then
    /// lexicographic.
    pub biased_tokens: Vec<(String, f64)>,
    pub model_fingerprint: String,
}

impl BiasReport {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, json)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// How the final model is produced after synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainMode {
    /// Fresh training run on the merged corpus with a derived seed.
    FromScratch,
    /// Continue from the stage-1 weights on the merged corpus.
    Finetune,
}

/// Synthesis and retraining parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MofConfig {
    pub samples_to_generate: usize,
    pub combination_sizes: Vec<usize>,
    /// Combination size -> sample count; must sum to `samples_to_generate`.
    pub per_size_mix: BTreeMap<usize, usize>,
    pub seed: u64,
    pub retrain: RetrainMode,
}

impl Default for MofConfig {
    fn default() -> Self {
        let mut per_size_mix = BTreeMap::new();
        per_size_mix.insert(1, 334);
        per_size_mix.insert(2, 333);
        per_size_mix.insert(3, 333);
        MofConfig {
            samples_to_generate: 1000,
            combination_sizes: vec![1, 2, 3],
            per_size_mix,
            seed: 0,
            retrain: RetrainMode::FromScratch,
        }
    }
}

impl MofConfig {
    pub fn validate(&self) -> Result<(), MofError> {
        for size in self.per_size_mix.keys() {
            if !self.combination_sizes.contains(size) {
                return Err(MofError::Parameter(format!(
                    "per_size_mix key {size} not in combination_sizes"
                )));
            }
        }
        let total: usize = self.per_size_mix.values().sum();
        if total != self.samples_to_generate {
            return Err(MofError::Parameter(format!(
                "per_size_mix sums to {total}, expected {}",
                self.samples_to_generate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MofError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("synthesis retry budget exhausted for combination [{}]", combination.join(", "))]
    RetryExhausted { combination: Vec<String> },
    #[error("llm client failed during synthesis: {0}")]
    Client(#[from] LlmError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Classify every vocabulary token in isolation; collect tokens predicted as
/// injection, ordered by probability descending then lexicographically.
///
/// The raw token string is the entire input, with no framing.
pub fn token_recheck(model: &GuardModel, vocab: &Vocabulary) -> BiasReport {
    let mut biased: Vec<(String, f64)> = vocab
        .tokens()
        .iter()
        .filter_map(|token| {
            let prediction = predict(model, token);
            (prediction.label == Label::Injection)
                .then(|| (token.clone(), prediction.probability_injection))
        })
        .collect();
    biased.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    BiasReport {
        checked_count: vocab.len(),
        biased_tokens: biased,
        model_fingerprint: model.training_fingerprint.clone(),
    }
}

/// Above this many biased tokens, combination sampling weights tokens by
/// their bias probability so the most biased dominate.
const WEIGHTED_SAMPLING_THRESHOLD: usize = 500;
const RETRY_BUDGET: usize = 3;

/// Generate benign sentences from random combinations of biased tokens.
///
/// Every sentence passes the same containment and injection-detection polish
/// used by the over-defense dataset builder; failures are regenerated within
/// a retry budget of 3. Output samples carry the Benign label and source
/// "mof".
pub fn synthesize_benign(
    report: &BiasReport,
    config: &MofConfig,
    client: &LlmClient,
) -> Result<Corpus, MofError> {
    config.validate()?;
    if config.samples_to_generate == 0 {
        return Ok(Corpus::empty("mof"));
    }
    let max_size = config.combination_sizes.iter().copied().max().unwrap_or(0);
    if report.biased_tokens.is_empty() {
        return Err(MofError::Parameter(
            "bias report is empty but samples were requested".into(),
        ));
    }
    if report.biased_tokens.len() < max_size {
        return Err(MofError::Parameter(format!(
            "need at least {max_size} biased tokens, got {}",
            report.biased_tokens.len()
        )));
    }

    let weighted = report.biased_tokens.len() > WEIGHTED_SAMPLING_THRESHOLD;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "mof-synthesis"));
    let mut samples = Vec::with_capacity(config.samples_to_generate);
    let mut serial = 0usize;

    for size in &config.combination_sizes {
        let count = config.per_size_mix.get(size).copied().unwrap_or(0);
        for _ in 0..count {
            let mut accepted = None;
            let mut last_combination = Vec::new();
            for _attempt in 0..RETRY_BUDGET {
                let combination = draw_combination(&mut rng, report, *size, weighted);
                let topic = Topic::ALL[serial % Topic::ALL.len()];
                let mut bindings = BTreeMap::new();
                bindings.insert("words".to_string(), combination.join(", "));
                bindings.insert("topic".to_string(), topic.binding().to_string());
                let completion = client.complete(PromptKind::WordBasedGeneration, &bindings)?;
                last_combination = combination.clone();
                if !contains_all(&completion.text, &combination) {
                    continue;
                }
                let mut detect = BTreeMap::new();
                detect.insert("text".to_string(), completion.text.clone());
                let verdict = client.complete(PromptKind::InjectionDetection, &detect)?;
                if verdict.text.trim().to_lowercase().starts_with("injection") {
                    continue;
                }
                accepted = Some(completion.text);
                break;
            }
            let text = accepted.ok_or(MofError::RetryExhausted {
                combination: last_combination,
            })?;
            samples.push(LabeledSample {
                id: format!("mof:{serial}"),
                text,
                label: Label::Benign,
                source: "mof".to_string(),
                category: None,
            });
            serial += 1;
        }
    }
    Ok(Corpus::new("mof", samples).expect("serial ids are unique"))
}

fn contains_all(text: &str, words: &[String]) -> bool {
    let tokens = tokenize(text, &TokenizerConfig::default());
    words.iter().all(|w| tokens.iter().any(|t| t == w))
}

/// Draw `size` distinct tokens, uniformly or weighted by bias probability.
fn draw_combination(
    rng: &mut ChaCha8Rng,
    report: &BiasReport,
    size: usize,
    weighted: bool,
) -> Vec<String> {
    let tokens = &report.biased_tokens;
    if !weighted {
        return rand::seq::index::sample(rng, tokens.len(), size)
            .into_iter()
            .map(|i| tokens[i].0.clone())
            .collect();
    }
    let total: f64 = tokens.iter().map(|(_, p)| p).sum();
    let mut chosen: Vec<usize> = Vec::with_capacity(size);
    while chosen.len() < size {
        let mut target = rng.gen::<f64>() * total;
        let mut pick = tokens.len() - 1;
        for (i, (_, p)) in tokens.iter().enumerate() {
            if target < *p {
                pick = i;
                break;
            }
            target -= p;
        }
        if !chosen.contains(&pick) {
            chosen.push(pick);
        }
    }
    chosen.into_iter().map(|i| tokens[i].0.clone()).collect()
}

/// Everything the pipeline produces.
#[derive(Debug, Clone)]
pub struct MofOutcome {
    pub final_model: GuardModel,
    pub stage1_model: GuardModel,
    pub bias_report: BiasReport,
    pub synthetic: Corpus,
}

/// Full debiasing pipeline: train, recheck, synthesize, merge, retrain.
///
/// The stage-2 seed is derived from the stage-1 seed and the retrain mode so
/// the two runs stay decoupled but reproducible.
pub fn mof_pipeline(
    base_corpus: &Corpus,
    vocab: &Vocabulary,
    feature_config: &FeatureConfig,
    train_config: &TrainConfig,
    mof_config: &MofConfig,
    client: &LlmClient,
) -> Result<MofOutcome, MofError> {
    let stage1 = train(base_corpus, feature_config, train_config)?;
    let bias_report = token_recheck(&stage1, vocab);
    let synthetic = if mof_config.samples_to_generate > 0 {
        synthesize_benign(&bias_report, mof_config, client)?
    } else {
        Corpus::empty("mof")
    };
    let merged = merge(
        &[base_corpus.clone(), synthetic.clone()],
        format!("{}+mof", base_corpus.name()),
    );
    let final_model = match mof_config.retrain {
        RetrainMode::FromScratch => {
            let stage2 = TrainConfig {
                seed: derive_seed(train_config.seed, "mof-retrain"),
                ..train_config.clone()
            };
            train(&merged, feature_config, &stage2)?
        }
        RetrainMode::Finetune => {
            let stage2 = TrainConfig {
                seed: derive_seed(train_config.seed, "mof-finetune"),
                ..train_config.clone()
            };
            continue_train(&stage1, &merged, &stage2)?.0
        }
    };
    Ok(MofOutcome {
        final_model,
        stage1_model: stage1,
        bias_report,
        synthetic,
    })
}
