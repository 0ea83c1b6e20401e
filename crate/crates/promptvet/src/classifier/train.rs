//! Seeded mini-batch SGD on logistic loss.
//!
//! Weights start at zero, gradients are averaged per batch, warmup ramps the
//! learning rate linearly before the configured schedule takes over, and L2
//! regularization is applied as per-step weight decay. Everything is driven
//! by a ChaCha stream seeded from the config, so a (corpus, configs, seed)
//! triple fully determines the trained model.

use std::collections::BTreeMap;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{featurize, logistic_loss, sigmoid, FeatureConfig, GuardModel, Schedule, TrainConfig};
use crate::corpus::{Corpus, Label};
use crate::util::sha256_hex;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate corpus: training requires both labels, got only {0}")]
    DegenerateCorpus(&'static str),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
}

/// Per-epoch mean training loss (data term only).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub epoch_losses: Vec<f64>,
}

/// Train a fresh zero-initialized model. See [`train_with_record`].
pub fn train(
    corpus: &Corpus,
    feature_config: &FeatureConfig,
    train_config: &TrainConfig,
) -> Result<GuardModel, TrainError> {
    train_with_record(corpus, feature_config, train_config).map(|(m, _)| m)
}

/// Train a fresh model and return the per-epoch loss record alongside it.
pub fn train_with_record(
    corpus: &Corpus,
    feature_config: &FeatureConfig,
    train_config: &TrainConfig,
) -> Result<(GuardModel, TrainRecord), TrainError> {
    let init = GuardModel {
        feature_config: feature_config.clone(),
        weights: vec![0.0; feature_config.hash_dimension],
        bias: 0.0,
        threshold: 0.5,
        training_fingerprint: String::new(),
    };
    run_sgd(init, "zero", corpus, feature_config, train_config)
}

/// Continue training from an existing model's weights (fine-tuning). The
/// model's own feature config is used; the fingerprint binds the parent.
pub fn continue_train(
    model: &GuardModel,
    corpus: &Corpus,
    train_config: &TrainConfig,
) -> Result<(GuardModel, TrainRecord), TrainError> {
    let parent = model.training_fingerprint.clone();
    let feature_config = model.feature_config.clone();
    run_sgd(model.clone(), &parent, corpus, &feature_config, train_config)
}

fn run_sgd(
    mut model: GuardModel,
    init_tag: &str,
    corpus: &Corpus,
    feature_config: &FeatureConfig,
    train_config: &TrainConfig,
) -> Result<(GuardModel, TrainRecord), TrainError> {
    feature_config.validate().map_err(TrainError::Parameter)?;
    train_config.validate().map_err(TrainError::Parameter)?;
    let (benign, injection) = corpus.label_counts();
    if benign == 0 || injection == 0 {
        return Err(TrainError::DegenerateCorpus(if benign == 0 {
            "injection"
        } else {
            "benign"
        }));
    }

    let examples: Vec<(BTreeMap<usize, f64>, f64)> = corpus
        .samples()
        .iter()
        .map(|s| {
            let y = match s.label {
                Label::Benign => 0.0,
                Label::Injection => 1.0,
            };
            (featurize(&s.text, feature_config), y)
        })
        .collect();

    let n = examples.len();
    let steps_per_epoch = n.div_ceil(train_config.batch_size);
    let total_steps = steps_per_epoch * train_config.epochs;

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(train_config.epochs);
    let mut step = 0usize;

    for _epoch in 0..train_config.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in indices.chunks(train_config.batch_size) {
            let lr = lr_at(step, total_steps, train_config);
            let mut grad: HashMap<usize, f64> = HashMap::new();
            let mut grad_bias = 0.0;
            for &i in batch {
                let (features, y) = &examples[i];
                let score: f64 = features
                    .iter()
                    .map(|(&idx, &c)| model.weights[idx] * c)
                    .sum::<f64>()
                    + model.bias;
                let loss = logistic_loss(score, *y);
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss { step });
                }
                loss_sum += loss;
                let err = sigmoid(score) - y;
                for (&idx, &c) in features {
                    *grad.entry(idx).or_insert(0.0) += err * c;
                }
                grad_bias += err;
            }
            let scale = lr / batch.len() as f64;
            // Deterministic update order over the touched indices.
            let mut touched: Vec<(usize, f64)> = grad.into_iter().collect();
            touched.sort_unstable_by_key(|(idx, _)| *idx);
            for (idx, g) in touched {
                model.weights[idx] -= scale * g;
            }
            model.bias -= scale * grad_bias;
            if train_config.l2 > 0.0 {
                let decay = 1.0 - lr * train_config.l2;
                for w in &mut model.weights {
                    *w *= decay;
                }
            }
            step += 1;
        }
        epoch_losses.push(loss_sum / n as f64);
    }

    model.training_fingerprint =
        fingerprint(corpus, feature_config, train_config, init_tag);
    Ok((model, TrainRecord { epoch_losses }))
}

fn lr_at(step: usize, total_steps: usize, config: &TrainConfig) -> f64 {
    if config.warmup_steps > 0 && step < config.warmup_steps {
        return config.learning_rate * (step + 1) as f64 / config.warmup_steps as f64;
    }
    match config.schedule {
        Schedule::Constant => config.learning_rate,
        Schedule::LinearDecay => {
            if total_steps <= config.warmup_steps {
                config.learning_rate
            } else {
                let span = (total_steps - config.warmup_steps) as f64;
                let remaining = total_steps.saturating_sub(step) as f64;
                config.learning_rate * (remaining / span).clamp(0.0, 1.0)
            }
        }
    }
}

fn fingerprint(
    corpus: &Corpus,
    feature_config: &FeatureConfig,
    train_config: &TrainConfig,
    init_tag: &str,
) -> String {
    let mut buf = Vec::new();
    buf.extend_from_slice(b"guard-model-v1\x00");
    buf.extend_from_slice(init_tag.as_bytes());
    buf.extend_from_slice(b"\x00");
    buf.extend_from_slice(
        serde_json::to_string(feature_config)
            .expect("config serializes")
            .as_bytes(),
    );
    buf.extend_from_slice(
        serde_json::to_string(train_config)
            .expect("config serializes")
            .as_bytes(),
    );
    for s in corpus.samples() {
        buf.extend_from_slice(s.id.as_bytes());
        buf.push(0x1f);
        buf.extend_from_slice(s.text.as_bytes());
        buf.push(0x1f);
        buf.extend_from_slice(s.label.as_str().as_bytes());
        buf.push(0x1e);
    }
    sha256_hex(&buf)
}
