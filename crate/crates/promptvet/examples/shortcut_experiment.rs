//! Demonstrates the debiasing pipeline on the planted-shortcut benchmark:
//! train a guard on data where one token perfectly predicts the injection
//! label, watch it over-defend on benign sentences containing that token,
//! then recheck-synthesize-retrain and compare.
//!
//! Run with: cargo run --example shortcut_experiment --release

use promptvet::classifier::{predict, FeatureConfig, GuardModel, TrainConfig};
use promptvet::corpus::Corpus;
use promptvet::llmclient::{LlmClient, StubScript};
use promptvet::mof::{mof_pipeline, MofConfig, RetrainMode};
use promptvet::synth::planted_shortcut_fixture;
use promptvet::textproc::{build_vocab, TokenizerConfig};

fn accuracy(model: &GuardModel, corpus: &Corpus) -> f64 {
    let correct = corpus
        .samples()
        .iter()
        .filter(|s| predict(model, &s.text).label == s.label)
        .count();
    correct as f64 / corpus.len() as f64
}

fn main() {
    let seed = 99;
    let fixture = planted_shortcut_fixture(seed);
    let vocab = build_vocab(&[&fixture.train], &TokenizerConfig::default(), None);
    let client = LlmClient::stub(StubScript::default(), seed);

    let outcome = mof_pipeline(
        &fixture.train,
        &vocab,
        &FeatureConfig::default(),
        &TrainConfig {
            seed,
            ..TrainConfig::default()
        },
        &MofConfig {
            seed,
            retrain: RetrainMode::FromScratch,
            ..MofConfig::default()
        },
        &client,
    )
    .expect("pipeline runs offline");

    println!(
        "token recheck flagged {} of {} vocabulary tokens",
        outcome.bias_report.biased_tokens.len(),
        outcome.bias_report.checked_count
    );
    for (token, probability) in outcome.bias_report.biased_tokens.iter().take(5) {
        println!("  {token}: {probability:.3}");
    }
    println!("synthesized {} benign samples from biased-token combinations", outcome.synthetic.len());

    for (name, corpus) in [
        ("benign", &fixture.heldout_benign),
        ("malicious", &fixture.heldout_malicious),
        ("over-defense", &fixture.heldout_overdefense),
    ] {
        println!(
            "{name:>13}: stage-1 {:.3} -> debiased {:.3}",
            accuracy(&outcome.stage1_model, corpus),
            accuracy(&outcome.final_model, corpus)
        );
    }
    let token = &fixture.shortcut_token;
    println!(
        "P(injection | \"{token}\"): stage-1 {:.3} -> debiased {:.3}",
        predict(&outcome.stage1_model, token).probability_injection,
        predict(&outcome.final_model, token).probability_injection
    );
}
