//! Browser demo: tag ordering, metric scoring, and a small end-to-end
//! training run on synthetic data. The `*_json` functions are plain Rust so
//! they can be tested natively; the `#[wasm_bindgen]` wrappers only convert
//! errors.

use std::collections::BTreeMap;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ria_core::data::{generate_synthetic, split_dataset, Split, SyntheticConfig, Vocabulary};
use ria_core::eval::{evaluate, evaluate_model, Metrics};
use ria_core::inference::{decode, DecodePolicy};
use ria_core::model::ModelConfig;
use ria_core::numerics::SeededRng;
use ria_core::ordering::{order_tags, FrequencyTable, OrderStrategy};
use ria_core::training::{train_with, OptimizerConfig, TrainOptions};

#[derive(Serialize)]
struct OrderedTags {
    strategy: String,
    tags: Vec<String>,
}

/// Parses `tag count` lines into a vocabulary and its frequency table.
fn parse_counts(text: &str) -> Result<(Vocabulary, FrequencyTable), String> {
    let mut names = Vec::new();
    let mut counts = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        let (Some(tag), Some(count), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("line {}: expected `tag count`", n + 1));
        };
        let count: usize = count
            .parse()
            .map_err(|_| format!("line {}: {count:?} is not a count", n + 1))?;
        names.push(tag.to_string());
        counts.push(count);
    }
    let vocab = Vocabulary::new(names).map_err(|e| e.to_string())?;
    Ok((vocab, FrequencyTable::from_counts(counts)))
}

fn tag_indices(vocab: &Vocabulary, text: &str) -> Result<Vec<usize>, String> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| vocab.index_of(t).ok_or_else(|| format!("unknown tag {t:?}")))
        .collect()
}

/// Orders one tag set under all four strategies.
pub fn order_tags_json(counts: &str, tags: &str, seed: u64) -> Result<String, String> {
    let (vocab, freq) = parse_counts(counts)?;
    let set = tag_indices(&vocab, tags)?;
    let mut rng = SeededRng::new(seed);
    let rows = OrderStrategy::ALL
        .iter()
        .map(|&s| {
            let ordered = order_tags(&set, s, &freq, &vocab, &mut rng).map_err(|e| e.to_string())?;
            Ok(OrderedTags {
                strategy: s.to_string(),
                tags: vocab.names(ordered.tags()),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

/// Lines of `id: tag tag ...`.
fn parse_annotations(text: &str, vocab: &mut Vec<String>) -> Result<BTreeMap<String, Vec<usize>>, String> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (id, tags) = line
            .split_once(':')
            .ok_or_else(|| format!("line {}: expected `id: tags`", n + 1))?;
        let mut indices = Vec::new();
        for t in tags.split_whitespace() {
            let i = match vocab.iter().position(|v| v == t) {
                Some(i) => i,
                None => {
                    vocab.push(t.to_string());
                    vocab.len() - 1
                }
            };
            if !indices.contains(&i) {
                indices.push(i);
            }
        }
        out.insert(id.trim().to_string(), indices);
    }
    Ok(out)
}

#[derive(Serialize)]
struct ScoredMetrics {
    classes: Vec<String>,
    metrics: Metrics,
}

/// Scores predictions against ground truth, both as `id: tag tag` lines.
pub fn metrics_json(ground_truth: &str, predictions: &str) -> Result<String, String> {
    let mut classes = Vec::new();
    let truth = parse_annotations(ground_truth, &mut classes)?;
    let predicted = parse_annotations(predictions, &mut classes)?;
    let metrics = evaluate(&predicted, &truth, classes.len()).map_err(|e| e.to_string())?;
    serde_json::to_string(&ScoredMetrics { classes, metrics }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Sample {
    id: String,
    truth: Vec<String>,
    predicted: Vec<String>,
}

#[derive(Serialize)]
struct DemoRun {
    strategy: String,
    losses: Vec<f64>,
    metrics: Metrics,
    samples: Vec<Sample>,
}

/// Trains a small model on a fresh synthetic corpus and decodes a few test images.
pub fn train_demo_json(strategy: &str, epochs: usize, seed: u64) -> Result<String, String> {
    let strategy: OrderStrategy = strategy.parse().map_err(|e: ria_core::Error| e.to_string())?;
    let synth = SyntheticConfig {
        cluster_count: 5,
        vocab_size: 20,
        tags_per_cluster: 4,
        feature_dim: 16,
        examples: 300,
        seed,
        ..Default::default()
    };
    let err = |e: ria_core::Error| e.to_string();
    let dataset = split_dataset(&generate_synthetic(&synth).map_err(err)?, 0.8, seed).map_err(err)?;
    let model = ModelConfig::new(dataset.feature_dim, 16, 16, dataset.tag_count()).map_err(err)?;
    let optimizer = OptimizerConfig {
        learning_rate: 3e-3,
        epsilon: 1e-8,
        epochs: epochs.clamp(1, 200),
        seed,
        ..Default::default()
    };
    let outcome = train_with(&dataset, &model, &optimizer, strategy, &TrainOptions::default(), |_| {}).map_err(err)?;
    let policy = DecodePolicy::default();
    let metrics = evaluate_model(&outcome.params, &model, dataset.split(Split::Test), policy).map_err(err)?;
    let samples = dataset
        .test
        .iter()
        .take(8)
        .map(|ex| {
            let d = decode(&outcome.params, &model, &ex.feature, policy).map_err(err)?;
            Ok(Sample {
                id: ex.id.clone(),
                truth: dataset.vocab.names(&ex.tags),
                predicted: dataset.vocab.names(&d.tags),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let run = DemoRun {
        strategy: strategy.to_string(),
        losses: outcome.history.records.iter().map(|r| r.mean_loss).collect(),
        metrics,
        samples,
    };
    serde_json::to_string(&run).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = orderTags)]
pub fn order_tags_js(counts: &str, tags: &str, seed: u64) -> Result<String, JsError> {
    order_tags_json(counts, tags, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = scoreAnnotations)]
pub fn metrics_js(ground_truth: &str, predictions: &str) -> Result<String, JsError> {
    metrics_json(ground_truth, predictions).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = trainDemo)]
pub fn train_demo_js(strategy: &str, epochs: usize, seed: u64) -> Result<String, JsError> {
    train_demo_json(strategy, epochs, seed).map_err(|e| JsError::new(&e))
}
