//! Mini-batch training: teacher-forced BPTT per example, batch-averaged
//! gradients, global-norm clipping and Adam.

mod adam;
mod checkpoint;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, Metrics};
use crate::inference::DecodePolicy;
use crate::model::{accumulate_backward, sequence_forward, Dropout, ModelConfig, Parameters};
use crate::numerics::SeededRng;
use crate::ordering::{order_examples, tag_frequencies, OrderStrategy, OrderedSequence};

pub use adam::{adam_update, clip_gradients, global_norm, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

/// Independent generator streams derived from the master seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const ORDER: u64 = 3;
    pub const DROPOUT: u64 = 4;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 0.1,
            clip_norm: 5.0,
            batch_size: 32,
            epochs: 50,
            dropout_rate: 0.5,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0) {
            return err(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return err(format!("betas must lie in (0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return err(format!("Adam epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.clip_norm > 0.0) {
            return err(format!("clip norm must be positive, got {}", self.clip_norm));
        }
        if self.batch_size == 0 {
            return err("batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err(format!("dropout rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        Ok(())
    }
}

/// Periodic decoding and scoring during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSchedule {
    pub split: Split,
    /// Evaluate after every `every`-th epoch and after the last one.
    pub every: usize,
    pub policy: DecodePolicy,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOptions {
    /// Draw a fresh random order every epoch instead of once per run.
    pub resample_random_each_epoch: bool,
    pub eval: Option<EvalSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sequence loss (summed over steps), with dropout.
    pub mean_loss: f64,
    /// Total loss over total predicted tokens.
    pub token_loss: f64,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,loss,precision,recall,f_measure,n_plus";

    /// One row per epoch; metric columns stay empty on epochs without evaluation.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.records {
            let _ = write!(s, "{},{}", r.epoch, r.mean_loss);
            match &r.metrics {
                Some(m) => {
                    let _ = writeln!(s, ",{},{},{},{}", m.mean_precision, m.mean_recall, m.f_measure, m.n_plus);
                }
                None => s.push_str(",,,,\n"),
            }
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Parameters,
    pub history: TrainHistory,
    pub sequences: Vec<OrderedSequence>,
}

pub fn train(
    dataset: &Dataset,
    model_config: &ModelConfig,
    optimizer: &OptimizerConfig,
    order: OrderStrategy,
) -> Result<TrainOutcome> {
    train_with(dataset, model_config, optimizer, order, &TrainOptions::default(), |_| {})
}

/// Full training run. `on_epoch` sees every record as it is produced.
pub fn train_with(
    dataset: &Dataset,
    model_config: &ModelConfig,
    optimizer: &OptimizerConfig,
    order: OrderStrategy,
    options: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model_config.validate()?;
    optimizer.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    if model_config.feature_dim != dataset.feature_dim || model_config.tag_count != dataset.tag_count() {
        return Err(Error::dims(
            "model vs dataset",
            format!("F={}, tags={}", dataset.feature_dim, dataset.tag_count()),
            format!("F={}, tags={}", model_config.feature_dim, model_config.tag_count),
        ));
    }
    let seed = optimizer.seed;
    let mut params = Parameters::init(model_config, &mut SeededRng::stream(seed, streams::INIT));
    let mut shuffle_rng = SeededRng::stream(seed, streams::SHUFFLE);
    let mut order_rng = SeededRng::stream(seed, streams::ORDER);
    let mut dropout_rng = SeededRng::stream(seed, streams::DROPOUT);

    let examples = &dataset.train;
    let freq = tag_frequencies(examples, &dataset.vocab)?;
    let mut sequences = order_examples(examples, order, &freq, &dataset.vocab, &mut order_rng)?;
    let mut adam = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut visit: Vec<usize> = (0..examples.len()).collect();
    let mut grads = params.zeros_like();

    for epoch in 1..=optimizer.epochs {
        if epoch > 1 && options.resample_random_each_epoch && order == OrderStrategy::Random {
            sequences = order_examples(examples, order, &freq, &dataset.vocab, &mut order_rng)?;
        }
        shuffle_rng.shuffle(&mut visit);
        let mut total_loss = 0.0;
        let mut total_tokens = 0usize;
        for (batch_no, batch) in visit.chunks(optimizer.batch_size).enumerate() {
            grads.scale(0.0);
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let (feature, seq) = (&examples[i].feature, &sequences[i]);
                let dropout = (optimizer.dropout_rate > 0.0).then(|| Dropout {
                    rate: optimizer.dropout_rate,
                    rng: &mut dropout_rng,
                });
                let pass = sequence_forward(&params, model_config, feature, seq, dropout)
                    .map_err(|e| e.for_example(&examples[i].id))?;
                if !pass.loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        batch: batch_no,
                        loss: pass.loss,
                    });
                }
                total_loss += pass.loss;
                total_tokens += seq.len();
                accumulate_backward(&params, model_config, &pass.steps, feature, seq, weight, &mut grads)?;
            }
            clip_gradients(&mut grads, optimizer.clip_norm);
            adam_update(&mut params, &grads, &mut adam, optimizer);
            if !params.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_no,
                    loss: f64::NAN,
                });
            }
        }

        let metrics = match &options.eval {
            Some(s) if epoch % s.every.max(1) == 0 || epoch == optimizer.epochs => {
                let split = dataset.split(s.split);
                if split.is_empty() {
                    None
                } else {
                    Some(evaluate_model(&params, model_config, split, s.policy)?)
                }
            }
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            mean_loss: total_loss / examples.len() as f64,
            token_loss: total_loss / total_tokens as f64,
            metrics,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} ({:.5}/token){}",
            record.mean_loss,
            record.token_loss,
            record.metrics.as_ref().map(|m| format!("  {m}")).unwrap_or_default()
        );
        on_epoch(&record);
        history.records.push(record);
    }
    Ok(TrainOutcome {
        params,
        history,
        sequences,
    })
}
