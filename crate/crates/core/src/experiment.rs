//! Tag-order comparison: one training run per (strategy, seed), evaluated on
//! held-out data, summarised by the median over seeds.

use serde::Serialize;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{compare_orders, ComparisonTable, Metrics};
use crate::inference::DecodePolicy;
use crate::model::ModelConfig;
use crate::ordering::OrderStrategy;
use crate::training::{train_with, EvalSchedule, OptimizerConfig, TrainHistory, TrainOptions};

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub strategies: Vec<OrderStrategy>,
    pub seeds: Vec<u64>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub optimizer: OptimizerConfig,
    pub eval_split: Split,
    pub eval_every: usize,
    pub policy: DecodePolicy,
    pub resample_random_each_epoch: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub strategy: OrderStrategy,
    pub seed: u64,
    pub history: TrainHistory,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: OrderStrategy,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub n_plus: f64,
}

#[derive(Debug, Clone)]
pub struct OrderExperiment {
    pub runs: Vec<RunResult>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Trains every (strategy, seed) pair; `on_run` is told about each finished run.
pub fn run_order_experiment(
    dataset: &Dataset,
    config: &ExperimentConfig,
    mut on_run: impl FnMut(&RunResult),
) -> Result<OrderExperiment> {
    if config.strategies.is_empty() || config.seeds.is_empty() {
        return Err(Error::Config("need at least one strategy and one seed".into()));
    }
    if dataset.split(config.eval_split).is_empty() {
        return Err(Error::Dataset(format!("{:?} split is empty", config.eval_split)));
    }
    let model = ModelConfig::new(dataset.feature_dim, config.embed_dim, config.hidden_dim, dataset.tag_count())?;
    let options = TrainOptions {
        resample_random_each_epoch: config.resample_random_each_epoch,
        eval: Some(EvalSchedule {
            split: config.eval_split,
            every: config.eval_every,
            policy: config.policy,
        }),
    };
    let mut runs = Vec::new();
    for &strategy in &config.strategies {
        for &seed in &config.seeds {
            let optimizer = OptimizerConfig {
                seed,
                ..config.optimizer.clone()
            };
            let outcome = train_with(dataset, &model, &optimizer, strategy, &options, |_| {}).map_err(|e| {
                Error::Config(format!("{strategy} with seed {seed}: {e}"))
            })?;
            let metrics = outcome
                .history
                .last()
                .and_then(|r| r.metrics.clone())
                .ok_or_else(|| Error::Config("experiment needs at least one epoch".into()))?;
            let run = RunResult {
                strategy,
                seed,
                history: outcome.history,
                metrics,
            };
            on_run(&run);
            runs.push(run);
        }
    }
    Ok(OrderExperiment { runs })
}

impl OrderExperiment {
    /// Median over seeds of each figure, per strategy, in first-seen order.
    pub fn summary(&self) -> Vec<StrategySummary> {
        let mut order: Vec<OrderStrategy> = Vec::new();
        for r in &self.runs {
            if !order.contains(&r.strategy) {
                order.push(r.strategy);
            }
        }
        order
            .into_iter()
            .map(|strategy| {
                let runs: Vec<&RunResult> = self.runs.iter().filter(|r| r.strategy == strategy).collect();
                let pick = |f: &dyn Fn(&Metrics) -> f64| {
                    let mut v: Vec<f64> = runs.iter().map(|r| f(&r.metrics)).collect();
                    median(&mut v)
                };
                StrategySummary {
                    strategy,
                    precision: pick(&|m| m.mean_precision),
                    recall: pick(&|m| m.mean_recall),
                    f_measure: pick(&|m| m.f_measure),
                    n_plus: pick(&|m| m.n_plus as f64),
                }
            })
            .collect()
    }

    /// `method,P,R,F,N+`, one row per strategy, medians over seeds.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("method,P,R,F,N+\n");
        for row in self.summary() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                row.strategy, row.precision, row.recall, row.f_measure, row.n_plus
            ));
        }
        s
    }

    /// Per-run table (strategy and seed as the label).
    pub fn run_table(&self) -> Result<ComparisonTable> {
        compare_orders(
            self.runs
                .iter()
                .map(|r| (format!("{} (seed {})", r.strategy, r.seed), r.metrics.clone()))
                .collect(),
        )
    }

    pub fn summary_table(&self) -> String {
        let rows = self.summary();
        let mut s = format!("{:<16}{:>7}{:>7}{:>7}{:>7}\n", "order", "P", "R", "F", "N+");
        for r in &rows {
            s.push_str(&format!(
                "{:<16}{:>7.1}{:>7.1}{:>7.1}{:>7.1}\n",
                r.strategy.as_str(),
                100.0 * r.precision,
                100.0 * r.recall,
                100.0 * r.f_measure,
                r.n_plus
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_dataset, SyntheticConfig};

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn one_run_per_strategy_and_seed() {
        let ds = generate_synthetic(&SyntheticConfig {
            cluster_count: 3,
            vocab_size: 9,
            tags_per_cluster: 3,
            feature_dim: 4,
            examples: 40,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let ds = split_dataset(&ds, 0.75, 1).unwrap();
        let cfg = ExperimentConfig {
            strategies: OrderStrategy::ALL.to_vec(),
            seeds: vec![1, 2],
            embed_dim: 4,
            hidden_dim: 4,
            optimizer: OptimizerConfig { epochs: 2, ..Default::default() },
            eval_split: Split::Test,
            eval_every: 1,
            policy: DecodePolicy::default(),
            resample_random_each_epoch: false,
        };
        let mut seen = 0;
        let exp = run_order_experiment(&ds, &cfg, |_| seen += 1).unwrap();
        assert_eq!(seen, 8);
        let summary = exp.summary();
        assert_eq!(summary.len(), 4);
        assert_eq!(exp.summary_csv().lines().count(), 5);
        assert_eq!(exp.summary_csv().lines().next(), Some("method,P,R,F,N+"));
        assert!(exp.runs.iter().all(|r| r.history.records.len() == 2));
    }
}
