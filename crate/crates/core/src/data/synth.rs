use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Dataset, Example, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Generator settings for a clustered multi-label corpus with Zipf tag
/// frequencies.
///
/// Tag `j` has base weight `(j + 1)^-zipf_exponent`, so tag index is its
/// frequency rank. Cluster `k` owns a contiguous block of `tags_per_cluster`
/// ranks; the blocks are spread evenly over the vocabulary (overlapping when
/// `cluster_count * tags_per_cluster > vocab_size`). Rare tags therefore live
/// in rare clusters and are recognisable from the feature when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub cluster_count: usize,
    pub vocab_size: usize,
    pub feature_dim: usize,
    pub tags_per_cluster: usize,
    pub examples: usize,
    pub zipf_exponent: f64,
    pub noise_sigma: f64,
    pub min_clusters_per_example: usize,
    pub max_clusters_per_example: usize,
    /// Upper bound on tags drawn per chosen cluster (at least one is drawn).
    pub max_tags_per_cluster_draw: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            cluster_count: 10,
            vocab_size: 50,
            feature_dim: 32,
            tags_per_cluster: 5,
            examples: 2500,
            zipf_exponent: 1.0,
            noise_sigma: 0.3,
            min_clusters_per_example: 1,
            max_clusters_per_example: 3,
            max_tags_per_cluster_draw: 3,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cluster_count", self.cluster_count),
            ("vocab_size", self.vocab_size),
            ("feature_dim", self.feature_dim),
            ("tags_per_cluster", self.tags_per_cluster),
            ("examples", self.examples),
            ("min_clusters_per_example", self.min_clusters_per_example),
            ("max_tags_per_cluster_draw", self.max_tags_per_cluster_draw),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < self.cluster_count {
            return Err(Error::Config(format!(
                "vocab_size {} is smaller than cluster_count {}",
                self.vocab_size, self.cluster_count
            )));
        }
        if self.cluster_count * self.tags_per_cluster < self.vocab_size {
            return Err(Error::Config(format!(
                "{} clusters of {} tags cannot cover a vocabulary of {}",
                self.cluster_count, self.tags_per_cluster, self.vocab_size
            )));
        }
        if self.tags_per_cluster > self.vocab_size {
            return Err(Error::Config("tags_per_cluster exceeds vocab_size".into()));
        }
        if self.max_clusters_per_example < self.min_clusters_per_example
            || self.max_clusters_per_example > self.cluster_count
        {
            return Err(Error::Config(format!(
                "clusters per example must satisfy 1 <= {} <= {} <= {}",
                self.min_clusters_per_example, self.max_clusters_per_example, self.cluster_count
            )));
        }
        if !(self.zipf_exponent >= 0.0) || !self.zipf_exponent.is_finite() {
            return Err(Error::Config("zipf_exponent must be finite and >= 0".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn tag_weight(&self, tag: usize) -> f64 {
        ((tag + 1) as f64).powf(-self.zipf_exponent)
    }

    pub fn cluster_tags(&self, cluster: usize) -> Vec<usize> {
        let span = self.vocab_size - self.tags_per_cluster;
        let start = match self.cluster_count {
            1 => 0,
            k => cluster * span / (k - 1),
        };
        (start..start + self.tags_per_cluster).collect()
    }

    /// Total base weight of a cluster's tags.
    pub fn cluster_weight(&self, cluster: usize) -> f64 {
        self.cluster_tags(cluster).iter().map(|&t| self.tag_weight(t)).sum()
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Pronounceable, unique tag names whose alphabetical order is unrelated to
/// their frequency rank.
fn tag_names(count: usize, rng: &mut SeededRng) -> Vec<String> {
    let mut seen = HashSet::with_capacity(count);
    let mut names = Vec::with_capacity(count);
    while names.len() < count {
        let syllables = 2 + rng.below(2);
        let mut name = String::with_capacity(2 * syllables);
        for _ in 0..syllables {
            name.push(CONSONANTS[rng.below(CONSONANTS.len())] as char);
            name.push(VOWELS[rng.below(VOWELS.len())] as char);
        }
        if seen.insert(name.clone()) {
            names.push(name);
        }
    }
    names
}

/// Builds a dataset with every example in the training split; pass it through
/// [`super::split_dataset`] for a held-out split.
///
/// Each example picks between `min` and `max` distinct clusters, weighted by
/// cluster weight, draws between one and `max_tags_per_cluster_draw` tags from
/// each picked cluster (weighted by tag weight, without replacement), keeps
/// the union, and gets the mean of the picked centroids plus isotropic
/// Gaussian noise as its feature.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = SeededRng::new(config.seed);
    let names = tag_names(config.vocab_size, &mut rng);
    let vocab = Vocabulary::new(names)?;

    let centroids: Vec<Vec<f64>> = (0..config.cluster_count)
        .map(|_| (0..config.feature_dim).map(|_| rng.gaussian()).collect())
        .collect();
    let owned: Vec<Vec<usize>> = (0..config.cluster_count).map(|k| config.cluster_tags(k)).collect();
    let weights: Vec<f64> = (0..config.vocab_size).map(|t| config.tag_weight(t)).collect();
    let cluster_weights: Vec<f64> = (0..config.cluster_count).map(|k| config.cluster_weight(k)).collect();
    let width = config.examples.to_string().len();

    let mut examples = Vec::with_capacity(config.examples);
    for n in 0..config.examples {
        let span = config.max_clusters_per_example - config.min_clusters_per_example + 1;
        let n_clusters = config.min_clusters_per_example + rng.below(span);
        let mut cluster_pool = cluster_weights.clone();
        let mut clusters = Vec::with_capacity(n_clusters);
        for _ in 0..n_clusters {
            let k = rng.weighted_index(&cluster_pool).expect("positive cluster weights");
            clusters.push(k);
            cluster_pool[k] = 0.0;
        }

        let mut tags = Vec::new();
        for &k in &clusters {
            let own = &owned[k];
            let mut pool: Vec<f64> = own.iter().map(|&t| weights[t]).collect();
            let wanted = (1 + rng.below(config.max_tags_per_cluster_draw)).min(own.len());
            for _ in 0..wanted {
                let Some(i) = rng.weighted_index(&pool) else { break };
                tags.push(own[i]);
                pool[i] = 0.0;
            }
        }
        tags.sort_unstable();
        tags.dedup();

        let mut feature = vec![0.0; config.feature_dim];
        for &k in &clusters {
            for (f, c) in feature.iter_mut().zip(&centroids[k]) {
                *f += c / n_clusters as f64;
            }
        }
        if config.noise_sigma > 0.0 {
            for f in feature.iter_mut() {
                *f += config.noise_sigma * rng.gaussian();
            }
        }
        examples.push(Example::new(format!("syn{n:0width$}"), feature, tags));
    }
    Dataset::new(vocab, examples, Vec::new())
}
