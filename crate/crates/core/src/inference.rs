//! Greedy decoding: the image primes the hidden state, START triggers the
//! first prediction, and every emitted tag is fed back as the next input.

use serde::{Deserialize, Serialize};

use crate::data::{Example, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{embed_tag, lstm_step, project_image, score_tags, ModelConfig, Parameters};
use crate::numerics::argmax;

pub const DEFAULT_MAX_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum DecodePolicy {
    /// Stop when STOP wins the argmax, or after `max_len` tags.
    Arbitrary { max_len: usize },
    /// STOP is masked; exactly `k` tags are emitted.
    FixedK { k: usize },
}

impl Default for DecodePolicy {
    fn default() -> Self {
        DecodePolicy::Arbitrary {
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl DecodePolicy {
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        match *self {
            DecodePolicy::Arbitrary { max_len } if max_len == 0 => {
                Err(Error::Config("max_len must be at least 1".into()))
            }
            DecodePolicy::FixedK { k } if k == 0 => Err(Error::Config("k must be at least 1".into())),
            DecodePolicy::FixedK { k } if k > config.tag_count => Err(Error::Config(format!(
                "cannot emit {k} distinct tags from a vocabulary of {}",
                config.tag_count
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decoded {
    pub tags: Vec<usize>,
    /// Arbitrary mode reached `max_len` without predicting STOP.
    pub hit_cap: bool,
    /// LSTM steps consumed.
    pub steps: usize,
}

pub fn decode(params: &Parameters, config: &ModelConfig, feature: &[f64], policy: DecodePolicy) -> Result<Decoded> {
    policy.validate(config)?;
    let (limit, allow_stop) = match policy {
        DecodePolicy::Arbitrary { max_len } => (max_len.min(config.tag_count), true),
        DecodePolicy::FixedK { k } => (k, false),
    };
    let stop = config.stop_index();
    let mut h = project_image(params, feature)?;
    let mut c = vec![0.0; config.hidden_dim];
    let mut x = embed_tag(params, config, config.start_index())?;
    let mut emitted = vec![false; config.tag_count];
    let mut tags = Vec::new();
    let mut steps = 0;
    loop {
        let step = lstm_step(params, &h, &c, &x)?;
        steps += 1;
        let mut scores = score_tags(params, &step.h, None)?;
        for (t, _) in emitted.iter().enumerate().filter(|(_, &e)| e) {
            scores[t] = f64::NEG_INFINITY;
        }
        if !allow_stop {
            scores[stop] = f64::NEG_INFINITY;
        }
        let best = argmax(&scores)?;
        if best == stop {
            return Ok(Decoded {
                tags,
                hit_cap: false,
                steps,
            });
        }
        emitted[best] = true;
        tags.push(best);
        if tags.len() == limit {
            // With every tag emitted only STOP could follow, so that is not a cap.
            let hit_cap = allow_stop && limit < config.tag_count;
            return Ok(Decoded { tags, hit_cap, steps });
        }
        x = embed_tag(params, config, best)?;
        h = step.h;
        c = step.c;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub tags: Vec<String>,
    pub hit_cap: bool,
}

/// Decodes every example, in input order.
pub fn annotate_dataset(
    params: &Parameters,
    config: &ModelConfig,
    examples: &[Example],
    policy: DecodePolicy,
) -> Result<Vec<(String, Decoded)>> {
    examples
        .iter()
        .map(|ex| {
            decode(params, config, &ex.feature, policy)
                .map(|d| (ex.id.clone(), d))
                .map_err(|e| e.for_example(&ex.id))
        })
        .collect()
}

/// One JSON object per line: `{"id": …, "tags": […], "hit_cap": …}`.
pub fn annotations_jsonl(decoded: &[(String, Decoded)], vocab: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    for (id, d) in decoded {
        let record = Annotation {
            id: id.clone(),
            tags: vocab.names(&d.tags),
            hit_cap: d.hit_cap,
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}
