//! Versioned JSON checkpoints: model configuration, vocabulary, and every
//! parameter array as `{name, shape, values}` in a fixed order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{ModelConfig, Parameters, PARAM_NAMES};

pub const CHECKPOINT_FORMAT: &str = "ria-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayRecord {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    vocabulary: Vec<String>,
    arrays: Vec<ArrayRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Parameters,
}

impl Checkpoint {
    /// A checkpoint only decodes data labelled with the vocabulary it was trained on.
    pub fn check_vocabulary(&self, other: &Vocabulary) -> Result<()> {
        if self.vocab.tags() != other.tags() {
            let first = self
                .vocab
                .tags()
                .iter()
                .zip(other.tags())
                .position(|(a, b)| a != b)
                .unwrap_or(self.vocab.len().min(other.len()));
            return Err(Error::Checkpoint(format!(
                "vocabulary differs from the checkpoint's ({} vs {} tags, first difference at index {first})",
                other.len(),
                self.vocab.len()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config,
            vocabulary: self.vocab.tags().to_vec(),
            arrays: self
                .params
                .arrays()
                .iter()
                .map(|(name, (r, c), values)| ArrayRecord {
                    name: name.to_string(),
                    shape: [*r, *c],
                    values: values.to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable: {e}")))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        file.config.validate()?;
        let vocab = Vocabulary::new(file.vocabulary)?;
        if vocab.len() != file.config.tag_count {
            return Err(Error::Checkpoint(format!(
                "{} vocabulary entries for tag_count {}",
                vocab.len(),
                file.config.tag_count
            )));
        }
        if file.arrays.len() != PARAM_NAMES.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameter arrays, expected {}",
                file.arrays.len(),
                PARAM_NAMES.len()
            )));
        }
        let mut params = Parameters::zeros(&file.config);
        let expected: Vec<(usize, usize)> = params.arrays().iter().map(|(_, s, _)| *s).collect();
        for (((name, slot), record), want) in params.arrays_mut().into_iter().zip(&file.arrays).zip(expected) {
            if record.name != name {
                return Err(Error::Checkpoint(format!("array {:?} where {name:?} was expected", record.name)));
            }
            if record.shape != [want.0, want.1] {
                return Err(Error::Checkpoint(format!(
                    "{name} declared {:?}, configuration implies {:?}",
                    record.shape,
                    [want.0, want.1]
                )));
            }
            if record.values.len() != slot.len() {
                return Err(Error::Checkpoint(format!(
                    "{name} holds {} values for shape {:?}",
                    record.values.len(),
                    record.shape
                )));
            }
            if record.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("{name} contains a non-finite value")));
            }
            slot.copy_from_slice(&record.values);
        }
        Ok(Checkpoint {
            config: file.config,
            vocab,
            params,
        })
    }
}

pub fn save_checkpoint(params: &Parameters, config: &ModelConfig, vocab: &Vocabulary, path: &Path) -> Result<()> {
    params.check_shapes(config)?;
    let ckpt = Checkpoint {
        config: *config,
        vocab: vocab.clone(),
        params: params.clone(),
    };
    write_atomic(path, ckpt.to_json()?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn sample() -> (ModelConfig, Parameters, Vocabulary) {
        let config = ModelConfig::new(5, 3, 4, 3).unwrap();
        let mut rng = SeededRng::new(77);
        let mut params = Parameters::init(&config, &mut rng);
        // Awkward magnitudes for the decimal round trip.
        params.cls_b = vec![1.0 / 3.0, -2.0f64.sqrt() * 1e-300, 6.02e23, std::f64::consts::PI];
        let vocab = Vocabulary::new(["sky", "sea", "sand"].map(String::from).to_vec()).unwrap();
        (config, params, vocab)
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let (config, params, vocab) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&params, &config, &vocab, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.config, config);
        assert_eq!(back.vocab, vocab);
        let max_dev = back
            .params
            .arrays()
            .iter()
            .zip(params.arrays().iter())
            .flat_map(|((_, _, a), (_, _, b))| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-15);
        assert_eq!(back.params, params);
    }

    #[test]
    fn tampered_files_are_rejected() {
        let (config, params, vocab) = sample();
        let json = Checkpoint { config, vocab, params }.to_json().unwrap();

        let reshaped = json.replacen("\"shape\":[4,3]", "\"shape\":[3,4]", 1);
        assert_ne!(reshaped, json);
        let msg = Checkpoint::from_json(&reshaped).unwrap_err().to_string();
        assert!(msg.contains("declared"), "{msg}");

        let versioned = json.replacen("\"version\":1", "\"version\":2", 1);
        assert!(Checkpoint::from_json(&versioned).unwrap_err().to_string().contains("version 2"));

        let truncated = &json[..json.len() / 2];
        assert!(Checkpoint::from_json(truncated).is_err());

        let renamed = json.replacen("\"name\":\"proj_b\"", "\"name\":\"bias\"", 1);
        assert!(Checkpoint::from_json(&renamed).is_err());
    }

    #[test]
    fn vocabulary_mismatch_is_rejected() {
        let (config, params, vocab) = sample();
        let ckpt = Checkpoint { config, vocab: vocab.clone(), params };
        assert!(ckpt.check_vocabulary(&vocab).is_ok());
        let other = Vocabulary::new(["sky", "sand", "sea"].map(String::from).to_vec()).unwrap();
        let msg = ckpt.check_vocabulary(&other).unwrap_err().to_string();
        assert!(msg.contains("index 1"), "{msg}");
    }
}
