//! Datasets of precomputed image features with tag sets, their on-disk
//! layout, summary statistics, splitting, and the synthetic generator.
//!
//! On disk a dataset is a directory-free triple of files:
//!
//! * vocabulary: UTF-8 text, one tag per line, line number (from 0) is the index;
//! * examples: JSON Lines, one `{"id": str, "feature": [f64], "tags": [str]}` per line,
//!   one file per split.

mod stats;
mod synth;

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::numerics::{SeededRng, Vector};

pub use stats::DatasetStats;
pub use synth::{generate_synthetic, SyntheticConfig};

pub const START_LITERAL: &str = "<START>";
pub const STOP_LITERAL: &str = "<STOP>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tags: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tags.len());
        for (i, tag) in tags.iter().enumerate() {
            if tag.is_empty() || tag.trim() != tag {
                return Err(Error::Dataset(format!(
                    "tag {i} ({tag:?}) is empty or has surrounding whitespace"
                )));
            }
            if tag == START_LITERAL || tag == STOP_LITERAL {
                return Err(Error::Dataset(format!("tag {tag} is reserved")));
            }
            if index.insert(tag.clone(), i).is_some() {
                return Err(Error::Dataset(format!("tag {tag:?} listed twice")));
            }
        }
        if tags.is_empty() {
            return Err(Error::Dataset("vocabulary is empty".into()));
        }
        Ok(Vocabulary { tags, index })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tag(&self, index: usize) -> Option<&str> {
        self.tags.get(index).map(String::as_str)
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn names(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .map(|&i| self.tag(i).map_or_else(|| format!("#{i}"), str::to_string))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub feature: Vector,
    pub tags: Vec<usize>,
}

impl Example {
    pub fn new(id: impl Into<String>, feature: Vector, tags: Vec<usize>) -> Self {
        Example {
            id: id.into(),
            feature,
            tags,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub feature_dim: usize,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    /// Checks ids, feature dimensions and tag sets across both splits.
    pub fn new(vocab: Vocabulary, train: Vec<Example>, test: Vec<Example>) -> Result<Self> {
        let feature_dim = train
            .first()
            .or(test.first())
            .map(|e| e.feature.len())
            .ok_or_else(|| Error::Dataset("dataset has no examples".into()))?;
        if feature_dim == 0 {
            return Err(Error::Dataset("feature vectors are empty".into()));
        }
        let mut ids = HashMap::new();
        for ex in train.iter().chain(&test) {
            validate_example(ex, feature_dim, vocab.len()).map_err(|e| e.for_example(&ex.id))?;
            if ids.insert(ex.id.as_str(), ()).is_some() {
                return Err(Error::Dataset(format!("duplicate example id {:?}", ex.id)));
            }
        }
        Ok(Dataset {
            vocab,
            feature_dim,
            train,
            test,
        })
    }

    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn tag_count(&self) -> usize {
        self.vocab.len()
    }

    /// Vocabulary tags that never occur in the training split.
    pub fn uncovered_tags(&self) -> Vec<usize> {
        let mut seen = vec![false; self.vocab.len()];
        for ex in &self.train {
            for &t in &ex.tags {
                seen[t] = true;
            }
        }
        (0..seen.len()).filter(|&t| !seen[t]).collect()
    }
}

fn validate_example(ex: &Example, feature_dim: usize, tag_count: usize) -> Result<()> {
    if ex.feature.len() != feature_dim {
        return Err(Error::dims("feature", feature_dim, ex.feature.len()));
    }
    if let Some(v) = ex.feature.iter().find(|v| !v.is_finite()) {
        return Err(Error::Dataset(format!("non-finite feature value {v}")));
    }
    if ex.tags.is_empty() {
        return Err(Error::Dataset("empty tag set".into()));
    }
    let mut seen = vec![false; tag_count];
    for &t in &ex.tags {
        if t >= tag_count {
            return Err(Error::Index {
                context: "vocabulary",
                index: t,
                limit: tag_count,
            });
        }
        if std::mem::replace(&mut seen[t], true) {
            return Err(Error::Dataset(format!("tag index {t} listed twice")));
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ExampleRecord {
    id: String,
    feature: Vec<f64>,
    tags: Vec<String>,
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let tags: Vec<String> = text
        .lines()
        .map(|l| l.trim().to_string())
        .collect::<Vec<_>>();
    // A trailing newline is fine; blank lines in the middle would shift indices.
    let mut tags = tags;
    while tags.last().is_some_and(String::is_empty) {
        tags.pop();
    }
    if let Some(line) = tags.iter().position(String::is_empty) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: line + 1,
            message: "blank line inside the vocabulary".into(),
        });
    }
    Vocabulary::new(tags)
}

pub fn read_examples(path: &Path, vocab: &Vocabulary) -> Result<Vec<Example>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let record: ExampleRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let mut tags = Vec::with_capacity(record.tags.len());
        for raw in &record.tags {
            let tag = raw.trim();
            let index = vocab.index_of(tag).ok_or_else(|| {
                parse_err(format!("example {:?}: tag {tag:?} is not in the vocabulary", record.id))
            })?;
            tags.push(index);
        }
        if tags.is_empty() {
            return Err(parse_err(format!("example {:?} has no tags", record.id)));
        }
        out.push(Example::new(record.id, record.feature, tags));
    }
    Ok(out)
}

/// Loads a vocabulary and one or two split files and validates the result.
pub fn load_dataset(vocab_path: &Path, train_path: &Path, test_path: Option<&Path>) -> Result<Dataset> {
    let vocab = read_vocabulary(vocab_path)?;
    let train = read_examples(train_path, &vocab)?;
    let test = match test_path {
        Some(p) => read_examples(p, &vocab)?,
        None => Vec::new(),
    };
    Dataset::new(vocab, train, test)
}

pub fn vocabulary_text(vocab: &Vocabulary) -> String {
    let mut s = vocab.tags().join("\n");
    s.push('\n');
    s
}

pub fn examples_jsonl(examples: &[Example], vocab: &Vocabulary) -> Result<String> {
    let mut s = String::new();
    for ex in examples {
        let record = ExampleRecord {
            id: ex.id.clone(),
            feature: ex.feature.clone(),
            tags: vocab.names(&ex.tags),
        };
        s.push_str(&serde_json::to_string(&record)?);
        s.push('\n');
    }
    Ok(s)
}

/// File names used by [`write_dataset`] inside its output directory.
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

/// Writes `vocab.txt`, `train.jsonl` and (when non-empty) `test.jsonl` into `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(VOCAB_FILE), vocabulary_text(&dataset.vocab).as_bytes())?;
    write_atomic(
        &dir.join(TRAIN_FILE),
        examples_jsonl(&dataset.train, &dataset.vocab)?.as_bytes(),
    )?;
    if !dataset.test.is_empty() {
        write_atomic(
            &dir.join(TEST_FILE),
            examples_jsonl(&dataset.test, &dataset.vocab)?.as_bytes(),
        )?;
    }
    Ok(())
}

/// Loads what [`write_dataset`] wrote.
pub fn read_dataset_dir(dir: &Path) -> Result<Dataset> {
    let test = dir.join(TEST_FILE);
    load_dataset(
        &dir.join(VOCAB_FILE),
        &dir.join(TRAIN_FILE),
        test.exists().then_some(test.as_path()),
    )
}

/// Pools both splits, shuffles with `seed` and cuts at `train_fraction`.
pub fn split_dataset(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let mut pool: Vec<Example> = dataset.train.iter().chain(&dataset.test).cloned().collect();
    let n_train = (pool.len() as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= pool.len() {
        return Err(Error::Config(format!(
            "splitting {} examples at {train_fraction} leaves an empty split",
            pool.len()
        )));
    }
    SeededRng::new(seed).shuffle(&mut pool);
    let test = pool.split_off(n_train);
    let out = Dataset::new(dataset.vocab.clone(), pool, test)?;
    let uncovered = out.uncovered_tags();
    if !uncovered.is_empty() {
        log::warn!(
            "{} vocabulary tags never occur in the training split: {:?}",
            uncovered.len(),
            out.vocab.names(&uncovered)
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_vocab() -> Vocabulary {
        Vocabulary::new(["sky", "tree", "water", "cat"].map(String::from).to_vec()).unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn vocabulary_rejects_reserved_and_duplicates() {
        assert!(Vocabulary::new(vec!["<STOP>".into()]).is_err());
        assert!(Vocabulary::new(vec!["a".into(), "a".into()]).is_err());
        assert!(Vocabulary::new(vec![]).is_err());
        let v = fixture_vocab();
        assert_eq!(v.index_of("water"), Some(2));
        assert_eq!(v.index_of("Water"), None);
    }

    #[test]
    fn loads_three_example_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = write(dir.path(), "v.txt", "sky\n tree \nwater\ncat\n");
        let train = write(
            dir.path(),
            "t.jsonl",
            concat!(
                r#"{"id":"a","feature":[0.5,1.0],"tags":["sky","tree"]}"#,
                "\n",
                r#"{"id":"b","feature":[0.0,-1.0],"tags":["water"]}"#,
                "\n\n",
                r#"{"id":"c","feature":[2.0,3.0],"tags":[" cat ","sky","water"]}"#,
                "\n"
            ),
        );
        let ds = load_dataset(&vocab, &train, None).unwrap();
        assert_eq!(ds.feature_dim, 2);
        assert_eq!(ds.train[2].tags, vec![3, 0, 2]);
        let stats = DatasetStats::of(&ds.train, &ds.vocab);
        assert_eq!(stats.images, 3);
        assert_eq!(stats.vocabulary_size, 4);
        assert_eq!(stats.max_words_per_image, 3);
        assert!((stats.mean_words_per_image - 2.0).abs() < 1e-12);
        assert_eq!(stats.max_images_per_word, 2);
        assert!((stats.mean_images_per_word - 1.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_tag_names_the_example_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = write(dir.path(), "v.txt", "sky\n");
        let train = write(
            dir.path(),
            "t.jsonl",
            concat!(
                r#"{"id":"ok","feature":[1.0],"tags":["sky"]}"#,
                "\n",
                r#"{"id":"img42","feature":[1.0],"tags":["zebra"]}"#,
                "\n"
            ),
        );
        let msg = load_dataset(&vocab, &train, None).unwrap_err().to_string();
        assert!(msg.contains("img42") && msg.contains("zebra") && msg.contains(":2:"), "{msg}");
    }

    #[test]
    fn rejects_bad_examples() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = write(dir.path(), "v.txt", "sky\ntree\n");
        let cases = [
            // feature length mismatch
            concat!(
                r#"{"id":"a","feature":[1.0,2.0],"tags":["sky"]}"#,
                "\n",
                r#"{"id":"short","feature":[1.0],"tags":["sky"]}"#
            ),
            // empty tag set
            r#"{"id":"a","feature":[1.0],"tags":[]}"#,
            // duplicate id
            concat!(
                r#"{"id":"a","feature":[1.0],"tags":["sky"]}"#,
                "\n",
                r#"{"id":"a","feature":[2.0],"tags":["tree"]}"#
            ),
            // duplicate tag
            r#"{"id":"a","feature":[1.0],"tags":["sky","sky"]}"#,
            // not JSON
            "id=a",
        ];
        for (i, body) in cases.iter().enumerate() {
            let train = write(dir.path(), &format!("bad{i}.jsonl"), body);
            assert!(load_dataset(&vocab, &train, None).is_err(), "case {i} accepted");
        }
        let train = write(dir.path(), "short.jsonl", cases[0]);
        let msg = load_dataset(&vocab, &train, None).unwrap_err().to_string();
        assert!(msg.contains("short"), "{msg}");
    }

    #[test]
    fn write_then_load_is_identity() {
        let vocab = fixture_vocab();
        let train = vec![
            Example::new("x1", vec![0.1, 1.0 / 3.0, -2.5e-300], vec![1, 0]),
            Example::new("x2", vec![f64::MAX, -0.0, 7.0], vec![3]),
        ];
        let test = vec![Example::new("y1", vec![1e-17, 2.0, 3.0], vec![2, 3])];
        let ds = Dataset::new(vocab, train, test).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(read_dataset_dir(dir.path()).unwrap(), ds);
    }

    #[test]
    fn split_counts_and_determinism() {
        let vocab = fixture_vocab();
        let examples: Vec<Example> = (0..10)
            .map(|i| Example::new(format!("e{i}"), vec![i as f64], vec![i % 4]))
            .collect();
        let ds = Dataset::new(vocab, examples, vec![]).unwrap();
        let a = split_dataset(&ds, 0.8, 9).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (8, 2));
        for t in &a.test {
            assert!(a.train.iter().all(|e| e.id != t.id));
        }
        assert_eq!(a, split_dataset(&ds, 0.8, 9).unwrap());
        assert!(split_dataset(&ds, 1.0, 9).is_err());
        assert!(split_dataset(&ds, 0.0, 9).is_err());
        assert!(split_dataset(&ds, 0.01, 9).is_err());
    }
}
