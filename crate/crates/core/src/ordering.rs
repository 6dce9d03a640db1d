//! Turning an unordered tag set into a teacher-forced training sequence.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Example, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderStrategy {
    Dictionary,
    Random,
    RareFirst,
    FrequentFirst,
}

impl OrderStrategy {
    pub const ALL: [OrderStrategy; 4] = [
        OrderStrategy::Dictionary,
        OrderStrategy::Random,
        OrderStrategy::RareFirst,
        OrderStrategy::FrequentFirst,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OrderStrategy::Dictionary => "dictionary",
            OrderStrategy::Random => "random",
            OrderStrategy::RareFirst => "rare-first",
            OrderStrategy::FrequentFirst => "frequent-first",
        }
    }
}

impl fmt::Display for OrderStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "dictionary" => Ok(OrderStrategy::Dictionary),
            "random" => Ok(OrderStrategy::Random),
            "rare-first" => Ok(OrderStrategy::RareFirst),
            "frequent-first" => Ok(OrderStrategy::FrequentFirst),
            other => Err(Error::Config(format!(
                "unknown tag order {other:?} (expected dictionary, random, rare-first or frequent-first)"
            ))),
        }
    }
}

/// Number of training examples carrying each tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: Vec<usize>,
}

impl FrequencyTable {
    pub fn from_counts(counts: Vec<usize>) -> Self {
        FrequencyTable { counts }
    }

    pub fn count(&self, tag: usize) -> usize {
        self.counts.get(tag).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn tag_frequencies(examples: &[Example], vocab: &Vocabulary) -> Result<FrequencyTable> {
    if examples.is_empty() {
        return Err(Error::Dataset("cannot count tag frequencies of an empty split".into()));
    }
    let mut counts = vec![0usize; vocab.len()];
    for example in examples {
        for &tag in &example.tags {
            let slot = counts.get_mut(tag).ok_or(Error::Index {
                context: "vocabulary",
                index: tag,
                limit: vocab.len(),
            })?;
            *slot += 1;
        }
    }
    Ok(FrequencyTable { counts })
}

/// Teacher-forced pair: inputs `[START, y_1, …, y_{T-1}]` and targets
/// `[y_1, …, y_{T-1}, STOP]`. START and STOP share the index `tag_count`;
/// it addresses the embedding table on the input side and the classifier on
/// the output side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedSequence {
    inputs: Vec<usize>,
    targets: Vec<usize>,
}

impl OrderedSequence {
    /// Wraps already ordered, distinct tags with START and STOP.
    pub fn from_ordered_tags(tags: &[usize], tag_count: usize) -> Result<Self> {
        let mut seen = vec![false; tag_count];
        for &tag in tags {
            if tag >= tag_count {
                return Err(Error::Sequence(format!("tag index {tag} outside 0..{tag_count}")));
            }
            if std::mem::replace(&mut seen[tag], true) {
                return Err(Error::Sequence(format!("tag index {tag} repeated")));
            }
        }
        let mut inputs = Vec::with_capacity(tags.len() + 1);
        inputs.push(tag_count);
        inputs.extend_from_slice(tags);
        let mut targets = tags.to_vec();
        targets.push(tag_count);
        Ok(OrderedSequence { inputs, targets })
    }

    /// Builds from explicit input/target lists, checking the START/STOP layout.
    pub fn from_parts(inputs: Vec<usize>, targets: Vec<usize>, tag_count: usize) -> Result<Self> {
        let seq = OrderedSequence { inputs, targets };
        seq.validate(tag_count)?;
        Ok(seq)
    }

    pub fn validate(&self, tag_count: usize) -> Result<()> {
        let (x, y) = (&self.inputs, &self.targets);
        if y.is_empty() {
            return Err(Error::Sequence("empty target sequence".into()));
        }
        if x.len() != y.len() {
            return Err(Error::Sequence(format!(
                "{} inputs for {} targets",
                x.len(),
                y.len()
            )));
        }
        if *y.last().unwrap() != tag_count {
            return Err(Error::Sequence("target does not end with STOP".into()));
        }
        if x[0] != tag_count {
            return Err(Error::Sequence("input does not start with START".into()));
        }
        let body = &y[..y.len() - 1];
        if x[1..] != *body {
            return Err(Error::Sequence("inputs are not the targets shifted by one".into()));
        }
        let mut seen = vec![false; tag_count];
        for &tag in body {
            if tag >= tag_count {
                return Err(Error::Sequence(format!(
                    "index {tag} before the end (STOP or out of range)"
                )));
            }
            if std::mem::replace(&mut seen[tag], true) {
                return Err(Error::Sequence(format!("tag index {tag} repeated")));
            }
        }
        Ok(())
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Tags in order, without START/STOP.
    pub fn tags(&self) -> &[usize] {
        &self.targets[..self.targets.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Sorts `tags` by `strategy`. Frequency ties and the dictionary order
/// compare tag strings; `rng` is only drawn from for the random order.
pub fn order_tags(
    tags: &[usize],
    strategy: OrderStrategy,
    freq: &FrequencyTable,
    vocab: &Vocabulary,
    rng: &mut SeededRng,
) -> Result<OrderedSequence> {
    if tags.is_empty() {
        return Err(Error::Sequence("cannot order an empty tag set".into()));
    }
    for &tag in tags {
        if tag >= vocab.len() {
            return Err(Error::Index {
                context: "vocabulary",
                index: tag,
                limit: vocab.len(),
            });
        }
    }
    let mut ordered = tags.to_vec();
    ordered.sort_unstable();
    ordered.dedup();
    if ordered.len() != tags.len() {
        return Err(Error::Sequence("duplicate tag in tag set".into()));
    }
    let name = |t: &usize| vocab.tag(*t).unwrap_or_default();
    match strategy {
        OrderStrategy::Dictionary => ordered.sort_by(|a, b| name(a).cmp(name(b))),
        OrderStrategy::RareFirst => ordered.sort_by(|a, b| {
            freq.count(*a).cmp(&freq.count(*b)).then_with(|| name(a).cmp(name(b)))
        }),
        OrderStrategy::FrequentFirst => ordered.sort_by(|a, b| {
            freq.count(*b).cmp(&freq.count(*a)).then_with(|| name(a).cmp(name(b)))
        }),
        OrderStrategy::Random => rng.shuffle(&mut ordered),
    }
    OrderedSequence::from_ordered_tags(&ordered, vocab.len())
}

/// Orders every example of a split, drawing the random order from one
/// generator in example order.
pub fn order_examples(
    examples: &[Example],
    strategy: OrderStrategy,
    freq: &FrequencyTable,
    vocab: &Vocabulary,
    rng: &mut SeededRng,
) -> Result<Vec<OrderedSequence>> {
    examples
        .iter()
        .map(|ex| order_tags(&ex.tags, strategy, freq, vocab, rng).map_err(|e| e.for_example(&ex.id)))
        .collect()
}

/// Tag-string view of a frequency table, for reports.
pub fn frequency_report(freq: &FrequencyTable, vocab: &Vocabulary) -> BTreeMap<String, usize> {
    vocab
        .tags()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), freq.count(i)))
        .collect()
}
