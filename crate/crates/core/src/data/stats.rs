use std::fmt;

use serde::Serialize;

use super::{Example, Vocabulary};

/// Corpus summary in the layout annotation benchmarks are usually described with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub vocabulary_size: usize,
    pub images: usize,
    pub mean_words_per_image: f64,
    pub max_words_per_image: usize,
    /// Averaged over the whole vocabulary, unused tags included.
    pub mean_images_per_word: f64,
    pub max_images_per_word: usize,
}

impl DatasetStats {
    pub fn of(examples: &[Example], vocab: &Vocabulary) -> Self {
        let mut per_word = vec![0usize; vocab.len()];
        let mut total = 0usize;
        let mut max_words = 0usize;
        for ex in examples {
            total += ex.tags.len();
            max_words = max_words.max(ex.tags.len());
            for &t in &ex.tags {
                per_word[t] += 1;
            }
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        DatasetStats {
            vocabulary_size: vocab.len(),
            images: examples.len(),
            mean_words_per_image: ratio(total, examples.len()),
            max_words_per_image: max_words,
            mean_images_per_word: ratio(total, vocab.len()),
            max_images_per_word: per_word.iter().copied().max().unwrap_or(0),
        }
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20}{:>14}", "Vocabulary size", self.vocabulary_size)?;
        writeln!(f, "{:<20}{:>14}", "Number of images", self.images)?;
        writeln!(
            f,
            "{:<20}{:>14}",
            "Words per image",
            format!("{:.1} / {}", self.mean_words_per_image, self.max_words_per_image)
        )?;
        write!(
            f,
            "{:<20}{:>14}",
            "Images per word",
            format!("{:.1} / {}", self.mean_images_per_word, self.max_images_per_word)
        )
    }
}
