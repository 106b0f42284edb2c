use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Word segmentation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "size")]
pub enum Segmenter {
    /// Split on Unicode whitespace.
    Whitespace,
    /// Split on whitespace, then cut every run into chunks of this many
    /// characters (last chunk may be shorter). For scripts written without
    /// spaces between words.
    CharChunks(usize),
}

impl Segmenter {
    pub fn words<'t>(&self, text: &'t str) -> Vec<&'t str> {
        match *self {
            Segmenter::Whitespace => text.split_whitespace().collect(),
            Segmenter::CharChunks(size) => {
                let size = size.max(1);
                let mut out = Vec::new();
                for run in text.split_whitespace() {
                    let bounds: Vec<usize> = run
                        .char_indices()
                        .map(|(i, _)| i)
                        .step_by(size)
                        .chain(std::iter::once(run.len()))
                        .collect();
                    out.extend(bounds.windows(2).map(|w| &run[w[0]..w[1]]));
                }
                out
            }
        }
    }
}

/// Per-language segmenter choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Chunk size used for unsegmented scripts.
    pub chunk_size: usize,
    /// Languages written without inter-word spaces.
    pub unsegmented: BTreeSet<String>,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            chunk_size: 3,
            unsegmented: ["th", "lo", "my", "km", "zh", "ja"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl SegmenterConfig {
    pub fn for_lang(&self, lang: &str) -> Segmenter {
        if self.unsegmented.contains(lang) {
            Segmenter::CharChunks(self.chunk_size)
        } else {
            Segmenter::Whitespace
        }
    }

    pub fn words<'t>(&self, text: &'t str, lang: &str) -> Vec<&'t str> {
        self.for_lang(lang).words(text)
    }
}

pub fn word_count(text: &str, lang: &str, segmenters: &SegmenterConfig) -> usize {
    segmenters.words(text, lang).len()
}
