//! Word n-gram language model with interpolated Witten-Bell smoothing.
//!
//! Stand-in for an external KenLM binary: it assigns a finite positive
//! probability to every word (unseen words share an `<unk>` class) and
//! scores documents by per-word perplexity.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::segment::Segmenter;
use crate::{Error, Result};

const FORMAT: &str = "refinery-ngram-lm";
const VERSION: u32 = 1;
const UNK: u32 = 0;
const BOS: u32 = 1;

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

#[derive(Debug, Clone)]
pub struct NgramLanguageModel {
    order: usize,
    segmenter: Segmenter,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    unigrams: Vec<u64>,
    unigram_total: u64,
    // contexts[k] holds contexts of length k + 1
    contexts: Vec<HashMap<Vec<u32>, ContextCounts>>,
}

#[derive(Serialize, Deserialize)]
struct SerializedLm {
    format: String,
    version: u32,
    order: usize,
    segmenter: Segmenter,
    vocab: Vec<String>,
    unigrams: Vec<u64>,
    /// `(context, next, count)` for every observed n-gram with n >= 2.
    ngrams: Vec<(Vec<u32>, u32, u64)>,
}

impl NgramLanguageModel {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Vocabulary size including the `<unk>` class.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len() - 1
    }

    fn tokens(&self, text: &str) -> Vec<u32> {
        self.segmenter
            .words(text)
            .into_iter()
            .map(|w| *self.index.get(&w.to_lowercase()).unwrap_or(&UNK))
            .collect()
    }

    fn unigram_prob(&self, w: u32) -> f64 {
        // add-one over the vocabulary plus <unk>; <s> is never predicted
        let v = self.vocab_size() as f64;
        (self.unigrams[w as usize] as f64 + 1.0) / (self.unigram_total as f64 + v)
    }

    fn prob(&self, history: &[u32], w: u32) -> f64 {
        let mut p = self.unigram_prob(w);
        // Build up from the shortest context to the longest.
        for k in 1..self.order {
            if history.len() < k {
                break;
            }
            let ctx = &history[history.len() - k..];
            let Some(counts) = self.contexts[k - 1].get(ctx) else {
                break;
            };
            let types = counts.next.len() as f64;
            let c = *counts.next.get(&w).unwrap_or(&0) as f64;
            p = (c + types * p) / (counts.total as f64 + types);
        }
        p
    }

    /// Total log-probability (natural log) and word count of `text`.
    pub fn log_prob(&self, text: &str) -> (f64, usize) {
        let tokens = self.tokens(text);
        let mut history = vec![BOS; self.order.saturating_sub(1)];
        let mut total = 0.0;
        for &w in &tokens {
            total += self.prob(&history, w).ln();
            history.push(w);
        }
        (total, tokens.len())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ngrams = Vec::new();
        for table in &self.contexts {
            let mut rows: Vec<(Vec<u32>, u32, u64)> = table
                .iter()
                .flat_map(|(ctx, c)| c.next.iter().map(move |(&w, &n)| (ctx.clone(), w, n)))
                .collect();
            rows.sort();
            ngrams.extend(rows);
        }
        let ser = SerializedLm {
            format: FORMAT.into(),
            version: VERSION,
            order: self.order,
            segmenter: self.segmenter,
            vocab: self.vocab.clone(),
            unigrams: self.unigrams.clone(),
            ngrams,
        };
        let json = serde_json::to_string(&ser).expect("lm serialize");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ser: SerializedLm =
            serde_json::from_str(&raw).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if ser.format != FORMAT || ser.version != VERSION {
            return Err(Error::ModelFormat(format!(
                "expected {FORMAT} v{VERSION}, found {} v{}",
                ser.format, ser.version
            )));
        }
        if ser.order == 0 || ser.vocab.len() < 2 || ser.unigrams.len() != ser.vocab.len() {
            return Err(Error::ModelFormat("inconsistent header".into()));
        }
        let mut contexts = vec![HashMap::new(); ser.order - 1];
        for (ctx, w, n) in ser.ngrams {
            if ctx.is_empty() || ctx.len() >= ser.order || w as usize >= ser.vocab.len() {
                return Err(Error::ModelFormat("n-gram out of range".into()));
            }
            let entry: &mut ContextCounts = contexts[ctx.len() - 1].entry(ctx).or_default();
            entry.total += n;
            entry.next.insert(w, n);
        }
        let index = ser
            .vocab
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(NgramLanguageModel {
            order: ser.order,
            segmenter: ser.segmenter,
            unigram_total: ser.unigrams.iter().sum(),
            unigrams: ser.unigrams,
            vocab: ser.vocab,
            index,
            contexts,
        })
    }
}

/// Train a model of the given order over a stream of texts. Each text is
/// one sentence; words are case-folded.
pub fn train_ngram_lm<I, S>(corpus: I, order: usize, segmenter: Segmenter) -> Result<NgramLanguageModel>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if order == 0 {
        return Err(Error::InvalidArgument("n-gram order must be >= 1".into()));
    }
    let mut vocab = vec!["<unk>".to_string(), "<s>".to_string()];
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut unigrams = vec![0u64, 0u64];
    let mut contexts: Vec<HashMap<Vec<u32>, ContextCounts>> = vec![HashMap::new(); order - 1];
    let mut seen_words = 0u64;

    for text in corpus {
        let ids: Vec<u32> = segmenter
            .words(text.as_ref())
            .into_iter()
            .map(|w| {
                let w = w.to_lowercase();
                *index.entry(w.clone()).or_insert_with(|| {
                    vocab.push(w);
                    unigrams.push(0);
                    (vocab.len() - 1) as u32
                })
            })
            .collect();
        let mut padded = vec![BOS; order - 1];
        padded.extend_from_slice(&ids);
        for (pos, &w) in ids.iter().enumerate() {
            unigrams[w as usize] += 1;
            seen_words += 1;
            let at = pos + order - 1;
            for k in 1..order {
                let ctx = padded[at - k..at].to_vec();
                let entry = contexts[k - 1].entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(w).or_default() += 1;
            }
        }
    }
    if seen_words == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(NgramLanguageModel {
        order,
        segmenter,
        unigram_total: seen_words,
        vocab,
        index,
        unigrams,
        contexts,
    })
}

/// `exp` of the mean per-word negative log-likelihood; an empty text scores
/// 1.0.
pub fn perplexity(text: &str, lm: &NgramLanguageModel) -> f64 {
    let (lp, n) = lm.log_prob(text);
    if n == 0 {
        1.0
    } else {
        (-lp / n as f64).exp().max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn in_distribution_scores_lower() {
        let corpus = vec!["a b"; 50];
        let lm = train_ngram_lm(corpus, 2, Segmenter::Whitespace).unwrap();
        assert!(perplexity("a b", &lm) < perplexity("b a", &lm));
    }

    #[test]
    fn uniform_unigram_perplexity_is_alphabet_size() {
        let k = 8;
        let text: Vec<String> = (0..20_000).map(|i| format!("s{}", i % k)).collect();
        let lm = train_ngram_lm([text.join(" ")], 1, Segmenter::Whitespace).unwrap();
        let probe: Vec<String> = (0..k).map(|i| format!("s{i}")).collect();
        let ppl = perplexity(&probe.join(" "), &lm);
        // add-one smoothing with <unk>: p = (2500 + 1) / (20000 + 9)
        let oracle = (20_009.0f64 / 2_501.0).ln().exp();
        assert!((ppl - oracle).abs() < 1e-9);
        assert!((ppl - k as f64).abs() < 0.01);
    }

    #[test]
    fn probabilities_are_normalized() {
        let lm = train_ngram_lm(["a b c a b d", "b c a"], 3, Segmenter::Whitespace).unwrap();
        for history in [vec![BOS, BOS], vec![2, 3], vec![4, 2], vec![9, 9]] {
            let sum: f64 = (0..lm.vocab.len() as u32)
                .filter(|&w| w != BOS)
                .map(|w| lm.prob(&history, w))
                .sum();
            assert!((sum - 1.0).abs() < 1e-12, "history {history:?} sums to {sum}");
        }
    }

    #[test]
    fn training_sample_beats_shuffle() {
        let sentences = [
            "the cat sat on the mat",
            "the dog sat on the rug",
            "a cat and a dog sat together",
        ];
        let lm = train_ngram_lm(sentences.iter().cycle().take(30), 3, Segmenter::Whitespace).unwrap();
        let shuffled = "mat the on sat cat the";
        assert!(perplexity(sentences[0], &lm) < perplexity(shuffled, &lm));
    }

    #[test]
    fn empty_text_and_empty_corpus() {
        let lm = train_ngram_lm(["x y"], 2, Segmenter::Whitespace).unwrap();
        assert_eq!(perplexity("", &lm), 1.0);
        assert!(matches!(
            train_ngram_lm(Vec::<&str>::new(), 2, Segmenter::Whitespace),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(train_ngram_lm(["   "], 2, Segmenter::Whitespace), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn save_load_preserves_scores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.json");
        let lm = train_ngram_lm(["saya makan nasi", "saya minum teh"], 3, Segmenter::Whitespace).unwrap();
        lm.save(&path).unwrap();
        let loaded = NgramLanguageModel::load(&path).unwrap();
        for t in ["saya makan teh", "kopi", ""] {
            assert_eq!(perplexity(t, &lm), perplexity(t, &loaded));
        }
        std::fs::write(&path, r#"{"format":"other","version":1}"#).unwrap();
        assert!(NgramLanguageModel::load(&path).is_err());
    }

    proptest! {
        #[test]
        fn perplexity_at_least_one(text in "[a-e ]{0,30}") {
            let lm = train_ngram_lm(["a b c", "c d e a"], 2, Segmenter::Whitespace).unwrap();
            let p = perplexity(&text, &lm);
            prop_assert!(p.is_finite() && p >= 1.0);
        }
    }
}
