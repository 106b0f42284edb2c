//! Character n-gram naive Bayes language identifier.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::Document;
use crate::{Error, Result};

const FORMAT: &str = "refinery-langid";
const VERSION: u32 = 1;
/// Only the first characters of a text are scored.
const MAX_CHARS: usize = 4000;

pub const META_LANG: &str = "langid_lang";
pub const META_CONF: &str = "langid_conf";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ClassStats {
    /// counts[n - 1]: n-gram -> occurrences
    counts: Vec<BTreeMap<String, u64>>,
    totals: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LangIdModel {
    format: String,
    version: u32,
    max_order: usize,
    alpha: f64,
    classes: BTreeMap<String, ClassStats>,
    /// Distinct n-grams per order across all classes, plus one for unseen.
    support: Vec<u64>,
}

fn ngrams(text: &str, n: usize, mut f: impl FnMut(&str)) {
    let padded: String = std::iter::once(' ')
        .chain(text.chars().take(MAX_CHARS).flat_map(char::to_lowercase))
        .chain(std::iter::once(' '))
        .collect();
    let bounds: Vec<usize> = padded
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(padded.len()))
        .collect();
    let len = bounds.len() - 1;
    if len < n {
        return;
    }
    for i in 0..=len - n {
        f(&padded[bounds[i]..bounds[i + n]]);
    }
}

impl LangIdModel {
    /// Train over `(lang, text)` samples; at least two classes are needed.
    pub fn train<I, L, T>(samples: I, max_order: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (L, T)>,
        L: AsRef<str>,
        T: AsRef<str>,
    {
        if max_order == 0 {
            return Err(Error::InvalidArgument("n-gram order must be >= 1".into()));
        }
        let mut classes: BTreeMap<String, ClassStats> = BTreeMap::new();
        for (lang, text) in samples {
            let stats = classes.entry(lang.as_ref().to_string()).or_insert_with(|| ClassStats {
                counts: vec![BTreeMap::new(); max_order],
                totals: vec![0; max_order],
            });
            for n in 1..=max_order {
                ngrams(text.as_ref(), n, |g| {
                    *stats.counts[n - 1].entry(g.to_string()).or_default() += 1;
                    stats.totals[n - 1] += 1;
                });
            }
        }
        if classes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "language identifier needs >= 2 classes, got {}",
                classes.len()
            )));
        }
        let support = (0..max_order)
            .map(|k| {
                let distinct: HashSet<&String> =
                    classes.values().flat_map(|c| c.counts[k].keys()).collect();
                distinct.len() as u64 + 1
            })
            .collect();
        Ok(LangIdModel {
            format: FORMAT.into(),
            version: VERSION,
            max_order,
            alpha: 0.5,
            classes,
            support,
        })
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    /// Posterior over classes (uniform prior). Sums to one.
    pub fn posteriors(&self, text: &str) -> Vec<(String, f64)> {
        let mut scores: Vec<(String, f64)> = self
            .classes
            .iter()
            .map(|(lang, stats)| {
                let mut ll = 0.0;
                for n in 1..=self.max_order {
                    let denom = stats.totals[n - 1] as f64 + self.alpha * self.support[n - 1] as f64;
                    ngrams(text, n, |g| {
                        let c = *stats.counts[n - 1].get(g).unwrap_or(&0) as f64;
                        ll += ((c + self.alpha) / denom).ln();
                    });
                }
                (lang.clone(), ll)
            })
            .collect();
        let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s.1 - max).exp()).sum();
        for s in &mut scores {
            s.1 = (s.1 - max).exp() / z;
        }
        scores
    }

    pub fn predict(&self, text: &str) -> (String, f64) {
        self.posteriors(text)
            .into_iter()
            .fold(None::<(String, f64)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
            .expect("at least two classes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).expect("langid serialize");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: LangIdModel =
            serde_json::from_str(&raw).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if model.format != FORMAT || model.version != VERSION {
            return Err(Error::ModelFormat(format!(
                "expected {FORMAT} v{VERSION}, found {} v{}",
                model.format, model.version
            )));
        }
        if model.classes.len() < 2 || model.support.len() != model.max_order {
            return Err(Error::ModelFormat("inconsistent header".into()));
        }
        Ok(model)
    }
}

/// Language and confidence for a document: the sidecar values in
/// `doc.meta` when present, otherwise the model's prediction.
pub fn langid_score(doc: &Document, model: Option<&LangIdModel>) -> Result<(String, f64)> {
    if let (Some(lang), Some(conf)) = (doc.meta.get(META_LANG), doc.meta_f64(META_CONF)) {
        return Ok((lang.clone(), conf));
    }
    match model {
        Some(m) => Ok(m.predict(&doc.text)),
        None => Err(Error::MissingScorer("langid")),
    }
}
