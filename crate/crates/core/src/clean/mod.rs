//! Document quality filters.
//!
//! Eight filters run in a fixed order; a document is removed by the first
//! one whose threshold it violates, but every enabled filter is scored so
//! the verdict carries the full picture:
//!
//! | # | filter              | fails when                      |
//! |---|---------------------|---------------------------------|
//! | 1 | `word_count`        | outside `[min_length, max_length]` |
//! | 2 | `char_repetition`   | above threshold                 |
//! | 3 | `word_repetition`   | above threshold                 |
//! | 4 | `special_characters`| above threshold                 |
//! | 5 | `stopwords`         | above (default) or below        |
//! | 6 | `flagged_words`     | above threshold                 |
//! | 7 | `langid`            | below threshold                 |
//! | 8 | `perplexity`        | above threshold                 |
//!
//! Language ID and perplexity come either from sidecar values in
//! `doc.meta` (`langid_lang`, `langid_conf`, `ppl`) or from the scorers in
//! [`Scorers`].

mod langid;
mod lm;
mod ratios;
mod segment;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::io::Document;
use crate::{Error, Result};

pub use langid::{langid_score, LangIdModel, META_CONF, META_LANG};
pub use lm::{perplexity, train_ngram_lm, NgramLanguageModel};
pub use ratios::{
    char_repetition_ratio, lexicon_ratio, special_char_ratio, word_repetition_ratio, Lexicon,
    PIECE_PREFIX,
};
pub use segment::{word_count, Segmenter, SegmenterConfig};

pub const META_PPL: &str = "ppl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    WordCount,
    CharRepetition,
    WordRepetition,
    SpecialCharacters,
    Stopwords,
    FlaggedWords,
    Langid,
    Perplexity,
}

impl FilterKind {
    pub const ALL: [FilterKind; 8] = [
        FilterKind::WordCount,
        FilterKind::CharRepetition,
        FilterKind::WordRepetition,
        FilterKind::SpecialCharacters,
        FilterKind::Stopwords,
        FilterKind::FlaggedWords,
        FilterKind::Langid,
        FilterKind::Perplexity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::WordCount => "word_count",
            FilterKind::CharRepetition => "char_repetition",
            FilterKind::WordRepetition => "word_repetition",
            FilterKind::SpecialCharacters => "special_characters",
            FilterKind::Stopwords => "stopwords",
            FilterKind::FlaggedWords => "flagged_words",
            FilterKind::Langid => "langid",
            FilterKind::Perplexity => "perplexity",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Remove when the score exceeds the threshold.
    Above,
    /// Remove when the score is under the threshold.
    Below,
}

impl Direction {
    fn violates(self, score: f64, threshold: f64) -> bool {
        match self {
            Direction::Above => score > threshold,
            Direction::Below => score < threshold,
        }
    }
}

pub const DEFAULT_SPECIAL_CHARS: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~0123456789";

/// Thresholds for one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_length: usize,
    pub max_length: usize,
    pub char_rep_ngram: usize,
    pub char_rep_threshold: f64,
    pub word_rep_ngram: usize,
    pub word_rep_threshold: f64,
    pub special_charset: String,
    pub special_threshold: f64,
    pub stopwords: Lexicon,
    pub stopwords_path: Option<PathBuf>,
    pub stopword_threshold: f64,
    pub stopword_direction: Direction,
    pub flagged: Lexicon,
    pub flagged_path: Option<PathBuf>,
    pub flagged_threshold: f64,
    pub langid_threshold: f64,
    pub ppl_threshold: f64,
    pub disabled: Vec<FilterKind>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_length: 10,
            max_length: 100_000,
            char_rep_ngram: 10,
            char_rep_threshold: 0.5,
            word_rep_ngram: 5,
            word_rep_threshold: 0.5,
            special_charset: DEFAULT_SPECIAL_CHARS.into(),
            special_threshold: 0.4,
            stopwords: Lexicon::default(),
            stopwords_path: None,
            stopword_threshold: 1.0,
            stopword_direction: Direction::Above,
            flagged: Lexicon::default(),
            flagged_path: None,
            flagged_threshold: 0.1,
            langid_threshold: 0.5,
            ppl_threshold: 10_000.0,
            disabled: Vec::new(),
        }
    }
}

impl FilterConfig {
    pub fn is_enabled(&self, kind: FilterKind) -> bool {
        !self.disabled.contains(&kind)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.min_length == 0 || self.min_length > self.max_length {
            return bad(format!(
                "need 0 < min_length <= max_length, got {} / {}",
                self.min_length, self.max_length
            ));
        }
        if self.char_rep_ngram == 0 || self.word_rep_ngram == 0 {
            return bad("n-gram sizes must be >= 1".into());
        }
        for (name, v) in [
            ("char_rep_threshold", self.char_rep_threshold),
            ("word_rep_threshold", self.word_rep_threshold),
            ("special_threshold", self.special_threshold),
            ("stopword_threshold", self.stopword_threshold),
            ("flagged_threshold", self.flagged_threshold),
            ("langid_threshold", self.langid_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.ppl_threshold > 0.0) {
            return bad(format!("ppl_threshold must be positive, got {}", self.ppl_threshold));
        }
        Ok(())
    }

    /// Load lexicon resource files relative to `base`.
    pub fn resolve(mut self, base: &Path) -> Result<Self> {
        for (path, lex) in [
            (self.stopwords_path.take(), &mut self.stopwords),
            (self.flagged_path.take(), &mut self.flagged),
        ] {
            if let Some(path) = path {
                let path = base.join(path);
                let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let mut entries: Vec<String> = std::mem::take(lex).into();
                entries.extend(raw.lines().map(str::to_string));
                *lex = Lexicon::new(entries);
            }
        }
        self.validate()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub kept: bool,
    pub failed_filter: Option<FilterKind>,
    pub scores: BTreeMap<String, f64>,
}

pub trait LanguageIdentifier: Send + Sync {
    fn identify(&self, text: &str) -> (String, f64);
}

pub trait PerplexityScorer: Send + Sync {
    fn perplexity(&self, text: &str) -> f64;
}

impl LanguageIdentifier for LangIdModel {
    fn identify(&self, text: &str) -> (String, f64) {
        self.predict(text)
    }
}

impl PerplexityScorer for NgramLanguageModel {
    fn perplexity(&self, text: &str) -> f64 {
        perplexity(text, self)
    }
}

/// Model-backed scorers; sidecar values in `doc.meta` take precedence.
#[derive(Clone, Default)]
pub struct Scorers {
    pub langid: Option<Arc<dyn LanguageIdentifier>>,
    /// Perplexity scorer per language code.
    pub perplexity: BTreeMap<String, Arc<dyn PerplexityScorer>>,
}

impl Scorers {
    fn langid(&self, doc: &Document) -> Result<(String, f64)> {
        if let (Some(lang), Some(conf)) = (doc.meta.get(META_LANG), doc.meta_f64(META_CONF)) {
            return Ok((lang.clone(), conf));
        }
        self.langid
            .as_ref()
            .map(|m| m.identify(&doc.text))
            .ok_or(Error::MissingScorer("langid"))
    }

    fn perplexity(&self, doc: &Document) -> Result<f64> {
        if let Some(ppl) = doc.meta_f64(META_PPL) {
            return Ok(ppl);
        }
        self.perplexity
            .get(&doc.lang)
            .map(|m| m.perplexity(&doc.text))
            .ok_or(Error::MissingScorer("perplexity"))
    }
}

/// Score `doc` against every enabled filter in order and report the first
/// violation.
pub fn apply_filters(
    doc: &Document,
    config: &FilterConfig,
    segmenters: &SegmenterConfig,
    scorers: &Scorers,
) -> Result<FilterVerdict> {
    let words = segmenters.words(&doc.text, &doc.lang);
    let mut scores = BTreeMap::new();
    let mut failed = None;
    let mut check = |kind: FilterKind, score: f64, violated: bool| {
        scores.insert(kind.name().to_string(), score);
        if violated && failed.is_none() {
            failed = Some(kind);
        }
    };

    for kind in FilterKind::ALL {
        if !config.is_enabled(kind) {
            continue;
        }
        match kind {
            FilterKind::WordCount => {
                let n = words.len();
                check(kind, n as f64, n < config.min_length || n > config.max_length);
            }
            FilterKind::CharRepetition => {
                let r = char_repetition_ratio(&doc.text, config.char_rep_ngram);
                check(kind, r, r > config.char_rep_threshold);
            }
            FilterKind::WordRepetition => {
                let r = word_repetition_ratio(&words, config.word_rep_ngram);
                check(kind, r, r > config.word_rep_threshold);
            }
            FilterKind::SpecialCharacters => {
                let set: HashSet<char> = config.special_charset.chars().collect();
                let r = special_char_ratio(&doc.text, &set);
                check(kind, r, r > config.special_threshold);
            }
            FilterKind::Stopwords => {
                let r = lexicon_ratio(&words, &config.stopwords);
                check(
                    kind,
                    r,
                    config.stopword_direction.violates(r, config.stopword_threshold),
                );
            }
            FilterKind::FlaggedWords => {
                let r = lexicon_ratio(&words, &config.flagged);
                check(kind, r, r > config.flagged_threshold);
            }
            FilterKind::Langid => {
                let (lang, conf) = scorers.langid(doc)?;
                // confidence that the text is in the document's declared language
                let score = if lang == doc.lang { conf } else { 0.0 };
                check(kind, score, score < config.langid_threshold);
            }
            FilterKind::Perplexity => {
                let ppl = scorers.perplexity(doc)?;
                check(kind, ppl, ppl > config.ppl_threshold);
            }
        }
    }
    Ok(FilterVerdict {
        kept: failed.is_none(),
        failed_filter: failed,
        scores,
    })
}

/// Per-language filter settings plus the model files that back the
/// language-ID and perplexity filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub segmenter: SegmenterConfig,
    /// Used for languages without an entry in `languages`.
    pub default: FilterConfig,
    pub languages: BTreeMap<String, FilterConfig>,
    pub langid_model: Option<PathBuf>,
    /// Perplexity model file per language.
    pub lm_models: BTreeMap<String, PathBuf>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            segmenter: SegmenterConfig::default(),
            default: FilterConfig {
                disabled: vec![FilterKind::Langid, FilterKind::Perplexity],
                ..FilterConfig::default()
            },
            languages: BTreeMap::new(),
            langid_model: None,
            lm_models: BTreeMap::new(),
        }
    }
}

impl CleanConfig {
    pub fn for_lang(&self, lang: &str) -> &FilterConfig {
        self.languages.get(lang).unwrap_or(&self.default)
    }

    pub fn resolve(mut self, base: &Path) -> Result<Self> {
        self.default = self.default.resolve(base)?;
        let langs = std::mem::take(&mut self.languages);
        for (lang, cfg) in langs {
            self.languages.insert(lang, cfg.resolve(base)?);
        }
        self.langid_model = self.langid_model.map(|p| base.join(p));
        for p in self.lm_models.values_mut() {
            *p = base.join(&*p);
        }
        Ok(self)
    }

    /// Load the configured model files.
    pub fn load_scorers(&self) -> Result<Scorers> {
        let mut scorers = Scorers::default();
        if let Some(path) = &self.langid_model {
            scorers.langid = Some(Arc::new(LangIdModel::load(path)?));
        }
        for (lang, path) in &self.lm_models {
            scorers
                .perplexity
                .insert(lang.clone(), Arc::new(NgramLanguageModel::load(path)?));
        }
        Ok(scorers)
    }
}
