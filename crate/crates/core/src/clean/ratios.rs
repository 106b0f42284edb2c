use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// Share of character n-gram occurrences covered by the `m` most frequent
/// n-grams, where `m = floor(sqrt(#distinct n-grams))`.
pub fn char_repetition_ratio(text: &str, n: usize) -> f64 {
    let n = n.max(1);
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let char_len = bounds.len() - 1;
    if char_len < n {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for i in 0..=char_len - n {
        *counts.entry(&text[bounds[i]..bounds[i + n]]).or_default() += 1;
    }
    let total = char_len - n + 1;
    let m = (counts.len() as f64).sqrt().floor() as usize;
    let mut freq: Vec<usize> = counts.into_values().collect();
    freq.sort_unstable_by(|a, b| b.cmp(a));
    let top: usize = freq.iter().take(m).sum();
    top as f64 / total as f64
}

/// Share of word n-gram occurrences belonging to n-grams seen more than
/// twice.
pub fn word_repetition_ratio<S: AsRef<str>>(words: &[S], n: usize) -> f64 {
    let n = n.max(1);
    if words.len() < n {
        return 0.0;
    }
    let mut counts: HashMap<Vec<&str>, usize> = HashMap::new();
    for w in words.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect())
            .or_default() += 1;
    }
    let total = words.len() - n + 1;
    let repeated: usize = counts.values().filter(|&&c| c > 2).sum();
    repeated as f64 / total as f64
}

pub fn special_char_ratio(text: &str, charset: &HashSet<char>) -> f64 {
    let mut total = 0usize;
    let mut special = 0usize;
    for c in text.chars() {
        total += 1;
        if charset.contains(&c) {
            special += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        special as f64 / total as f64
    }
}

/// Word list with whole-word entries and byte-piece (substring) entries,
/// both case-folded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Lexicon {
    words: HashSet<String>,
    pieces: Vec<String>,
}

pub const PIECE_PREFIX: &str = "piece:";

impl Lexicon {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lex = Lexicon::default();
        for e in entries {
            let e = e.as_ref().trim();
            if e.is_empty() {
                continue;
            }
            match e.strip_prefix(PIECE_PREFIX) {
                Some(piece) if !piece.is_empty() => lex.pieces.push(piece.to_lowercase()),
                Some(_) => {}
                None => {
                    lex.words.insert(e.to_lowercase());
                }
            }
        }
        lex.pieces.sort();
        lex.pieces.dedup();
        lex
    }

    /// Parse a lexicon resource: one entry per line, `piece:` prefix marks
    /// substring entries.
    pub fn parse(raw: &str) -> Self {
        Lexicon::new(raw.lines())
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty() && self.pieces.is_empty()
    }

    pub fn matches(&self, word: &str) -> bool {
        if self.is_empty() {
            return false;
        }
        let folded = word.to_lowercase();
        self.words.contains(&folded) || self.pieces.iter().any(|p| folded.contains(p.as_str()))
    }
}

impl From<Vec<String>> for Lexicon {
    fn from(v: Vec<String>) -> Self {
        Lexicon::new(v)
    }
}

impl From<Lexicon> for Vec<String> {
    fn from(lex: Lexicon) -> Self {
        let mut words: Vec<String> = lex.words.into_iter().collect();
        words.sort();
        words.extend(lex.pieces.into_iter().map(|p| format!("{PIECE_PREFIX}{p}")));
        words
    }
}

pub fn lexicon_ratio<S: AsRef<str>>(words: &[S], lexicon: &Lexicon) -> f64 {
    if words.is_empty() {
        return 0.0;
    }
    let hits = words.iter().filter(|w| lexicon.matches(w.as_ref())).count();
    hits as f64 / words.len() as f64
}
