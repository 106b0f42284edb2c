//! Byte-fallback BPE with merge dropout.
//!
//! Text is pre-split into pieces where a single space travels with the word
//! after it (`"a b"` -> `["a", " b"]`). Each piece starts as a sequence of
//! alphabet characters (unknown characters fall back to their UTF-8 bytes)
//! and merges are applied lowest rank first. With dropout `p`, every
//! candidate merge is independently skipped with probability `p` at every
//! step; `p = 0` is plain greedy BPE and `p = 1` applies no merges at all.
//!
//! Id layout: `0..256` are byte tokens, then special tokens, then the
//! character alphabet, then merged tokens in merge order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::seed;
use crate::{Error, Result};

pub const EOD_TOKEN: &str = "<|endoftext|>";
const BYTE_TOKENS: u32 = 256;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Token {
    Byte(u8),
    Special(String),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationOptions {
    pub dropout_p: f64,
    pub seed: u64,
}

impl Default for SegmentationOptions {
    fn default() -> Self {
        SegmentationOptions {
            dropout_p: 0.0,
            seed: 0,
        }
    }
}

impl SegmentationOptions {
    pub fn greedy() -> Self {
        Self::default()
    }

    pub fn dropout(p: f64, seed: u64) -> Self {
        SegmentationOptions { dropout_p: p, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidArgument(format!(
                "dropout_p {} outside [0, 1]",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BpeModel {
    tokens: Vec<Token>,
    text_index: HashMap<String, u32>,
    special_index: HashMap<String, u32>,
    merges: Vec<(u32, u32)>,
    /// pair -> (rank, merged id)
    ranks: HashMap<(u32, u32), (u32, u32)>,
    alphabet_size: usize,
}

/// Split text into pieces; a single space attaches to the following word.
pub fn pretokenize(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let at = |k: usize| if k < n { chars[k].0 } else { text.len() };
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < n {
        let mut start = i;
        if chars[i].1.is_whitespace() {
            let mut j = i;
            while j < n && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j < n && chars[j - 1].1 == ' ' {
                if j - 1 > i {
                    pieces.push(&text[at(i)..at(j - 1)]);
                }
                start = j - 1;
                i = j;
            } else {
                pieces.push(&text[at(i)..at(j)]);
                i = j;
                continue;
            }
        }
        while i < n && !chars[i].1.is_whitespace() {
            i += 1;
        }
        pieces.push(&text[at(start)..at(i)]);
    }
    pieces
}

fn byte_label(b: u8) -> String {
    format!("<0x{b:02X}>")
}

impl BpeModel {
    fn empty(specials: &[&str], alphabet: impl IntoIterator<Item = char>) -> Self {
        let mut model = BpeModel {
            tokens: (0..=255u8).map(Token::Byte).collect(),
            text_index: HashMap::new(),
            special_index: HashMap::new(),
            merges: Vec::new(),
            ranks: HashMap::new(),
            alphabet_size: 0,
        };
        for s in specials {
            if !model.special_index.contains_key(*s) {
                model.special_index.insert(s.to_string(), model.tokens.len() as u32);
                model.tokens.push(Token::Special(s.to_string()));
            }
        }
        for c in alphabet {
            let s = c.to_string();
            if !model.text_index.contains_key(&s) {
                model.text_index.insert(s.clone(), model.tokens.len() as u32);
                model.tokens.push(Token::Text(s));
                model.alphabet_size += 1;
            }
        }
        model
    }

    fn push_merge(&mut self, left: u32, right: u32) -> Result<u32> {
        let text = match (&self.tokens[left as usize], &self.tokens[right as usize]) {
            (Token::Text(a), Token::Text(b)) => format!("{a}{b}"),
            _ => {
                return Err(Error::ModelFormat(format!(
                    "merge ({left}, {right}) must combine text tokens"
                )))
            }
        };
        if self.text_index.contains_key(&text) || self.ranks.contains_key(&(left, right)) {
            return Err(Error::ModelFormat(format!("merge result {text:?} already exists")));
        }
        let id = self.tokens.len() as u32;
        self.ranks.insert((left, right), (self.merges.len() as u32, id));
        self.merges.push((left, right));
        self.text_index.insert(text.clone(), id);
        self.tokens.push(Token::Text(text));
        Ok(id)
    }

    pub fn vocab_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn num_merges(&self) -> usize {
        self.merges.len()
    }

    /// Merge list as token strings, in rank order.
    pub fn merges(&self) -> Vec<(String, String)> {
        self.merges
            .iter()
            .map(|&(a, b)| (self.token_text(a), self.token_text(b)))
            .collect()
    }

    pub fn special_id(&self, token: &str) -> Option<u32> {
        self.special_index.get(token).copied()
    }

    pub fn is_special(&self, id: u32) -> bool {
        matches!(self.tokens.get(id as usize), Some(Token::Special(_)))
    }

    pub fn token_id(&self, text: &str) -> Option<u32> {
        self.text_index.get(text).copied()
    }

    /// Display form of a token: its text, its special name, or `<0xNN>`.
    pub fn token_text(&self, id: u32) -> String {
        match &self.tokens[id as usize] {
            Token::Byte(b) => byte_label(*b),
            Token::Special(s) | Token::Text(s) => s.clone(),
        }
    }

    pub fn is_alphabet_or_byte(&self, id: u32) -> bool {
        match &self.tokens[id as usize] {
            Token::Byte(_) => true,
            Token::Text(s) => s.chars().count() == 1,
            Token::Special(_) => false,
        }
    }

    fn initial_symbols(&self, piece: &str, out: &mut Vec<u32>) {
        let mut buf = [0u8; 4];
        for c in piece.chars() {
            match self.text_index.get(c.encode_utf8(&mut buf) as &str) {
                Some(&id) => out.push(id),
                None => out.extend(c.encode_utf8(&mut buf).bytes().map(u32::from)),
            }
        }
    }

    fn merge_piece<R: Rng>(&self, symbols: &mut Vec<u32>, p: f64, rng: &mut R) {
        loop {
            let mut best: Option<(u32, usize, u32)> = None;
            for i in 0..symbols.len().saturating_sub(1) {
                let Some(&(rank, merged)) = self.ranks.get(&(symbols[i], symbols[i + 1])) else {
                    continue;
                };
                if p > 0.0 && rng.random::<f64>() < p {
                    continue;
                }
                if best.is_none_or(|(r, _, _)| rank < r) {
                    best = Some((rank, i, merged));
                }
            }
            let Some((_, i, merged)) = best else {
                return;
            };
            symbols[i] = merged;
            symbols.remove(i + 1);
        }
    }

    /// Segment `text` into token ids.
    pub fn segment(&self, text: &str, options: &SegmentationOptions) -> Vec<u32> {
        let mut rng = seed::rng(options.seed);
        let p = options.dropout_p.clamp(0.0, 1.0);
        let mut out = Vec::with_capacity(text.len() / 2);
        let mut symbols = Vec::new();
        for piece in pretokenize(text) {
            symbols.clear();
            self.initial_symbols(piece, &mut symbols);
            self.merge_piece(&mut symbols, p, &mut rng);
            out.extend_from_slice(&symbols);
        }
        out
    }

    /// Concatenate token contents back into text.
    pub fn detokenize(&self, ids: &[u32]) -> Result<String> {
        let mut bytes = Vec::with_capacity(ids.len() * 2);
        for &id in ids {
            match self.tokens.get(id as usize) {
                Some(Token::Byte(b)) => bytes.push(*b),
                Some(Token::Special(s)) | Some(Token::Text(s)) => bytes.extend_from_slice(s.as_bytes()),
                None => return Err(Error::UnknownToken(id)),
            }
        }
        String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(format!("token bytes are not UTF-8: {e}")))
    }

    /// Merge file: one JSON-quoted pair per line, rank = line order.
    pub fn merges_text(&self) -> String {
        let mut out = String::new();
        for (a, b) in self.merges() {
            let _ = writeln!(out, "{} {}", json_quote(&a), json_quote(&b));
        }
        out
    }

    /// Vocabulary file: JSON-quoted token, TAB, id; specials carry a third
    /// `special` column.
    pub fn vocab_text(&self) -> String {
        let mut out = String::new();
        for (id, tok) in self.tokens.iter().enumerate() {
            match tok {
                Token::Byte(b) => {
                    let _ = writeln!(out, "{}\t{id}\tbyte", json_quote(&byte_label(*b)));
                }
                Token::Special(s) => {
                    let _ = writeln!(out, "{}\t{id}\tspecial", json_quote(s));
                }
                Token::Text(s) => {
                    let _ = writeln!(out, "{}\t{id}", json_quote(s));
                }
            }
        }
        out
    }

    /// SHA-256 over the vocabulary and merge files, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.vocab_text().as_bytes());
        h.update(b"\0");
        h.update(self.merges_text().as_bytes());
        h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn save(&self, vocab_path: &Path, merges_path: &Path) -> Result<()> {
        std::fs::write(vocab_path, self.vocab_text()).map_err(|e| Error::io(vocab_path, e))?;
        std::fs::write(merges_path, self.merges_text()).map_err(|e| Error::io(merges_path, e))
    }

    pub fn load(vocab_path: &Path, merges_path: &Path) -> Result<Self> {
        let vocab = std::fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let merges = std::fs::read_to_string(merges_path).map_err(|e| Error::io(merges_path, e))?;
        Self::from_text(&vocab, &merges)
    }

    pub fn from_text(vocab: &str, merges: &str) -> Result<Self> {
        let mut specials = Vec::new();
        let mut texts: BTreeMap<u32, String> = BTreeMap::new();
        for (line_no, line) in vocab.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::ModelFormat(format!("vocab line {}: {m}", line_no + 1));
            let mut cols = line.split('\t');
            let tok: String = cols
                .next()
                .and_then(|c| serde_json::from_str(c).ok())
                .ok_or_else(|| bad("token is not a JSON string"))?;
            let id: u32 = cols
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| bad("missing id"))?;
            match cols.next() {
                Some("byte") => {
                    if id >= BYTE_TOKENS || tok != byte_label(id as u8) {
                        return Err(bad("byte token out of place"));
                    }
                }
                Some("special") => specials.push((id, tok)),
                None => {
                    texts.insert(id, tok);
                }
                Some(other) => return Err(bad(&format!("unknown token kind `{other}`"))),
            }
        }
        specials.sort();
        let special_names: Vec<&str> = specials.iter().map(|(_, s)| s.as_str()).collect();
        let alphabet: Vec<char> = texts
            .values()
            .filter(|t| t.chars().count() == 1)
            .filter_map(|t| t.chars().next())
            .collect();
        let mut model = BpeModel::empty(&special_names, alphabet);
        for (line_no, line) in merges.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = || Error::ModelFormat(format!("merge line {}", line_no + 1));
            let mut de = serde_json::Deserializer::from_str(line).into_iter::<String>();
            let a = de.next().and_then(|r| r.ok()).ok_or_else(bad)?;
            let b = de.next().and_then(|r| r.ok()).ok_or_else(bad)?;
            let (Some(&la), Some(&lb)) = (model.text_index.get(&a), model.text_index.get(&b)) else {
                return Err(Error::ModelFormat(format!(
                    "merge line {}: constituents must precede the merge",
                    line_no + 1
                )));
            };
            model.push_merge(la, lb)?;
        }
        for (id, tok) in &texts {
            if model.text_index.get(tok) != Some(id) {
                return Err(Error::ModelFormat(format!("vocab id {id} for {tok:?} does not match the merge order")));
            }
        }
        for (id, tok) in &specials {
            if model.special_index.get(tok) != Some(id) {
                return Err(Error::ModelFormat(format!("special id {id} for {tok:?} out of place")));
            }
        }
        Ok(model)
    }
}

fn json_quote(s: &str) -> String {
    serde_json::to_string(s).expect("string serialize")
}

/// Train merges by repeatedly joining the most frequent adjacent pair
/// (ties: lexicographically smallest pair of token strings) until the
/// alphabet plus merges reaches `vocab_size` or no pair occurs twice.
/// Byte and special tokens are not counted against `vocab_size`.
pub fn train_bpe<I, S>(corpus: I, vocab_size: usize) -> Result<BpeModel>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut piece_counts: HashMap<String, u64> = HashMap::new();
    let mut alphabet = BTreeSet::new();
    for text in corpus {
        for piece in pretokenize(text.as_ref()) {
            alphabet.extend(piece.chars());
            *piece_counts.entry(piece.to_string()).or_default() += 1;
        }
    }
    if alphabet.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if vocab_size < alphabet.len() {
        return Err(Error::InvalidArgument(format!(
            "vocab_size {vocab_size} is below the alphabet size {}",
            alphabet.len()
        )));
    }
    let mut model = BpeModel::empty(&[EOD_TOKEN], alphabet.iter().copied());
    let mut words: Vec<(Vec<u32>, u64)> = {
        let mut pieces: Vec<(String, u64)> = piece_counts.into_iter().collect();
        pieces.sort();
        pieces
            .into_iter()
            .map(|(p, c)| {
                let mut ids = Vec::new();
                model.initial_symbols(&p, &mut ids);
                (ids, c)
            })
            .collect()
    };

    while model.alphabet_size + model.merges.len() < vocab_size {
        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        for (ids, count) in &words {
            for w in ids.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_default() += count;
            }
        }
        let mut best: Option<((u32, u32), u64, String, String)> = None;
        for (&pair, &count) in &pair_counts {
            if count < 2 {
                continue;
            }
            let (a, b) = (model.token_text(pair.0), model.token_text(pair.1));
            if model.text_index.contains_key(&format!("{a}{b}")) {
                continue;
            }
            let better = match &best {
                None => true,
                Some((_, bc, ba, bb)) => count > *bc || (count == *bc && (&a, &b) < (ba, bb)),
            };
            if better {
                best = Some((pair, count, a, b));
            }
        }
        let Some(((left, right), ..)) = best else {
            break;
        };
        let merged = model.push_merge(left, right)?;
        for (ids, _) in &mut words {
            let mut i = 0;
            while i + 1 < ids.len() {
                if ids[i] == left && ids[i + 1] == right {
                    ids[i] = merged;
                    ids.remove(i + 1);
                }
                i += 1;
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> BpeModel {
        train_bpe(
            ["the cat sat on the mat", "the hat is on the cat", "a cat, a hat and a mat"],
            40,
        )
        .unwrap()
    }

    #[test]
    fn pretokenize_attaches_space_to_next_word() {
        assert_eq!(pretokenize("a b"), ["a", " b"]);
        assert_eq!(pretokenize("a  b"), ["a", " ", " b"]);
        assert_eq!(pretokenize(" a\nb "), [" a", "\n", "b", " "]);
        assert_eq!(pretokenize(""), Vec::<&str>::new());
        assert_eq!(pretokenize("a\t b"), ["a", "\t", " b"]);
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let model = train_bpe(["abab abab"], 4).unwrap();
        // alphabet {a, b, ' '}: one merge
        assert_eq!(model.alphabet_size(), 3);
        assert_eq!(model.merges(), vec![("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn zero_merge_model() {
        let model = train_bpe(["abc cab"], 4).unwrap();
        assert_eq!(model.num_merges(), 0);
        let ids = model.segment("abc", &SegmentationOptions::greedy());
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn training_is_deterministic() {
        assert_eq!(toy().merges(), toy().merges());
        assert_eq!(toy().fingerprint(), toy().fingerprint());
    }

    #[test]
    fn errors() {
        assert!(matches!(train_bpe(Vec::<&str>::new(), 10), Err(Error::EmptyCorpus)));
        assert!(train_bpe(["abc"], 2).is_err());
        assert!(matches!(toy().detokenize(&[9999]), Err(Error::UnknownToken(9999))));
        assert!(SegmentationOptions::dropout(1.5, 0).validate().is_err());
    }

    #[test]
    fn full_dropout_leaves_alphabet() {
        let model = toy();
        let ids = model.segment("the cat sat", &SegmentationOptions::dropout(1.0, 3));
        assert!(ids.iter().all(|&id| model.is_alphabet_or_byte(id)));
        assert_eq!(ids.len(), "the cat sat".chars().count());
    }

    #[test]
    fn unknown_characters_fall_back_to_bytes() {
        let model = toy();
        let text = "the ไทย cat";
        let ids = model.segment(text, &SegmentationOptions::greedy());
        assert!(ids.iter().any(|&id| id < 256));
        assert_eq!(model.detokenize(&ids).unwrap(), text);
    }

    #[test]
    fn skip_rate_matches_dropout() {
        let model = train_bpe(["ab ab ab"], 4).unwrap();
        let merged = model.token_id("ab").unwrap();
        let trials = 10_000u64;
        let skipped = (0..trials)
            .filter(|&s| model.segment("ab", &SegmentationOptions::dropout(0.1, s)) != [merged])
            .count();
        let rate = skipped as f64 / trials as f64;
        assert!((rate - 0.1).abs() <= 0.01, "skip rate {rate}");
    }

    #[test]
    fn dropout_lengthens_on_average() {
        let model = toy();
        let text = "the cat sat on the mat and the hat";
        let greedy = model.segment(text, &SegmentationOptions::greedy()).len() as f64;
        let mean = (0..500u64)
            .map(|s| model.segment(text, &SegmentationOptions::dropout(0.3, s)).len() as f64)
            .sum::<f64>()
            / 500.0;
        assert!(mean > greedy);
    }

    #[test]
    fn vocab_and_merge_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = toy();
        let (v, m) = (dir.path().join("vocab.txt"), dir.path().join("merges.txt"));
        model.save(&v, &m).unwrap();
        let loaded = BpeModel::load(&v, &m).unwrap();
        assert_eq!(loaded.fingerprint(), model.fingerprint());
        assert_eq!(loaded.special_id(EOD_TOKEN), model.special_id(EOD_TOKEN));
        let opts = SegmentationOptions::greedy();
        assert_eq!(loaded.segment("the cat", &opts), model.segment("the cat", &opts));
        assert!(BpeModel::from_text(&model.vocab_text(), "\"zz\" \"q\"\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_any_dropout(text in "[a-z ,.\n\u{e01}-\u{e10}]{0,40}", p in 0.0f64..=1.0, seed in any::<u64>()) {
            let model = toy();
            let ids = model.segment(&text, &SegmentationOptions::dropout(p, seed));
            prop_assert_eq!(model.detokenize(&ids).unwrap(), text);
        }

    }
}
