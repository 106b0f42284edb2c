//! Training-sequence construction: merging adjacent short examples,
//! word-level code-switching, and packing documents into fixed token
//! windows either across languages (code-switch mode) or per language.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::io::Document;
use crate::seed;
use crate::tokenize::{BpeModel, SegmentationOptions, EOD_TOKEN};
use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 4096;
pub const DEFAULT_CS_RATE: f64 = 0.10;
pub const META_MERGED_FROM: &str = "merged_from";
pub const META_CODESWITCHED: &str = "codeswitched_words";

const WINDOWS_FORMAT: &str = "refinery-windows";
const WINDOWS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackMode {
    /// One globally shuffled stream mixing every language.
    Codeswitch,
    /// One stream per language.
    Monolingual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackConfig {
    pub window: usize,
    /// Word count at which an accumulating merge group is closed.
    pub merge_target: usize,
    /// Upper bound on the paragraphs joined into one example.
    pub merge_max_span: usize,
    pub mode: PackMode,
    pub eod_token: String,
    /// BPE dropout used while tokenizing for packing.
    pub dropout_p: f64,
    pub seed: u64,
}

impl Default for PackConfig {
    fn default() -> Self {
        PackConfig {
            window: DEFAULT_WINDOW,
            merge_target: 512,
            merge_max_span: 4,
            mode: PackMode::Codeswitch,
            eod_token: EOD_TOKEN.to_string(),
            dropout_p: 0.0,
            seed: 0,
        }
    }
}

impl PackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.merge_max_span == 0 {
            return Err(Error::Config("window and merge_max_span must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(Error::Config("dropout_p must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn word_len(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Merge consecutive paragraphs with explicit span limits, one limit per
/// group drawn from `next_span`. A group closes when it reaches
/// `merge_target` words, reaches its span limit, or the next paragraph
/// comes from a different `(lang, source)`.
pub fn merge_adjacent_with_spans<F>(paragraphs: Vec<Document>, merge_target: usize, mut next_span: F) -> Vec<Document>
where
    F: FnMut() -> usize,
{
    let mut out = Vec::new();
    let mut iter = paragraphs.into_iter().peekable();
    while let Some(first) = iter.next() {
        let span = next_span().max(1);
        let mut words = word_len(&first.text);
        let mut group = first;
        let mut count = 1;
        while count < span && words < merge_target {
            let Some(next) = iter.next_if(|d| d.lang == group.lang && d.source == group.source) else {
                break;
            };
            words += word_len(&next.text);
            group.text.push('\n');
            group.text.push_str(&next.text);
            count += 1;
        }
        if count > 1 {
            group.meta.insert(META_MERGED_FROM.into(), count.to_string());
        }
        out.push(group);
    }
    out
}

/// Merge adjacent paragraphs with span limits drawn uniformly from
/// `1..=merge_max_span`. Order is preserved; shuffling happens at packing.
pub fn merge_adjacent(paragraphs: Vec<Document>, config: &PackConfig) -> Vec<Document> {
    let mut rng = seed::rng(seed::derive(config.seed, &["merge"]));
    let max = config.merge_max_span.max(1);
    merge_adjacent_with_spans(paragraphs, config.merge_target, || rng.random_range(1..=max))
}

/// Word -> translation phrase for one language pair. Keys are case-folded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BilingualLexicon {
    entries: HashMap<String, String>,
}

impl BilingualLexicon {
    pub fn new<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut entries = HashMap::new();
        for (k, v) in pairs {
            let (k, v) = (k.as_ref().trim(), v.as_ref().trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::InvalidArgument(format!("empty lexicon entry {k:?} -> {v:?}")));
            }
            entries.insert(k.to_lowercase(), v.to_string());
        }
        Ok(BilingualLexicon { entries })
    }

    /// Tab-separated `source<TAB>target phrase` per line.
    pub fn parse(raw: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::Config(format!("lexicon line {}: expected a tab", i + 1)))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        Self::new(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw)
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.entries.get(&word.to_lowercase()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Word-level code-switching settings: one lexicon per document language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeswitchConfig {
    /// Replacement probability for lexicon-covered words.
    pub rate: f64,
    pub lexicons: BTreeMap<String, PathBuf>,
    pub seed: u64,
}

impl Default for CodeswitchConfig {
    fn default() -> Self {
        CodeswitchConfig {
            rate: DEFAULT_CS_RATE,
            lexicons: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl CodeswitchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::Config(format!("code-switch rate {} outside [0, 1]", self.rate)));
        }
        Ok(())
    }

    pub fn resolve(mut self, base: &Path) -> Result<Self> {
        for p in self.lexicons.values_mut() {
            *p = base.join(&*p);
        }
        self.load_lexicons()?;
        Ok(self)
    }

    pub fn load_lexicons(&self) -> Result<BTreeMap<String, BilingualLexicon>> {
        self.lexicons
            .iter()
            .map(|(lang, path)| Ok((lang.clone(), BilingualLexicon::load(path)?)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CodeSwitchCounts {
    pub covered: usize,
    pub replaced: usize,
}

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // leading punctuation, core, trailing punctuation
    RE.get_or_init(|| Regex::new(r"(\p{P}*)([^\s\p{P}](?:[^\s]*[^\s\p{P}])?)(\p{P}*)").unwrap())
}

/// Replace each lexicon-covered word with its translation with probability
/// `cs_rate`. Punctuation around a word is kept. Draws are seeded per
/// document id.
pub fn word_code_switch(
    doc: &Document,
    lexicon: &BilingualLexicon,
    cs_rate: f64,
    seed: u64,
) -> (Document, CodeSwitchCounts) {
    let mut counts = CodeSwitchCounts::default();
    if cs_rate <= 0.0 || lexicon.is_empty() {
        return (doc.clone(), counts);
    }
    let mut rng = seed::rng(seed::derive(seed, &["codeswitch", &doc.id]));
    let text = word_regex().replace_all(&doc.text, |caps: &regex::Captures| {
        let core = &caps[2];
        match lexicon.get(core) {
            Some(translation) => {
                counts.covered += 1;
                if rng.random::<f64>() < cs_rate {
                    counts.replaced += 1;
                    format!("{}{}{}", &caps[1], translation, &caps[3])
                } else {
                    caps[0].to_string()
                }
            }
            None => caps[0].to_string(),
        }
    });
    let mut out = Document {
        text: text.into_owned(),
        ..doc.clone()
    };
    if counts.replaced > 0 {
        out.meta.insert(META_CODESWITCHED.into(), counts.replaced.to_string());
    }
    (out, counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedWindow {
    pub stream: String,
    pub index: usize,
    /// Final window of its stream, shorter than the window size.
    pub partial: bool,
    /// Languages of the documents with tokens in this window.
    pub langs: Vec<String>,
    pub ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowsHeader {
    pub format: String,
    pub version: u32,
    pub window: usize,
    pub eod_id: u32,
    pub tokenizer: String,
    pub mode: PackMode,
}

fn pack_stream(
    name: &str,
    docs: &[(&Document, Vec<u32>)],
    window: usize,
    eod: u32,
    out: &mut Vec<PackedWindow>,
) {
    let mut current: Vec<u32> = Vec::with_capacity(window);
    let mut langs: BTreeSet<String> = BTreeSet::new();
    let mut index = 0;
    for (doc, ids) in docs {
        let mut rest: &[u32] = ids;
        let mut marker_pending = true;
        while !rest.is_empty() || marker_pending {
            langs.insert(doc.lang.clone());
            let room = window - current.len();
            let take = room.min(rest.len());
            current.extend_from_slice(&rest[..take]);
            rest = &rest[take..];
            if rest.is_empty() && current.len() < window {
                current.push(eod);
                marker_pending = false;
            }
            if current.len() == window {
                out.push(PackedWindow {
                    stream: name.to_string(),
                    index,
                    partial: false,
                    langs: std::mem::take(&mut langs).into_iter().collect(),
                    ids: std::mem::replace(&mut current, Vec::with_capacity(window)),
                });
                index += 1;
            }
        }
    }
    if !current.is_empty() {
        out.push(PackedWindow {
            stream: name.to_string(),
            index,
            partial: true,
            langs: langs.into_iter().collect(),
            ids: current,
        });
    }
}

pub const MIXED_STREAM: &str = "mixed";

/// Shuffle, tokenize and chunk documents into windows of exactly
/// `config.window` tokens; each document is followed by the end-of-document
/// marker and may straddle window boundaries.
pub fn pack_sequences(docs: &[Document], model: &BpeModel, config: &PackConfig) -> Result<Vec<PackedWindow>> {
    config.validate()?;
    let eod = model
        .special_id(&config.eod_token)
        .ok_or_else(|| Error::Config(format!("tokenizer has no special token {:?}", config.eod_token)))?;

    let mut streams: BTreeMap<String, Vec<&Document>> = BTreeMap::new();
    for d in docs {
        let key = match config.mode {
            PackMode::Codeswitch => MIXED_STREAM.to_string(),
            PackMode::Monolingual => d.lang.clone(),
        };
        streams.entry(key).or_default().push(d);
    }

    let dropout_seed = seed::derive(config.seed, &["pack", "dropout"]);
    let mut out = Vec::new();
    for (name, mut members) in streams {
        let mut rng = seed::rng(seed::derive(config.seed, &["pack", "shuffle", &name]));
        members.shuffle(&mut rng);
        let tokenized: Vec<(&Document, Vec<u32>)> = members
            .par_iter()
            .map(|d| {
                let opts = SegmentationOptions {
                    dropout_p: config.dropout_p,
                    seed: seed::derive(dropout_seed, &[&d.id]),
                };
                (*d, model.segment(&d.text, &opts))
            })
            .collect();
        pack_stream(&name, &tokenized, config.window, eod, &mut out);
    }
    Ok(out)
}

/// Split a stream's windows back into per-document token sequences.
pub fn unpack_stream(windows: &[PackedWindow], eod: u32) -> Vec<Vec<u32>> {
    let mut docs = Vec::new();
    let mut current = Vec::new();
    for w in windows {
        for &id in &w.ids {
            if id == eod {
                docs.push(std::mem::take(&mut current));
            } else {
                current.push(id);
            }
        }
    }
    if !current.is_empty() {
        docs.push(current);
    }
    docs
}

pub fn write_windows(path: &Path, header: &WindowsHeader, windows: &[PackedWindow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    serde_json::to_writer(&mut out, header).map_err(|e| io(e.into()))?;
    out.write_all(b"\n").map_err(io)?;
    for w in windows {
        serde_json::to_writer(&mut out, w).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_windows(path: &Path) -> Result<(WindowsHeader, Vec<PackedWindow>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let malformed = |line: usize, e: serde_json::Error| Error::MalformedRecord {
        line,
        message: e.to_string(),
    };
    let first = lines
        .next()
        .ok_or_else(|| Error::ModelFormat("window file has no header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: WindowsHeader = serde_json::from_str(&first).map_err(|e| malformed(1, e))?;
    if header.format != WINDOWS_FORMAT || header.version != WINDOWS_VERSION {
        return Err(Error::ModelFormat(format!("unsupported window file {} v{}", header.format, header.version)));
    }
    let mut windows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        windows.push(serde_json::from_str(&line).map_err(|e| malformed(i + 2, e))?);
    }
    Ok((header, windows))
}

pub fn windows_header(model: &BpeModel, config: &PackConfig) -> Result<WindowsHeader> {
    Ok(WindowsHeader {
        format: WINDOWS_FORMAT.into(),
        version: WINDOWS_VERSION,
        window: config.window,
        eod_id: model
            .special_id(&config.eod_token)
            .ok_or_else(|| Error::Config(format!("tokenizer has no special token {:?}", config.eod_token)))?,
        tokenizer: model.fingerprint(),
        mode: config.mode,
    })
}
