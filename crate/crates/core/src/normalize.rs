//! Deterministic text normalization run before quality filtering.
//!
//! Step order for a document: escape repair (only when the text still
//! carries literal `\n` escapes) → whitespace unification → punctuation
//! mapping → tag/emoji/blocklist stripping → over-long token removal.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::io::Document;
use crate::{Error, Result};

pub const DEFAULT_WORD_LENGTH_CUTOFF: usize = 1000;

const LITERAL_NEWLINE: &str = "\\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizeConfig {
    /// Tokens longer than this many characters are dropped.
    pub word_length_cutoff: usize,
    /// Whole words removed case-insensitively.
    pub blocklist: Vec<String>,
    /// Plain-text blocklist resource, one term per line. Merged into
    /// `blocklist` by [`NormalizeConfig::resolve`].
    pub blocklist_path: Option<PathBuf>,
    /// Unicode punctuation -> ASCII replacement.
    pub punct_map: BTreeMap<char, String>,
    /// Resource file with `<char><TAB><ascii>` per line, merged over
    /// `punct_map`.
    pub punct_map_path: Option<PathBuf>,
    pub strip_html: bool,
    pub strip_emoji: bool,
    pub fix_escapes: bool,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        NormalizeConfig {
            word_length_cutoff: DEFAULT_WORD_LENGTH_CUTOFF,
            blocklist: Vec::new(),
            blocklist_path: None,
            punct_map: default_punct_map(),
            punct_map_path: None,
            strip_html: true,
            strip_emoji: true,
            fix_escapes: true,
        }
    }
}

impl NormalizeConfig {
    /// Load resource files referenced by the config and validate it.
    pub fn resolve(mut self, base: &Path) -> Result<Self> {
        if let Some(path) = self.blocklist_path.take() {
            let path = base.join(path);
            let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            self.blocklist.extend(
                raw.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_string),
            );
        }
        if let Some(path) = self.punct_map_path.take() {
            let path = base.join(path);
            let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let (from, to) = line.split_once('\t').ok_or_else(|| {
                    Error::Config(format!("{}:{}: expected `char<TAB>ascii`", path.display(), i + 1))
                })?;
                let mut chars = from.chars();
                let (Some(c), None) = (chars.next(), chars.next()) else {
                    return Err(Error::Config(format!(
                        "{}:{}: source must be a single character",
                        path.display(),
                        i + 1
                    )));
                };
                self.punct_map.insert(c, to.to_string());
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_length_cutoff == 0 {
            return Err(Error::Config("word_length_cutoff must be >= 1".into()));
        }
        for (k, v) in &self.punct_map {
            if !v.is_ascii() {
                return Err(Error::Config(format!("punct_map value for {k:?} is not ASCII")));
            }
            if v.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("punct_map value for {k:?} contains whitespace")));
            }
        }
        Ok(())
    }
}

/// Curly quotes, CJK/fullwidth punctuation and typographic dashes.
pub fn default_punct_map() -> BTreeMap<char, String> {
    let pairs: &[(char, &str)] = &[
        ('\u{2018}', "'"),
        ('\u{2019}', "'"),
        ('\u{201A}', "'"),
        ('\u{201B}', "'"),
        ('\u{201C}', "\""),
        ('\u{201D}', "\""),
        ('\u{201E}', "\""),
        ('\u{201F}', "\""),
        ('\u{00AB}', "\""),
        ('\u{00BB}', "\""),
        ('\u{2039}', "'"),
        ('\u{203A}', "'"),
        ('\u{2010}', "-"),
        ('\u{2011}', "-"),
        ('\u{2012}', "-"),
        ('\u{2013}', "-"),
        ('\u{2014}', "-"),
        ('\u{2015}', "-"),
        ('\u{2212}', "-"),
        ('\u{2026}', "..."),
        ('\u{2022}', "*"),
        ('\u{00B7}', "."),
        ('\u{3001}', ","),
        ('\u{3002}', "."),
        ('\u{300C}', "\""),
        ('\u{300D}', "\""),
        ('\u{300E}', "\""),
        ('\u{300F}', "\""),
        ('\u{3010}', "["),
        ('\u{3011}', "]"),
        ('\u{300A}', "<"),
        ('\u{300B}', ">"),
        ('\u{FF01}', "!"),
        ('\u{FF02}', "\""),
        ('\u{FF03}', "#"),
        ('\u{FF04}', "$"),
        ('\u{FF05}', "%"),
        ('\u{FF06}', "&"),
        ('\u{FF07}', "'"),
        ('\u{FF08}', "("),
        ('\u{FF09}', ")"),
        ('\u{FF0A}', "*"),
        ('\u{FF0B}', "+"),
        ('\u{FF0C}', ","),
        ('\u{FF0D}', "-"),
        ('\u{FF0E}', "."),
        ('\u{FF0F}', "/"),
        ('\u{FF1A}', ":"),
        ('\u{FF1B}', ";"),
        ('\u{FF1C}', "<"),
        ('\u{FF1D}', "="),
        ('\u{FF1E}', ">"),
        ('\u{FF1F}', "?"),
        ('\u{FF20}', "@"),
        ('\u{FF3B}', "["),
        ('\u{FF3C}', "\\"),
        ('\u{FF3D}', "]"),
        ('\u{FF3E}', "^"),
        ('\u{FF3F}', "_"),
        ('\u{FF40}', "`"),
        ('\u{FF5B}', "{"),
        ('\u{FF5C}', "|"),
        ('\u{FF5D}', "}"),
        ('\u{FF5E}', "~"),
    ];
    pairs.iter().map(|&(c, s)| (c, s.to_string())).collect()
}

/// Map every Unicode whitespace character except `\n` to U+0020. Runs are
/// kept as they are.
pub fn uniform_whitespace(text: &str) -> String {
    text.chars()
        .map(|c| if c != '\n' && c.is_whitespace() { ' ' } else { c })
        .collect()
}

pub fn replace_unicode_punct(text: &str, map: &BTreeMap<char, String>) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match map.get(&c) {
            Some(rep) => out.push_str(rep),
            None => out.push(c),
        }
    }
    out
}

fn html_tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"</?[A-Za-z][A-Za-z0-9:-]*(?:\s[^<>\n]*)?/?>|<!--[^\n]*?-->").unwrap()
    })
}

fn emoji_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?:[\x{1F000}-\x{1FAFF}\x{2600}-\x{27BF}\x{2B00}-\x{2BFF}\x{231A}\x{231B}\x{23E9}-\x{23FA}](?:\x{FE0F}|\x{200D}|[\x{1F3FB}-\x{1F3FF}])*)+",
        )
        .unwrap()
    })
}

/// Remove byte ranges from `text`, then tidy the spaces around each removal
/// site: no doubled space, no space at the start or end of a line.
fn remove_spans(text: &str, mut spans: Vec<(usize, usize)>) -> String {
    if spans.is_empty() {
        return text.to_string();
    }
    spans.sort_unstable();
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    let mut i = 0;
    while i < spans.len() {
        let (start, mut end) = spans[i];
        let start = start.max(pos);
        while i + 1 < spans.len() && spans[i + 1].0 <= end {
            end = end.max(spans[i + 1].1);
            i += 1;
        }
        i += 1;
        if start >= end {
            continue;
        }
        out.push_str(&text[pos..start]);
        pos = end;
        let rest = &text[pos..];
        let at_line_start = out.is_empty() || out.ends_with('\n') || out.ends_with(' ');
        if at_line_start {
            let skipped = rest.len() - rest.trim_start_matches(' ').len();
            pos += skipped;
        }
        let rest = &text[pos..];
        if rest.is_empty() || rest.starts_with('\n') {
            let trimmed = out.trim_end_matches(' ').len();
            out.truncate(trimmed);
        }
    }
    out.push_str(&text[pos..]);
    out
}

/// Drop HTML tags, emoji and blocklisted words.
pub fn strip_incorrect_words(text: &str, config: &NormalizeConfig) -> String {
    Stripper::new(config).strip(text)
}

struct Stripper<'a> {
    config: &'a NormalizeConfig,
    blocklist: Option<Regex>,
}

impl<'a> Stripper<'a> {
    fn new(config: &'a NormalizeConfig) -> Self {
        Stripper {
            config,
            blocklist: blocklist_regex(&config.blocklist),
        }
    }

    fn strip(&self, text: &str) -> String {
        // Removing one tag can expose another (`<<b>b>`), so run to a fixpoint.
        let mut current = text.to_string();
        loop {
            let next = self.strip_once(&current);
            if next == current {
                return next;
            }
            current = next;
        }
    }

    fn strip_once(&self, text: &str) -> String {
        let mut spans = Vec::new();
        if self.config.strip_html {
            spans.extend(html_tag_regex().find_iter(text).map(|m| (m.start(), m.end())));
        }
        if self.config.strip_emoji {
            spans.extend(emoji_regex().find_iter(text).map(|m| (m.start(), m.end())));
        }
        if let Some(re) = &self.blocklist {
            spans.extend(re.find_iter(text).map(|m| (m.start(), m.end())));
        }
        remove_spans(text, spans)
    }
}

fn blocklist_regex(terms: &[String]) -> Option<Regex> {
    let alts: Vec<String> = terms
        .iter()
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(regex::escape)
        .collect();
    if alts.is_empty() {
        return None;
    }
    Some(Regex::new(&format!(r"(?i)\b(?:{})\b", alts.join("|"))).expect("escaped blocklist"))
}

/// Delete space-delimited tokens longer than `cutoff` characters.
pub fn remove_lengthy_words(text: &str, cutoff: usize) -> String {
    let mut spans = Vec::new();
    let mut start = None;
    let mut chars = 0usize;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        if c == ' ' || c == '\n' {
            if let Some(s) = start.take() {
                if chars > cutoff {
                    spans.push((s, i));
                }
            }
            chars = 0;
        } else {
            if start.is_none() {
                start = Some(i);
            }
            chars += 1;
        }
    }
    remove_spans(text, spans)
}

/// Rejoin newline-separated segments: a segment boundary becomes a blank
/// line when either neighbour contains ". ", otherwise a single newline.
/// Trailing newlines are stripped.
pub fn rejoin_segments(text: &str) -> String {
    let segments: Vec<&str> = text.split('\n').collect();
    let mut out = String::with_capacity(text.len() + segments.len());
    for (i, seg) in segments.iter().enumerate() {
        let has = seg.contains(". ");
        let next_has = i + 1 < segments.len() && segments[i + 1].contains(". ");
        out.push_str(seg);
        out.push_str(if has || next_has { "\n\n" } else { "\n" });
    }
    let trimmed = out.trim_end_matches('\n').len();
    out.truncate(trimmed);
    out
}

/// Repair escaped newlines: the literal two-character sequence `\n` becomes
/// a real newline, then segments are rejoined with [`rejoin_segments`].
pub fn fix_escapes(text: &str) -> String {
    rejoin_segments(&text.replace(LITERAL_NEWLINE, "\n"))
}

/// Compiled normalizer; build once and share across workers.
pub struct Normalizer {
    config: NormalizeConfig,
    blocklist: Option<Regex>,
}

impl Normalizer {
    pub fn new(config: NormalizeConfig) -> Result<Self> {
        config.validate()?;
        let blocklist = blocklist_regex(&config.blocklist);
        Ok(Normalizer { config, blocklist })
    }

    pub fn config(&self) -> &NormalizeConfig {
        &self.config
    }

    pub fn normalize_text(&self, text: &str) -> String {
        let mut text = if self.config.fix_escapes && text.contains(LITERAL_NEWLINE) {
            fix_escapes(text)
        } else {
            text.to_string()
        };
        text = uniform_whitespace(&text);
        text = replace_unicode_punct(&text, &self.config.punct_map);
        let stripper = Stripper {
            config: &self.config,
            blocklist: self.blocklist.clone(),
        };
        // Dropping a long token can bring two fragments together into a new
        // tag or blocklist hit, so alternate the two removals to a fixpoint.
        loop {
            let next = remove_lengthy_words(&stripper.strip(&text), self.config.word_length_cutoff);
            if next == text {
                return next;
            }
            text = next;
        }
    }

    pub fn normalize_document(&self, doc: &Document) -> Document {
        Document {
            text: self.normalize_text(&doc.text),
            ..doc.clone()
        }
    }
}

/// One-shot convenience wrapper around [`Normalizer`].
pub fn normalize_document(doc: &Document, config: &NormalizeConfig) -> Result<Document> {
    Ok(Normalizer::new(config.clone())?.normalize_document(doc))
}
