//! Corpus records, streaming JSONL read/write and per-stage retention
//! accounting.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::{Error, Result};

/// One corpus record.
///
/// Serialized as a single JSON object per line with the field order
/// `id, lang, source, text, meta`. `meta` is omitted when empty and carries
/// stage annotations and external scorer sidecar values; unknown keys pass
/// through every stage untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub lang: String,
    pub source: String,
    pub text: String,
    #[serde(
        default,
        skip_serializing_if = "BTreeMap::is_empty",
        deserialize_with = "string_map"
    )]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        lang: impl Into<String>,
        source: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Document {
            id: id.into(),
            lang: lang.into(),
            source: source.into(),
            text: text.into(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Parse a numeric meta value, if present.
    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.meta.get(key).and_then(|v| v.trim().parse().ok())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.lang.is_empty() {
            return Err("empty lang".into());
        }
        if self.lang.chars().any(|c| c.is_uppercase()) {
            return Err(format!("lang `{}` is not lowercase", self.lang));
        }
        Ok(())
    }
}

// Sidecar scorers often emit numbers; keep them as their JSON text.
fn string_map<'de, D>(de: D) -> std::result::Result<BTreeMap<String, String>, D::Error>
where
    D: Deserializer<'de>,
{
    let raw: Option<BTreeMap<String, serde_json::Value>> = Option::deserialize(de)?;
    Ok(raw
        .unwrap_or_default()
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            (k, v)
        })
        .collect())
}

/// Document and byte accounting for one pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: String,
    pub docs_in: u64,
    pub docs_out: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    /// Removal reason -> number of documents removed for it.
    #[serde(default)]
    pub removal_breakdown: BTreeMap<String, u64>,
    /// Documents that were kept but whose text changed.
    #[serde(default)]
    pub modified: u64,
    /// Malformed input lines skipped in lenient mode.
    #[serde(default)]
    pub skipped_malformed: u64,
}

impl StageStats {
    pub fn new(stage: impl Into<String>) -> Self {
        StageStats {
            stage: stage.into(),
            ..Default::default()
        }
    }

    pub fn record_in(&mut self, doc: &Document) {
        self.docs_in += 1;
        self.bytes_in += doc.text.len() as u64;
    }

    pub fn record_out(&mut self, doc: &Document) {
        self.docs_out += 1;
        self.bytes_out += doc.text.len() as u64;
    }

    pub fn record_removal(&mut self, reason: &str) {
        *self.removal_breakdown.entry(reason.to_string()).or_default() += 1;
    }

    /// Check `docs_out <= docs_in` and that the breakdown accounts for every
    /// removed document.
    pub fn check(&self) -> Result<()> {
        if self.docs_out > self.docs_in {
            return Err(Error::InvalidArgument(format!(
                "stage `{}`: docs_out {} exceeds docs_in {}",
                self.stage, self.docs_out, self.docs_in
            )));
        }
        let removed: u64 = self.removal_breakdown.values().sum();
        if removed != self.docs_in - self.docs_out {
            return Err(Error::InvalidArgument(format!(
                "stage `{}`: removal breakdown sums to {removed}, expected {}",
                self.stage,
                self.docs_in - self.docs_out
            )));
        }
        Ok(())
    }

    pub fn kept_rate(&self) -> f64 {
        ratio_or_one(self.docs_out, self.docs_in)
    }

    pub fn byte_kept_rate(&self) -> f64 {
        ratio_or_one(self.bytes_out, self.bytes_in)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("stats serialize");
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::MalformedRecord {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

fn ratio_or_one(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Streaming JSONL reader. Yields documents in file order.
pub struct CorpusReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    strict: bool,
    seen: HashSet<String>,
    skipped: u64,
}

impl CorpusReader {
    /// Number of lines skipped so far in lenient mode.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    fn parse_line(&mut self, line: &str) -> Result<Document> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: self.line_no,
                message: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| Error::MalformedRecord {
            line: self.line_no,
            message: "record is not an object".into(),
        })?;
        for field in ["id", "lang", "source", "text"] {
            if !obj.contains_key(field) {
                return Err(Error::MissingField {
                    line: self.line_no,
                    field,
                });
            }
        }
        let doc: Document =
            serde_json::from_value(value).map_err(|e| Error::MalformedRecord {
                line: self.line_no,
                message: e.to_string(),
            })?;
        doc.validate().map_err(|message| Error::MalformedRecord {
            line: self.line_no,
            message,
        })?;
        if !self.seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        Ok(doc)
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match self.parse_line(&line) {
                Ok(doc) => return Some(Ok(doc)),
                Err(e) if self.strict => return Some(Err(e)),
                Err(_) => self.skipped += 1,
            }
        }
    }
}

/// Open a corpus file for streaming. In strict mode the first malformed
/// line is an error; otherwise malformed lines are counted and skipped.
pub fn read_corpus(path: impl AsRef<Path>, strict: bool) -> Result<CorpusReader> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(CorpusReader {
        path: path.to_path_buf(),
        lines: BufReader::new(file).lines(),
        line_no: 0,
        strict,
        seen: HashSet::new(),
        skipped: 0,
    })
}

/// Read a whole corpus into memory.
pub fn read_all(path: impl AsRef<Path>, strict: bool) -> Result<(Vec<Document>, u64)> {
    let mut reader = read_corpus(path, strict)?;
    let docs = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((docs, reader.skipped()))
}

/// Write documents one JSON record per line.
pub fn write_corpus<I>(docs: I, path: impl AsRef<Path>) -> Result<StageStats>
where
    I: IntoIterator<Item = Document>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut stats = StageStats::new("write");
    for doc in docs {
        stats.record_in(&doc);
        serde_json::to_writer(&mut out, &doc).map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        stats.record_out(&doc);
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRetention {
    pub stage: String,
    pub docs_in: u64,
    pub docs_out: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub kept_rate: f64,
    pub removal_rate: f64,
    pub byte_kept_rate: f64,
    pub cumulative_kept_rate: f64,
}

/// Per-stage removal rates (relative to the previous stage) and the overall
/// kept rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub stages: Vec<StageRetention>,
    pub overall_kept_rate: f64,
    pub overall_byte_kept_rate: f64,
}

impl RetentionReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>12} {:>12} {:>10} {:>10} {:>10}",
            "stage", "docs_in", "docs_out", "removed%", "kept%", "overall%"
        );
        for s in &self.stages {
            let _ = writeln!(
                out,
                "{:<16} {:>12} {:>12} {:>9.2}% {:>9.2}% {:>9.2}%",
                s.stage,
                s.docs_in,
                s.docs_out,
                100.0 * s.removal_rate,
                100.0 * s.kept_rate,
                100.0 * s.cumulative_kept_rate
            );
        }
        let _ = writeln!(
            out,
            "overall kept: {:.4}% of documents, {:.4}% of bytes",
            100.0 * self.overall_kept_rate,
            100.0 * self.overall_byte_kept_rate
        );
        out
    }
}

/// Chain stage statistics into a retention report. Stage `k + 1` must
/// consume exactly the documents stage `k` produced.
pub fn chain_report(stages: &[StageStats]) -> Result<RetentionReport> {
    let mut rows = Vec::with_capacity(stages.len());
    let mut overall = 1.0;
    let mut overall_bytes = 1.0;
    for (i, s) in stages.iter().enumerate() {
        if s.docs_out > s.docs_in {
            return Err(Error::InvalidArgument(format!(
                "stage `{}` produced more documents than it consumed",
                s.stage
            )));
        }
        if i > 0 && stages[i - 1].docs_out != s.docs_in {
            return Err(Error::ChainMismatch {
                stage: s.stage.clone(),
                docs_in: s.docs_in,
                previous_out: stages[i - 1].docs_out,
            });
        }
        let kept = s.kept_rate();
        overall *= kept;
        overall_bytes *= s.byte_kept_rate();
        rows.push(StageRetention {
            stage: s.stage.clone(),
            docs_in: s.docs_in,
            docs_out: s.docs_out,
            bytes_in: s.bytes_in,
            bytes_out: s.bytes_out,
            kept_rate: kept,
            removal_rate: 1.0 - kept,
            byte_kept_rate: s.byte_kept_rate(),
            cumulative_kept_rate: overall,
        });
    }
    Ok(RetentionReport {
        stages: rows,
        overall_kept_rate: overall,
        overall_byte_kept_rate: overall_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage(name: &str, docs_in: u64, docs_out: u64) -> StageStats {
        let mut s = StageStats::new(name);
        s.docs_in = docs_in;
        s.docs_out = docs_out;
        s
    }

    #[test]
    fn reads_basic_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, r#"{"id":"a","lang":"id","source":"cc","text":"halo"}"#).unwrap();
        let (docs, skipped) = read_all(&path, true).unwrap();
        assert_eq!(docs, vec![Document::new("a", "id", "cc", "halo")]);
        assert_eq!(skipped, 0);
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_all(&path, true).unwrap().0.is_empty());
    }

    #[test]
    fn strict_missing_text_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"lang\":\"id\",\"source\":\"cc\",\"text\":\"x\"}\n{\"id\":\"b\",\"lang\":\"id\",\"source\":\"cc\"}\n",
        )
        .unwrap();
        let err = read_all(&path, true).unwrap_err();
        assert!(matches!(err, Error::MissingField { line: 2, field: "text" }));
        assert!(err.to_string().contains("line 2"));

        let (docs, skipped) = read_all(&path, false).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_corpus("/nonexistent/corpus.jsonl", true),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected_in_strict_mode() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let line = r#"{"id":"a","lang":"id","source":"cc","text":"x"}"#;
        std::fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        assert!(matches!(read_all(&path, true), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn newline_is_escaped_and_restored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let docs = vec![
            Document::new("a", "id", "cc", "line one\nline two"),
            Document::new("b", "th", "mad", "x").with_meta("ppl", "432.1"),
            Document::new("c", "vi", "cc", ""),
        ];
        let stats = write_corpus(docs.clone(), &path).unwrap();
        assert_eq!(stats.docs_out, 3);
        let raw = std::fs::read_to_string(&path).unwrap();
        assert_eq!(raw.lines().count(), 3);
        assert!(raw.starts_with(r#"{"id":"a","lang":"id","source":"cc","text":"line one\nline two"}"#));
        assert_eq!(read_all(&path, true).unwrap().0, docs);
    }

    #[test]
    fn numeric_meta_values_become_strings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            r#"{"id":"a","lang":"id","source":"cc","text":"x","meta":{"ppl":432.1,"note":"k"}}"#,
        )
        .unwrap();
        let doc = read_all(&path, true).unwrap().0.remove(0);
        assert_eq!(doc.meta_f64("ppl"), Some(432.1));
        assert_eq!(doc.meta["note"], "k");
    }

    #[test]
    fn empty_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let stats = write_corpus(Vec::new(), &path).unwrap();
        assert_eq!(stats.docs_out, 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    }

    #[test]
    fn retention_product_law() {
        let report = chain_report(&[stage("clean", 1_000_000, 688_900), stage("dedup", 688_900, 612_018)])
            .unwrap();
        assert!((report.stages[0].removal_rate - 0.3111).abs() < 1e-12);
        assert!((report.overall_kept_rate - 0.612018).abs() < 1e-12);
        assert!((report.overall_kept_rate - 0.6120).abs() < 1e-4);

        let single = chain_report(&[stage("noop", 10, 10)]).unwrap();
        assert_eq!(single.overall_kept_rate, 1.0);

        let halves = chain_report(&[stage("a", 100, 50), stage("b", 50, 25)]).unwrap();
        assert_eq!(halves.overall_kept_rate, 0.25);
        assert!(halves.to_table().contains("overall kept"));
    }

    #[test]
    fn retention_rejects_broken_chain() {
        let err = chain_report(&[stage("a", 100, 50), stage("b", 60, 25)]).unwrap_err();
        assert!(matches!(err, Error::ChainMismatch { .. }));
    }

    #[test]
    fn stage_check_requires_full_breakdown() {
        let mut s = stage("clean", 10, 7);
        s.removal_breakdown.insert("word_count".into(), 2);
        assert!(s.check().is_err());
        s.removal_breakdown.insert("perplexity".into(), 1);
        s.check().unwrap();
    }
}
