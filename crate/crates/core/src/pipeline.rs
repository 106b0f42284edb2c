//! Stage runners and the configuration file shared by the command line.
//!
//! Every stage reads a JSONL corpus, writes its output next to a
//! `<out>.stats.json` file and returns the [`StageStats`]. A run with a fixed
//! global seed is reproducible byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clean::{apply_filters, CleanConfig};
use crate::dedup::{dedup_corpus, DedupConfig};
use crate::io::{chain_report, read_all, write_corpus, Document, RetentionReport, StageStats};
use crate::mixture::MixtureConfig;
use crate::normalize::{NormalizeConfig, Normalizer};
use crate::pack::{
    merge_adjacent, pack_sequences, windows_header, word_code_switch, write_windows, CodeswitchConfig, PackConfig,
};
use crate::seed;
use crate::tokenize::BpeModel;
use crate::{Error, Result};

pub const REMOVED_EMPTY: &str = "empty_after_normalize";
pub const REMOVED_MERGED: &str = "merged";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Normalize,
    Clean,
    Dedup,
    Merge,
    Codeswitch,
    Pack,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Normalize,
        Stage::Clean,
        Stage::Dedup,
        Stage::Merge,
        Stage::Codeswitch,
        Stage::Pack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Normalize => "normalize",
            Stage::Clean => "clean",
            Stage::Dedup => "dedup",
            Stage::Merge => "merge",
            Stage::Codeswitch => "codeswitch",
            Stage::Pack => "pack",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// Tokenizer files used by the pack stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizeConfig {
    pub vocab: Option<PathBuf>,
    pub merges: Option<PathBuf>,
}

impl TokenizeConfig {
    pub fn resolve(self, base: &Path) -> Self {
        TokenizeConfig {
            vocab: self.vocab.map(|p| base.join(p)),
            merges: self.merges.map(|p| base.join(p)),
        }
    }

    pub fn load_model(&self) -> Result<BpeModel> {
        match (&self.vocab, &self.merges) {
            (Some(v), Some(m)) => BpeModel::load(v, m),
            _ => Err(Error::Config("tokenizer vocab and merges files are required".into())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Global seed; module seeds are derived from it by stage name.
    pub seed: Option<u64>,
    /// Stages run by the `pipeline` command, in order.
    pub stages: Vec<Stage>,
    pub normalize: NormalizeConfig,
    pub clean: CleanConfig,
    pub dedup: DedupConfig,
    pub pack: PackConfig,
    pub codeswitch: CodeswitchConfig,
    pub tokenize: TokenizeConfig,
    pub mixture: MixtureConfig,
}

impl PipelineConfig {
    /// Parse TOML. Relative resource paths are resolved against `base` and
    /// loaded once so missing files are reported up front.
    pub fn from_toml(raw: &str, base: &Path) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(raw).map_err(|e| Error::Config(e.to_string()))?;
        config.resolve(base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&raw, base)
    }

    fn resolve(mut self, base: &Path) -> Result<Self> {
        self.normalize = self.normalize.resolve(base)?;
        self.clean = self.clean.resolve(base)?;
        self.codeswitch = self.codeswitch.resolve(base)?;
        self.tokenize = self.tokenize.resolve(base);
        for path in self.tokenize.vocab.iter().chain(&self.tokenize.merges) {
            if !path.is_file() {
                return Err(Error::Config(format!("tokenizer file {} does not exist", path.display())));
            }
        }
        if let Some(s) = self.seed {
            self.set_seed(s);
        }
        self.validate()?;
        Ok(self)
    }

    /// Derive every module seed from one global seed.
    pub fn set_seed(&mut self, global: u64) {
        self.seed = Some(global);
        self.dedup.seed = seed::derive(global, &[Stage::Dedup.name()]);
        self.pack.seed = seed::derive(global, &[Stage::Pack.name()]);
        self.codeswitch.seed = seed::derive(global, &[Stage::Codeswitch.name()]);
        self.mixture.seed = seed::derive(global, &["mixture"]);
    }

    pub fn validate(&self) -> Result<()> {
        self.normalize.validate()?;
        self.clean.default.validate()?;
        for cfg in self.clean.languages.values() {
            cfg.validate()?;
        }
        self.dedup.validate()?;
        self.dedup.lsh_params()?;
        self.pack.validate()?;
        self.codeswitch.validate()?;
        self.mixture.validate()?;
        if let Some(i) = self.stages.iter().position(|s| *s == Stage::Pack) {
            if i + 1 != self.stages.len() {
                return Err(Error::Config("pack must be the last stage".into()));
            }
        }
        Ok(())
    }
}

/// `<out>.stats.json`
pub fn stats_path(output: &Path) -> PathBuf {
    sibling(output, "stats.json")
}

/// `<out>.clusters.jsonl`, written by the dedup stage.
pub fn clusters_path(output: &Path) -> PathBuf {
    sibling(output, "clusters.jsonl")
}

fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    output.with_file_name(name)
}

#[derive(Serialize)]
struct ClusterLine<'a> {
    removed: &'a str,
    representative: &'a str,
}

/// Run one stage over `input`, writing `output` and its stats file.
pub fn run_stage(stage: Stage, config: &PipelineConfig, input: &Path, output: &Path, strict: bool) -> Result<StageStats> {
    let (docs, skipped) = read_all(input, strict)?;
    let mut stats = StageStats::new(stage.name());
    stats.skipped_malformed = skipped;
    for d in &docs {
        stats.record_in(d);
    }

    let kept = match stage {
        Stage::Normalize => {
            let normalizer = Normalizer::new(config.normalize.clone())?;
            let normalized: Vec<Document> = docs.par_iter().map(|d| normalizer.normalize_document(d)).collect();
            let mut kept = Vec::with_capacity(normalized.len());
            for (before, after) in docs.iter().zip(normalized) {
                if after.text.trim().is_empty() {
                    stats.record_removal(REMOVED_EMPTY);
                    continue;
                }
                if after.text != before.text {
                    stats.modified += 1;
                }
                kept.push(after);
            }
            kept
        }
        Stage::Clean => {
            let scorers = config.clean.load_scorers()?;
            let verdicts = docs
                .par_iter()
                .map(|d| apply_filters(d, config.clean.for_lang(&d.lang), &config.clean.segmenter, &scorers))
                .collect::<Result<Vec<_>>>()?;
            let mut kept = Vec::with_capacity(docs.len());
            for (doc, verdict) in docs.into_iter().zip(verdicts) {
                match verdict.failed_filter {
                    Some(kind) => stats.record_removal(kind.name()),
                    None => kept.push(doc),
                }
            }
            kept
        }
        Stage::Dedup => {
            let outcome = dedup_corpus(docs, &config.dedup, &config.clean.segmenter)?;
            let path = clusters_path(output);
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            for (removed, representative) in outcome.clusters.removed_map().values() {
                serde_json::to_writer(&mut w, &ClusterLine { removed, representative })
                    .map_err(|e| Error::io(&path, e.into()))?;
                w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            stats.removal_breakdown = outcome.stats.removal_breakdown;
            outcome.kept
        }
        Stage::Merge => {
            let n = docs.len() as u64;
            let merged = merge_adjacent(docs, &config.pack);
            let folded = n - merged.len() as u64;
            if folded > 0 {
                stats.removal_breakdown.insert(REMOVED_MERGED.into(), folded);
            }
            stats.modified = merged.iter().filter(|d| d.meta.contains_key(crate::pack::META_MERGED_FROM)).count() as u64;
            merged
        }
        Stage::Codeswitch => {
            let lexicons = config.codeswitch.load_lexicons()?;
            let cs = &config.codeswitch;
            let switched: Vec<Document> = docs
                .par_iter()
                .map(|d| match lexicons.get(&d.lang) {
                    Some(lex) => word_code_switch(d, lex, cs.rate, cs.seed).0,
                    None => d.clone(),
                })
                .collect();
            stats.modified = docs.iter().zip(&switched).filter(|(a, b)| a.text != b.text).count() as u64;
            switched
        }
        Stage::Pack => {
            let model = config.tokenize.load_model()?;
            let windows = pack_sequences(&docs, &model, &config.pack)?;
            write_windows(output, &windows_header(&model, &config.pack)?, &windows)?;
            for d in &docs {
                stats.record_out(d);
            }
            stats.check()?;
            stats.save(&stats_path(output))?;
            return Ok(stats);
        }
    };

    for d in &kept {
        stats.record_out(d);
    }
    stats.check()?;
    write_corpus(kept, output)?;
    stats.save(&stats_path(output))?;
    Ok(stats)
}

/// Output file name for the `index`-th stage of a pipeline run.
pub fn stage_output(work_dir: &Path, index: usize, stage: Stage) -> PathBuf {
    let ext = if stage == Stage::Pack { "windows.jsonl" } else { "jsonl" };
    work_dir.join(format!("{:02}-{}.{ext}", index + 1, stage.name()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineRun {
    pub outputs: Vec<PathBuf>,
    pub stats: Vec<StageStats>,
    pub report: RetentionReport,
}

/// Run the configured stage list, each stage consuming the previous output,
/// then write `report.json` and `report.txt` into `work_dir`.
pub fn run_pipeline(config: &PipelineConfig, input: &Path, work_dir: &Path, strict: bool) -> Result<PipelineRun> {
    if config.stages.is_empty() {
        return Err(Error::Config("no stages configured".into()));
    }
    std::fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
    let mut current = input.to_path_buf();
    let mut outputs = Vec::new();
    let mut stats = Vec::new();
    for (i, &stage) in config.stages.iter().enumerate() {
        let out = stage_output(work_dir, i, stage);
        stats.push(run_stage(stage, config, &current, &out, strict)?);
        outputs.push(out.clone());
        current = out;
    }
    let report = chain_report(&stats)?;
    write_report(&report, work_dir)?;
    Ok(PipelineRun { outputs, stats, report })
}

/// Build the retention report from stats files in pipeline order.
pub fn report_from_files(paths: &[PathBuf]) -> Result<RetentionReport> {
    let stats = paths.iter().map(|p| StageStats::load(p)).collect::<Result<Vec<_>>>()?;
    chain_report(&stats)
}

pub fn write_report(report: &RetentionReport, dir: &Path) -> Result<()> {
    let json = dir.join("report.json");
    let body = serde_json::to_string_pretty(report).expect("report serialize");
    std::fs::write(&json, body + "\n").map_err(|e| Error::io(&json, e))?;
    let txt = dir.join("report.txt");
    std::fs::write(&txt, report.to_table()).map_err(|e| Error::io(&txt, e))
}

/// Per-stage removal reasons merged across a run, for summaries.
pub fn removal_totals(stats: &[StageStats]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for s in stats {
        for (k, v) in &s.removal_breakdown {
            *out.entry(format!("{}/{}", s.stage, k)).or_default() += v;
        }
    }
    out
}
