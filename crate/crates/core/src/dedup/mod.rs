//! MinHash LSH near-duplicate removal.
//!
//! Documents are shingled into word n-grams, hashed into `num_perm`-slot
//! signatures and bucketed by band. Any band collision makes a candidate
//! pair; candidates are merged in a union-find forest and each cluster
//! keeps only its earliest document.
//!
//! Large corpora are processed in chunks over several rounds: each round
//! shuffles the surviving documents (seeded), splits them into chunks,
//! dedups every chunk independently and recombines. The chunk length grows
//! by `chunk_growth` per round so that duplicates split across chunks meet
//! eventually.

mod cluster;
mod lsh;
mod minhash;

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clean::SegmenterConfig;
use crate::io::{Document, StageStats};
use crate::seed;
use crate::{Error, Result};

pub use cluster::DuplicateClusters;
pub use lsh::{
    lsh_collision_probability, optimal_param, optimal_param_with_steps, simpson, weighted_error,
    LshParams, DEFAULT_NUM_PERM, DEFAULT_THRESHOLD, QUADRATURE_STEPS,
};
pub use minhash::{
    estimate_jaccard, exact_jaccard, minhash, shingle_hash, shingle_hashes, shingles, HashFamily,
    MinHashSignature, MERSENNE_61,
};

pub const REMOVAL_REASON: &str = "near_duplicate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub threshold: f64,
    pub num_perm: usize,
    pub ngram: usize,
    pub fp_weight: f64,
    pub fn_weight: f64,
    /// Explicit banding; searched with [`optimal_param`] when absent.
    pub bands: Option<usize>,
    pub rows: Option<usize>,
    /// Documents per chunk in the first round.
    pub chunk_size: usize,
    pub rounds: usize,
    /// Chunk length multiplier applied after every round.
    pub chunk_growth: usize,
    /// Stop once a recombined round removes less than this share of its
    /// input.
    pub min_removal_fraction: f64,
    /// Keep a band collision only when the signature estimate reaches
    /// `threshold`.
    pub verify_estimates: bool,
    pub seed: u64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            threshold: DEFAULT_THRESHOLD,
            num_perm: DEFAULT_NUM_PERM,
            ngram: 5,
            fp_weight: 0.5,
            fn_weight: 0.5,
            bands: None,
            rows: None,
            chunk_size: 100_000,
            rounds: 3,
            chunk_growth: 2,
            min_removal_fraction: 0.001,
            verify_estimates: false,
            seed: 0,
        }
    }
}

impl DedupConfig {
    pub fn lsh_params(&self) -> Result<LshParams> {
        let params = match (self.bands, self.rows) {
            (Some(bands), Some(rows)) => LshParams {
                num_perm: self.num_perm,
                threshold: self.threshold,
                bands,
                rows,
                fp_weight: self.fp_weight,
                fn_weight: self.fn_weight,
            },
            (None, None) => LshParams::optimal(self.threshold, self.num_perm, self.fp_weight, self.fn_weight)?,
            _ => {
                return Err(Error::Config("bands and rows must be given together".into()));
            }
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 || self.rounds == 0 || self.ngram == 0 || self.chunk_growth == 0 {
            return Err(Error::Config(
                "chunk_size, rounds, ngram and chunk_growth must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub chunk_len: usize,
    pub chunks: usize,
    pub docs_in: usize,
    pub docs_out: usize,
}

#[derive(Debug)]
pub struct DedupOutcome {
    pub kept: Vec<Document>,
    pub clusters: DuplicateClusters,
    pub stats: StageStats,
    pub rounds: Vec<RoundStats>,
    pub params: LshParams,
}

fn band_key(slots: &[u64], band: usize) -> u64 {
    let mut h = seed::mix64(band as u64);
    for &s in slots {
        h = seed::mix64(h ^ s);
    }
    h
}

/// Candidate pairs inside one chunk, as `(earlier bucket member, doc)`.
fn chunk_candidates(
    chunk: &[usize],
    signatures: &[MinHashSignature],
    params: &LshParams,
    verify: bool,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    for band in 0..params.bands {
        let range = band * params.rows..(band + 1) * params.rows;
        let mut table: HashMap<u64, usize> = HashMap::with_capacity(chunk.len());
        for &doc in chunk {
            let key = band_key(&signatures[doc].slots[range.clone()], band);
            match table.get(&key) {
                Some(&first) => {
                    if !seen.insert((first, doc)) {
                        continue;
                    }
                    if verify {
                        let est = estimate_jaccard(&signatures[first], &signatures[doc])
                            .expect("signatures share one family");
                        if est < params.threshold {
                            continue;
                        }
                    }
                    pairs.push((first, doc));
                }
                None => {
                    table.insert(key, doc);
                }
            }
        }
    }
    pairs
}

/// Signatures for a batch of documents, computed in parallel.
pub fn signatures(
    docs: &[Document],
    family: &HashFamily,
    ngram: usize,
    segmenters: &SegmenterConfig,
) -> Vec<MinHashSignature> {
    docs.par_iter()
        .map(|doc| {
            let words = segmenters.words(&doc.text, &doc.lang);
            family.signature_from_hashes(&shingle_hashes(&words, ngram))
        })
        .collect()
}

/// Remove near-duplicates, keeping the earliest document of each cluster.
/// The kept documents stay in their original relative order.
pub fn dedup_corpus(
    docs: Vec<Document>,
    config: &DedupConfig,
    segmenters: &SegmenterConfig,
) -> Result<DedupOutcome> {
    config.validate()?;
    let params = config.lsh_params()?;
    let mut ids = HashSet::with_capacity(docs.len());
    for d in &docs {
        if !ids.insert(d.id.as_str()) {
            return Err(Error::DuplicateId(d.id.clone()));
        }
    }
    drop(ids);

    let family = HashFamily::new(config.num_perm, config.seed);
    let sigs = signatures(&docs, &family, config.ngram, segmenters);
    let mut clusters = DuplicateClusters::new(docs.iter().map(|d| d.id.clone()).collect());

    let mut alive: Vec<usize> = (0..docs.len()).collect();
    let mut chunk_len = config.chunk_size;
    let mut rounds = Vec::new();
    for round in 0..config.rounds {
        let docs_in = alive.len();
        let mut order = alive.clone();
        if round > 0 {
            let mut rng = seed::rng(seed::derive_index(seed::derive(config.seed, &["dedup", "round"]), round as u64));
            order.shuffle(&mut rng);
        }
        let chunks: Vec<&[usize]> = order.chunks(chunk_len.max(1)).collect();
        let pairs: Vec<Vec<(usize, usize)>> = chunks
            .par_iter()
            .map(|chunk| chunk_candidates(chunk, &sigs, &params, config.verify_estimates))
            .collect();
        for (a, b) in pairs.into_iter().flatten() {
            clusters.union(a, b);
        }
        alive.retain(|&x| clusters.is_representative(x));
        let docs_out = alive.len();
        rounds.push(RoundStats {
            round: round + 1,
            chunk_len,
            chunks: chunks.len(),
            docs_in,
            docs_out,
        });

        let single_chunk = chunks.len() <= 1;
        let removed = (docs_in - docs_out) as f64;
        let converged = round > 0 && removed < config.min_removal_fraction * docs_in as f64;
        if single_chunk || converged {
            break;
        }
        chunk_len = chunk_len.saturating_mul(config.chunk_growth);
    }

    let mut stats = StageStats::new("dedup");
    for d in &docs {
        stats.record_in(d);
    }
    let keep: HashSet<usize> = alive.iter().copied().collect();
    let mut kept = Vec::with_capacity(alive.len());
    for (i, d) in docs.into_iter().enumerate() {
        if keep.contains(&i) {
            stats.record_out(&d);
            kept.push(d);
        } else {
            stats.record_removal(REMOVAL_REASON);
        }
    }
    Ok(DedupOutcome {
        kept,
        clusters,
        stats,
        rounds,
        params,
    })
}
