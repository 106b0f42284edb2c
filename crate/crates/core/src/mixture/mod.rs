//! Proxy-run analysis: learning-rate grid, magic-metric quadratic fits,
//! the mixture-to-loss linear surrogate and simplex simulation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result, Scalar};

mod linalg;
mod quadratic;
mod surrogate;

pub use linalg::least_squares;
pub use quadratic::{estimate_boundary, fit_quadratic, BoundaryReport, QuadraticFit};
pub use surrogate::{
    fit_surrogate, simulate, SimulationResult, SurrogateModel, SurrogateOptions, SurrogateTarget, SIMULATION_BLOCK,
};

pub const DEFAULT_LR_LO: f64 = 1e-5;
pub const DEFAULT_LR_HI: f64 = 4e-4;
pub const DEFAULT_LR_INTERVALS: usize = 20;
pub const DEFAULT_SIMULATIONS: u64 = 1_000_000;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Defaults for the mixture commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureConfig {
    pub lr_lo: f64,
    pub lr_hi: f64,
    pub lr_intervals: usize,
    pub simulations: u64,
    pub surrogate: SurrogateOptions,
    pub seed: u64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            lr_lo: DEFAULT_LR_LO,
            lr_hi: DEFAULT_LR_HI,
            lr_intervals: DEFAULT_LR_INTERVALS,
            simulations: DEFAULT_SIMULATIONS,
            surrogate: SurrogateOptions::default(),
            seed: 0,
        }
    }
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        lr_grid(self.lr_lo, self.lr_hi, self.lr_intervals).map_err(|e| Error::Config(e.to_string()))?;
        if self.simulations == 0 {
            return Err(Error::Config("simulations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which magic-metric variant an x value was computed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricTag {
    /// `ln p − ln lr`
    Source,
    /// `ln p + ln lr`
    Target,
}

/// One proxy training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyRunRecord {
    pub mixture: BTreeMap<String, f64>,
    pub learning_rate: f64,
    pub losses: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
}

impl ProxyRunRecord {
    pub fn validate(&self) -> Result<()> {
        if self.mixture.is_empty() {
            return Err(Error::InvalidArgument("empty mixture".into()));
        }
        if self.mixture.values().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidArgument("negative mixture proportion".into()));
        }
        let total: f64 = self.mixture.values().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidArgument(format!("mixture sums to {total}, not 1")));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        joint_loss(&self.losses).map(|_| ())
    }
}

/// Read one JSON record per line; blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<ProxyRunRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProxyRunRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// `k + 1` log-spaced boundaries `lo·(hi/lo)^(i/k)`; the end points are
/// exactly `lo` and `hi`.
pub fn lr_grid<T: Scalar>(lo: T, hi: T, k: usize) -> Result<Vec<T>> {
    if !(lo > T::zero()) || !(hi > lo) || !hi.is_finite() || k == 0 {
        return Err(Error::InvalidArgument(format!("invalid learning-rate range {lo}..{hi} with {k} intervals")));
    }
    let ratio = hi / lo;
    let kf = T::of(k as f64);
    let mut grid: Vec<T> = (0..=k).map(|i| lo * ratio.powf(T::of(i as f64) / kf)).collect();
    grid[0] = lo;
    grid[k] = hi;
    Ok(grid)
}

/// Geometric midpoint of each grid interval.
pub fn lr_midpoints<T: Scalar>(grid: &[T]) -> Vec<T> {
    grid.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect()
}

/// Pick a uniform interval of the grid and return its geometric midpoint.
pub fn sample_learning_rate<T: Scalar, R: Rng + ?Sized>(grid: &[T], rng: &mut R) -> T {
    let i = rng.random_range(0..grid.len() - 1);
    (grid[i] * grid[i + 1]).sqrt()
}

/// Fill `out` with a uniform draw from the simplex (normalized unit
/// exponentials).
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut total = 0.0;
    for v in out.iter_mut() {
        // 1 - U lies in (0, 1]
        *v = -(1.0 - rng.random::<f64>()).ln();
        total += *v;
    }
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    } else {
        let n = out.len() as f64;
        out.iter_mut().for_each(|v| *v = 1.0 / n);
    }
}

pub fn sample_mixture<S: AsRef<str>>(keys: &[S], seed: u64) -> Result<BTreeMap<String, f64>> {
    if keys.is_empty() {
        return Err(Error::InvalidArgument("mixture needs at least one key".into()));
    }
    let mut rng = seed::rng(seed::derive(seed, &["mixture"]));
    let mut p = vec![0.0; keys.len()];
    sample_simplex(&mut rng, &mut p);
    Ok(keys.iter().map(|k| k.as_ref().to_string()).zip(p).collect())
}

/// Product of the individual losses.
pub fn joint_loss(losses: &BTreeMap<String, f64>) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::InvalidArgument("no losses".into()));
    }
    if let Some((k, v)) = losses.iter().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("loss {k} = {v} is not positive")));
    }
    Ok(losses.values().product())
}

pub fn magic_metric<T: Scalar>(proportion: T, lr: T, tag: MetricTag) -> Result<T> {
    if !(proportion > T::zero()) || !(lr > T::zero()) {
        return Err(Error::InvalidArgument("proportion and learning rate must be positive".into()));
    }
    Ok(match tag {
        MetricTag::Source => proportion.ln() - lr.ln(),
        MetricTag::Target => proportion.ln() + lr.ln(),
    })
}
