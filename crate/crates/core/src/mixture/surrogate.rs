use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{joint_loss, linalg, sample_simplex, ProxyRunRecord};
use crate::seed;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateTarget {
    #[default]
    Joint,
    LogJoint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateOptions {
    pub target: SurrogateTarget,
    /// Accept records with different learning rates, adding `ln lr` as a
    /// feature.
    pub allow_mixed_lr: bool,
    /// Key whose weight is pinned to zero; defaults to the last key in
    /// sorted order.
    pub reference: Option<String>,
}

/// Linear map from mixture proportions to (log) joint loss.
///
/// Proportions sum to one, so one key (the reference) carries weight zero
/// and its level is absorbed by the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel<T> {
    pub keys: Vec<String>,
    pub weights: Vec<T>,
    pub intercept: T,
    pub reference: String,
    pub target: SurrogateTarget,
    pub r_squared: T,
    pub records: usize,
    /// Learning rate the model is evaluated at.
    pub learning_rate: T,
    /// Coefficient of `ln lr`, present only for mixed-rate fits.
    pub lr_weight: Option<T>,
}

impl<T: Scalar> SurrogateModel<T> {
    /// Prediction for proportions given in `keys` order.
    pub fn predict_slice(&self, proportions: &[T]) -> T {
        let mut y = self.intercept;
        for (w, p) in self.weights.iter().zip(proportions) {
            y = y + *w * *p;
        }
        if let Some(lw) = self.lr_weight {
            y = y + lw * self.learning_rate.ln();
        }
        y
    }

    pub fn predict(&self, mixture: &BTreeMap<String, f64>) -> T {
        let p: Vec<T> = self.keys.iter().map(|k| T::of(mixture.get(k).copied().unwrap_or(0.0))).collect();
        self.predict_slice(&p)
    }
}

/// Ordinary least squares from proportions to the chosen target.
pub fn fit_surrogate<T: Scalar>(records: &[ProxyRunRecord], options: &SurrogateOptions) -> Result<SurrogateModel<T>> {
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| Error::InvalidArgument(format!("record {}: {e}", i + 1)))?;
    }
    let keys: Vec<String> = records
        .iter()
        .flat_map(|r| r.mixture.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if keys.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if records.len() < keys.len() + 1 {
        return Err(Error::RankDeficient(format!(
            "{} records for {} keys; need at least {}",
            records.len(),
            keys.len(),
            keys.len() + 1
        )));
    }
    let reference = match &options.reference {
        Some(r) if keys.contains(r) => r.clone(),
        Some(r) => return Err(Error::InvalidArgument(format!("reference key {r:?} not in records"))),
        None => keys[keys.len() - 1].clone(),
    };
    let lr0 = records[0].learning_rate;
    let mixed = records.iter().any(|r| r.learning_rate != lr0);
    if mixed && !options.allow_mixed_lr {
        return Err(Error::InvalidArgument(
            "records use different learning rates; pass allow_mixed_lr to include ln(lr) as a feature".into(),
        ));
    }

    let free: Vec<usize> = (0..keys.len()).filter(|&i| keys[i] != reference).collect();
    let mut rows = Vec::with_capacity(records.len());
    let mut ys = Vec::with_capacity(records.len());
    for r in records {
        let mut row = vec![T::one()];
        row.extend(free.iter().map(|&i| T::of(r.mixture.get(&keys[i]).copied().unwrap_or(0.0))));
        if mixed {
            row.push(T::of(r.learning_rate.ln()));
        }
        rows.push(row);
        let joint = joint_loss(&r.losses)?;
        ys.push(T::of(match options.target {
            SurrogateTarget::Joint => joint,
            SurrogateTarget::LogJoint => joint.ln(),
        }));
    }
    let coef = linalg::least_squares(&rows, &ys)?;

    let mut weights = vec![T::zero(); keys.len()];
    for (slot, &i) in free.iter().enumerate() {
        weights[i] = coef[slot + 1];
    }
    let lr_weight = mixed.then(|| coef[coef.len() - 1]);
    let learning_rate = if mixed {
        let mean_ln = records.iter().map(|r| r.learning_rate.ln()).sum::<f64>() / records.len() as f64;
        T::of(mean_ln.exp())
    } else {
        T::of(lr0)
    };

    let fitted: Vec<T> = rows
        .iter()
        .map(|row| row.iter().zip(&coef).map(|(&x, &c)| x * c).sum())
        .collect();
    let n = T::of(ys.len() as f64);
    let mean = ys.iter().copied().sum::<T>() / n;
    let tss: T = ys.iter().map(|&y| (y - mean).powi(2)).sum();
    let rss: T = ys.iter().zip(&fitted).map(|(&y, &f)| (y - f).powi(2)).sum();
    let r_squared = if tss > T::zero() {
        T::one() - rss / tss
    } else if rss <= T::epsilon() {
        T::one()
    } else {
        T::zero()
    };

    Ok(SurrogateModel {
        keys,
        weights,
        intercept: coef[0],
        reference,
        target: options.target,
        r_squared,
        records: records.len(),
        learning_rate,
        lr_weight,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult<T> {
    pub mixture: BTreeMap<String, f64>,
    pub predicted: T,
    /// Position of the winning draw in the sample sequence.
    pub index: u64,
    pub samples: u64,
    pub seed: u64,
}

/// Draws per independently seeded sub-stream.
pub const SIMULATION_BLOCK: u64 = 4096;

/// Evaluate the surrogate on `n` uniform simplex draws and return the
/// lowest prediction (earliest draw on ties). Draw `i` depends only on
/// `seed` and `i`, so results do not depend on the worker count and the
/// first `n` draws are shared across all larger `n`.
pub fn simulate<T: Scalar>(model: &SurrogateModel<T>, n: u64, seed: u64) -> Result<SimulationResult<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("simulation needs at least one sample".into()));
    }
    let k = model.keys.len();
    let base = seed::derive(seed, &["simulate"]);
    let blocks = n.div_ceil(SIMULATION_BLOCK);
    let best = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed::derive_index(base, b));
            let start = b * SIMULATION_BLOCK;
            let end = (start + SIMULATION_BLOCK).min(n);
            let mut draw = vec![0.0f64; k];
            let mut scratch = vec![T::zero(); k];
            let mut best: Option<(T, u64, Vec<f64>)> = None;
            for i in start..end {
                sample_simplex(&mut rng, &mut draw);
                for (s, &d) in scratch.iter_mut().zip(&draw) {
                    *s = T::of(d);
                }
                let y = model.predict_slice(&scratch);
                if best.as_ref().is_none_or(|(v, _, _)| y < *v) {
                    best = Some((y, i, draw.clone()));
                }
            }
            best
        })
        .reduce(
            || None,
            |x, y| match (x, y) {
                (None, o) | (o, None) => o,
                (Some(x), Some(y)) => {
                    if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) {
                        Some(y)
                    } else {
                        Some(x)
                    }
                }
            },
        )
        .expect("at least one block");
    let mixture = model.keys.iter().cloned().zip(best.2).collect();
    Ok(SimulationResult {
        mixture,
        predicted: best.0,
        index: best.1,
        samples: n,
        seed,
    })
}
