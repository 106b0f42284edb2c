use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

pub const DEFAULT_NUM_PERM: usize = 256;
pub const DEFAULT_THRESHOLD: f64 = 0.7;
/// Simpson intervals used for the false-positive / false-negative areas.
pub const QUADRATURE_STEPS: usize = 256;

/// Banding layout for a signature of `num_perm` slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    pub num_perm: usize,
    pub threshold: f64,
    pub bands: usize,
    pub rows: usize,
    pub fp_weight: f64,
    pub fn_weight: f64,
}

impl LshParams {
    /// Search the layout minimizing the weighted false-positive and
    /// false-negative areas.
    pub fn optimal(threshold: f64, num_perm: usize, fp_weight: f64, fn_weight: f64) -> Result<Self> {
        let (bands, rows) = optimal_param(threshold, num_perm, fp_weight, fn_weight)?;
        Ok(LshParams {
            num_perm,
            threshold,
            bands,
            rows,
            fp_weight,
            fn_weight,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.rows == 0 || self.bands * self.rows > self.num_perm {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= bands * rows <= num_perm, got {} x {} for {}",
                self.bands, self.rows, self.num_perm
            )));
        }
        Ok(())
    }
}

/// Probability that a pair with Jaccard similarity `s` shares at least one
/// band: `1 - (1 - s^r)^b`.
pub fn lsh_collision_probability<T: Scalar>(s: T, bands: usize, rows: usize) -> T {
    let r = T::of(rows as f64);
    let b = T::of(bands as f64);
    T::one() - (T::one() - s.powf(r)).powf(b)
}

/// Composite Simpson's rule with `steps` (rounded up to even) intervals.
pub fn simpson<T: Scalar>(f: impl Fn(T) -> T, lo: T, hi: T, steps: usize) -> T {
    let steps = (steps.max(2) + 1) & !1;
    let h = (hi - lo) / T::of(steps as f64);
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        let x = lo + h * T::of(i as f64);
        acc = acc + f(x) * if i % 2 == 1 { T::of(4.0) } else { T::of(2.0) };
    }
    acc * h / T::of(3.0)
}

/// Weighted error of one `(bands, rows)` layout.
pub fn weighted_error<T: Scalar>(
    threshold: T,
    bands: usize,
    rows: usize,
    fp_weight: T,
    fn_weight: T,
    steps: usize,
) -> T {
    let fp = simpson(|s| lsh_collision_probability(s, bands, rows), T::zero(), threshold, steps);
    let fn_area = simpson(
        |s| T::one() - lsh_collision_probability(s, bands, rows),
        threshold,
        T::one(),
        steps,
    );
    fp_weight * fp + fn_weight * fn_area
}

/// `(bands, rows)` with `bands * rows <= num_perm` minimizing
/// `fp_weight * FP + fn_weight * FN`, where FP is the collision probability
/// integrated over `[0, threshold]` and FN the miss probability over
/// `[threshold, 1]`. Ties keep the first layout in `(bands, rows)` order.
pub fn optimal_param<T: Scalar>(
    threshold: T,
    num_perm: usize,
    fp_weight: T,
    fn_weight: T,
) -> Result<(usize, usize)> {
    optimal_param_with_steps(threshold, num_perm, fp_weight, fn_weight, QUADRATURE_STEPS)
}

pub fn optimal_param_with_steps<T: Scalar>(
    threshold: T,
    num_perm: usize,
    fp_weight: T,
    fn_weight: T,
    steps: usize,
) -> Result<(usize, usize)> {
    if num_perm < 1 {
        return Err(Error::InvalidArgument("num_perm must be >= 1".into()));
    }
    if !(threshold >= T::zero() && threshold <= T::one()) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut best = (1, 1);
    let mut best_err = T::infinity();
    for bands in 1..=num_perm {
        for rows in 1..=num_perm / bands {
            let err = weighted_error(threshold, bands, rows, fp_weight, fn_weight, steps);
            if err < best_err {
                best_err = err;
                best = (bands, rows);
            }
        }
    }
    Ok(best)
}
