use serde::{Deserialize, Serialize};

use super::{linalg, MetricTag};
use crate::{Error, Result, Scalar};

/// `y = a·x² + b·x + c` fitted over magic-metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub rss: T,
    pub tag: MetricTag,
    pub x_min: T,
    pub x_max: T,
    pub points: usize,
}

impl<T: Scalar> QuadraticFit<T> {
    pub fn eval(&self, x: T) -> T {
        (self.a * x + self.b) * x + self.c
    }

    pub fn vertex(&self) -> Option<T> {
        (self.a != T::zero()).then(|| -self.b / (T::of(2.0) * self.a))
    }
}

/// Least-squares quadratic through `(x, y)` points; needs at least three
/// distinct x values.
pub fn fit_quadratic<T: Scalar>(points: &[(T, T)], tag: MetricTag) -> Result<QuadraticFit<T>> {
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("non-finite point".into()));
    }
    let mut xs: Vec<T> = points.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::RankDeficient(format!(
            "quadratic fit needs 3 distinct x values, got {}",
            xs.len()
        )));
    }
    let rows: Vec<Vec<T>> = points.iter().map(|&(x, _)| vec![x * x, x, T::one()]).collect();
    let ys: Vec<T> = points.iter().map(|p| p.1).collect();
    let coef = linalg::least_squares(&rows, &ys)?;
    let mut fit = QuadraticFit {
        a: coef[0],
        b: coef[1],
        c: coef[2],
        rss: T::zero(),
        tag,
        x_min: xs[0],
        x_max: xs[xs.len() - 1],
        points: points.len(),
    };
    fit.rss = points.iter().map(|&(x, y)| (y - fit.eval(x)).powi(2)).sum();
    Ok(fit)
}

/// Acceptable magic-metric region of a source-tagged fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport<T> {
    /// `baseline + delta`.
    pub level: T,
    /// Maximal sub-intervals of the fitted range where the fit is at or
    /// below `level`, in increasing order.
    pub intervals: Vec<(T, T)>,
    /// Left end of the rightmost acceptable interval; `None` when the fit
    /// never reaches `level` inside the fitted range.
    pub boundary: Option<T>,
    /// False when the whole fitted range is acceptable.
    pub deviates: bool,
}

fn roots<T: Scalar>(a: T, b: T, c: T) -> Vec<T> {
    let zero = T::zero();
    if a == zero {
        return if b == zero { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - T::of(4.0) * a * c;
    if disc < zero {
        return vec![];
    }
    let sq = disc.sqrt();
    let q = if b >= zero { -(b + sq) / T::of(2.0) } else { (sq - b) / T::of(2.0) };
    let mut r = if q == zero { vec![zero] } else { vec![q / a, c / q] };
    r.sort_by(|x, y| x.partial_cmp(y).unwrap());
    r
}

/// Where the fitted loss stays within `delta` of `baseline`.
pub fn estimate_boundary<T: Scalar>(fit: &QuadraticFit<T>, baseline: T, delta: T) -> Result<BoundaryReport<T>> {
    if fit.tag != MetricTag::Source {
        return Err(Error::InvalidArgument("boundary estimation needs a source-tagged fit".into()));
    }
    if !(delta > T::zero()) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    let level = baseline + delta;
    let mut cuts = vec![fit.x_min];
    cuts.extend(
        roots(fit.a, fit.b, fit.c - level)
            .into_iter()
            .filter(|r| *r > fit.x_min && *r < fit.x_max),
    );
    cuts.push(fit.x_max);

    let mut intervals: Vec<(T, T)> = Vec::new();
    for w in cuts.windows(2) {
        let mid = (w[0] + w[1]) / T::of(2.0);
        let ok = if w[0] == w[1] { fit.eval(w[0]) <= level } else { fit.eval(mid) <= level };
        if !ok {
            continue;
        }
        match intervals.last_mut() {
            Some(last) if last.1 == w[0] => last.1 = w[1],
            _ => intervals.push((w[0], w[1])),
        }
    }
    // tangent touch points
    for r in roots(fit.a, fit.b, fit.c - level) {
        if r >= fit.x_min && r <= fit.x_max && !intervals.iter().any(|&(lo, hi)| r >= lo && r <= hi) {
            intervals.push((r, r));
        }
    }
    intervals.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let boundary = intervals.last().map(|iv| iv.0);
    let deviates = intervals != [(fit.x_min, fit.x_max)];
    Ok(BoundaryReport {
        level,
        intervals,
        boundary,
        deviates,
    })
}
