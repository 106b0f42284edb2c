use crate::{Error, Result, Scalar};

/// Least-squares solution of `rows · x ≈ y` via Householder QR.
///
/// Fails with [`Error::RankDeficient`] when a column is (numerically) a
/// combination of the previous ones.
pub fn least_squares<T: Scalar>(rows: &[Vec<T>], y: &[T]) -> Result<Vec<T>> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if m != y.len() || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("design matrix shape mismatch".into()));
    }
    if m < n || n == 0 {
        return Err(Error::RankDeficient(format!("{m} observations for {n} unknowns")));
    }
    // column-major working copy
    let mut a: Vec<Vec<T>> = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut b = y.to_vec();
    let scale = a
        .iter()
        .map(|col| col.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt())
        .fold(T::zero(), T::max);
    let tol = T::rank_tolerance() * scale.max(T::one());

    for k in 0..n {
        let norm = a[k][k..].iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        if norm <= tol {
            return Err(Error::RankDeficient(format!("column {k} is linearly dependent")));
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = a[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |acc, &x| acc + x * x);
        if vnorm2 > T::zero() {
            let two = T::of(2.0);
            for col in a.iter_mut().skip(k) {
                let dot = v.iter().zip(&col[k..]).fold(T::zero(), |acc, (&p, &q)| acc + p * q);
                let f = two * dot / vnorm2;
                for (c, &vi) in col[k..].iter_mut().zip(&v) {
                    *c = *c - f * vi;
                }
            }
            let dot = v.iter().zip(&b[k..]).fold(T::zero(), |acc, (&p, &q)| acc + p * q);
            let f = two * dot / vnorm2;
            for (c, &vi) in b[k..].iter_mut().zip(&v) {
                *c = *c - f * vi;
            }
        }
    }

    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s = s - a[j][i] * x[j];
        }
        x[i] = s / a[i][i];
    }
    Ok(x)
}
