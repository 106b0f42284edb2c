use std::collections::{BTreeSet, HashSet};

use rand::Rng;

use crate::seed;
use crate::{Error, Result};

/// Mersenne prime 2^61 - 1; hash values live in `[0, MERSENNE_61)`.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

const SHINGLE_SEP: &str = " ";

/// Distinct word n-grams. Fewer than `n` words yield the whole sequence as
/// a single shingle (the empty string for an empty sequence).
pub fn shingles<S: AsRef<str>>(words: &[S], n: usize) -> BTreeSet<String> {
    let n = n.max(1);
    if words.len() < n {
        let whole: Vec<&str> = words.iter().map(AsRef::as_ref).collect();
        return BTreeSet::from([whole.join(SHINGLE_SEP)]);
    }
    words
        .windows(n)
        .map(|w| {
            let parts: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
            parts.join(SHINGLE_SEP)
        })
        .collect()
}

/// Base 61-bit hash of one shingle.
pub fn shingle_hash(shingle: &str) -> u64 {
    seed::mix64(seed::fnv1a(shingle.as_bytes())) % MERSENNE_61
}

/// Base hashes of the distinct shingles of `words`, computed without
/// materializing the shingle strings twice.
pub fn shingle_hashes<S: AsRef<str>>(words: &[S], n: usize) -> Vec<u64> {
    let set: HashSet<u64> = shingles(words, n).iter().map(|s| shingle_hash(s)).collect();
    let mut v: Vec<u64> = set.into_iter().collect();
    v.sort_unstable();
    v
}

#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    let prod = u128::from(a) * u128::from(b);
    let folded = (prod & u128::from(MERSENNE_61)) + (prod >> 61);
    let folded = (folded & u128::from(MERSENNE_61)) + (folded >> 61);
    let r = folded as u64;
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

#[inline]
fn add_mod(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MERSENNE_61 {
        s - MERSENNE_61
    } else {
        s
    }
}

/// `num_perm` universal hashes `h_i(x) = (a_i x + b_i) mod (2^61 - 1)`
/// drawn from one seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    seed: u64,
    coeffs: Vec<(u64, u64)>,
}

impl HashFamily {
    pub fn new(num_perm: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, &["minhash"]));
        let coeffs = (0..num_perm)
            .map(|_| (rng.random_range(1..MERSENNE_61), rng.random_range(0..MERSENNE_61)))
            .collect();
        HashFamily { seed, coeffs }
    }

    pub fn num_perm(&self) -> usize {
        self.coeffs.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Signature over pre-hashed shingles.
    pub fn signature_from_hashes(&self, hashes: &[u64]) -> MinHashSignature {
        let mut slots = vec![u64::MAX; self.coeffs.len()];
        for &x in hashes {
            for (slot, &(a, b)) in slots.iter_mut().zip(&self.coeffs) {
                let h = add_mod(mul_mod(a, x), b);
                if h < *slot {
                    *slot = h;
                }
            }
        }
        MinHashSignature {
            slots,
            seed: self.seed,
        }
    }
}

/// Per-permutation minimum hashes. The empty set maps to `u64::MAX` in
/// every slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MinHashSignature {
    pub slots: Vec<u64>,
    pub seed: u64,
}

impl MinHashSignature {
    pub fn num_perm(&self) -> usize {
        self.slots.len()
    }
}

pub fn minhash<S: AsRef<str> + Ord>(shingles: &BTreeSet<S>, family: &HashFamily) -> MinHashSignature {
    let hashes: Vec<u64> = shingles.iter().map(|s| shingle_hash(s.as_ref())).collect();
    family.signature_from_hashes(&hashes)
}

/// Fraction of agreeing slots.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64> {
    if a.seed != b.seed || a.slots.len() != b.slots.len() {
        return Err(Error::SignatureMismatch(format!(
            "seed {} / {} slots vs seed {} / {} slots",
            a.seed,
            a.slots.len(),
            b.seed,
            b.slots.len()
        )));
    }
    if a.slots.is_empty() {
        return Ok(1.0);
    }
    let agree = a.slots.iter().zip(&b.slots).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / a.slots.len() as f64)
}

/// `|A ∩ B| / |A ∪ B|`, with two empty sets counting as identical.
pub fn exact_jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}
