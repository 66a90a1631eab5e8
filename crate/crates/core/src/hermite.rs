//! Normalized probabilists' Hermite polynomials and multi-index bookkeeping.

use crate::scalar::Scalar;

/// Values `h_0(x)..=h_n(x)` with `h_k = He_k / √(k!)`, orthonormal under the standard normal.
pub fn hermite_values<T: Scalar>(n: usize, x: T) -> Vec<T> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(T::one());
    if n >= 1 {
        out.push(x);
    }
    for k in 1..n {
        let kk = T::from_usize_lossy(k);
        let next = (x * out[k] - kk.sqrt() * out[k - 1]) / (kk + T::one()).sqrt();
        out.push(next);
    }
    out
}

/// Multi-indices of total degree ≤ `max_degree`, graded, and lexicographically
/// descending inside each degree: `(1,0,0)` precedes `(0,1,0)`.
pub fn graded_lex_indices(max_degree: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        for a in (0..=d).rev() {
            for b in (0..=d - a).rev() {
                out.push([a, b, d - a - b]);
            }
        }
    }
    out
}

/// Number of multi-indices in three variables with total degree ≤ `n`.
pub fn basis_dim(n: usize) -> usize {
    (n + 1) * (n + 2) * (n + 3) / 6
}

/// Position of a multi-index in the graded-lex ordering.
pub fn graded_lex_position(alpha: [usize; 3]) -> usize {
    let d = alpha[0] + alpha[1] + alpha[2];
    let before = if d == 0 { 0 } else { basis_dim(d - 1) };
    // inside degree d: first coordinate descending, then second descending
    let a = alpha[0];
    let skipped_a: usize = (a + 1..=d).map(|aa| d - aa + 1).sum();
    let rest = d - a;
    before + skipped_a + (rest - alpha[1])
}
