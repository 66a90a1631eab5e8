//! Gaussian quadrature rules built from three-term recurrences.
//!
//! Nodes come from the Golub–Welsch eigenvalue problem and are then polished
//! by Newton iteration on the orthonormal polynomial, which recovers full
//! precision near the ends of the spectrum. Weights use the Christoffel
//! function, `w_k = mu0 / sum_j p_j(x_k)^2`.

use crate::error::{Result, VpbError};
use crate::scalar::Scalar;

/// Nodes and weights of a one-dimensional rule, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> GaussRule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(T) -> T>(&self, f: F) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * f(x))
    }
}

/// Gauss rule for the standard normal measure `e^{-x²/2}/√(2π) dx`; weights sum to one.
pub fn gauss_hermite<T: Scalar>(n: usize) -> Result<GaussRule<T>> {
    let a = vec![T::zero(); n];
    let b: Vec<T> = (1..n).map(|k| T::from_usize_lossy(k).sqrt()).collect();
    gauss_from_jacobi(&a, &b, T::one(), "hermite")
}

/// Gauss rule for `x^alpha e^{-x} dx` on `(0, ∞)`.
pub fn gauss_laguerre<T: Scalar>(n: usize, alpha: T) -> Result<GaussRule<T>> {
    if !(alpha > -T::one()) {
        return Err(VpbError::InvalidArgument(format!(
            "laguerre exponent must exceed -1, got {alpha:?}"
        )));
    }
    let two = T::lit(2.0);
    let a: Vec<T> = (0..n)
        .map(|k| two * T::from_usize_lossy(k) + alpha + T::one())
        .collect();
    let b: Vec<T> = (1..n)
        .map(|k| {
            let k = T::from_usize_lossy(k);
            (k * (k + alpha)).sqrt()
        })
        .collect();
    let mu0 = T::lit(libm::tgamma(alpha.to_f64().unwrap_or(0.0) + 1.0));
    gauss_from_jacobi(&a, &b, mu0, "laguerre")
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre<T: Scalar>(n: usize) -> Result<GaussRule<T>> {
    let a = vec![T::zero(); n];
    let b: Vec<T> = (1..n)
        .map(|k| {
            let k = T::from_usize_lossy(k);
            k / (T::lit(4.0) * k * k - T::one()).sqrt()
        })
        .collect();
    gauss_from_jacobi(&a, &b, T::lit(2.0), "legendre")
}

/// Periodic trapezoid rule on `[0, 2π)` with `n` equispaced nodes.
pub fn trapezoid_periodic<T: Scalar>(n: usize) -> GaussRule<T> {
    let two_pi = T::lit(std::f64::consts::TAU);
    let h = two_pi / T::from_usize_lossy(n.max(1));
    GaussRule {
        nodes: (0..n).map(|k| h * T::from_usize_lossy(k)).collect(),
        weights: vec![h; n],
    }
}

/// Evaluates the orthonormal polynomials `p_0..=p_n` (with `p_0 = 1`) and `p_n'`.
fn recurrence<T: Scalar>(a: &[T], b: &[T], x: T, sq: &mut T) -> (T, T) {
    let n = a.len();
    let (mut p_prev, mut p) = (T::zero(), T::one());
    let (mut d_prev, mut d) = (T::zero(), T::zero());
    *sq = T::one();
    for k in 0..n {
        let bk = if k == 0 { T::zero() } else { b[k - 1] };
        // The scale of p_n does not move its roots.
        let bn = if k + 1 < n { b[k] } else { T::one() };
        let p_next = ((x - a[k]) * p - bk * p_prev) / bn;
        let d_next = ((x - a[k]) * d + p - bk * d_prev) / bn;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
        if k + 1 < n {
            *sq = *sq + p * p;
        }
    }
    (p, d)
}

fn gauss_from_jacobi<T: Scalar>(a: &[T], b: &[T], mu0: T, family: &str) -> Result<GaussRule<T>> {
    let n = a.len();
    if n == 0 {
        return Err(VpbError::InvalidArgument(format!(
            "{family} rule needs at least one node"
        )));
    }
    let (mut nodes, _) = tridiagonal_eigen(a, b)?;
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        let mut sq = T::one();
        for _ in 0..8 {
            let (p, dp) = recurrence(a, b, *x, &mut sq);
            if dp == T::zero() {
                break;
            }
            let step = p / dp;
            *x = *x - step;
            if step.abs() <= T::epsilon() * (T::one() + x.abs()) {
                break;
            }
        }
        recurrence(a, b, *x, &mut sq);
        weights.push(mu0 / sq);
    }
    if let Some(w) = weights.iter().find(|w| !(**w > T::zero())) {
        return Err(VpbError::Quadrature(format!(
            "{family} rule with {n} nodes produced non-positive weight {w:?}"
        )));
    }
    Ok(GaussRule { nodes, weights })
}

/// Eigenvalues (ascending) of a symmetric tridiagonal matrix together with the
/// first component of each normalized eigenvector. Implicit QL with Wilkinson shifts.
pub fn tridiagonal_eigen<T: Scalar>(diag: &[T], off: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z = vec![T::zero(); n];
    if n > 0 {
        z[0] = T::one();
    }
    let two = T::lit(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(VpbError::Convergence(
                    "tridiagonal QL iteration did not converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal));
    Ok((idx.iter().map(|&i| d[i]).collect(), idx.iter().map(|&i| z[i]).collect()))
}
