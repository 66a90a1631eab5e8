//! Dense complex eigen-decomposition helpers.
//!
//! Matrices with an exact sparsity structure (parity sectors of a 1-D mode) are
//! split into connected components first, so that exact degeneracies between
//! decoupled sectors never reach the triangular eigenvector solve.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Result, VpbError};
use crate::{CMat, CVec, Complex};

/// Index sets of the connected components of the sparsity graph of `a`.
pub fn components(a: &CMat) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        label[start] = id;
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..n {
                if label[j] == usize::MAX && (a[(i, j)] != Complex::new(0.0, 0.0) || a[(j, i)] != Complex::new(0.0, 0.0)) {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

fn submatrix(a: &CMat, idx: &[usize]) -> CMat {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

/// Eigenvalues of a dense complex matrix.
pub fn eigenvalues(a: &CMat) -> Result<Vec<Complex>> {
    let mut out = Vec::with_capacity(a.nrows());
    for idx in components(a) {
        let s = Schur::try_new(submatrix(a, &idx), f64::EPSILON, 10_000)
            .ok_or_else(|| VpbError::Convergence("complex Schur iteration".into()))?;
        let (_, t) = s.unpack();
        out.extend((0..idx.len()).map(|i| t[(i, i)]));
    }
    Ok(out)
}

/// Right eigenvectors of an upper-triangular matrix, one per column.
fn triangular_eigenvectors(t: &CMat) -> CMat {
    let n = t.nrows();
    let norm = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let small = norm * f64::EPSILON;
    let mut y = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        y[(k, k)] = Complex::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = Complex::new(0.0, 0.0);
            for j in i + 1..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut d = t[(i, i)] - lam;
            if d.norm() < small {
                d = Complex::new(small, 0.0);
            }
            y[(i, k)] = -s / d;
        }
    }
    y
}

/// Full eigen-decomposition `A = X Λ X⁻¹`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<Complex>,
    /// Unit-norm eigenvectors as columns.
    pub vectors: CMat,
    pub inverse: CMat,
    /// `‖X‖₁ ‖X⁻¹‖₁` over the worst component.
    pub condition: f64,
    /// Largest `‖A x − λ x‖ / ‖A‖` over the columns.
    pub residual: f64,
}

fn norm1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn eigen_decomposition(a: &CMat) -> Result<EigenDecomposition> {
    let n = a.nrows();
    let mut values = vec![Complex::new(0.0, 0.0); n];
    let mut vectors = DMatrix::zeros(n, n);
    let mut inverse = DMatrix::zeros(n, n);
    let mut condition = 1.0f64;
    for idx in components(a) {
        let s = Schur::try_new(submatrix(a, &idx), f64::EPSILON, 10_000)
            .ok_or_else(|| VpbError::Convergence("complex Schur iteration".into()))?;
        let (q, t) = s.unpack();
        let mut x = q * triangular_eigenvectors(&t);
        for mut c in x.column_iter_mut() {
            let nrm = c.norm();
            c /= Complex::new(nrm, 0.0);
        }
        let xi = x
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| VpbError::Solve("eigenvector matrix is singular".into()))?;
        condition = condition.max(norm1(&x) * norm1(&xi));
        for (li, &gi) in idx.iter().enumerate() {
            // component-local position li corresponds to a global column
            values[gi] = t[(li, li)];
            for (lr, &gr) in idx.iter().enumerate() {
                vectors[(gr, gi)] = x[(lr, li)];
                inverse[(gi, gr)] = xi[(li, lr)];
            }
        }
    }
    let an = a.norm().max(f64::MIN_POSITIVE);
    let residual = (0..n)
        .map(|k| {
            let x = vectors.column(k);
            (a * x - x * values[k]).norm() / an
        })
        .fold(0.0, f64::max);
    Ok(EigenDecomposition { values, vectors, inverse, condition, residual })
}

impl EigenDecomposition {
    /// `X diag(φ(λ)) X⁻¹ f`.
    pub fn apply_fn<F: Fn(Complex) -> Complex>(&self, f: &CVec, phi: F) -> CVec {
        let mut c = &self.inverse * f;
        for (ci, l) in c.iter_mut().zip(&self.values) {
            *ci *= phi(*l);
        }
        &self.vectors * c
    }
}

/// Solves `A x = b` for complex square `A`.
pub fn solve(a: &CMat, b: &CVec) -> Result<CVec> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| VpbError::Solve("singular complex system".into()))
}

pub fn to_complex(v: &DVector<f64>) -> CVec {
    v.map(|x| Complex::new(x, 0.0))
}

pub fn to_complex_mat(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_reconstructs_matrix() {
        let n = 7;
        let a = DMatrix::from_fn(n, n, |i, j| {
            Complex::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 * 0.5)
        });
        let e = eigen_decomposition(&a).unwrap();
        let lam = DMatrix::from_diagonal(&DVector::from_vec(e.values.clone()));
        let back = &e.vectors * lam * &e.inverse;
        assert!((back - &a).norm() < 1e-10 * a.norm());
        assert!(e.residual < 1e-13);
    }

    #[test]
    fn decoupled_degenerate_blocks() {
        // two identical 2×2 blocks: exact degeneracy across components
        let mut a = DMatrix::zeros(4, 4);
        for o in [0, 2] {
            a[(o, o)] = Complex::new(-1.0, 0.0);
            a[(o, o + 1)] = Complex::new(0.0, 1.0);
            a[(o + 1, o)] = Complex::new(0.0, 1.0);
            a[(o + 1, o + 1)] = Complex::new(-2.0, 0.0);
        }
        assert_eq!(components(&a).len(), 2);
        let e = eigen_decomposition(&a).unwrap();
        assert!(e.condition < 10.0);
        let lam = DMatrix::from_diagonal(&DVector::from_vec(e.values.clone()));
        assert!((&e.vectors * lam * &e.inverse - &a).norm() < 1e-13);
    }
}
