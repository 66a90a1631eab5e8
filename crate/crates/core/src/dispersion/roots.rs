//! Roots of the dispersion determinants.
//!
//! Transverse branches: `D₀(z, σ) = z − σ² R₂₂(z, σ)` with `σ = εs`, and
//! `λ₂ = λ₃ = z`. Longitudinal branches: `λ_j = ε z_j` where `z_j` solves
//! `det M(z) = 0`,
//!
//! ```text
//!        | z            is                  0                 |
//! M(z) = | i(s+1/s)     z − εs²R₁₁          is√(2/3) − εs²R₄₁  |
//!        | 0            is√(2/3) − εs²R₁₄   z − εs²R₄₄         |
//! ```
//!
//! with the resolvent entries evaluated at `(εz, εs)`.

use nalgebra::{Matrix3, Vector3};

use super::asymptotics::{eta, LinearResponse};
use super::resolvent::Resolvent;
use crate::error::{Result, VpbError};
use crate::Complex;

/// Small-frequency regime parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    /// Largest admissible `ε|ξ|`.
    pub r0: f64,
    /// Search radius for the roots, relative to `|ξ|` for longitudinal branches.
    pub r1: f64,
}

impl Default for Regime {
    fn default() -> Self {
        Self { r0: 0.3, r1: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootMethod {
    Newton,
    Bisection,
    Contraction,
    Continuation,
}

#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub z: Complex,
    pub residual: f64,
    pub method: RootMethod,
}

const I: Complex = Complex::new(0.0, 1.0);

fn c(x: f64) -> Complex {
    Complex::new(x, 0.0)
}

/// `(D₀(z,σ), ∂_z D₀(z,σ))`.
pub fn d0(res: &Resolvent, z: Complex, sigma: f64) -> Result<(Complex, Complex)> {
    let f = res.factor(z, sigma)?;
    let r = f.entry(2, 2)?;
    let dr = f.d_entry(2, 2)?;
    Ok((z - sigma * sigma * r, 1.0 - sigma * sigma * dr))
}

/// Root of `D₀(·, εs)`; `eps` may be any real, which is used for finite differences.
pub fn solve_d0_sigma(res: &Resolvent, sigma: f64, regime: &Regime) -> Result<Root> {
    if sigma == 0.0 {
        return Ok(Root { z: c(0.0), residual: 0.0, method: RootMethod::Newton });
    }
    let mut z = 0.0f64;
    let mut ok = false;
    for _ in 0..50 {
        let (f, fp) = d0(res, c(z), sigma)?;
        let mut dz = (f / fp).re;
        if dz.abs() > regime.r1 {
            dz = dz.signum() * regime.r1 * 0.5;
        }
        z -= dz;
        if dz.abs() <= 1e-15 * (1.0 + z.abs()) {
            ok = true;
            break;
        }
    }
    if ok && z.abs() <= regime.r1 {
        let (f, _) = d0(res, c(z), sigma)?;
        return Ok(Root { z: c(z), residual: f.norm(), method: RootMethod::Newton });
    }
    // bisection on [−r₁, 0] where D₀ changes sign
    let fr = |x: f64| d0(res, c(x), sigma).map(|v| v.0.re);
    let (mut lo, mut hi) = (-regime.r1, 0.0);
    let (mut flo, fhi) = (fr(lo)?, fr(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(VpbError::Regime(format!(
            "transverse root not bracketed in [-{}, 0] at eps*s = {sigma}",
            regime.r1
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = fr(mid)?;
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let z = 0.5 * (lo + hi);
    let (f, _) = d0(res, c(z), sigma)?;
    Ok(Root { z: c(z), residual: f.norm(), method: RootMethod::Bisection })
}

pub fn solve_d0(res: &Resolvent, s: f64, eps: f64, regime: &Regime) -> Result<Root> {
    check_regime(s, eps, regime)?;
    let root = solve_d0_sigma(res, eps * s, regime)?;
    if root.z.im.abs() > 1e-12 {
        return Err(VpbError::Convergence("transverse root left the real axis".into()));
    }
    Ok(root)
}

fn check_regime(s: f64, eps: f64, regime: &Regime) -> Result<()> {
    if !(s > 0.0) {
        return Err(VpbError::InvalidArgument("|xi| must be positive".into()));
    }
    if (eps * s).abs() > regime.r0 {
        return Err(VpbError::Regime(format!(
            "eps*|xi| = {} exceeds r0 = {}",
            eps * s,
            regime.r0
        )));
    }
    Ok(())
}

/// The 3×3 matrix `M(z)` whose determinant is `D₁`.
pub fn d1_matrix(res: &Resolvent, z: Complex, s: f64, eps: f64) -> Result<Matrix3<Complex>> {
    let f = res.factor(z * eps, eps * s)?;
    let u1 = f.response(1)?;
    let u4 = f.response(4)?;
    let t1 = &res.tests[1];
    let t4 = &res.tests[4];
    let pair = super::resolvent::Factored::pair;
    let (r11, r14, r41, r44) = (pair(&u1, t1), pair(&u1, t4), pair(&u4, t1), pair(&u4, t4));
    let es2 = eps * s * s;
    let k = (2.0f64 / 3.0).sqrt() * s;
    Ok(Matrix3::new(
        z,
        I * s,
        c(0.0),
        I * (s + 1.0 / s),
        z - r11 * es2,
        I * k - r41 * es2,
        c(0.0),
        I * k - r14 * es2,
        z - r44 * es2,
    ))
}

pub fn d1(res: &Resolvent, z: Complex, s: f64, eps: f64) -> Result<Complex> {
    Ok(d1_matrix(res, z, s, eps)?.determinant())
}

/// Null vector `(a, b, c)` of a numerically singular 3×3 matrix, from the
/// bilinear cross product of its two most independent rows.
pub fn null_vector(m: &Matrix3<Complex>) -> Vector3<Complex> {
    let rows: [Vector3<Complex>; 3] = std::array::from_fn(|i| m.row(i).transpose());
    let cross = |a: &Vector3<Complex>, b: &Vector3<Complex>| {
        Vector3::new(a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])
    };
    let cands = [cross(&rows[0], &rows[1]), cross(&rows[0], &rows[2]), cross(&rows[1], &rows[2])];
    cands
        .into_iter()
        .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
        .expect("three candidates")
}

fn newton_d1(res: &Resolvent, s: f64, eps: f64, z0: Complex, max_iter: usize) -> Result<Option<Complex>> {
    let mut z = z0;
    for _ in 0..max_iter {
        let f = d1(res, z, s, eps)?;
        let h = 1e-6 * (1.0 + z.norm());
        let fp = (d1(res, z + h, s, eps)? - d1(res, z - h, s, eps)?) / (2.0 * h);
        if fp.norm() == 0.0 {
            return Ok(None);
        }
        let dz = f / fp;
        z -= dz;
        if !z.re.is_finite() || !z.im.is_finite() {
            return Ok(None);
        }
        if dz.norm() <= 1e-14 * (1.0 + z.norm()) {
            return Ok(Some(z));
        }
    }
    Ok(None)
}

fn contraction_d1(res: &Resolvent, s: f64, eps: f64, j: i32, z0: Complex) -> Result<Option<Complex>> {
    let e = eta(j, s);
    let denom = 3.0 * e * e + 1.0 + 5.0 * s * s / 3.0;
    let mut z = z0;
    for _ in 0..500 {
        let dz = d1(res, z, s, eps)? / denom;
        z -= dz;
        if dz.norm() <= 1e-14 * (1.0 + z.norm()) {
            return Ok(Some(z));
        }
        if !(z.norm() < 1e6) {
            return Ok(None);
        }
    }
    Ok(None)
}

fn in_basin(z: Complex, j: i32, s: f64, regime: &Regime) -> bool {
    (z - eta(j, s)).norm() <= regime.r1 * s.max(1e-300)
}

/// The three longitudinal roots `z_{−1}, z₀, z₁` for any real `eps` with
/// `|eps| s ≤ r₀`; negative values serve finite-difference derivatives.
pub fn solve_d1_signed(
    res: &Resolvent,
    s: f64,
    eps: f64,
    regime: &Regime,
    response: &LinearResponse,
) -> Result<[Root; 3]> {
    if !(s > 0.0) {
        return Err(VpbError::InvalidArgument("|xi| must be positive".into()));
    }
    if (eps * s).abs() > regime.r0 {
        return Err(VpbError::Regime(format!("eps*|xi| = {} exceeds r0 = {}", eps * s, regime.r0)));
    }
    let mut out = Vec::with_capacity(3);
    for j in [-1, 0, 1] {
        let seed = eta(j, s) - eps * super::asymptotics::b_coeff(j, s, response);
        if eps == 0.0 {
            out.push(Root { z: eta(j, s), residual: d1(res, eta(j, s), s, 0.0)?.norm(), method: RootMethod::Newton });
            continue;
        }
        let mut found = newton_d1(res, s, eps, seed, 40)?
            .filter(|z| in_basin(*z, j, s, regime))
            .map(|z| (z, RootMethod::Newton));
        if found.is_none() {
            found = contraction_d1(res, s, eps, j, seed)?
                .filter(|z| in_basin(*z, j, s, regime))
                .map(|z| (z, RootMethod::Contraction));
        }
        if found.is_none() {
            found = continuation_d1(res, s, eps, j, regime)?.map(|z| (z, RootMethod::Continuation));
        }
        let (z, method) = found.ok_or_else(|| {
            VpbError::Regime(format!("no root of D1 near eta_{j} at s = {s}, eps = {eps}"))
        })?;
        out.push(Root { z, residual: d1(res, z, s, eps)?.norm(), method });
    }
    let sep = 1e-6 * (1.0 + s);
    for a in 0..3 {
        for b in a + 1..3 {
            if (out[a].z - out[b].z).norm() < sep {
                return Err(VpbError::Regime(format!(
                    "longitudinal roots collide at s = {s}, eps = {eps}"
                )));
            }
        }
    }
    Ok([out[0], out[1], out[2]])
}

/// Natural continuation in ε from the ε = 0 seed, halving the step on failure.
fn continuation_d1(res: &Resolvent, s: f64, eps: f64, j: i32, regime: &Regime) -> Result<Option<Complex>> {
    for steps in [8usize, 16, 32, 64, 128] {
        let mut z_prev = eta(j, s);
        let mut z_prev2: Option<Complex> = None;
        let mut ok = true;
        for k in 1..=steps {
            let e = eps * k as f64 / steps as f64;
            let guess = match z_prev2 {
                Some(p2) => z_prev * 2.0 - p2,
                None => z_prev,
            };
            match newton_d1(res, s, e, guess, 30)? {
                Some(z) if (z - z_prev).norm() < regime.r1 * s => {
                    z_prev2 = Some(z_prev);
                    z_prev = z;
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && in_basin(z_prev, j, s, regime) {
            return Ok(Some(z_prev));
        }
    }
    Ok(None)
}

pub fn solve_d1(
    res: &Resolvent,
    s: f64,
    eps: f64,
    regime: &Regime,
    response: &LinearResponse,
) -> Result<[Root; 3]> {
    check_regime(s, eps, regime)?;
    solve_d1_signed(res, s, eps, regime, response)
}
