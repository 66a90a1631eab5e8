//! Hydrodynamic eigenvalue branches of `B_ε(ξ)` near the imaginary axis.

pub mod asymptotics;
pub mod resolvent;
pub mod roots;

use nalgebra::DVector;

use crate::collision::CollisionOperator;
use crate::error::{Result, VpbError};
use crate::fit::loglog_slope;
use crate::linalg::{eigenvalues, to_complex, to_complex_mat};
use crate::mode_operator::{b_matrix_raw, ModeOperator};
use crate::velocity_space::bilinear;
use crate::{CVec, Complex};
pub use asymptotics::{AsymptoticCoefficients, LinearResponse, BRANCHES};
pub use resolvent::Resolvent;
pub use roots::{Regime, Root, RootMethod};

const I: Complex = Complex::new(0.0, 1.0);

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub branch: i32,
    pub s: f64,
    pub eps: f64,
    pub lambda: Complex,
    /// `λ = εz` for j ∈ {−1,0,1}; `λ = z` for j ∈ {2,3}.
    pub z: Complex,
    /// Eigenfunction in the frame of the originating mode.
    pub psi: CVec,
    pub det_residual: f64,
    pub eig_residual: f64,
    /// Distance to the matched eigenvalue of the dense matrix.
    pub dense_match: f64,
    pub method: RootMethod,
}

#[derive(Debug, Clone)]
pub struct HydroSpectrum {
    /// Branches in the order −1, 0, 1, 2, 3.
    pub points: Vec<BranchPoint>,
    /// `−max Re` of the dense spectrum outside the five branches.
    pub gap: f64,
    pub dense: Vec<Complex>,
    pub regime: Regime,
}

impl HydroSpectrum {
    pub fn branch(&self, j: i32) -> &BranchPoint {
        &self.points[asymptotics::slot(j)]
    }
}

/// Branch eigenfunction in the canonical frame `ξ = s e₁`, normalized by
/// `(e, conj e)_ξ = 1` with the sign fixed against `g_j`.
pub fn branch_vector(res: &Resolvent, j: i32, s: f64, eps: f64, z: Complex) -> Result<CVec> {
    let basis = &res.op.basis;
    let chi = |k: usize| to_complex(&basis.chi[k]);
    let mut e = match j {
        2 | 3 => {
            let k = j as usize;
            let f = res.factor(z, eps * s)?;
            chi(k) + f.response(k)? * (I * eps * s)
        }
        -1..=1 => {
            let m = roots::d1_matrix(res, z, s, eps)?;
            let n = roots::null_vector(&m);
            let f = res.factor(z * eps, eps * s)?;
            let g = (f.response(1)? * n[1] + f.response(4)? * n[2]) * (I * eps * s);
            chi(0) * n[0] + chi(1) * n[1] + chi(4) * n[2] + g
        }
        _ => return Err(VpbError::InvalidArgument(format!("branch index {j} outside -1..=3"))),
    };
    let q = bilinear(&e, &e, s);
    e /= q.sqrt();
    let g = to_complex(&asymptotics::h_canonical(j, s, basis));
    if bilinear(&e, &g, s).re < 0.0 {
        e = -e;
    }
    Ok(e)
}

/// Roots of all five branches at `(s, ε)` in the canonical frame.
pub fn branch_roots(
    res: &Resolvent,
    response: &LinearResponse,
    s: f64,
    eps: f64,
    regime: &Regime,
) -> Result<Vec<(i32, Root)>> {
    let long = roots::solve_d1(res, s, eps, regime, response)?;
    let tr = roots::solve_d0(res, s, eps, regime)?;
    Ok(vec![(-1, long[0]), (0, long[1]), (1, long[2]), (2, tr), (3, tr)])
}

/// Assignment of branch eigenvalues to dense eigenvalues minimizing the largest distance.
fn assign(targets: &[Complex], cands: &[Complex]) -> Vec<usize> {
    let n = targets.len();
    let mut best = (f64::INFINITY, Vec::new());
    let mut perm: Vec<usize> = (0..cands.len()).collect();
    fn rec(k: usize, n: usize, perm: &mut Vec<usize>, t: &[Complex], c: &[Complex], best: &mut (f64, Vec<usize>)) {
        if k == n {
            let cost = (0..n).map(|i| (t[i] - c[perm[i]]).norm()).fold(0.0, f64::max);
            if cost < best.0 {
                *best = (cost, perm[..n].to_vec());
            }
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            rec(k + 1, n, perm, t, c, best);
            perm.swap(k, i);
        }
    }
    rec(0, n, &mut perm, targets, cands, &mut best);
    best.1
}

/// The five hydrodynamic eigenpairs of a mode, checked against the dense spectrum.
pub fn hydrodynamic_spectrum(mode: &ModeOperator, regime: &Regime) -> Result<HydroSpectrum> {
    let op = &*mode.collision;
    let (s, eps) = (mode.s, mode.eps);
    let res = Resolvent::new(op);
    let response = LinearResponse::from_operator(op)?;
    let found = branch_roots(&res, &response, s, eps, regime)?;
    let canonical = b_matrix_raw(op, [s, 0.0, 0.0], eps);
    let dense = eigenvalues(&canonical)?;
    let strip = -0.5 * op.mu_estimate;
    let cands: Vec<(usize, Complex)> = dense
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, l)| l.re >= strip)
        .collect();
    if cands.len() != 5 {
        return Err(VpbError::Regime(format!(
            "{} eigenvalues with Re >= {strip:.4} at s = {s}, eps = {eps}; expected five (truncation or regime)",
            cands.len()
        )));
    }
    let lambdas: Vec<Complex> = found
        .iter()
        .map(|(j, r)| if *j >= 2 { r.z } else { r.z * eps })
        .collect();
    let cvals: Vec<Complex> = cands.iter().map(|c| c.1).collect();
    let perm = assign(&lambdas, &cvals);
    let used: Vec<usize> = perm.iter().map(|&p| cands[p].0).collect();
    let gap = -dense
        .iter()
        .enumerate()
        .filter(|(i, _)| !used.contains(i))
        .map(|(_, l)| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let push = (!mode.is_canonical()).then(|| to_complex_mat(&mode.pushforward()));
    let mut points = Vec::with_capacity(5);
    for (k, (j, root)) in found.iter().enumerate() {
        let e = branch_vector(&res, *j, s, eps, root.z)?;
        let psi = match &push {
            Some(p) => p * e,
            None => e,
        };
        let lambda = lambdas[k];
        let r = mode.apply(&psi) - &psi * lambda;
        let eig_residual = mode.norm(&r) / mode.norm(&psi);
        points.push(BranchPoint {
            branch: *j,
            s,
            eps,
            lambda,
            z: root.z,
            psi,
            det_residual: root.residual,
            eig_residual,
            dense_match: (lambda - cvals[perm[k]]).norm(),
            method: root.method,
        });
    }
    Ok(HydroSpectrum { points, gap, dense, regime: *regime })
}

/// Residuals of the leading-order eigenfunction expansion at one `(s, ε)`.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionResidual {
    pub eps: f64,
    /// `‖P₀e_j − g_j‖_ξ`.
    pub macro_residual: f64,
    /// `‖P₁e_j − iεs L⁻¹P₁(v₁g_j)‖_ξ`.
    pub micro_residual: f64,
    /// `a²(1+1/s²) + b² + c²` of the macroscopic coefficients.
    pub normalization: Complex,
}

pub fn eigenfunction_expansion_check(op: &CollisionOperator, bp: &BranchPoint) -> Result<ExpansionResidual> {
    let res = Resolvent::new(op);
    let response = LinearResponse::from_operator(op)?;
    let basis = &op.basis;
    let (s, eps) = (bp.s, bp.eps);
    let e = branch_vector(&res, bp.branch, s, eps, bp.z)?;
    let coeffs = AsymptoticCoefficients::new(s, response, basis);
    let slot = asymptotics::slot(bp.branch);
    let p0 = basis.macro_part(&e);
    let p1 = &e - &p0;
    let g = to_complex(&coeffs.g[slot]);
    let micro = coeffs.micro_leading(bp.branch, eps, op)?;
    let norm = |v: &CVec| basis.weighted_norm(v, s);
    let m = basis.project_macro(&e);
    let (a, b, c) = (m.n, if bp.branch == 3 { m.m[2] } else if bp.branch == 2 { m.m[1] } else { m.m[0] }, m.q);
    let normalization = a * a * (1.0 + 1.0 / (s * s)) + b * b + c * c;
    Ok(ExpansionResidual {
        eps,
        macro_residual: norm(&(&p0 - g)),
        micro_residual: norm(&(p1 - micro)),
        normalization,
    })
}

#[derive(Debug, Clone)]
pub struct ExpansionReport {
    pub branch: i32,
    pub s: f64,
    pub rows: Vec<ExpansionResidual>,
    pub macro_slope: f64,
    pub micro_slope: f64,
}

/// Expansion residuals over several ε with fitted ε-slopes.
pub fn expansion_study(op: &CollisionOperator, s: f64, j: i32, eps_list: &[f64], regime: &Regime) -> Result<ExpansionReport> {
    let res = Resolvent::new(op);
    let response = LinearResponse::from_operator(op)?;
    let mut rows = Vec::new();
    for &eps in eps_list {
        let roots = branch_roots(&res, &response, s, eps, regime)?;
        let root = roots[asymptotics::slot(j)].1;
        let lambda = if j >= 2 { root.z } else { root.z * eps };
        let bp = BranchPoint {
            branch: j,
            s,
            eps,
            lambda,
            z: root.z,
            psi: DVector::zeros(0),
            det_residual: root.residual,
            eig_residual: f64::NAN,
            dense_match: f64::NAN,
            method: root.method,
        };
        rows.push(eigenfunction_expansion_check(op, &bp)?);
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let mac: Vec<f64> = rows.iter().map(|r| r.macro_residual).collect();
    let mic: Vec<f64> = rows.iter().map(|r| r.micro_residual).collect();
    Ok(ExpansionReport {
        branch: j,
        s,
        macro_slope: loglog_slope(&eps, &mac)?.slope,
        micro_slope: loglog_slope(&eps, &mic)?.slope,
        rows,
    })
}

/// `|λ_j − εη_j + ε²b_j|` over a list of ε with its fitted log–log slope.
pub fn remainder_study(
    op: &CollisionOperator,
    s: f64,
    j: i32,
    eps_list: &[f64],
    regime: &Regime,
) -> Result<(Vec<f64>, f64)> {
    let res = Resolvent::new(op);
    let response = LinearResponse::from_operator(op)?;
    let coeffs = AsymptoticCoefficients::new(s, response, &op.basis);
    let mut rem = Vec::new();
    for &eps in eps_list {
        let roots = branch_roots(&res, &response, s, eps, regime)?;
        let root = roots[asymptotics::slot(j)].1;
        let lambda = if j >= 2 { root.z } else { root.z * eps };
        rem.push((lambda - coeffs.seed(j, eps)).norm());
    }
    let slope = loglog_slope(eps_list, &rem)?.slope;
    Ok((rem, slope))
}

/// `z''(0)` of the transverse root as a function of `σ = εs`, by Richardson-extrapolated differences.
pub fn transverse_curvature(op: &CollisionOperator, regime: &Regime) -> Result<f64> {
    let res = Resolvent::new(op);
    let d = |h: f64| -> Result<f64> { Ok(2.0 * roots::solve_d0_sigma(&res, h, regime)?.z.re / (h * h)) };
    let h = 1e-2;
    Ok((4.0 * d(h / 2.0)? - d(h)?) / 3.0)
}

/// `∂_ε z_j(s, 0)` for j ∈ {−1, 0, 1} by Richardson-extrapolated central differences.
pub fn d_eps_root(op: &CollisionOperator, s: f64, j: i32, regime: &Regime) -> Result<Complex> {
    let res = Resolvent::new(op);
    let response = LinearResponse::from_operator(op)?;
    let k = asymptotics::slot(j);
    let z = |e: f64| -> Result<Complex> { Ok(roots::solve_d1_signed(&res, s, e, regime, &response)?[k].z) };
    let h = 1e-3 / s.max(1.0);
    let cd = |h: f64| -> Result<Complex> { Ok((z(h)? - z(-h)?) / (2.0 * h)) };
    Ok((cd(h / 2.0)? * 4.0 - cd(h)?) / 3.0)
}
