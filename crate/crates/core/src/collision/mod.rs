//! Linearized collision operator `L = K − ν` and the bilinear form Γ.
//!
//! Matrix elements are computed in weak form. Writing `f = √M φ`, `g = √M ψ`,
//!
//! ```text
//! (Lf, g) = −¼ ∫∫∫ B M M_* Δφ Δψ,     Δφ = φ' + φ'_* − φ − φ_*,
//! (Γ(f,g), h) = ¼ ∫∫∫ B M M_* (φ_* ψ + φ ψ_*)(χ' + χ'_* − χ − χ_*),
//! ```
//!
//! integrated with [`rules::CollisionRule`], which is exact on the polynomial
//! integrands that arise in the truncated basis.

pub mod cache;
pub mod rules;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VpbError};
use crate::velocity_space::VelocityBasis;
use crate::{CVec, Complex, RMat, RVec};
use rules::{CollisionRule, PolyEvaluator};

const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    HardSphere,
    /// Kernel `c |cos θ| |v − v_*|^gamma`.
    HardPotential { gamma: f64, c: f64 },
    /// `L = −nu_bar P₁`.
    Synthetic { nu_bar: f64 },
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::HardSphere => "hard_sphere",
            Backend::HardPotential { .. } => "hard_potential",
            Backend::Synthetic { .. } => "synthetic",
        }
    }

    /// `(gamma, c)` for genuine kernels.
    pub fn kernel(&self) -> Option<(f64, f64)> {
        match *self {
            Backend::HardSphere => Some((1.0, 1.0)),
            Backend::HardPotential { gamma, c } => Some((gamma, c)),
            Backend::Synthetic { .. } => None,
        }
    }

    pub fn is_genuine(&self) -> bool {
        self.kernel().is_some()
    }

    pub fn gamma_exponent(&self) -> f64 {
        self.kernel().map_or(0.0, |k| k.0)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Backend::HardPotential { gamma, c } if !(0.0..1.0).contains(&gamma) || !(c > 0.0) => {
                Err(VpbError::InvalidArgument(format!(
                    "hard potential needs 0 <= gamma < 1 and c > 0, got gamma={gamma}, c={c}"
                )))
            }
            Backend::Synthetic { nu_bar } if !(nu_bar > 0.0) => Err(VpbError::InvalidArgument(
                format!("synthetic collision frequency must be positive, got {nu_bar}"),
            )),
            _ => Ok(()),
        }
    }
}

/// `E|a − X|` for `X` a standard normal vector in ℝ³, `a = |v|`.
fn mean_distance(a: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    if a < 1e-3 {
        return c * (2.0 + a * a / 3.0 - a.powi(4) / 60.0);
    }
    c * (-0.5 * a * a).exp() + (a + 1.0 / a) * libm::erf(a / std::f64::consts::SQRT_2)
}

/// Hard-sphere collision frequency `ν(v) = ∫∫ |(v−v_*)·ω| M_* dω dv_* = 2π E|v − X|`.
pub fn nu_hard_sphere(v: [f64; 3]) -> f64 {
    let a = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    2.0 * std::f64::consts::PI * mean_distance(a)
}

/// `E|a − X|^γ` by composite Gauss–Legendre on the noncentral chi density.
fn mean_distance_pow(a: f64, gamma: f64) -> f64 {
    let gl = crate::quadrature::gauss_legendre::<f64>(24).expect("legendre rule");
    let phi = |x: f64| (-0.5 * x * x).exp() / (std::f64::consts::TAU).sqrt();
    let density = |rho: f64| {
        if a < 1e-8 {
            (2.0 / std::f64::consts::PI).sqrt() * rho * rho * (-0.5 * rho * rho).exp()
        } else {
            rho / a * (phi(rho - a) - phi(rho + a))
        }
    };
    let lo = (a - 10.0).max(0.0);
    let hi = a + 10.0;
    let pieces = 20;
    let h = (hi - lo) / pieces as f64;
    let mut total = 0.0;
    for p in 0..pieces {
        let x0 = lo + h * p as f64;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let rho = x0 + 0.5 * h * (x + 1.0);
            total += 0.5 * h * w * rho.powf(gamma) * density(rho);
        }
    }
    total
}

/// Collision frequency of the backend at `v`.
pub fn nu_backend(backend: &Backend, v: [f64; 3]) -> f64 {
    match *backend {
        Backend::HardSphere => nu_hard_sphere(v),
        Backend::HardPotential { gamma, c } => {
            let a = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            2.0 * std::f64::consts::PI * c * mean_distance_pow(a, gamma)
        }
        Backend::Synthetic { nu_bar } => nu_bar,
    }
}

#[derive(Debug, Clone)]
pub struct CollisionOperator {
    pub backend: Backend,
    pub basis: Arc<VelocityBasis>,
    pub l_matrix: RMat,
    /// ν at the basis quadrature nodes.
    pub nu_diag: Vec<f64>,
    pub mu_estimate: f64,
    /// Fitted constants of `ν₀(1+|v|)^γ ≤ ν(v) ≤ ν₁(1+|v|)^γ` over the nodes.
    pub nu0: f64,
    pub nu1: f64,
    pub nu_at_zero: f64,
    /// Orthonormal basis of `N₀^⊥`, dim × (dim − 5).
    pub micro: RMat,
    /// Number of collision configurations used in the assembly, 0 when not quadrature based.
    pub assembly_points: usize,
    neg_micro_chol: Cholesky<f64, Dyn>,
    gamma_form: Option<Arc<GammaForm>>,
}

/// Orthonormal complement of the collision invariants.
pub fn micro_basis(basis: &VelocityBasis) -> RMat {
    let dim = basis.dim;
    let sq = basis.invariant_indices[4].clone();
    let mut cols: Vec<RVec> = Vec::with_capacity(dim - 5);
    for i in 4..dim {
        if sq.contains(&i) {
            if i == sq[0] {
                let mut a = DVector::zeros(dim);
                a[sq[0]] = std::f64::consts::FRAC_1_SQRT_2;
                a[sq[1]] = -std::f64::consts::FRAC_1_SQRT_2;
                let mut b = DVector::zeros(dim);
                let k = 1.0 / 6f64.sqrt();
                b[sq[0]] = k;
                b[sq[1]] = k;
                b[sq[2]] = -2.0 * k;
                cols.push(a);
                cols.push(b);
            }
        } else {
            let mut e = DVector::zeros(dim);
            e[i] = 1.0;
            cols.push(e);
        }
    }
    DMatrix::from_columns(&cols)
}

/// Assembles `L` for the backend and validates its structural properties.
pub fn assemble_l(basis: Arc<VelocityBasis>, backend: Backend) -> Result<CollisionOperator> {
    backend.validate()?;
    let (l, points) = match backend {
        Backend::Synthetic { nu_bar } => (-basis.p1() * nu_bar, 0),
        _ => assemble_weak_form(&basis, &backend)?,
    };
    finish(basis, backend, l, points)
}

/// Like [`assemble_l`], reusing a matrix cached under `cache_dir` when its header matches.
pub fn assemble_l_cached(
    basis: Arc<VelocityBasis>,
    backend: Backend,
    cache_dir: Option<&Path>,
) -> Result<(CollisionOperator, cache::CacheStatus)> {
    backend.validate()?;
    let Some(dir) = cache_dir.filter(|_| backend.is_genuine()) else {
        return Ok((assemble_l(basis, backend)?, cache::CacheStatus::Disabled));
    };
    let header = cache::CacheHeader::for_operator(&basis, &backend);
    match cache::load_matrix(dir, &header)? {
        cache::Lookup::Hit(l) => {
            let op = finish(basis, backend, l, 0)?;
            Ok((op, cache::CacheStatus::Hit))
        }
        miss => {
            let op = assemble_l(basis, backend)?;
            cache::store_matrix(dir, &header, &op.l_matrix)?;
            let status = match miss {
                cache::Lookup::Mismatch(reason) => cache::CacheStatus::Rebuilt(reason),
                _ => cache::CacheStatus::Stored,
            };
            Ok((op, status))
        }
    }
}

fn finish(basis: Arc<VelocityBasis>, backend: Backend, l: RMat, points: usize) -> Result<CollisionOperator> {
    let gamma = backend.gamma_exponent();
    let nu_diag: Vec<f64> = basis.quad_nodes.iter().map(|v| nu_backend(&backend, *v)).collect();
    let mut nu0 = f64::INFINITY;
    let mut nu1 = 0.0f64;
    for (v, nu) in basis.quad_nodes.iter().zip(&nu_diag) {
        let a = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let ratio = nu / (1.0 + a).powf(gamma);
        nu0 = nu0.min(ratio);
        nu1 = nu1.max(ratio);
    }
    let micro = micro_basis(&basis);
    let lm = micro.transpose() * &l * &micro;
    let eig = SymmetricEigen::new(lm.clone());
    let largest = eig.eigenvalues.max();
    if !(largest < 0.0) {
        let mut head: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        head.sort_by(|a, b| b.partial_cmp(a).unwrap());
        head.truncate(6);
        return Err(VpbError::Coercivity { largest, head });
    }
    let neg_micro_chol = Cholesky::new(-lm).ok_or_else(|| {
        VpbError::Solve("micro block of -L is not positive definite".into())
    })?;
    let gamma_form = backend
        .kernel()
        .map(|(g, c)| Arc::new(GammaForm::new(basis.clone(), g, c)));
    Ok(CollisionOperator {
        backend,
        nu_at_zero: nu_backend(&backend, [0.0; 3]),
        basis,
        l_matrix: l,
        nu_diag,
        mu_estimate: -largest,
        nu0,
        nu1,
        micro,
        assembly_points: points,
        neg_micro_chol,
        gamma_form,
    })
}

fn dgemm_aat(dim: usize, cols: usize, buf: &[f64], acc: &mut [f64]) {
    // acc (dim×dim, column major) += A Aᵀ with A dim×cols column major
    unsafe {
        matrixmultiply::dgemm(
            dim,
            cols,
            dim,
            1.0,
            buf.as_ptr(),
            1,
            dim as isize,
            buf.as_ptr(),
            dim as isize,
            1,
            1.0,
            acc.as_mut_ptr(),
            1,
            dim as isize,
        );
    }
}

fn assemble_weak_form(basis: &VelocityBasis, backend: &Backend) -> Result<(RMat, usize)> {
    let (gamma, c) = backend.kernel().expect("genuine kernel");
    let rule = CollisionRule::new(2 * basis.max_degree, gamma)?;
    let dim = basis.dim;
    let indices = &basis.indices;
    let n = basis.max_degree;
    let partial: Vec<Vec<f64>> = (0..rule.g_nodes.len())
        .into_par_iter()
        .map(|gi| {
            let mut ev = PolyEvaluator::new(indices, n);
            let mut acc = vec![0.0; dim * dim];
            let mut buf = vec![0.0; dim * BATCH];
            let mut cols = 0;
            let (pv, pvs, pp, pps) = (
                &mut vec![0.0; dim],
                &mut vec![0.0; dim],
                &mut vec![0.0; dim],
                &mut vec![0.0; dim],
            );
            let (gc, wg) = rule.g_nodes[gi];
            for &(r, wr) in &rule.r_nodes {
                let h = 0.5 * r;
                for (di, dir) in rule.sphere.points.iter().enumerate() {
                    let wd = wg * wr * rule.sphere.weights[di];
                    ev.eval_into(std::array::from_fn(|k| gc[k] + h * dir[k]), pv);
                    ev.eval_into(std::array::from_fn(|k| gc[k] - h * dir[k]), pvs);
                    for (si, sg) in rule.sigma[di].iter().enumerate() {
                        let sw = (wd * rule.sphere.weights[si]).sqrt();
                        ev.eval_into(std::array::from_fn(|k| gc[k] + h * sg[k]), pp);
                        ev.eval_into(std::array::from_fn(|k| gc[k] - h * sg[k]), pps);
                        let col = &mut buf[cols * dim..(cols + 1) * dim];
                        for a in 0..dim {
                            col[a] = sw * (pp[a] + pps[a] - pv[a] - pvs[a]);
                        }
                        cols += 1;
                        if cols == BATCH {
                            dgemm_aat(dim, cols, &buf, &mut acc);
                            cols = 0;
                        }
                    }
                }
            }
            if cols > 0 {
                dgemm_aat(dim, cols, &buf[..cols * dim], &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; dim * dim];
    for p in &partial {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    let scale = -0.25 * c / std::f64::consts::TAU.powi(3);
    let l = DMatrix::from_vec(dim, dim, total) * scale;
    Ok((l, rule.point_count()))
}

impl CollisionOperator {
    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    /// Unique `u ∈ N₀^⊥` with `Lu = g`.
    pub fn solve_linv(&self, g: &RVec) -> Result<RVec> {
        let gn = g.norm();
        let macro_norm = self.basis.macro_part(g).norm();
        if macro_norm > 1e-10 * gn.max(1.0) {
            return Err(VpbError::NotMicroscopic(macro_norm));
        }
        if gn == 0.0 {
            return Ok(DVector::zeros(self.dim()));
        }
        let rhs = self.micro.transpose() * g;
        let y = self.neg_micro_chol.solve(&rhs);
        let u = -(&self.micro * y);
        let res = (&self.l_matrix * &u - g).norm();
        if res > 1e-10 * gn {
            return Err(VpbError::Solve(format!(
                "L inversion residual {res:e} exceeds tolerance"
            )));
        }
        Ok(u)
    }

    pub fn solve_linv_c(&self, g: &CVec) -> Result<CVec> {
        let re = self.solve_linv(&g.map(|z| z.re))?;
        let im = self.solve_linv(&g.map(|z| z.im))?;
        Ok(re.zip_map(&im, Complex::new))
    }

    /// Galerkin projection of `Γ(f,g)`.
    pub fn apply_gamma(&self, f: &RVec, g: &RVec) -> Result<RVec> {
        self.gamma_form()?.apply(f, g)
    }

    pub fn gamma_form(&self) -> Result<&GammaForm> {
        self.gamma_form.as_deref().ok_or_else(|| VpbError::Backend {
            backend: self.backend.name().into(),
            what: "the bilinear collision form".into(),
        })
    }

    /// Eigenvalues of `L`, ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(self.l_matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    /// Singular values of `L`, ascending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.spectrum().into_iter().map(f64::abs).collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s
    }

    pub fn symmetry_residual(&self) -> f64 {
        (&self.l_matrix - self.l_matrix.transpose()).norm() / self.l_matrix.norm()
    }

    pub fn null_residual(&self) -> f64 {
        self.basis
            .chi
            .iter()
            .map(|c| (&self.l_matrix * c).norm())
            .fold(0.0, f64::max)
    }
}

/// On-demand evaluator of `Γ` with quadrature rules cached by exactness degree.
#[derive(Debug)]
pub struct GammaForm {
    basis: Arc<VelocityBasis>,
    gamma: f64,
    c: f64,
    rules: Mutex<BTreeMap<usize, Arc<CollisionRule>>>,
}

/// Largest total degree carried by a coefficient vector.
pub fn coefficient_degree(basis: &VelocityBasis, f: &RVec) -> usize {
    let scale = f.amax();
    basis
        .indices
        .iter()
        .zip(f.iter())
        .filter(|(_, x)| x.abs() > 1e-15 * scale)
        .map(|(a, _)| a.iter().sum::<usize>())
        .max()
        .unwrap_or(0)
}

impl GammaForm {
    pub fn new(basis: Arc<VelocityBasis>, gamma: f64, c: f64) -> Self {
        Self { basis, gamma, c, rules: Mutex::new(BTreeMap::new()) }
    }

    /// Polynomial degree of the weak-form integrand for these inputs.
    pub fn exact_degree(&self, f: &RVec, g: &RVec) -> usize {
        coefficient_degree(&self.basis, f) + coefficient_degree(&self.basis, g) + self.basis.max_degree
    }

    pub fn apply(&self, f: &RVec, g: &RVec) -> Result<RVec> {
        self.apply_with_degree(f, g, self.exact_degree(f, g))
    }

    fn rule(&self, degree: usize) -> Result<Arc<CollisionRule>> {
        let mut rules = self.rules.lock().expect("rule cache poisoned");
        if let Some(r) = rules.get(&degree) {
            return Ok(r.clone());
        }
        let r = Arc::new(CollisionRule::new(degree, self.gamma)?);
        rules.insert(degree, r.clone());
        Ok(r)
    }

    /// Evaluates with a rule of prescribed exactness degree (used for refinement studies).
    pub fn apply_with_degree(&self, f: &RVec, g: &RVec, degree: usize) -> Result<RVec> {
        let dim = self.basis.dim;
        if f.len() != dim || g.len() != dim {
            return Err(VpbError::InvalidArgument("coefficient length differs from basis dimension".into()));
        }
        let rule = self.rule(degree)?;
        let indices = &self.basis.indices;
        let n = self.basis.max_degree;
        let partial: Vec<Vec<f64>> = (0..rule.g_nodes.len())
            .into_par_iter()
            .map(|gi| {
                let mut ev = PolyEvaluator::new(indices, n);
                let mut acc = vec![0.0; dim];
                let (pv, pvs, pp, pps) = (
                    &mut vec![0.0; dim],
                    &mut vec![0.0; dim],
                    &mut vec![0.0; dim],
                    &mut vec![0.0; dim],
                );
                let (gc, wg) = rule.g_nodes[gi];
                for &(r, wr) in &rule.r_nodes {
                    let h = 0.5 * r;
                    for (di, dir) in rule.sphere.points.iter().enumerate() {
                        let wd = wg * wr * rule.sphere.weights[di];
                        ev.eval_into(std::array::from_fn(|k| gc[k] + h * dir[k]), pv);
                        ev.eval_into(std::array::from_fn(|k| gc[k] - h * dir[k]), pvs);
                        let dotf = |p: &[f64], c: &RVec| p.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>();
                        let sym = dotf(pvs, f) * dotf(pv, g) + dotf(pv, f) * dotf(pvs, g);
                        if sym == 0.0 {
                            continue;
                        }
                        for (si, sg) in rule.sigma[di].iter().enumerate() {
                            let w = wd * rule.sphere.weights[si] * sym;
                            ev.eval_into(std::array::from_fn(|k| gc[k] + h * sg[k]), pp);
                            ev.eval_into(std::array::from_fn(|k| gc[k] - h * sg[k]), pps);
                            for a in 0..dim {
                                acc[a] += w * (pp[a] + pps[a] - pv[a] - pvs[a]);
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = DVector::zeros(dim);
        for p in &partial {
            for (o, x) in out.iter_mut().zip(p) {
                *o += x;
            }
        }
        Ok(out * (0.25 * self.c / std::f64::consts::TAU.powi(3)))
    }
}
