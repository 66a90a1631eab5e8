//! Quadrature over collision configurations `(G, r, ĝ, σ)`.
//!
//! With centre of mass `G = (v+v_*)/2` and relative velocity `g = v−v_* = rĝ`,
//! post-collision velocities are `v' = G + rσ/2`, `v'_* = G − rσ/2`. For a
//! kernel `|cos θ| |g|^γ` the product `M M_* B dω dv_* dv` becomes
//! `(2π)^{-3} e^{-|G|²} dG · e^{-r²/4} r^{2+γ} dr/2 · dĝ dσ`. The radial factor is
//! handled with a generalized Gauss–Laguerre rule in `u = r²/4`.

use crate::error::Result;
use crate::quadrature::{gauss_hermite, gauss_laguerre, gauss_legendre, trapezoid_periodic};

/// Product rule on the unit sphere, exact for polynomials of degree ≤ `degree`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(degree: usize) -> Result<Self> {
        let n_theta = degree / 2 + 1;
        let n_phi = degree + 1;
        let gl = gauss_legendre::<f64>(n_theta)?;
        let tr = trapezoid_periodic::<f64>(n_phi);
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (c, wc) in gl.nodes.iter().zip(&gl.weights) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for (p, wp) in tr.nodes.iter().zip(&tr.weights) {
                points.push([s * p.cos(), s * p.sin(), *c]);
                weights.push(wc * wp);
            }
        }
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Full configuration rule for a given polynomial exactness degree.
#[derive(Debug, Clone)]
pub struct CollisionRule {
    pub degree: usize,
    pub gamma: f64,
    /// Centre-of-mass nodes with weights for `∫ e^{-|G|²} dG`.
    pub g_nodes: Vec<([f64; 3], f64)>,
    /// Relative speeds with weights for `∫ r^{2+γ} e^{-r²/4} dr / 2`.
    pub r_nodes: Vec<(f64, f64)>,
    pub sphere: SphereRule,
    /// For each direction ĝ, the σ points `cos χ ĝ + sin χ (cos φ ê₁ + sin φ ê₂)`.
    pub sigma: Vec<Vec<[f64; 3]>>,
}

const FRAME_AXES: [[f64; 3]; 2] = [[0.5381, 0.6215, 0.5693], [-0.7071, 0.1, 0.7]];

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> ([f64; 3], f64) {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    ([a[0] / n, a[1] / n, a[2] / n], n)
}

/// Orthonormal pair completing `g` to a right-handed frame.
pub fn frame(g: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let (mut e1, n) = normalize(cross(FRAME_AXES[0], g));
    if n < 0.2 {
        e1 = normalize(cross(FRAME_AXES[1], g)).0;
    }
    let e2 = cross(g, e1);
    (e1, e2)
}

impl CollisionRule {
    pub fn new(degree: usize, gamma: f64) -> Result<Self> {
        let n_g = degree / 2 + 1;
        let n_r = (degree / 2) / 2 + 1;
        let gh = gauss_hermite::<f64>(n_g)?;
        // e^{-|G|²} = e^{-|y|²/2} with G = y/√2, dG = dy / 2^{3/2}
        let scale = std::f64::consts::PI.powf(1.5);
        let mut g_nodes = Vec::with_capacity(n_g.pow(3));
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n_g {
            for j in 0..n_g {
                for k in 0..n_g {
                    g_nodes.push((
                        [gh.nodes[i] * s2, gh.nodes[j] * s2, gh.nodes[k] * s2],
                        scale * gh.weights[i] * gh.weights[j] * gh.weights[k],
                    ));
                }
            }
        }
        // r^{2+γ} e^{-r²/4} dr / 2 = 2^{1+γ} u^{(1+γ)/2} e^{-u} du
        let alpha = 0.5 * (1.0 + gamma);
        let gl = gauss_laguerre::<f64>(n_r, alpha)?;
        let rf = 2f64.powf(1.0 + gamma);
        let r_nodes = gl
            .nodes
            .iter()
            .zip(&gl.weights)
            .map(|(u, w)| (2.0 * u.sqrt(), rf * w))
            .collect();
        let sphere = SphereRule::new(degree)?;
        let sigma = sphere
            .points
            .iter()
            .map(|&g| {
                let (e1, e2) = frame(g);
                sphere
                    .points
                    .iter()
                    .map(|p| {
                        // p is expressed in a frame whose third axis is ĝ
                        [
                            p[2] * g[0] + p[0] * e1[0] + p[1] * e2[0],
                            p[2] * g[1] + p[0] * e1[1] + p[1] * e2[1],
                            p[2] * g[2] + p[0] * e1[2] + p[1] * e2[2],
                        ]
                    })
                    .collect()
            })
            .collect();
        Ok(Self { degree, gamma, g_nodes, r_nodes, sphere, sigma })
    }

    pub fn point_count(&self) -> usize {
        self.g_nodes.len() * self.r_nodes.len() * self.sphere.len() * self.sphere.len()
    }

    /// Visits every configuration under one centre-of-mass node. The callback
    /// receives `(weight, v, v_*, v', v'_*)`.
    pub fn visit_g_node<F>(&self, gi: usize, mut f: F)
    where
        F: FnMut(f64, [f64; 3], [f64; 3], [f64; 3], [f64; 3]),
    {
        let (gc, wg) = self.g_nodes[gi];
        for &(r, wr) in &self.r_nodes {
            let h = 0.5 * r;
            for (di, dir) in self.sphere.points.iter().enumerate() {
                let wd = wg * wr * self.sphere.weights[di];
                let v = [gc[0] + h * dir[0], gc[1] + h * dir[1], gc[2] + h * dir[2]];
                let vs = [gc[0] - h * dir[0], gc[1] - h * dir[1], gc[2] - h * dir[2]];
                for (si, sg) in self.sigma[di].iter().enumerate() {
                    let w = wd * self.sphere.weights[si];
                    let vp = [gc[0] + h * sg[0], gc[1] + h * sg[1], gc[2] + h * sg[2]];
                    let vps = [gc[0] - h * sg[0], gc[1] - h * sg[1], gc[2] - h * sg[2]];
                    f(w, v, vs, vp, vps);
                }
            }
        }
    }
}

/// Allocation-free evaluation of the Hermite polynomial parts at a point.
#[derive(Debug, Clone)]
pub struct PolyEvaluator<'a> {
    indices: &'a [[usize; 3]],
    h: [Vec<f64>; 3],
    sq: Vec<f64>,
}

impl<'a> PolyEvaluator<'a> {
    pub fn new(indices: &'a [[usize; 3]], max_degree: usize) -> Self {
        let sq = (0..=max_degree + 1).map(|k| (k as f64).sqrt()).collect();
        Self {
            indices,
            h: std::array::from_fn(|_| vec![0.0; max_degree + 1]),
            sq,
        }
    }

    pub fn eval_into(&mut self, v: [f64; 3], out: &mut [f64]) {
        let n = self.h[0].len();
        for (d, x) in v.iter().enumerate() {
            let h = &mut self.h[d];
            h[0] = 1.0;
            if n > 1 {
                h[1] = *x;
            }
            for k in 1..n - 1 {
                h[k + 1] = (x * h[k] - self.sq[k] * h[k - 1]) / self.sq[k + 1];
            }
        }
        for (o, a) in out.iter_mut().zip(self.indices) {
            *o = self.h[0][a[0]] * self.h[1][a[1]] * self.h[2][a[2]];
        }
    }
}
