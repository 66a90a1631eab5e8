//! Fluid semigroup `V(t, ξ)` and the per-mode linear fluid equations
//!
//! ```text
//! iξ·m̂ = 0,    n̂ + n̂/|ξ|² + √(2/3) q̂ = 0,
//! ∂t m̂ + κ₀|ξ|² m̂ + iξ p̂ = Ĥ₁,
//! ∂t (q̂ − √(2/3) n̂) + κ₁|ξ|² q̂ = Ĥ₂,
//! ```
//!
//! worked in the macroscopic coordinates `(n, m, q)` of `N₀`, where the
//! ξ-inner product is `(1 + |ξ|^{-2}) n n̄' + m·m̄' + q q̄'`.

use nalgebra::{Matrix3, Vector3};
use ode_solvers::{Dop853, OutputType, SVector, System};
use serde::Serialize;

use crate::dispersion::asymptotics::{b_coeff, macro_coeffs, LinearResponse};
use crate::error::{Result, VpbError};
use crate::mode_operator::reduce_to_1d;
use crate::velocity_space::{MacroState, VelocityBasis};
use crate::{CVec, Complex};

const I: Complex = Complex::new(0.0, 1.0);
const ZERO: Complex = Complex::new(0.0, 0.0);

fn sqrt23() -> f64 {
    (2.0f64 / 3.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluidModeState {
    pub n_hat: Complex,
    pub m_hat: [Complex; 3],
    pub q_hat: Complex,
    pub p_hat: Complex,
    /// `−n̂/|ξ|²`.
    pub phi_hat: Complex,
}

fn norm_of(xi: [f64; 3]) -> f64 {
    xi.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl FluidModeState {
    pub fn from_macro(u: &MacroState<Complex>, s: f64, p_hat: Complex) -> Self {
        Self { n_hat: u.n, m_hat: u.m, q_hat: u.q, p_hat, phi_hat: -u.n / (s * s) }
    }

    pub fn macro_state(&self) -> MacroState<Complex> {
        MacroState::new(self.n_hat, self.m_hat, self.q_hat)
    }

    /// `|ξ̂·m̂|`.
    pub fn incompressibility_residual(&self, xi: [f64; 3]) -> f64 {
        let s = norm_of(xi);
        (0..3).map(|k| self.m_hat[k] * (xi[k] / s)).sum::<Complex>().norm()
    }

    /// `|n̂ + n̂/|ξ|² + √(2/3) q̂|`.
    pub fn boussinesq_residual(&self, s: f64) -> f64 {
        (self.n_hat * (1.0 + 1.0 / (s * s)) + self.q_hat * sqrt23()).norm()
    }

    pub fn to_coefficients(&self, basis: &VelocityBasis) -> CVec {
        basis.reconstruct(&self.macro_state())
    }

    fn scale(&self) -> f64 {
        [self.n_hat, self.m_hat[0], self.m_hat[1], self.m_hat[2], self.q_hat]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// `h_j(ξ)` in macroscopic coordinates `(n, m₁, m₂, m₃, q)`.
pub fn h_macro(j: i32, xi: [f64; 3]) -> Result<[f64; 5]> {
    let (s, o) = reduce_to_1d(xi)?;
    let ot = o.transpose();
    let dir = |k: usize| ot.column(k).into_owned();
    Ok(match j {
        2 | 3 => {
            let e = dir(j as usize - 1);
            [0.0, e[0], e[1], e[2], 0.0]
        }
        _ => {
            let [a, b, c] = macro_coeffs(j, s);
            let e = dir(0);
            [a, b * e[0], b * e[1], b * e[2], c]
        }
    })
}

fn macro_inner(u: &MacroState<Complex>, h: &[f64; 5], s: f64) -> Complex {
    u.n * (h[0] * (1.0 + 1.0 / (s * s))) + u.m[0] * h[1] + u.m[1] * h[2] + u.m[2] * h[3] + u.q * h[4]
}

/// ξ-norm of a macroscopic state.
pub fn macro_norm(u: &MacroState<Complex>, s: f64) -> f64 {
    (u.n.norm_sqr() * (1.0 + 1.0 / (s * s)) + u.m.iter().map(|z| z.norm_sqr()).sum::<f64>() + u.q.norm_sqr()).sqrt()
}

fn add_scaled(acc: &mut MacroState<Complex>, h: &[f64; 5], c: Complex) {
    acc.n += c * h[0];
    for k in 0..3 {
        acc.m[k] += c * h[k + 1];
    }
    acc.q += c * h[4];
}

#[derive(Debug, Clone)]
pub struct FluidTrajectory {
    pub xi: [f64; 3],
    pub times: Vec<f64>,
    pub states: Vec<FluidModeState>,
    /// ξ-norm of the macroscopic state.
    pub norm_track: Vec<f64>,
}

/// `V(t,ξ)U₀ = Σ_{j=0,2,3} e^{−b_j t} (U₀, h_j)_ξ h_j`.
pub fn fluid_semigroup_v(
    u0: &MacroState<Complex>,
    xi: [f64; 3],
    times: &[f64],
    r: &LinearResponse,
) -> Result<FluidTrajectory> {
    let s = norm_of(xi);
    let hs: Vec<(f64, [f64; 5], Complex)> = [0, 2, 3]
        .into_iter()
        .map(|j| -> Result<_> {
            let h = h_macro(j, xi)?;
            Ok((b_coeff(j, s, r), h, macro_inner(u0, &h, s)))
        })
        .collect::<Result<_>>()?;
    let mut states = Vec::with_capacity(times.len());
    let mut norm_track = Vec::with_capacity(times.len());
    for &t in times {
        let mut u = MacroState::new(ZERO, [ZERO; 3], ZERO);
        for (b, h, c) in &hs {
            add_scaled(&mut u, h, c * (-b * t).exp());
        }
        norm_track.push(macro_norm(&u, s));
        states.push(FluidModeState::from_macro(&u, s, ZERO));
    }
    Ok(FluidTrajectory { xi, times: times.to_vec(), states, norm_track })
}

/// Closed form of `V(t,ξ)U₀`, with `U_j = (U₀, χ_j)`:
///
/// ```text
/// V(t,ξ)U₀ = e^{−b₀t} R₀(ξ)(U₀ − √(3/2) U₄) + e^{−b₂t} O₁ m₀,
/// R₀ = (2|ξ|²χ₀ − √6(1+|ξ|²)χ₄)/(3+5|ξ|²),
/// ```
///
/// together with `ξ|ξ|^{-2} (V(t,ξ)U₀, χ₀) = e^{−b₀t} 2ξ/(3+5|ξ|²) (U₀ − √(3/2) U₄)`.
pub fn fluid_closed_form(
    u0: &MacroState<Complex>,
    xi: [f64; 3],
    t: f64,
    r: &LinearResponse,
) -> (FluidModeState, [Complex; 3]) {
    let s = norm_of(xi);
    let s2 = s * s;
    let d = 3.0 + 5.0 * s2;
    let w = (u0.n - u0.q * (1.5f64).sqrt()) * (-b_coeff(0, s, r) * t).exp();
    let n = w * (2.0 * s2 / d);
    let q = w * (-(6.0f64).sqrt() * (1.0 + s2) / d);
    let m = transverse(xi, u0.m).map(|z| z * (-b_coeff(2, s, r) * t).exp());
    let grad = xi.map(|x| w * (2.0 * x / d));
    (FluidModeState::from_macro(&MacroState::new(n, m, q), s, ZERO), grad)
}

/// `O₁y = y − (y·ξ̂)ξ̂`.
fn transverse(xi: [f64; 3], y: [Complex; 3]) -> [Complex; 3] {
    let s = norm_of(xi);
    let e = xi.map(|x| x / s);
    let dot: Complex = (0..3).map(|k| y[k] * e[k]).sum();
    std::array::from_fn(|k| y[k] - dot * e[k])
}

/// Compatible fluid initial values from the macroscopic data `(n₀, m₀, q₀)` of `P₀f̂₀`:
/// `m(0) = O₁m₀`, `n(0) = −√6|ξ|²/(3+5|ξ|²)(q₀ − √(2/3)n₀)`,
/// `q(0) = (3+3|ξ|²)/(3+5|ξ|²)(q₀ − √(2/3)n₀)`.
pub fn compatible_initial(p0f0: &MacroState<Complex>, xi: [f64; 3]) -> MacroState<Complex> {
    let s2 = xi.iter().map(|x| x * x).sum::<f64>();
    let d = 3.0 + 5.0 * s2;
    let w = p0f0.q - p0f0.n * sqrt23();
    MacroState::new(
        w * (-(6.0f64).sqrt() * s2 / d),
        transverse(xi, p0f0.m),
        w * ((3.0 + 3.0 * s2) / d),
    )
}

fn check_compatible(u: &MacroState<Complex>, xi: [f64; 3]) -> Result<()> {
    let s = norm_of(xi);
    let st = FluidModeState::from_macro(u, s, ZERO);
    let tol = 1e-12 * st.scale().max(1e-300);
    if st.incompressibility_residual(xi) > tol || st.boussinesq_residual(s) > tol {
        let fix = compatible_initial(u, xi);
        return Err(VpbError::IncompatibleInitialData {
            n_suggested: fix.n.re,
            n_im: fix.n.im,
            q_suggested: fix.q.re,
            q_im: fix.q.im,
        });
    }
    Ok(())
}

fn check_forcing(times: &[f64], h1: &[[Complex; 3]], h2: &[Complex]) -> Result<()> {
    if h1.len() != times.len() || h2.len() != times.len() {
        return Err(VpbError::InvalidArgument("forcing must be sampled on the output times".into()));
    }
    if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(VpbError::InvalidArgument("times must start at 0 and increase strictly".into()));
    }
    Ok(())
}

/// `(φ₁, φ₂)` with `∫₀^h e^{−b(h−u)} (α + β u/h) du = α φ₁ + β φ₂`.
fn duhamel_weights(b: f64, h: f64) -> (f64, f64) {
    let x = b * h;
    if x.abs() < 0.5 {
        // Σ (−x)^k/(k+1)! and Σ (−x)^k/(k+2)!
        let (mut p1, mut p2, mut term) = (0.0, 0.0, 1.0);
        for k in 0..30 {
            p1 += term / (k + 1) as f64;
            p2 += term / ((k + 1) * (k + 2)) as f64;
            term *= -x / (k + 1) as f64;
        }
        (h * p1, h * p2)
    } else {
        let em = (-x).exp_m1();
        (h * (-em) / x, h * (x + em) / (x * x))
    }
}

/// Mode solution of the forced linear fluid equations by the Duhamel formulas,
/// integrating the exponential kernel exactly against the piecewise-linear
/// interpolant of the sampled forcing.
pub fn nspf_mode_solve(
    init: &MacroState<Complex>,
    h1: &[[Complex; 3]],
    h2: &[Complex],
    xi: [f64; 3],
    times: &[f64],
    r: &LinearResponse,
) -> Result<Vec<FluidModeState>> {
    check_forcing(times, h1, h2)?;
    check_compatible(init, xi)?;
    let s = norm_of(xi);
    let s2 = s * s;
    let (b0, b2) = (b_coeff(0, s, r), b_coeff(2, s, r));
    let c2 = (3.0 + 3.0 * s2) / (3.0 + 5.0 * s2);
    let ratio = -sqrt23() * s2 / (1.0 + s2);
    let pressure = |h: &[Complex; 3]| -> Complex { -I * (0..3).map(|k| h[k] * xi[k]).sum::<Complex>() / s2 };
    let mut q = init.q;
    let mut m = init.m;
    let mut out = Vec::with_capacity(times.len());
    out.push(FluidModeState::from_macro(&MacroState::new(q * ratio, m, q), s, pressure(&h1[0])));
    for k in 1..times.len() {
        let h = times[k] - times[k - 1];
        let (a0, a1) = duhamel_weights(b0, h);
        q = q * (-b0 * h).exp() + (h2[k - 1] * a0 + (h2[k] - h2[k - 1]) * a1) * c2;
        let (g0, g1) = duhamel_weights(b2, h);
        let f0 = transverse(xi, h1[k - 1]);
        let f1 = transverse(xi, h1[k]);
        m = std::array::from_fn(|i| m[i] * (-b2 * h).exp() + f0[i] * g0 + (f1[i] - f0[i]) * g1);
        out.push(FluidModeState::from_macro(&MacroState::new(q * ratio, m, q), s, pressure(&h1[k])));
    }
    Ok(out)
}

type State = SVector<f64, 9>;

/// Right-hand side on one forcing segment, in the unknowns
/// `X = q̂ − √(2/3) n̂` and `m̂`; `n̂`, `q̂` follow from the constraint. Time is
/// carried as the last component: the Dop853 driver does not advance the time
/// argument consistently across stages, so the system is kept autonomous.
struct Segment {
    t0: f64,
    t1: f64,
    h1: ([Complex; 3], [Complex; 3]),
    h2: (Complex, Complex),
    xi: [f64; 3],
    kappa0: f64,
    kappa1: f64,
}

impl System<f64, State> for Segment {
    fn system(&self, _t: f64, y: &State, dy: &mut State) {
        let th = (y[8] - self.t0) / (self.t1 - self.t0);
        let s2: f64 = self.xi.iter().map(|x| x * x).sum();
        let x = Complex::new(y[0], y[1]);
        let q = x * (3.0 * (1.0 + s2) / (3.0 + 5.0 * s2));
        let h2 = self.h2.0 * (1.0 - th) + self.h2.1 * th;
        let dx = -q * (self.kappa1 * s2) + h2;
        let h1: [Complex; 3] = std::array::from_fn(|k| self.h1.0[k] * (1.0 - th) + self.h1.1[k] * th);
        let proj: Complex = (0..3).map(|k| h1[k] * self.xi[k]).sum::<Complex>() / s2;
        dy[0] = dx.re;
        dy[1] = dx.im;
        for k in 0..3 {
            let m = Complex::new(y[2 + 2 * k], y[3 + 2 * k]);
            let dm = -m * (self.kappa0 * s2) + h1[k] - proj * self.xi[k];
            dy[2 + 2 * k] = dm.re;
            dy[3 + 2 * k] = dm.im;
        }
        dy[8] = 1.0;
    }
}

/// Independent solution of the same equations by an explicit Runge–Kutta
/// (Dormand–Prince 8(5,3)) integrator, restarted on every forcing segment.
pub fn nspf_ode_oracle(
    init: &MacroState<Complex>,
    h1: &[[Complex; 3]],
    h2: &[Complex],
    xi: [f64; 3],
    times: &[f64],
    r: &LinearResponse,
    rtol: f64,
) -> Result<Vec<FluidModeState>> {
    check_forcing(times, h1, h2)?;
    check_compatible(init, xi)?;
    let s = norm_of(xi);
    let s2 = s * s;
    let x0 = init.q - init.n * sqrt23();
    let mut y = State::zeros();
    y[0] = x0.re;
    y[1] = x0.im;
    for k in 0..3 {
        y[2 + 2 * k] = init.m[k].re;
        y[3 + 2 * k] = init.m[k].im;
    }
    let state = |y: &State, h: &[Complex; 3]| {
        let x = Complex::new(y[0], y[1]);
        let q = x * (3.0 * (1.0 + s2) / (3.0 + 5.0 * s2));
        let n = q * (-sqrt23() * s2 / (1.0 + s2));
        let m = std::array::from_fn(|k| Complex::new(y[2 + 2 * k], y[3 + 2 * k]));
        let p = -I * (0..3).map(|k| h[k] * xi[k]).sum::<Complex>() / s2;
        FluidModeState::from_macro(&MacroState::new(n, m, q), s, p)
    };
    let mut out = vec![state(&y, &h1[0])];
    let atol = rtol * out[0].scale().max(1e-300) * 1e-2;
    for k in 1..times.len() {
        let seg = Segment {
            t0: times[k - 1],
            t1: times[k],
            h1: (h1[k - 1], h1[k]),
            h2: (h2[k - 1], h2[k]),
            xi,
            kappa0: r.kappa0(),
            kappa1: r.kappa1(),
        };
        y[8] = times[k - 1];
        let mut solver = Dop853::new(seg, times[k - 1], times[k], times[k] - times[k - 1], y, rtol, atol);
        solver.set_output(OutputType::Sparse);
        solver
            .integrate()
            .map_err(|e| VpbError::Convergence(format!("fluid oracle: {e}")))?;
        let (xs, ys) = solver.results().get();
        match (xs.last(), ys.last()) {
            (Some(x), Some(v)) if (x - times[k]).abs() <= 1e-12 * times[k].max(1.0) => y = *v,
            _ => return Err(VpbError::Convergence("fluid oracle stopped short of the segment end".into())),
        }
        out.push(state(&y, &h1[k]));
    }
    Ok(out)
}

/// The wave-vector-independent transverse projector `I − ξ̂ξ̂ᵀ` as a matrix.
pub fn transverse_projector(xi: [f64; 3]) -> Matrix3<f64> {
    let e = Vector3::from(xi).normalize();
    Matrix3::identity() - e * e.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp() -> LinearResponse {
        LinearResponse { r11: -0.6, r22: -0.45, r44: -0.8 }
    }

    fn cz(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    #[test]
    fn v_at_zero_on_h0_is_h0() {
        let xi = [0.2, -0.5, 0.4];
        let h0 = h_macro(0, xi).unwrap();
        let s = norm_of(xi);
        // normalized so that (h0, h0)_ξ = 1
        let norm2 = h0[0] * h0[0] * (1.0 + 1.0 / (s * s)) + h0[4] * h0[4];
        assert!((norm2 - 1.0).abs() < 1e-14);
        let u0 = MacroState::new(cz(h0[0], 0.0), [ZERO; 3], cz(h0[4], 0.0));
        let v = fluid_semigroup_v(&u0, xi, &[0.0], &resp()).unwrap();
        assert!((v.states[0].n_hat - u0.n).norm() < 1e-15);
        assert!((v.states[0].q_hat - u0.q).norm() < 1e-15);
    }

    #[test]
    fn transverse_momentum_decays_with_kappa0() {
        let xi = [0.0, 0.0, 0.7];
        let u0 = MacroState::new(ZERO, [cz(1.0, 0.5), ZERO, ZERO], ZERO);
        let times = [0.0, 0.5, 2.0];
        let v = fluid_semigroup_v(&u0, xi, &times, &resp()).unwrap();
        for (t, st) in times.iter().zip(&v.states) {
            let want = u0.m[0] * (-0.45 * 0.49 * t).exp();
            assert!((st.m_hat[0] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn closed_form_matches_projection_form() {
        let xi = [0.3, 0.1, -0.6];
        let u0 = MacroState::new(cz(0.4, -0.1), [cz(0.2, 0.0), cz(-0.3, 0.2), cz(0.1, 0.1)], cz(-0.7, 0.3));
        let s = norm_of(xi);
        for t in [0.0, 0.3, 1.7] {
            let v = fluid_semigroup_v(&u0, xi, &[t], &resp()).unwrap().states[0];
            let (c, grad) = fluid_closed_form(&u0, xi, t, &resp());
            assert!((v.n_hat - c.n_hat).norm() < 1e-14);
            assert!((v.q_hat - c.q_hat).norm() < 1e-14);
            for k in 0..3 {
                assert!((v.m_hat[k] - c.m_hat[k]).norm() < 1e-14);
                assert!((grad[k] - v.n_hat * (xi[k] / (s * s))).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn compatible_values_satisfy_constraints_and_match_projection() {
        let xi = [0.5, 0.5, 0.0];
        let p0 = MacroState::new(cz(1.0, 0.2), [cz(0.3, 0.0), cz(0.0, 1.0), cz(0.5, 0.0)], cz(0.25, -0.4));
        let u = compatible_initial(&p0, xi);
        let st = FluidModeState::from_macro(&u, norm_of(xi), ZERO);
        assert!(st.incompressibility_residual(xi) < 1e-15);
        assert!(st.boussinesq_residual(norm_of(xi)) < 1e-15);
        let v = fluid_semigroup_v(&p0, xi, &[0.0], &resp()).unwrap().states[0];
        assert!((v.n_hat - u.n).norm() < 1e-14 && (v.q_hat - u.q).norm() < 1e-14);
        assert!(matches!(
            nspf_mode_solve(&p0, &[[ZERO; 3]], &[ZERO], xi, &[0.0], &resp()),
            Err(VpbError::IncompatibleInitialData { .. })
        ));
    }

    #[test]
    fn duhamel_weights_are_continuous_at_the_switch() {
        let (a, b) = duhamel_weights(0.5 - 1e-15, 1.0);
        let (c, d) = duhamel_weights(0.5 + 1e-15, 1.0);
        assert!((a - c).abs() < 1e-13 && (b - d).abs() < 1e-13);
    }
}
