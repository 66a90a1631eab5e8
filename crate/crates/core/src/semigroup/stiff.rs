//! L-stable step-doubling integrator for `y' = A y`.
//!
//! One step multiplies by the (2,3) Padé approximant of `e^{hA}`, which is the
//! stability function of the three-stage Radau IIA method (order 5). The local
//! error is estimated by comparing one step of size `h` against two of `h/2`.

use std::collections::HashMap;

use nalgebra::{DMatrix, Dyn, LU};

use crate::error::{Result, VpbError};
use crate::{CMat, CVec, Complex};

pub struct PadeStepper<'a> {
    a: &'a CMat,
    a2: CMat,
    a3: CMat,
    factors: HashMap<u64, (LU<Complex, Dyn, Dyn>, CMat)>,
    pub rtol: f64,
    pub steps: usize,
    pub rejected: usize,
}

fn c(x: f64) -> Complex {
    Complex::new(x, 0.0)
}

impl<'a> PadeStepper<'a> {
    pub fn new(a: &'a CMat, rtol: f64) -> Self {
        let a2 = a * a;
        let a3 = &a2 * a;
        Self { a, a2, a3, factors: HashMap::new(), rtol, steps: 0, rejected: 0 }
    }

    fn factor(&mut self, h: f64) -> &(LU<Complex, Dyn, Dyn>, CMat) {
        if self.factors.len() > 64 {
            self.factors.clear();
        }
        let (a, a2, a3) = (self.a, &self.a2, &self.a3);
        self.factors.entry(h.to_bits()).or_insert_with(|| {
            let n = a.nrows();
            let id = DMatrix::<Complex>::identity(n, n);
            let p = &id + a * c(0.4 * h) + a2 * c(h * h / 20.0);
            let q = &id - a * c(0.6 * h) + a2 * c(0.15 * h * h) - a3 * c(h * h * h / 60.0);
            (q.lu(), p)
        })
    }

    fn step(&mut self, h: f64, y: &CVec) -> Result<CVec> {
        let (lu, p) = self.factor(h);
        lu.solve(&(p * y))
            .ok_or_else(|| VpbError::Solve(format!("singular Padé denominator at h = {h}")))
    }

    /// Integrates from `y(0) = y0` and returns `y(τ_k)` for the increasing `taus`.
    pub fn integrate(&mut self, y0: &CVec, taus: &[f64], norm: &dyn Fn(&CVec) -> f64) -> Result<Vec<CVec>> {
        let scale = norm(y0).max(f64::MIN_POSITIVE);
        let an = self.a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut k = (0.05 / an).log2().floor() as i32;
        let mut y = y0.clone();
        let mut tau = 0.0;
        let mut out = Vec::with_capacity(taus.len());
        for &target in taus {
            if target < tau {
                return Err(VpbError::InvalidArgument("output times must be increasing".into()));
            }
            while tau < target {
                let ladder = f64::powi(2.0, k);
                let h = ladder.min(target - tau);
                let y1 = self.step(h, &y)?;
                let mid = self.step(0.5 * h, &y)?;
                let y2 = self.step(0.5 * h, &mid)?;
                let err = norm(&(&y2 - &y1)) / 31.0;
                let tol = self.rtol * scale.max(norm(&y2));
                if err <= tol {
                    y = y2;
                    tau = if h == ladder { tau + h } else { target };
                    self.steps += 1;
                    if err < tol / 64.0 && h == ladder {
                        k += 1;
                    }
                } else {
                    self.rejected += 1;
                    k = k.min(h.log2().floor() as i32) - 1;
                    if k < -80 {
                        return Err(VpbError::Convergence("step size underflow in the stiff integrator".into()));
                    }
                }
            }
            out.push(y.clone());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_decay_and_rotation() {
        let a = DMatrix::from_row_slice(2, 2, &[c(-1.0), c(3.0), c(-3.0), c(-1.0)]);
        let y0 = CVec::from_vec(vec![c(1.0), c(0.0)]);
        let mut st = PadeStepper::new(&a, 1e-12);
        let out = st.integrate(&y0, &[0.5, 2.0], &|v: &CVec| v.norm()).unwrap();
        for (t, y) in [0.5f64, 2.0].iter().zip(&out) {
            let d = (-t).exp();
            assert!((y[0].re - d * (3.0 * t).cos()).abs() < 1e-10);
            assert!((y[1].re + d * (3.0 * t).sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn stiff_component_is_damped() {
        let a = DMatrix::from_diagonal(&CVec::from_vec(vec![c(-1e8), c(-0.5)]));
        let y0 = CVec::from_vec(vec![c(1.0), c(1.0)]);
        let mut st = PadeStepper::new(&a, 1e-10);
        let out = st.integrate(&y0, &[1.0], &|v: &CVec| v.norm()).unwrap();
        assert!(out[0][0].norm() < 1e-12);
        assert!((out[0][1].re - (-0.5f64).exp()).abs() < 1e-9);
    }
}
