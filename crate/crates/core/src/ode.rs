//! Adaptive Dormand–Prince 5(4) integration of the scalar ODE `h' = f(t, h)`.

use crate::error::{LabError, Result};
use crate::nonlinearity::NonlinearitySpec;

/// Default local error tolerance.
pub const ODE_TOL: f64 = 1e-10;
/// States beyond this magnitude count as finite-time blow-up.
pub const BLOWUP: f64 = 1e8;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Scalar Dormand–Prince integrator bound to a reaction term.
#[derive(Debug, Clone, Copy)]
pub struct Integrator<'a> {
    spec: &'a NonlinearitySpec,
    tol: f64,
    max_steps: usize,
}

impl<'a> Integrator<'a> {
    pub fn new(spec: &'a NonlinearitySpec, tol: f64) -> Self {
        Self { spec, tol, max_steps: 10_000_000 }
    }

    /// Solution at `t1` from `h(t0) = h0`.
    pub fn solve(&self, t0: f64, h0: f64, t1: f64) -> Result<f64> {
        let mut y = h0;
        self.advance(t0, &mut y, t1, None)?;
        Ok(y)
    }

    /// Solution sampled at increasing `times` (all `≥ t0`).
    pub fn solve_at(&self, t0: f64, h0: f64, times: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(times.len());
        let mut t = t0;
        let mut y = h0;
        let mut step = None;
        for &target in times {
            step = Some(self.advance(t, &mut y, target, step)?);
            t = target;
            out.push(y);
        }
        Ok(out)
    }

    /// Advance `y` from `t0` to `t1`; returns the last accepted step size so
    /// that consecutive calls can warm start.
    fn advance(&self, t0: f64, y: &mut f64, t1: f64, step_hint: Option<f64>) -> Result<f64> {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(step_hint.unwrap_or(0.0));
        }
        if !y.is_finite() {
            return Err(LabError::Domain { value: *y });
        }
        let dir = span.signum();
        let f = |t: f64, u: f64| self.spec.rate(t, u);
        let mut t = t0;
        let mut h = step_hint
            .filter(|h| *h > 0.0)
            .unwrap_or_else(|| (span.abs() * 1e-2).min(0.1 * self.spec.period()))
            .min(span.abs());
        let mut k1 = f(t, *y);
        let mut steps = 0usize;
        let mut last_ok = h;
        while dir * (t1 - t) > 0.0 {
            steps += 1;
            if steps > self.max_steps {
                return Err(LabError::StepUnderflow { time: t });
            }
            let remaining = (t1 - t).abs();
            let last = h >= remaining;
            let hs = if last { remaining } else { h } * dir;
            let y0 = *y;
            let k2 = f(t + C2 * hs, y0 + hs * A21 * k1);
            let k3 = f(t + C3 * hs, y0 + hs * (A31 * k1 + A32 * k2));
            let k4 = f(t + C4 * hs, y0 + hs * (A41 * k1 + A42 * k2 + A43 * k3));
            let k5 = f(t + C5 * hs, y0 + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
            let k6 = f(t + hs, y0 + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
            let y5 = y0 + hs * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
            let k7 = f(t + hs, y5);
            let err_abs = (hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)).abs();
            let scale = self.tol * (1.0 + y0.abs().max(y5.abs()));
            let err = err_abs / scale;
            if !y5.is_finite() || y5.abs() > BLOWUP {
                if h.abs() < 1e-12 * (1.0 + t.abs()) || y0.abs() > 0.1 * BLOWUP {
                    return Err(LabError::Divergence { time: t, value: y0 });
                }
                h *= 0.25;
                continue;
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + hs };
                *y = y5;
                k1 = k7;
                last_ok = hs.abs();
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = hs.abs() * grow;
            } else {
                h = hs.abs() * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < 1e-14 * (1.0 + t.abs()) {
                    return Err(LabError::StepUnderflow { time: t });
                }
            }
        }
        Ok(last_ok)
    }
}

/// Time-`T` map `h0 ↦ h(T)` of `h' = f(t, h)`, `h(0) = h0`.
pub fn poincare_map(spec: &NonlinearitySpec, h0: f64, tol: f64) -> Result<f64> {
    Integrator::new(spec, tol).solve(0.0, h0, spec.period())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{Family, PolyTerm, TimeMode};

    #[test]
    fn identity_flow() {
        let spec = NonlinearitySpec::zero(1.0);
        assert_eq!(poincare_map(&spec, 0.7, ODE_TOL).unwrap(), 0.7);
    }

    #[test]
    fn equilibrium_stays() {
        assert_eq!(poincare_map(&NonlinearitySpec::kpp(1.0), 0.0, ODE_TOL).unwrap(), 0.0);
    }

    #[test]
    fn logistic_closed_form() {
        // h(t) = h0 e^t / (h0 e^t + 1 - h0).
        let e = std::f64::consts::E;
        let exact = 0.5 * e / (0.5 * e + 0.5);
        let got = poincare_map(&NonlinearitySpec::kpp(1.0), 0.5, ODE_TOL).unwrap();
        assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
        assert!((got - 0.731059).abs() < 1e-6);
    }

    #[test]
    fn linear_periodic_coefficient() {
        // h' = (0.2 + 0.5 sin(2πt)) h integrates to h0 exp(0.2 t + (1 - cos 2πt) 0.5/(2π)).
        let spec = NonlinearitySpec::new(
            Family::CustomPolynomial {
                terms: vec![
                    PolyTerm { power: 1, time: TimeMode::Constant, coef: 0.2 },
                    PolyTerm { power: 1, time: TimeMode::Sin, coef: 0.5 },
                ],
            },
            1.0,
        )
        .unwrap();
        let integ = Integrator::new(&spec, 1e-12);
        let times = [0.25, 0.5, 1.0, 3.0];
        let got = integ.solve_at(0.0, 1.0, &times).unwrap();
        for (t, g) in times.iter().zip(got) {
            let tau = std::f64::consts::TAU;
            let exact = (0.2 * t + 0.5 / tau * (1.0 - (tau * t).cos())).exp();
            assert!((g - exact).abs() < 1e-9 * exact, "t={t}: {g} vs {exact}");
        }
    }

    #[test]
    fn blow_up_is_reported() {
        // h' = h - h^2 from h0 = -1 escapes to -∞ at t = ln 2.
        let err = poincare_map(&NonlinearitySpec::kpp(1.0), -1.0, ODE_TOL).unwrap_err();
        match err {
            LabError::Divergence { time, .. } => assert!((time - 2f64.ln()).abs() < 1e-3, "escape at {time}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn backward_integration() {
        let spec = NonlinearitySpec::kpp(1.0);
        let integ = Integrator::new(&spec, 1e-12);
        let fwd = integ.solve(0.0, 0.3, 2.0).unwrap();
        let back = integ.solve(2.0, fwd, 0.0).unwrap();
        assert!((back - 0.3).abs() < 1e-9);
    }
}
