//! Explicit comparison functions and numerical certification of their
//! differential inequalities.
//!
//! Two constructions are provided:
//!
//! * the travelling-wave corrector `W = U(t, x − ct + K) ± ε A(t, x − ct)`,
//!   where `A` blends the platform growth factors `b_i` through the cutoff `ζ`;
//! * the flattening front `W = H₊(t)(1 − γ(z)) + H₋(t) γ(z)`, `z = x − C₁ ∓ C₂ t`,
//!   built from two ODE solutions and a logistic transition.
//!
//! [`check_comparison`] evaluates `ℒW = W_t − W_xx − f(t, W)` with refined
//! finite differences and reports the worst point.

use crate::error::{LabError, Result};
use crate::interp::UniformSpline;
use crate::nonlinearity::NonlinearitySpec;
use crate::ode::Integrator;
use crate::pde::{Field, Grid, Trajectory};
use crate::periodic::{
    attraction_interval, default_basin_window, floquet_exponent, AttractionInterval, BasinSide, OdeConfig,
    PeriodicSolution,
};
use crate::stats::linear_fit;
use crate::terrace::{exponential_rate, WaveProfile};
use serde::{Deserialize, Serialize};

/// Safety factor applied to the sampled Lipschitz constant of `∂_u f`.
pub const LIPSCHITZ_SAFETY: f64 = 1.5;
/// Default stencil refinement relative to the run grid, in `x` and `t`.
pub const REFINE: usize = 4;
/// Relative size of the certification tolerance against `‖f‖_∞`.
pub const CERT_TOL_REL: f64 = 1e-6;
/// Bisection range and iteration count for the corrector amplitude.
pub const EPS_SEARCH_LO: f64 = 1e-6;
pub const EPS_SEARCH_ITER: usize = 20;

// ---------------------------------------------------------------------------
// Growth factors b_i and the cutoff ζ

/// `b(t) = exp(μt/2 + ∫₀ᵗ ∂_u f(τ, p(τ)) dτ)` for a linearly stable platform.
///
/// The antiderivative is tabulated once over a period and continued by
/// periodicity: `∫₀^{kT+s} = −kμT + ∫₀^s`.
#[derive(Debug, Clone)]
pub struct GrowthFactor {
    pub mu: f64,
    /// `sup_{[0,T]} exp(μt + ∫₀ᵗ ∂_u f)`, so that `b(t) ≤ M e^{−μt/2}`.
    pub m_bound: f64,
    period: f64,
    h: f64,
    /// Antiderivative and its slope `∂_u f(τ_j, p(τ_j))` on a fine grid.
    cum: Vec<f64>,
    slope: Vec<f64>,
}

impl GrowthFactor {
    pub fn new(spec: &NonlinearitySpec, platform: &PeriodicSolution) -> Result<Self> {
        let mu = floquet_exponent(spec, platform);
        if !(mu > 0.0) {
            return Err(LabError::Precondition(format!(
                "growth factor needs a linearly stable platform (q(0) = {}, mu = {mu})",
                platform.q0()
            )));
        }
        let period = platform.period;
        let n = 16 * platform.n_t().max(64);
        let h = period / n as f64;
        let slope: Vec<f64> = (0..=n)
            .map(|j| {
                let t = j as f64 * h;
                spec.rate_du(t, platform.value_at(t))
            })
            .collect();
        // Simpson on half cells using the Catmull–Rom midpoint values.
        let mut cum = vec![0.0; n + 1];
        for j in 0..n {
            let tm = (j as f64 + 0.5) * h;
            let mid = spec.rate_du(tm, platform.value_at(tm));
            cum[j + 1] = cum[j] + h / 6.0 * (slope[j] + 4.0 * mid + slope[j + 1]);
        }
        // Self-consistent rate so that b is exactly periodic up to e^{−μt/2}.
        let mu_cum = -cum[n] / period;
        let m_bound = (0..=n).map(|j| (mu_cum * j as f64 * h + cum[j]).exp()).fold(0.0, f64::max);
        Ok(Self { mu: mu_cum, m_bound, period, h, cum, slope })
    }

    /// `∫₀ˢ ∂_u f` for `s ∈ [0, T]` by cubic Hermite interpolation.
    fn integral_in_period(&self, s: f64) -> f64 {
        let n = self.cum.len() - 1;
        let x = (s / self.h).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n - 1);
        let t = x - k as f64;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.cum[k]
            + (t3 - 2.0 * t2 + t) * self.h * self.slope[k]
            + (-2.0 * t3 + 3.0 * t2) * self.cum[k + 1]
            + (t3 - t2) * self.h * self.slope[k + 1]
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = (t / self.period).floor();
        let s = t - k * self.period;
        (0.5 * self.mu * t - k * self.mu * self.period + self.integral_in_period(s)).exp()
    }

    /// The envelope `M e^{−μt/2}`.
    pub fn bound(&self, t: f64) -> f64 {
        self.m_bound * (-0.5 * self.mu * t).exp()
    }
}

/// `b_i(t)` for the platform `p_i`; see [`GrowthFactor`].
pub fn b_coeff(spec: &NonlinearitySpec, platform: &PeriodicSolution, t: f64) -> Result<f64> {
    Ok(GrowthFactor::new(spec, platform)?.value(t))
}

/// Smooth cutoff: 1 on `(−∞, 0]`, 0 on `[3, ∞)`, a quintic smoothstep in
/// between (`|ζ'| ≤ 5/8`, `|ζ''| ≤ 0.65`).
pub fn zeta(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= 3.0 {
        return 0.0;
    }
    let y = x / 3.0;
    1.0 - y * y * y * (10.0 - 15.0 * y + 6.0 * y * y)
}

/// `A(t, x) = ζ(x) b_up(t) + (1 − ζ(x)) b_low(t)`.
pub fn a_coeff(b_up: &GrowthFactor, b_low: &GrowthFactor, t: f64, x: f64) -> f64 {
    let z = zeta(x);
    z * b_up.value(t) + (1.0 - z) * b_low.value(t)
}

/// Logistic transition `γ(x) = (1 + tanh(x/2)) / 2`.
pub fn gamma(x: f64) -> f64 {
    0.5 * (1.0 + (0.5 * x).tanh())
}

fn gamma_inverse(r: f64) -> f64 {
    (r / (1.0 - r)).ln()
}

/// Sampled Lipschitz constant of `∂_u f` over `[0, T] × [u_lo, u_hi]` on an
/// `n × n` grid (no safety factor).
pub fn lipschitz_du(spec: &NonlinearitySpec, u_lo: f64, u_hi: f64, n: usize) -> f64 {
    let n = n.max(3);
    let du = (u_hi - u_lo) / (n - 1) as f64;
    let mut best: f64 = 0.0;
    for i in 0..n {
        let t = spec.period() * i as f64 / n as f64;
        let mut prev = spec.rate_du(t, u_lo);
        for j in 1..n {
            let cur = spec.rate_du(t, u_lo + du * j as f64);
            best = best.max((cur - prev).abs() / du);
            prev = cur;
        }
    }
    best
}

/// `CERT_TOL_REL · sup |f|` over `[0, T] × [u_lo, u_hi]`.
pub fn default_cert_tol(spec: &NonlinearitySpec, u_lo: f64, u_hi: f64) -> f64 {
    CERT_TOL_REL * spec.sup_abs(u_lo, u_hi, 200).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// Smooth wave evaluator

#[derive(Debug, Clone, Copy)]
struct Tail {
    edge: f64,
    platform: f64,
    dev: f64,
    rate: f64,
}

impl Tail {
    fn fit(edge: f64, platform: f64, value: f64, slope: f64, sign: f64, fallback: f64) -> Self {
        let dev = value - platform;
        let rate = if dev.abs() > 1e-14 { sign * slope / dev } else { fallback };
        let rate = if (1e-3..=50.0).contains(&rate) { rate } else { fallback };
        Self { edge, platform, dev, rate }
    }

    fn eval(&self, dist: f64) -> f64 {
        self.platform + self.dev * (-self.rate * dist).exp()
    }
}

#[derive(Debug, Clone)]
struct Row {
    spline: UniformSpline,
    left: Tail,
    right: Tail,
}

impl Row {
    fn eval(&self, xi: f64) -> f64 {
        if xi < self.left.edge {
            self.left.eval(self.left.edge - xi)
        } else if xi > self.right.edge {
            self.right.eval(xi - self.right.edge)
        } else {
            self.spline.eval(xi)
        }
    }
}

/// `C²` reconstruction of a stored wave: cubic splines in `ξ`, exponential
/// tails matched in value and slope, periodic cubic interpolation in `τ`.
#[derive(Debug, Clone)]
struct SmoothWave {
    period: f64,
    tau: Vec<f64>,
    rows: Vec<Row>,
    uniform_tau: bool,
}

impl SmoothWave {
    fn new(spec: &NonlinearitySpec, wave: &WaveProfile) -> Self {
        let c = wave.speed;
        let mu_up = floquet_exponent(spec, &wave.upper);
        let mu_low = floquet_exponent(spec, &wave.lower);
        let lin = |mu: f64, sign: f64| {
            let disc = (c * c + 4.0 * mu.max(1e-6)).sqrt();
            0.5 * (sign * c + disc)
        };
        let (r_left, r_right) = (lin(mu_up, -1.0), lin(mu_low, 1.0));
        let rows = wave
            .tau
            .iter()
            .zip(&wave.profile)
            .map(|(&tau, vals)| {
                let spline = UniformSpline::new(wave.xi_min, wave.dxi, vals.clone());
                let (a, b) = (spline.x_min(), spline.x_max());
                let left = Tail::fit(a, wave.upper.value_at(tau), vals[0], spline.deriv(a), 1.0, r_left);
                let right =
                    Tail::fit(b, wave.lower.value_at(tau), vals[vals.len() - 1], spline.deriv(b), -1.0, r_right);
                Row { spline, left, right }
            })
            .collect();
        let n = wave.tau.len();
        let uniform_tau = n >= 4
            && wave
                .tau
                .iter()
                .enumerate()
                .all(|(j, &t)| (t - wave.period * j as f64 / n as f64).abs() < 1e-9 * wave.period);
        Self { period: wave.period, tau: wave.tau.clone(), rows, uniform_tau }
    }

    fn eval_frame(&self, tau: f64, xi: f64) -> f64 {
        let n = self.rows.len();
        if n == 1 {
            return self.rows[0].eval(xi);
        }
        let tau = tau.rem_euclid(self.period);
        if self.uniform_tau {
            let s = tau / self.period * n as f64;
            let k = (s.floor() as usize).min(n - 1);
            let u = s - k as f64;
            let at = |j: isize| self.rows[j.rem_euclid(n as isize) as usize].eval(xi);
            let k = k as isize;
            let (p0, p1, p2, p3) = (at(k - 1), at(k), at(k + 1), at(k + 2));
            return 0.5
                * (2.0 * p1
                    + (-p0 + p2) * u
                    + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u * u
                    + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u * u * u);
        }
        let j = self.tau.partition_point(|&s| s <= tau).saturating_sub(1);
        let (t0, t1, next) =
            if j + 1 < n { (self.tau[j], self.tau[j + 1], j + 1) } else { (self.tau[j], self.period, 0) };
        let w = if t1 > t0 { (tau - t0) / (t1 - t0) } else { 0.0 };
        (1.0 - w) * self.rows[j].eval(xi) + w * self.rows[next].eval(xi)
    }
}

// ---------------------------------------------------------------------------
// ODE solution table

/// ODE solution `H(t)` tabulated with its exact slope `f(t, H)`; evaluated by
/// cubic Hermite interpolation.
#[derive(Debug, Clone)]
struct OdeTable {
    h: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl OdeTable {
    fn new(spec: &NonlinearitySpec, h0: f64, horizon: f64, tol: f64) -> Result<Self> {
        let per = spec.period();
        let n_per = ((per / 0.005).ceil() as usize).max(64);
        let h = per / n_per as f64;
        let n = (horizon / h).ceil() as usize + 2;
        let times: Vec<f64> = (1..=n).map(|j| j as f64 * h).collect();
        let mut values = vec![h0];
        values.extend(Integrator::new(spec, tol).solve_at(0.0, h0, &times)?);
        let slopes = values.iter().enumerate().map(|(j, &v)| spec.rate(j as f64 * h, v)).collect();
        Ok(Self { h, values, slopes })
    }

    fn horizon(&self) -> f64 {
        self.h * (self.values.len() - 1) as f64
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.values.len() - 1;
        let x = (t / self.h).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n - 1);
        let s = x - k as f64;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.values[k]
            + (s3 - 2.0 * s2 + s) * self.h * self.slopes[k]
            + (-2.0 * s3 + 3.0 * s2) * self.values[k + 1]
            + (s3 - s2) * self.h * self.slopes[k + 1]
    }

    fn max_gap(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Comparison functions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonKind {
    FifeMcleodUpper,
    FifeMcleodLower,
    FlatteningUpper,
    FlatteningLower,
}

impl ComparisonKind {
    /// Super-solution kinds (`ℒW ≥ 0`).
    pub fn is_upper(self) -> bool {
        matches!(self, Self::FifeMcleodUpper | Self::FlatteningUpper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Upper,
    Lower,
}

/// Parameters of a comparison function; unused entries are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonParams {
    pub c: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub eps: Option<f64>,
    /// Speed of the referenced wave.
    pub wave_speed: Option<f64>,
    #[serde(rename = "C1")]
    pub c1: Option<f64>,
    #[serde(rename = "C2")]
    pub c2: Option<f64>,
    /// Sampled Lipschitz constant of `∂_u f` including the safety factor.
    #[serde(rename = "L")]
    pub lipschitz: Option<f64>,
    pub h_plus: Option<f64>,
    pub h_minus: Option<f64>,
    /// Largest time at which the evaluator is exact.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone)]
enum Evaluator {
    Wave { wave: SmoothWave, b_up: GrowthFactor, b_low: GrowthFactor, c: f64, k: f64, eps: f64 },
    Flattening { h_plus: OdeTable, h_minus: OdeTable, c1: f64, c2: f64, direction: f64 },
}

/// A candidate super- or sub-solution, evaluable at any `(t, x)`.
#[derive(Debug, Clone)]
pub struct ComparisonFunction {
    pub kind: ComparisonKind,
    pub params: ComparisonParams,
    eval: Evaluator,
}

impl ComparisonFunction {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match &self.eval {
            Evaluator::Wave { wave, b_up, b_low, c, k, eps } => {
                let z = x - c * t;
                let sign = if self.kind.is_upper() { 1.0 } else { -1.0 };
                wave.eval_frame(t, z + k) + sign * eps * a_coeff(b_up, b_low, t, z)
            }
            Evaluator::Flattening { h_plus, h_minus, c1, c2, direction } => {
                let g = gamma(x - c1 - direction * c2 * t);
                h_plus.eval(t) * (1.0 - g) + h_minus.eval(t) * g
            }
        }
    }

    /// Snapshot on `grid` at time `t`.
    pub fn field(&self, grid: Grid, t: f64) -> Field {
        Field::from_fn(grid, t, |x| self.eval(t, x))
    }

    /// The corrector `A(t, x − ct)` for wave kinds.
    pub fn corrector(&self, t: f64, x: f64) -> Option<f64> {
        match &self.eval {
            Evaluator::Wave { b_up, b_low, c, .. } => Some(a_coeff(b_up, b_low, t, x - c * t)),
            Evaluator::Flattening { .. } => None,
        }
    }
}

/// `U(t, x − ct + K) ± ε A(t, x − ct)` built on a stored wave.
///
/// The upper kind needs `c > c_wave`, the lower kind `c < c_wave`; both
/// bounding platforms must be linearly stable.
pub fn fife_mcleod(
    spec: &NonlinearitySpec,
    bound: Bound,
    wave: &WaveProfile,
    c: f64,
    k: f64,
    eps: f64,
) -> Result<ComparisonFunction> {
    let kind = match bound {
        Bound::Upper => ComparisonKind::FifeMcleodUpper,
        Bound::Lower => ComparisonKind::FifeMcleodLower,
    };
    match bound {
        Bound::Upper if !(c > wave.speed) => {
            return Err(LabError::Precondition(format!("upper corrector needs c > {} (got {c})", wave.speed)))
        }
        Bound::Lower if !(c < wave.speed) => {
            return Err(LabError::Precondition(format!("lower corrector needs c < {} (got {c})", wave.speed)))
        }
        _ => {}
    }
    if !(eps >= 0.0) || !k.is_finite() {
        return Err(LabError::Precondition(format!("need eps >= 0 and finite K (eps = {eps}, K = {k})")));
    }
    let b_up = GrowthFactor::new(spec, &wave.upper)?;
    let b_low = GrowthFactor::new(spec, &wave.lower)?;
    let params = ComparisonParams { c: Some(c), k: Some(k), eps: Some(eps), wave_speed: Some(wave.speed), ..Default::default() };
    let eval = Evaluator::Wave { wave: SmoothWave::new(spec, wave), b_up, b_low, c, k, eps };
    Ok(ComparisonFunction { kind, params, eval })
}

/// Bounds of front-like data against the basins of `p` and `0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontLikeBounds {
    /// Approximations of `liminf_{x→−∞}` and `limsup_{x→+∞}` (edge minima/maxima).
    pub left_liminf: f64,
    pub right_limsup: f64,
    pub left_limsup: f64,
    pub right_liminf: f64,
    pub sup: f64,
    pub inf: f64,
    pub basin_top: AttractionInterval,
    pub basin_zero: AttractionInterval,
}

/// Fraction of the grid at each end standing in for `x → ±∞`.
const EDGE_FRACTION: f64 = 0.02;

/// Evaluate and check the front-like bounds of `u0`: the left limit and the
/// supremum must lie in the basin of `top`, the right limit and the infimum
/// in the basin of `0`.
pub fn front_like_bounds(
    u0: &Field,
    spec: &NonlinearitySpec,
    top: &PeriodicSolution,
    cfg: &OdeConfig,
) -> Result<FrontLikeBounds> {
    let zero = PeriodicSolution::constant(0.0, spec.period(), top.n_t());
    let window = default_basin_window(top.q0().max(u0.max()));
    let basin_top = attraction_interval(spec, top, BasinSide::Plus, window, cfg)?;
    let basin_zero = attraction_interval(spec, &zero, BasinSide::Minus, window, cfg)?;
    let n = u0.values.len();
    let m = ((n as f64 * EDGE_FRACTION).ceil() as usize).clamp(1, n);
    let left = &u0.values[..m];
    let right = &u0.values[n - m..];
    let fold = |s: &[f64]| s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let ((left_liminf, left_limsup), (right_liminf, right_limsup)) = (fold(left), fold(right));
    let b = FrontLikeBounds {
        left_liminf,
        right_limsup,
        left_limsup,
        right_liminf,
        sup: u0.max(),
        inf: u0.min(),
        basin_top,
        basin_zero,
    };
    let checks = [
        ("left limit", b.left_liminf, &b.basin_top, "top platform"),
        ("supremum", b.sup, &b.basin_top, "top platform"),
        ("right limit", b.right_limsup, &b.basin_zero, "zero"),
        ("infimum", b.inf, &b.basin_zero, "zero"),
    ];
    for (name, value, basin, target) in checks {
        if !basin.contains(value) {
            return Err(LabError::Precondition(format!(
                "initial data {name} {value} lies outside the basin of {target} ({}, {})",
                basin.lo, basin.hi
            )));
        }
    }
    Ok(b)
}

fn step_inside(value: f64, edge: f64, scale: f64, up: bool) -> f64 {
    let room = if up { edge - value } else { value - edge };
    let delta = (0.01 * scale).min(0.5 * room);
    if up {
        value + delta
    } else {
        value - delta
    }
}

/// Flattening front `H₊(t)(1 − γ(z)) + H₋(t)γ(z)` dominating (`Upper`) or
/// dominated by (`Lower`) the data `u0`, exact up to `horizon`.
///
/// `z = x − C₁ − C₂t` for the upper kind and `z = x − C₁ + C₂t` for the lower
/// kind, with `C₂ = 1 + L sup|H₊ − H₋|` and `L` the sampled Lipschitz
/// constant of `∂_u f`.
pub fn flattening_super(
    u0: &Field,
    spec: &NonlinearitySpec,
    top: &PeriodicSolution,
    bound: Bound,
    horizon: f64,
    cfg: &OdeConfig,
) -> Result<ComparisonFunction> {
    let b = front_like_bounds(u0, spec, top, cfg)?;
    let scale = top.q0().abs().max(1e-3);
    let (h_plus, h_minus) = match bound {
        Bound::Upper => (
            step_inside(b.sup, b.basin_top.hi, scale, true),
            step_inside(b.right_limsup, b.basin_zero.hi, scale, true),
        ),
        Bound::Lower => (
            step_inside(b.left_liminf, b.basin_top.lo, scale, false),
            step_inside(b.inf, b.basin_zero.lo, scale, false),
        ),
    };
    let gap0 = h_plus - h_minus;
    if !(gap0 > 0.0) {
        return Err(LabError::Precondition(format!("need h+ > h- (h+ = {h_plus}, h- = {h_minus})")));
    }
    // C1: tightest logistic position keeping W(0, ·) on the right side of u0.
    let mut c1 = match bound {
        Bound::Upper => f64::NEG_INFINITY,
        Bound::Lower => f64::INFINITY,
    };
    for (i, &v) in u0.values.iter().enumerate() {
        let x = u0.grid.x(i);
        let r = (h_plus - v) / gap0;
        match bound {
            Bound::Upper if v > h_minus => c1 = c1.max(x - gamma_inverse(r)),
            Bound::Lower if v < h_plus => c1 = c1.min(x - gamma_inverse(r)),
            _ => {}
        }
    }
    if !c1.is_finite() {
        c1 = 0.0;
    }
    // Keep the binding node strictly on the safe side of round-off.
    c1 += match bound {
        Bound::Upper => 1e-9,
        Bound::Lower => -1e-9,
    };
    let hp = OdeTable::new(spec, h_plus, horizon, cfg.ode_tol)?;
    let hm = OdeTable::new(spec, h_minus, horizon, cfg.ode_tol)?;
    let u_lo = (-0.1f64).min(h_minus).min(b.inf);
    let u_hi = (1.1 * top.q0()).max(h_plus);
    let lipschitz = LIPSCHITZ_SAFETY * lipschitz_du(spec, u_lo, u_hi, 200);
    let top_sup = top.q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sup_gap = hp.max_gap(&hm).max(top_sup);
    let c2 = 1.0 + lipschitz * sup_gap;
    let (kind, direction) = match bound {
        Bound::Upper => (ComparisonKind::FlatteningUpper, 1.0),
        Bound::Lower => (ComparisonKind::FlatteningLower, -1.0),
    };
    let params = ComparisonParams {
        c1: Some(c1),
        c2: Some(c2),
        lipschitz: Some(lipschitz),
        h_plus: Some(h_plus),
        h_minus: Some(h_minus),
        horizon: Some(hp.horizon().min(hm.horizon())),
        ..Default::default()
    };
    let eval = Evaluator::Flattening { h_plus: hp, h_minus: hm, c1, c2, direction };
    Ok(ComparisonFunction { kind, params, eval })
}

// ---------------------------------------------------------------------------
// Certification

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    /// Time step of the run the scan refers to.
    pub dt: f64,
    pub refine: usize,
    pub cert_tol: f64,
}

impl CheckOptions {
    pub fn new(dt: f64, cert_tol: f64) -> Self {
        Self { dt, refine: REFINE, cert_tol }
    }
}

/// Worst operator residual over a scan; for lower kinds `min_residual`
/// holds the maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub kind: ComparisonKind,
    pub params: ComparisonParams,
    pub min_residual: f64,
    pub argmin: (f64, f64),
    pub cert_tol: f64,
    pub certified: bool,
}

/// `ℒW = W_t − W_xx − f(t, W)` with a fourth-order stencil in `x` and a
/// second-order stencil in `t`.
pub fn operator_residual(cf: &ComparisonFunction, spec: &NonlinearitySpec, t: f64, x: f64, hx: f64, ht: f64) -> f64 {
    let w = cf.eval(t, x);
    let w_t = if t - ht >= 0.0 {
        (cf.eval(t + ht, x) - cf.eval(t - ht, x)) / (2.0 * ht)
    } else {
        (-3.0 * w + 4.0 * cf.eval(t + ht, x) - cf.eval(t + 2.0 * ht, x)) / (2.0 * ht)
    };
    let w_xx = (-cf.eval(t, x + 2.0 * hx) + 16.0 * cf.eval(t, x + hx) - 30.0 * w + 16.0 * cf.eval(t, x - hx)
        - cf.eval(t, x - 2.0 * hx))
        / (12.0 * hx * hx);
    w_t - w_xx - spec.rate(t, w)
}

/// Scan `ℒW` over `grid × times`; upper kinds are certified when the minimum
/// is `≥ −cert_tol`, lower kinds when the maximum is `≤ cert_tol`.
pub fn check_comparison(
    cf: &ComparisonFunction,
    spec: &NonlinearitySpec,
    grid: &Grid,
    times: &[f64],
    opts: &CheckOptions,
) -> CertificationReport {
    let refine = opts.refine.max(1) as f64;
    let (hx, ht) = (grid.dx() / refine, opts.dt / refine);
    let sign = if cf.kind.is_upper() { 1.0 } else { -1.0 };
    // Work on `sign · ℒW` so that both kinds minimise.
    let scan = |ts: &[f64]| {
        let mut best = (f64::INFINITY, (f64::NAN, f64::NAN));
        for &t in ts {
            for i in 0..grid.n_x {
                let x = grid.x(i);
                let r = sign * operator_residual(cf, spec, t, x, hx, ht);
                if r < best.0 || r.is_nan() {
                    best = (r, (t, x));
                }
            }
        }
        best
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(times.len().max(1));
    let chunk = times.len().div_ceil(workers).max(1);
    let parts: Vec<(f64, (f64, f64))> = std::thread::scope(|s| {
        let handles: Vec<_> = times.chunks(chunk).map(|ts| s.spawn(move || scan(ts))).collect();
        handles.into_iter().map(|h| h.join().expect("scan thread panicked")).collect()
    });
    // Deterministic reduction in time order.
    let mut best = (f64::INFINITY, (f64::NAN, f64::NAN));
    for p in parts {
        if p.0 < best.0 || p.0.is_nan() {
            best = p;
        }
    }
    let certified = best.0 >= -opts.cert_tol;
    CertificationReport {
        kind: cf.kind,
        params: cf.params.clone(),
        min_residual: sign * best.0,
        argmin: best.1,
        cert_tol: opts.cert_tol,
        certified,
    }
}

/// Outcome of the amplitude bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsSearch {
    /// Largest certified amplitude found, `None` if even the lower end fails.
    pub eps_hat: Option<f64>,
    pub range: (f64, f64),
    pub iterations: usize,
    /// Certification at `eps_hat` (or at the lower end when none is found).
    pub report: CertificationReport,
}

/// Smallest gap between the bounding platforms of a wave.
pub fn platform_gap(wave: &WaveProfile) -> f64 {
    (0..=200)
        .map(|j| {
            let t = wave.period * j as f64 / 200.0;
            wave.upper.value_at(t) - wave.lower.value_at(t)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Bisection (in `log ε`) for the largest certified corrector amplitude on
/// `[EPS_SEARCH_LO, gap/2]`.
#[allow(clippy::too_many_arguments)]
pub fn search_eps0(
    spec: &NonlinearitySpec,
    bound: Bound,
    wave: &WaveProfile,
    c: f64,
    k: f64,
    grid: &Grid,
    times: &[f64],
    opts: &CheckOptions,
) -> Result<EpsSearch> {
    let check = |eps: f64| -> Result<CertificationReport> {
        let cf = fife_mcleod(spec, bound, wave, c, k, eps)?;
        Ok(check_comparison(&cf, spec, grid, times, opts))
    };
    let (mut lo, mut hi) = (EPS_SEARCH_LO, 0.5 * platform_gap(wave));
    let range = (lo, hi);
    let top = check(hi)?;
    if top.certified {
        return Ok(EpsSearch { eps_hat: Some(hi), range, iterations: 0, report: top });
    }
    let mut best = check(lo)?;
    if !best.certified {
        return Ok(EpsSearch { eps_hat: None, range, iterations: 0, report: best });
    }
    for _ in 0..EPS_SEARCH_ITER {
        let mid = (lo * hi).sqrt();
        let r = check(mid)?;
        if r.certified {
            lo = mid;
            best = r;
        } else {
            hi = mid;
        }
    }
    Ok(EpsSearch { eps_hat: Some(lo), range, iterations: EPS_SEARCH_ITER, report: best })
}

// ---------------------------------------------------------------------------
// Empirical trapping constants

/// Violations at or below this level count as zero.
pub const VIOLATION_FLOOR: f64 = 1e-12;

/// Empirical `(K₀, β₀)` with `û₋ − K₀e^{−β₀t} ≤ u ≤ û₊ + K₀e^{−β₀t}` at
/// every paired snapshot from `valid_from` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichFit {
    #[serde(rename = "K0_hat")]
    pub k0_hat: f64,
    /// Decay rate; infinite when no violation occurs.
    pub beta0_hat: f64,
    pub valid_from: f64,
    pub fit_ok: bool,
    pub r2: f64,
    /// Why the fit failed, if it did.
    pub note: Option<String>,
    /// `(t, max violation)` per paired snapshot.
    pub violations: Vec<(f64, f64)>,
}

/// Fit the decay of the two-sided sandwich violations.
///
/// The `u` snapshot at time `t` is paired with the bounding snapshots at
/// `t + hat_offset`. Fails (flag, not error) when `0` is not linearly stable
/// or the violations do not decay.
pub fn sandwich_fit(
    traj_u: &Trajectory,
    traj_hat_plus: &Trajectory,
    traj_hat_minus: &Trajectory,
    hat_offset: f64,
) -> Result<SandwichFit> {
    let spec = &traj_u.spec;
    for (name, other) in [("upper", traj_hat_plus), ("lower", traj_hat_minus)] {
        if other.spec != *spec {
            return Err(LabError::Precondition(format!("{name} bounding run uses a different reaction term")));
        }
        if other.grid() != traj_u.grid() {
            return Err(LabError::GridMismatch(format!("{name} bounding run is on a different grid")));
        }
    }
    fn find(traj: &Trajectory, t: f64) -> Option<&Field> {
        let slack = 1e-9 * traj.dt.max(t.abs());
        traj.snapshots.iter().find(|f| (f.t - t).abs() <= slack)
    }
    let mut violations = Vec::new();
    for f in &traj_u.snapshots {
        let t_hat = f.t + hat_offset;
        let (Some(up), Some(down)) = (find(traj_hat_plus, t_hat), find(traj_hat_minus, t_hat)) else {
            continue;
        };
        let v = f
            .values
            .iter()
            .zip(&up.values)
            .zip(&down.values)
            .map(|((&u, &a), &b)| (u - a).max(b - u).max(0.0))
            .fold(0.0, f64::max);
        violations.push((f.t, v));
    }
    if violations.len() < 3 {
        return Err(LabError::Insufficient(format!("{} paired snapshots; need 3", violations.len())));
    }
    let valid_from = violations[0].0;
    let mut fit = SandwichFit {
        k0_hat: 0.0,
        beta0_hat: f64::INFINITY,
        valid_from,
        fit_ok: true,
        r2: 1.0,
        note: None,
        violations: violations.clone(),
    };
    let zero = PeriodicSolution::constant(0.0, spec.period(), 64);
    let mu0 = floquet_exponent(spec, &zero);
    if !(mu0 > 0.0) {
        fit.fit_ok = false;
        fit.beta0_hat = f64::NAN;
        fit.k0_hat = f64::NAN;
        fit.r2 = f64::NAN;
        fit.note = Some(format!("hypotheses unmet: 0 is not linearly stable (mu = {mu0})"));
        return Ok(fit);
    }
    let positive: Vec<(f64, f64)> = violations.iter().copied().filter(|&(_, v)| v > VIOLATION_FLOOR).collect();
    if positive.is_empty() {
        return Ok(fit);
    }
    let v_max = positive.iter().map(|p| p.1).fold(0.0, f64::max);
    let v_last = violations.last().map_or(0.0, |p| p.1);
    let decayed = v_last <= VIOLATION_FLOOR || v_last <= 0.1 * v_max;
    // Rate from the log-linear fit, cut at the noise floor when one exists.
    let (beta, r2, window_end) = match exponential_rate(&positive, 0.0) {
        Ok(rf) => (rf.nu, rf.r2, rf.window.1),
        Err(_) if positive.len() >= 2 => {
            let t: Vec<f64> = positive.iter().map(|p| p.0).collect();
            let y: Vec<f64> = positive.iter().map(|p| p.1.ln()).collect();
            match linear_fit(&t, &y) {
                Some(lf) => (-lf.slope, lf.r2, t[t.len() - 1]),
                None => (f64::NAN, f64::NAN, valid_from),
            }
        }
        Err(_) => {
            // A single positive violation followed by zeros: decay to the floor.
            let (t0, v0) = positive[0];
            let t_zero = violations.iter().find(|p| p.0 > t0 && p.1 <= VIOLATION_FLOOR).map_or(f64::NAN, |p| p.0);
            ((v0 / VIOLATION_FLOOR).ln() / (t_zero - t0), 1.0, t0)
        }
    };
    fit.r2 = r2;
    if !(beta > 0.0) || !decayed {
        fit.fit_ok = false;
        fit.beta0_hat = beta;
        fit.k0_hat = v_max;
        fit.note = Some(format!("violations do not decay (last {v_last:.3e}, max {v_max:.3e}, rate {beta:.3e})"));
        return Ok(fit);
    }
    fit.beta0_hat = beta;
    fit.k0_hat = violations
        .iter()
        .filter(|p| p.0 <= window_end)
        .map(|&(t, v)| v * (beta * (t - valid_from)).exp())
        .fold(0.0, f64::max);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::{LimitProfile, Verdict};
    use crate::nonlinearity::Family;

    fn kpp_top() -> (NonlinearitySpec, PeriodicSolution) {
        (NonlinearitySpec::kpp(1.0), PeriodicSolution::constant(1.0, 1.0, 64))
    }

    #[test]
    fn growth_factor_closed_form() {
        let (spec, top) = kpp_top();
        let b = GrowthFactor::new(&spec, &top).unwrap();
        assert!((b.value(0.0) - 1.0).abs() < 1e-14);
        assert!((b.value(2.0) - (-1.0f64).exp()).abs() < 1e-12, "{}", b.value(2.0));
        assert!((b.value(2.37) - (-0.5 * 2.37f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn growth_factor_needs_stability() {
        let spec = NonlinearitySpec::kpp(1.0);
        let zero = PeriodicSolution::constant(0.0, 1.0, 64);
        assert!(matches!(GrowthFactor::new(&spec, &zero), Err(LabError::Precondition(_))));
    }

    #[test]
    fn growth_factor_periodic_platform() {
        // f = (1 + ρ sin 2πt) u (1 − u)(u − a): the platform 1 has
        // ∂_u f = −(1 − a)(1 + ρ sin 2πt), so the integral is closed form.
        let (rho, a) = (0.5, 0.3);
        let base = Family::BistableCubic { a };
        let spec = NonlinearitySpec::new(Family::TimePeriodicProduct { rho, base: Box::new(base) }, 1.0).unwrap();
        let top = PeriodicSolution::constant(1.0, 1.0, 400);
        let b = GrowthFactor::new(&spec, &top).unwrap();
        let mu = 1.0 - a;
        assert!((b.mu - mu).abs() < 1e-10);
        let tau = std::f64::consts::TAU;
        let exact = |t: f64| (0.5 * mu * t - mu * (t + rho * (1.0 - (tau * t).cos()) / tau)).exp();
        for j in 0..=500 {
            let t = j as f64 * 0.01;
            let v = b.value(t);
            assert!((v - exact(t)).abs() < 1e-10, "t = {t}: {v} vs {}", exact(t));
            assert!(v >= 0.0 && v <= b.bound(t) + 1e-10);
        }
    }

    #[test]
    fn zeta_shape_and_bounds() {
        assert_eq!(zeta(-1.0), 1.0);
        assert_eq!(zeta(5.0), 0.0);
        assert!((zeta(1.5) - 0.5).abs() < 1e-15);
        let h = 1e-3;
        let (mut d1, mut d2): (f64, f64) = (0.0, 0.0);
        for j in -1000..4000 {
            let x = j as f64 * 1e-3;
            let d = (zeta(x + h) - zeta(x - h)) / (2.0 * h);
            assert!(d <= 1e-12);
            d1 = d1.max(d.abs());
            d2 = d2.max(((zeta(x + h) - 2.0 * zeta(x) + zeta(x - h)) / (h * h)).abs());
        }
        assert!(d1 <= 1.0 + 1e-12 && d2 <= 1.0 + 1e-6, "{d1} {d2}");
        assert!((d1 - 0.625).abs() < 1e-5);
    }

    #[test]
    fn a_coeff_endpoints() {
        let (spec, top) = kpp_top();
        let b_up = GrowthFactor::new(&spec, &top).unwrap();
        let bis = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        let b_low = GrowthFactor::new(&bis, &PeriodicSolution::constant(0.0, 1.0, 64)).unwrap();
        let t = 1.3;
        assert_eq!(a_coeff(&b_up, &b_low, t, -2.0), b_up.value(t));
        assert_eq!(a_coeff(&b_up, &b_low, t, 4.0), b_low.value(t));
    }

    fn lipschitz_of_cubic(a: f64) -> f64 {
        // ∂_u f = −3u² + 2(1 + a)u − a; |∂_uu f| = |−6u + 2(1 + a)| is largest at an end.
        let d = |u: f64| (-6.0 * u + 2.0 * (1.0 + a)).abs();
        d(-0.1).max(d(1.1))
    }

    #[test]
    fn lipschitz_sampling_matches_cubic() {
        let spec = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        let l = lipschitz_du(&spec, -0.1, 1.1, 200);
        let exact = lipschitz_of_cubic(0.25);
        assert!((l - exact).abs() < 0.05, "{l} vs {exact}");
        assert!(l <= exact + 1e-12);
    }

    /// Exact bistable wave `1/(1 + e^{ξ/√2})` sampled on a fine grid.
    pub(crate) fn exact_wave(a: f64, dxi: f64) -> WaveProfile {
        let half = (40.0 / dxi).round() as usize;
        let xi_min = -(half as f64) * dxi;
        let row: Vec<f64> =
            (0..=2 * half).map(|m| 1.0 / (1.0 + ((xi_min + m as f64 * dxi) / 2f64.sqrt()).exp())).collect();
        let n = row.len();
        let lp = LimitProfile {
            alpha: 0.5,
            xi_min,
            dxi,
            tau: vec![0.0],
            profiles: vec![row],
            speed: (1.0 - 2.0 * a) / 2f64.sqrt(),
            base_period: 0,
            base_shift: 0.0,
            region: (0, n - 1),
            tails: (1.0, 0.0),
            convergence_defect: 0.0,
            central_variation: 1.0,
            verdict: Verdict::Wave,
            shifts: vec![],
        };
        WaveProfile::new(
            lp.speed,
            0.0,
            PeriodicSolution::constant(1.0, 1.0, 64),
            PeriodicSolution::constant(0.0, 1.0, 64),
            &lp,
        )
    }

    #[test]
    fn exact_wave_has_tiny_residual() {
        let spec = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        let wave = exact_wave(0.25, 0.002);
        let cf = fife_mcleod(&spec, Bound::Upper, &wave, wave.speed + 1e-12, 0.0, 0.0).unwrap();
        let grid = Grid::with_spacing(-30.0, 30.0, 0.05).unwrap();
        let tol = default_cert_tol(&spec, 0.0, 1.0);
        let times: Vec<f64> = (0..5).map(|j| 0.5 * j as f64).collect();
        let rep = check_comparison(&cf, &spec, &grid, &times, &CheckOptions::new(0.005, tol));
        assert!(rep.min_residual.abs() <= tol, "{rep:?}");
    }

    #[test]
    fn speed_guard() {
        let spec = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        let wave = exact_wave(0.25, 0.05);
        assert!(matches!(
            fife_mcleod(&spec, Bound::Upper, &wave, wave.speed - 0.1, 0.0, 0.1),
            Err(LabError::Precondition(_))
        ));
        assert!(matches!(
            fife_mcleod(&spec, Bound::Lower, &wave, wave.speed + 0.1, 0.0, 0.1),
            Err(LabError::Precondition(_))
        ));
    }

    #[test]
    fn offset_translates_wave_part() {
        let spec = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        let wave = exact_wave(0.25, 0.05);
        let c = wave.speed + 0.1;
        let (eps, k) = (0.01, 3.7);
        let a = fife_mcleod(&spec, Bound::Upper, &wave, c, 0.0, eps).unwrap();
        let b = fife_mcleod(&spec, Bound::Upper, &wave, c, k, eps).unwrap();
        for j in 0..50 {
            let (t, x) = (0.13 * j as f64, -20.0 + 0.9 * j as f64);
            let lhs = b.eval(t, x) - eps * b.corrector(t, x).unwrap();
            let rhs = a.eval(t, x + k) - eps * a.corrector(t, x + k).unwrap();
            assert!((lhs - rhs).abs() < 1e-14, "{lhs} {rhs}");
        }
    }

    #[test]
    fn corrector_certified_for_faster_frame() {
        let spec = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        let wave = exact_wave(0.25, 0.01);
        let grid = Grid::with_spacing(-30.0, 30.0, 0.1).unwrap();
        let times: Vec<f64> = (0..=8).map(|j| 0.5 * j as f64).collect();
        let opts = CheckOptions::new(0.01, default_cert_tol(&spec, 0.0, 1.0));
        let s = search_eps0(&spec, Bound::Upper, &wave, wave.speed + 0.1, 0.0, &grid, &times, &opts).unwrap();
        let eps = s.eps_hat.expect("some amplitude certifies");
        assert!(eps >= 1e-4, "{s:?}");
        assert!(s.report.certified);
        // Far above the threshold the quadratic term wins.
        let cf = fife_mcleod(&spec, Bound::Upper, &wave, wave.speed + 0.1, 0.0, 0.45).unwrap();
        assert!(!check_comparison(&cf, &spec, &grid, &times, &opts).certified);
    }

    #[test]
    fn flattening_dominates_data() {
        let spec = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        let top = PeriodicSolution::constant(1.0, 1.0, 64);
        let grid = Grid::with_spacing(-20.0, 20.0, 0.1).unwrap();
        let u0 = Field::from_fn(grid, 0.0, |x| if x < 0.0 { 1.0 } else { 0.0 });
        let cfg = OdeConfig::default();
        let up = flattening_super(&u0, &spec, &top, Bound::Upper, 5.0, &cfg).unwrap();
        let w0 = up.field(grid, 0.0);
        assert!(w0.values.iter().zip(&u0.values).all(|(w, u)| w >= u));
        let low = flattening_super(&u0, &spec, &top, Bound::Lower, 5.0, &cfg).unwrap();
        let w0 = low.field(grid, 0.0);
        assert!(w0.values.iter().zip(&u0.values).all(|(w, u)| w <= u));
        let times: Vec<f64> = (0..=10).map(|j| 0.5 * j as f64).collect();
        let opts = CheckOptions::new(0.01, default_cert_tol(&spec, 0.0, 1.0));
        let wide = Grid::with_spacing(-40.0, 80.0, 0.1).unwrap();
        assert!(check_comparison(&up, &spec, &wide, &times, &opts).certified);
        let wide = Grid::with_spacing(-80.0, 40.0, 0.1).unwrap();
        assert!(check_comparison(&low, &spec, &wide, &times, &opts).certified);
    }

    #[test]
    fn flattening_rejects_data_outside_basin() {
        let spec = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        let top = PeriodicSolution::constant(1.0, 1.0, 64);
        let grid = Grid::with_spacing(-20.0, 20.0, 0.1).unwrap();
        // The right end sits above the threshold a: not in the basin of 0.
        let u0 = Field::from_fn(grid, 0.0, |x| if x < 0.0 { 1.0 } else { 0.4 });
        let err = flattening_super(&u0, &spec, &top, Bound::Upper, 5.0, &OdeConfig::default()).unwrap_err();
        assert!(err.to_string().contains("right limit"), "{err}");
    }
}
