//! Periodic solutions of the homogeneous ODE `h' = f(t, h)`: discovery via the
//! Poincaré map, Floquet/stability classification, and basins of attraction.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::nonlinearity::NonlinearitySpec;
use crate::ode::{poincare_map, Integrator};
use crate::stats::simpson;

/// Tolerances for periodic-orbit work. Defaults follow the module design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeConfig {
    pub ode_tol: f64,
    pub fp_tol: f64,
    pub merge_tol: f64,
    pub delta_probe: f64,
    pub n_probe: usize,
    pub degenerate_tol: f64,
    /// Uniform time samples per period stored in each solution.
    pub n_t: usize,
    pub basin_tol: f64,
    pub n_basin: usize,
    /// Width at which basin-endpoint bisection stops.
    pub basin_resolution: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            ode_tol: 1e-10,
            fp_tol: 1e-9,
            merge_tol: 1e-6,
            delta_probe: 1e-3,
            n_probe: 50,
            degenerate_tol: 1e-4,
            n_t: 400,
            basin_tol: 1e-6,
            n_basin: 100,
            basin_resolution: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    Point,
    /// A band `[lo, hi]` (values at `t = 0`) on which the Poincaré map is the identity.
    IntervalOfEquilibria { lo: f64, hi: f64 },
}

/// A `T`-periodic solution sampled on `n_t + 1` uniform times covering `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSolution {
    #[serde(rename = "period_T")]
    pub period: f64,
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub kind: SolutionKind,
}

impl PeriodicSolution {
    /// Integrate one period from `h0` and sample it.
    pub fn sample(spec: &NonlinearitySpec, h0: f64, n_t: usize, tol: f64, kind: SolutionKind) -> Result<Self> {
        let period = spec.period();
        let t: Vec<f64> = (0..=n_t).map(|j| period * j as f64 / n_t as f64).collect();
        let mut q = vec![h0];
        q.extend(Integrator::new(spec, tol).solve_at(0.0, h0, &t[1..])?);
        Ok(Self { period, t, q, kind })
    }

    /// Constant solution (an equilibrium of an autonomous or product spec).
    pub fn constant(value: f64, period: f64, n_t: usize) -> Self {
        let t = (0..=n_t).map(|j| period * j as f64 / n_t as f64).collect();
        Self { period, t, q: vec![value; n_t + 1], kind: SolutionKind::Point }
    }

    pub fn q0(&self) -> f64 {
        self.q[0]
    }

    /// Upper edge at `t = 0` (the band top for interval kinds).
    pub fn top0(&self) -> f64 {
        match self.kind {
            SolutionKind::Point => self.q0(),
            SolutionKind::IntervalOfEquilibria { hi, .. } => hi,
        }
    }

    /// Lower edge at `t = 0`.
    pub fn bottom0(&self) -> f64 {
        match self.kind {
            SolutionKind::Point => self.q0(),
            SolutionKind::IntervalOfEquilibria { lo, .. } => lo,
        }
    }

    pub fn n_t(&self) -> usize {
        self.q.len() - 1
    }

    /// `|q(0) - q(T)|` as stored.
    pub fn closure_defect(&self) -> f64 {
        (self.q[0] - self.q[self.n_t()]).abs()
    }

    /// Periodic Catmull–Rom interpolation at any time.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.n_t();
        let h = self.period / n as f64;
        let s = t.rem_euclid(self.period) / h;
        let k = (s.floor() as usize).min(n - 1);
        let u = s - k as f64;
        let at = |j: isize| self.q[j.rem_euclid(n as isize) as usize];
        let k = k as isize;
        let (p0, p1, p2, p3) = (at(k - 1), at(k), at(k + 1), at(k + 2));
        0.5 * (2.0 * p1
            + (-p0 + p2) * u
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u * u
            + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u * u * u)
    }

    /// `max_j |q'(t_j) - f(t_j, q_j)|` with `q'` from periodic central differences.
    pub fn ode_residual(&self, spec: &NonlinearitySpec) -> f64 {
        let n = self.n_t();
        let h = self.period / n as f64;
        (0..n)
            .map(|j| {
                let qp = self.q[(j + 1) % n];
                let qm = self.q[(j + n - 1) % n];
                ((qp - qm) / (2.0 * h) - spec.rate(self.t[j], self.q[j])).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,q")?;
        for (t, q) in self.t.iter().zip(&self.q) {
            writeln!(w, "{t:.17e},{q:.17e}")?;
        }
        Ok(())
    }
}

/// Three-valued outcome for empirical stability and isolation tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriState {
    Yes,
    No,
    Undetermined,
}

impl TriState {
    pub fn is_yes(self) -> bool {
        self == TriState::Yes
    }
}

impl From<bool> for TriState {
    fn from(b: bool) -> Self {
        if b {
            TriState::Yes
        } else {
            TriState::No
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    /// `-(1/T) ∫₀ᵀ ∂_u f(t, q(t)) dt`.
    pub mu: f64,
    /// `exp(-μT)`.
    pub floquet: f64,
    pub stable_above: TriState,
    pub stable_below: TriState,
    pub isolated_above: TriState,
    pub isolated_below: TriState,
}

impl StabilityRecord {
    pub fn linearly_stable(&self) -> bool {
        self.mu > 0.0
    }
}

fn defect(spec: &NonlinearitySpec, h: f64, tol: f64) -> f64 {
    match poincare_map(spec, h, tol) {
        Ok(v) => v - h,
        Err(LabError::Divergence { value, .. }) => value.signum() * f64::INFINITY,
        Err(_) => f64::NAN,
    }
}

/// All periodic solutions with `q(0) ∈ [lo, hi]`, sorted increasingly.
pub fn find_periodic_solutions(
    spec: &NonlinearitySpec,
    lo: f64,
    hi: f64,
    n_seed: usize,
    cfg: &OdeConfig,
) -> Result<Vec<PeriodicSolution>> {
    if !(lo < hi) {
        return Ok(Vec::new());
    }
    if n_seed < 8 {
        return Err(LabError::Precondition(format!("n_seed must be at least 8, got {n_seed}")));
    }
    let tol = cfg.ode_tol;
    let seeds: Vec<f64> = (0..n_seed).map(|j| lo + (hi - lo) * j as f64 / (n_seed - 1) as f64).collect();
    let g: Vec<f64> = seeds.iter().map(|&h| defect(spec, h, tol)).collect();
    let flat = |v: f64| v.abs() < cfg.fp_tol;

    let mut points: Vec<f64> = Vec::new();
    let mut bands: Vec<(f64, f64)> = Vec::new();

    // Bisection on the flatness predicate between a non-flat and a flat seed.
    let plateau_edge = |outside: f64, inside: f64| {
        let (mut a, mut b) = (outside, inside);
        while (b - a).abs() > cfg.fp_tol {
            let m = 0.5 * (a + b);
            if flat(defect(spec, m, tol)) {
                b = m;
            } else {
                a = m;
            }
        }
        b
    };

    let mut i = 0;
    while i < n_seed {
        if flat(g[i]) {
            let mut j = i;
            while j + 1 < n_seed && flat(g[j + 1]) {
                j += 1;
            }
            if j - i + 1 >= 3 {
                let band_lo = if i == 0 { seeds[0] } else { plateau_edge(seeds[i - 1], seeds[i]) };
                let band_hi = if j == n_seed - 1 { seeds[j] } else { plateau_edge(seeds[j + 1], seeds[j]) };
                bands.push((band_lo, band_hi));
            } else {
                points.extend(&seeds[i..=j]);
            }
            i = j + 1;
            continue;
        }
        if i + 1 < n_seed && !flat(g[i + 1]) && g[i] * g[i + 1] < 0.0 {
            let (mut a, mut b) = (seeds[i], seeds[i + 1]);
            let ga = g[i];
            while b - a > cfg.fp_tol {
                let m = 0.5 * (a + b);
                let gm = defect(spec, m, tol);
                if gm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if (gm > 0.0) == (ga > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            points.push(0.5 * (a + b));
        }
        i += 1;
    }

    points.sort_by(|a, b| a.total_cmp(b));
    let mut merged: Vec<f64> = Vec::new();
    for p in points {
        if bands.iter().any(|(l, h)| p >= l - cfg.merge_tol && p <= h + cfg.merge_tol) {
            continue;
        }
        match merged.last() {
            Some(&last) if p - last < cfg.merge_tol => {}
            _ => merged.push(p),
        }
    }

    let mut out = Vec::with_capacity(merged.len() + bands.len());
    for p in merged {
        out.push(PeriodicSolution::sample(spec, p, cfg.n_t, tol, SolutionKind::Point)?);
    }
    for (l, h) in bands {
        out.push(PeriodicSolution::sample(spec, l, cfg.n_t, tol, SolutionKind::IntervalOfEquilibria { lo: l, hi: h })?);
    }
    out.sort_by(|a, b| a.q0().total_cmp(&b.q0()));
    Ok(out)
}

/// `μ = -(1/T) ∫₀ᵀ ∂_u f(t, q(t)) dt` by composite Simpson on the stored samples.
pub fn floquet_exponent(spec: &NonlinearitySpec, q: &PeriodicSolution) -> f64 {
    let h = q.period / q.n_t() as f64;
    let du: Vec<f64> = q.t.iter().zip(&q.q).map(|(&t, &v)| spec.rate_du(t, v)).collect();
    -simpson(&du, h) / q.period
}

/// Central-difference derivative of the Poincaré map at `h0`.
pub fn poincare_derivative(spec: &NonlinearitySpec, h0: f64, step: f64, tol: f64) -> Result<f64> {
    let up = poincare_map(spec, h0 + step, tol)?;
    let down = poincare_map(spec, h0 - step, tol)?;
    Ok((up - down) / (2.0 * step))
}

fn iterate_map(spec: &NonlinearitySpec, h0: f64, periods: usize, tol: f64) -> Option<f64> {
    let integ = Integrator::new(spec, tol);
    integ.solve(0.0, h0, periods as f64 * spec.period()).ok()
}

fn probe_side(spec: &NonlinearitySpec, start: f64, anchor: f64, mu: f64, cfg: &OdeConfig) -> TriState {
    let d0 = (start - anchor).abs();
    let Some(end) = iterate_map(spec, start, cfg.n_probe, cfg.ode_tol) else {
        return TriState::No;
    };
    let d = (end - anchor).abs();
    if d <= 0.5 * d0 {
        TriState::Yes
    } else if d >= 1.5 * d0 {
        TriState::No
    } else if mu > cfg.degenerate_tol {
        TriState::Yes
    } else if mu < -cfg.degenerate_tol {
        TriState::No
    } else {
        TriState::Undetermined
    }
}

/// Floquet exponent plus empirical one-sided stability and isolation.
///
/// `ladder` is the sorted output of [`find_periodic_solutions`] that `q`
/// belongs to; pass an empty slice when neighbours are unknown.
pub fn classify_stability(
    spec: &NonlinearitySpec,
    q: &PeriodicSolution,
    ladder: &[PeriodicSolution],
    cfg: &OdeConfig,
) -> StabilityRecord {
    let mu = floquet_exponent(spec, q);
    let floquet = (-mu * q.period).exp();
    let (top, bottom) = (q.top0(), q.bottom0());
    let stable_above = probe_side(spec, top + cfg.delta_probe, top, mu, cfg);
    let stable_below = probe_side(spec, bottom - cfg.delta_probe, bottom, mu, cfg);

    let (isolated_above, isolated_below) = match q.kind {
        SolutionKind::IntervalOfEquilibria { lo, hi } if hi - lo > cfg.merge_tol => (TriState::No, TriState::No),
        _ => {
            let above = ladder.iter().filter(|o| o.bottom0() > top + cfg.merge_tol * 0.5).map(|o| o.bottom0()).reduce(f64::min);
            let below = ladder.iter().filter(|o| o.top0() < bottom - cfg.merge_tol * 0.5).map(|o| o.top0()).reduce(f64::max);
            let touching = |edge: f64| {
                ladder.iter().any(|o| {
                    matches!(o.kind, SolutionKind::IntervalOfEquilibria { .. })
                        && o.bottom0() - cfg.merge_tol <= edge
                        && edge <= o.top0() + cfg.merge_tol
                        && (o.top0() - o.bottom0()) > cfg.merge_tol
                })
            };
            let side = |neighbour: Option<f64>, edge: f64| {
                if ladder.is_empty() {
                    TriState::Undetermined
                } else if touching(edge) {
                    TriState::No
                } else {
                    match neighbour {
                        Some(v) => TriState::from((v - edge).abs() > cfg.merge_tol),
                        None => TriState::Yes,
                    }
                }
            };
            (side(above, top), side(below, bottom))
        }
    };
    StabilityRecord { mu, floquet, stable_above, stable_below, isolated_above, isolated_below }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasinSide {
    /// Basin of the upper state `p`.
    Plus,
    /// Basin of `0`.
    Minus,
}

/// Open interval of initial values attracted to a stable periodic solution.
///
/// An endpoint is infinite when the corresponding edge of the search window
/// is itself attracted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractionInterval {
    pub side: BasinSide,
    pub lo: f64,
    pub hi: f64,
    pub window: (f64, f64),
}

impl AttractionInterval {
    pub fn contains(&self, h: f64) -> bool {
        self.lo < h && h < self.hi
    }
}

/// Default search window `[-1, 2 p(0)]`.
pub fn default_basin_window(p0: f64) -> (f64, f64) {
    (-1.0, 2.0 * p0)
}

pub fn attraction_interval(
    spec: &NonlinearitySpec,
    q: &PeriodicSolution,
    side: BasinSide,
    window: (f64, f64),
    cfg: &OdeConfig,
) -> Result<AttractionInterval> {
    let mu = floquet_exponent(spec, q);
    if !(mu > 0.0) {
        return Err(LabError::Precondition(format!("attraction interval needs a linearly stable solution, mu = {mu}")));
    }
    let anchor = q.q0();
    let converges = |h: f64| match iterate_map(spec, h, cfg.n_basin, cfg.ode_tol) {
        Some(end) => (end - anchor).abs() < cfg.basin_tol,
        None => false,
    };
    let edge = |inside: f64, outside: f64| {
        let (mut a, mut b) = (inside, outside);
        while (b - a).abs() > cfg.basin_resolution {
            let m = 0.5 * (a + b);
            if converges(m) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let hi = if converges(window.1) { f64::INFINITY } else { edge(anchor, window.1) };
    let lo = if converges(window.0) { f64::NEG_INFINITY } else { edge(anchor, window.0) };
    Ok(AttractionInterval { side, lo, hi, window })
}
