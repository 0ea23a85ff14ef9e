//! Front measurements on fields and trajectories: level crossings, speeds,
//! zero numbers, steepness, limit profiles and spreading brackets.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::interp::UniformPchip;
use crate::pde::{Field, Trajectory};
use crate::stats::linear_fit;

pub const LEVEL_TOL: f64 = 1e-8;
pub const PROFILE_TOL: f64 = 1e-4;
/// Relative to `p(0)`.
pub const FLAT_TOL_REL: f64 = 1e-3;
pub const WINDOW: f64 = 40.0;
/// Half-width of the central region inspected for platform detection.
const CENTRAL_HALF_WIDTH: f64 = 5.0;
const STEEPNESS_LEVELS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Rightmost,
    Leftmost,
    Unique,
}

/// Cells `k` with `u_k` and `u_{k+1}` on different sides of `alpha`.
fn crossing_cells(values: &[f64], alpha: f64) -> impl Iterator<Item = usize> + '_ {
    values.windows(2).enumerate().filter(move |(_, w)| (w[0] >= alpha) != (w[1] >= alpha)).map(|(k, _)| k)
}

fn check_range(field: &Field, alpha: f64) -> Result<()> {
    let (min, max) = (field.min(), field.max());
    if !(alpha > min && alpha < max) {
        return Err(LabError::LevelRange { alpha, min, max });
    }
    Ok(())
}

fn interpolate_cell(field: &Field, k: usize, alpha: f64) -> f64 {
    let (a, b) = (field.values[k], field.values[k + 1]);
    field.grid.x(k) + field.grid.dx() * (a - alpha) / (a - b)
}

/// Position where `field` crosses `alpha`, by linear interpolation.
pub fn level_crossing(field: &Field, alpha: f64, which: Which) -> Result<f64> {
    check_range(field, alpha)?;
    let v = &field.values;
    let k = match which {
        Which::Rightmost => crossing_cells(v, alpha).last(),
        Which::Leftmost => crossing_cells(v, alpha).next(),
        Which::Unique => {
            let mut it = crossing_cells(v, alpha);
            let first = it.next();
            let extra = it.count();
            if extra > 0 {
                return Err(LabError::Ambiguous { alpha, count: extra + 1 });
            }
            first
        }
    };
    let k = k.expect("a level strictly inside the range is crossed");
    Ok(interpolate_cell(field, k, alpha))
}

/// Positions `a_k` of one level at the period snapshots of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrack {
    pub alpha: f64,
    /// `(k, a_k)` pairs.
    pub entries: Vec<(usize, f64)>,
    /// The level left the attained range before the end of the run.
    pub truncated: bool,
}

impl LevelTrack {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,a_k")?;
        for (k, a) in &self.entries {
            writeln!(w, "{k},{a:.17e}")?;
        }
        Ok(())
    }
}

/// Rightmost crossing of every level at each `t = kT`.
pub fn track_levels(traj: &Trajectory, alphas: &[f64]) -> Vec<LevelTrack> {
    alphas
        .iter()
        .map(|&alpha| {
            let mut entries = Vec::with_capacity(traj.n_periods());
            let mut truncated = false;
            for (k, f) in traj.period_snapshots() {
                match level_crossing(f, alpha, Which::Rightmost) {
                    Ok(a) => entries.push((k, a)),
                    Err(_) => {
                        truncated = true;
                        break;
                    }
                }
            }
            LevelTrack { alpha, entries, truncated }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub c: f64,
    pub stderr: f64,
    /// Mean increment `l_k / T` over the same window.
    pub increment_c: f64,
    /// The two estimators differ by more than three standard errors.
    pub disagreement: bool,
    pub n: usize,
}

/// Default burn-in `⌈0.3 k_max⌉`.
pub fn default_burn_in(track: &LevelTrack) -> usize {
    let k_max = track.entries.len().saturating_sub(1);
    (0.3 * k_max as f64).ceil() as usize
}

/// Least-squares slope of `a_k` against `kT` after `burn_in` entries.
pub fn estimate_speed(track: &LevelTrack, period: f64, burn_in: usize) -> Result<SpeedEstimate> {
    if track.entries.len() < burn_in + 10 {
        return Err(LabError::Insufficient(format!(
            "level {} has {} entries; need at least burn-in {burn_in} + 10",
            track.alpha,
            track.entries.len()
        )));
    }
    let tail = &track.entries[burn_in..];
    let t: Vec<f64> = tail.iter().map(|&(k, _)| k as f64 * period).collect();
    let a: Vec<f64> = tail.iter().map(|&(_, a)| a).collect();
    let fit = linear_fit(&t, &a).ok_or_else(|| LabError::Insufficient("degenerate speed fit".into()))?;
    let n = tail.len();
    let increment_c = (a[n - 1] - a[0]) / (t[n - 1] - t[0]);
    let slack = 3.0 * fit.slope_stderr + 1e-12 * (1.0 + fit.slope.abs());
    Ok(SpeedEstimate {
        c: fit.slope,
        stderr: fit.slope_stderr,
        increment_c,
        disagreement: (increment_c - fit.slope).abs() > slack,
        n,
    })
}

/// Number of sign changes after discarding entries with `|v| ≤ eps`;
/// `-1` when nothing is left.
pub fn sign_changes(samples: &[f64], eps: f64) -> i64 {
    let mut last = 0.0_f64;
    let mut count = -1_i64;
    for &v in samples {
        if v.abs() <= eps {
            continue;
        }
        if count < 0 {
            count = 0;
        } else if (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// `Z(u1(t,·) − u2(t + lag·T, · + shift))` at every common snapshot time.
pub fn zero_number_series(traj1: &Trajectory, traj2: &Trajectory, shift: f64, lag: usize) -> Result<Vec<(f64, i64)>> {
    let g1 = traj1.grid();
    let g2 = traj2.grid();
    let dx = g1.dx();
    if g1.n_x != g2.n_x || (g1.dx() - g2.dx()).abs() > 1e-12 * dx || (g1.xmin - g2.xmin).abs() > 1e-9 * dx {
        return Err(LabError::GridMismatch("trajectories must share a grid".into()));
    }
    let m = (shift / dx).round();
    if (m * dx - shift).abs() > 1e-9 * dx {
        return Err(LabError::GridMismatch(format!("shift {shift} is not a multiple of dx = {dx}")));
    }
    let m = m as i64;
    let n = g1.n_x as i64;
    let (lo, hi) = ((-m).max(0), (n - m).min(n));
    if hi - lo < 2 {
        return Err(LabError::GridMismatch("no overlap after shifting".into()));
    }
    let offset = lag as f64 * traj1.period();
    let tol = 1e-6 * traj1.dt;
    let mut out = Vec::new();
    let mut j = 0;
    for f1 in &traj1.snapshots {
        let target = f1.t + offset;
        while j < traj2.snapshots.len() && traj2.snapshots[j].t < target - tol {
            j += 1;
        }
        let Some(f2) = traj2.snapshots.get(j) else { break };
        if (f2.t - target).abs() > tol {
            continue;
        }
        if f1.grid != f2.grid {
            return Err(LabError::GridMismatch(format!("snapshot grids differ at t = {}", f1.t)));
        }
        let diff: Vec<f64> = (lo..hi).map(|i| f1.values[i as usize] - f2.values[(i + m) as usize]).collect();
        let eps = 1e-9 * f1.sup_norm().max(f2.sup_norm());
        out.push((f1.t, sign_changes(&diff, eps)));
    }
    Ok(out)
}

pub fn write_zero_series_csv<W: Write>(series: &[(f64, i64)], mut w: W) -> Result<()> {
    writeln!(w, "t,Z")?;
    for (t, z) in series {
        writeln!(w, "{t:.17e},{z}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Steepness {
    Steeper,
    LessSteep,
    Mutually,
    Incomparable,
}

impl Steepness {
    pub fn steeper_or_mutually(self) -> bool {
        matches!(self, Steepness::Steeper | Steepness::Mutually)
    }
}

struct Profile<'a> {
    field: &'a Field,
    pchip: UniformPchip,
}

impl<'a> Profile<'a> {
    fn new(field: &'a Field) -> Self {
        Self { field, pchip: UniformPchip::new(field.grid.xmin, field.grid.dx(), field.values.clone()) }
    }

    /// Crossing of a non-increasing profile, or `None` on a flat segment at `alpha`.
    fn crossing(&self, alpha: f64) -> Option<f64> {
        let v = &self.field.values;
        if v.windows(2).any(|w| (w[0] - alpha).abs() <= 1e-12 && (w[1] - alpha).abs() <= 1e-12) {
            return None;
        }
        // First index with v < alpha.
        let j = v.partition_point(|&y| y >= alpha);
        if j == 0 || j == v.len() {
            return None;
        }
        Some(self.pchip.root_in_cell(j - 1, alpha))
    }
}

/// Single-crossing steepness order between two non-increasing profiles.
///
/// `v1` is steeper than `v2` when, after translating both so that they take a
/// shared value `α` at the same point, `v1` lies above `v2` to the left and
/// below it to the right (within `tol`), for every shared `α`.
pub fn is_steeper(v1: &Field, v2: &Field, tol: f64) -> Result<Steepness> {
    for (name, v) in [("first", v1), ("second", v2)] {
        if !v.is_nonincreasing(tol) {
            return Err(LabError::Precondition(format!("{name} profile is not non-increasing")));
        }
    }
    let lo = v1.min().max(v2.min());
    let hi = v1.max().min(v2.max());
    if hi - lo <= tol {
        return Ok(Steepness::Mutually);
    }
    let (p1, p2) = (Profile::new(v1), Profile::new(v2));
    let mut ok1 = true; // v1 steeper
    let mut ok2 = true; // v2 steeper
    for l in 0..STEEPNESS_LEVELS {
        let alpha = lo + (hi - lo) * (l as f64 + 0.5) / STEEPNESS_LEVELS as f64;
        let (Some(x1), Some(x2)) = (p1.crossing(alpha), p2.crossing(alpha)) else {
            return Ok(Steepness::Incomparable);
        };
        // Compare only where both translated profiles are defined.
        let s_lo = (v1.grid.xmin - x1).max(v2.grid.xmin - x2);
        let s_hi = (v1.grid.xmax - x1).min(v2.grid.xmax - x2);
        let mut check = |s: f64, d: f64| {
            if s < s_lo || s > s_hi {
                return;
            }
            if s > 0.0 {
                ok1 &= d <= tol;
                ok2 &= d >= -tol;
            } else if s < 0.0 {
                ok1 &= d >= -tol;
                ok2 &= d <= tol;
            }
        };
        for (i, &y) in v1.values.iter().enumerate() {
            let s = v1.grid.x(i) - x1;
            check(s, y - p2.pchip.eval(x2 + s));
        }
        for (i, &y) in v2.values.iter().enumerate() {
            let s = v2.grid.x(i) - x2;
            check(s, p1.pchip.eval(x1 + s) - y);
        }
        if !ok1 && !ok2 {
            return Ok(Steepness::Incomparable);
        }
    }
    Ok(match (ok1, ok2) {
        (true, true) => Steepness::Mutually,
        (true, false) => Steepness::Steeper,
        (false, true) => Steepness::LessSteep,
        (false, false) => Steepness::Incomparable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Wave,
    Platform,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileTolerances {
    pub profile_tol: f64,
    /// Absolute flatness threshold (default `1e-3·p(0)`).
    pub flat_tol: f64,
    pub window: f64,
}

impl ProfileTolerances {
    pub fn for_top(p0: f64) -> Self {
        Self { profile_tol: PROFILE_TOL, flat_tol: FLAT_TOL_REL * p0, window: WINDOW }
    }
}

/// One period of the solution seen from a frame that follows the level
/// `alpha`: `w(τ_j, ξ) = u(KT + τ_j, ξ + a_K + c τ_j)` on `ξ ∈ [−window, window]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitProfile {
    pub alpha: f64,
    pub xi_min: f64,
    pub dxi: f64,
    /// Phases `τ_j ∈ [0, T)`.
    pub tau: Vec<f64>,
    /// `profiles[j][m] = w(τ_j, xi_min + m·dxi)`.
    pub profiles: Vec<Vec<f64>>,
    /// Frame speed `l_K / T` from the last period increment.
    pub speed: f64,
    /// Period index `K` of the `τ = 0` profile.
    pub base_period: usize,
    pub base_shift: f64,
    /// Index range `[lo, hi]` of the `ξ` grid attributed to this front: it
    /// ends at the flattest point of the adjacent platforms, so neighbouring
    /// fronts are excluded.
    pub region: (usize, usize),
    /// `w(0, ·)` at the region ends (left, right).
    pub tails: (f64, f64),
    /// Sup distance between the last two shifted period snapshots on `region`.
    pub convergence_defect: f64,
    /// Oscillation of `w(0, ·)` on the central region.
    pub central_variation: f64,
    pub verdict: Verdict,
    /// `(k, a_k)` for all period snapshots.
    pub shifts: Vec<(usize, f64)>,
}

impl LimitProfile {
    pub fn xi(&self, m: usize) -> f64 {
        self.xi_min + m as f64 * self.dxi
    }

    pub fn n_xi(&self) -> usize {
        self.profiles[0].len()
    }

    /// The `τ = 0` profile as a field on the `ξ` grid.
    pub fn as_field(&self) -> Field {
        let n = self.n_xi();
        let grid = crate::pde::Grid { xmin: self.xi_min, xmax: self.xi(n - 1), n_x: n };
        Field { grid, t: 0.0, values: self.profiles[0].clone() }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau,xi,w")?;
        for (tau, row) in self.tau.iter().zip(&self.profiles) {
            for (m, v) in row.iter().enumerate() {
                writeln!(w, "{tau:.17e},{:.17e},{v:.17e}", self.xi(m))?;
            }
        }
        Ok(())
    }
}

fn sample_shifted(pchip: &UniformPchip, shift: f64, xi_min: f64, dxi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|m| pchip.eval(xi_min + m as f64 * dxi + shift)).collect()
}

fn variation(w: &[f64]) -> f64 {
    let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    hi - lo
}

/// Extent of the front through `center`: on each side, the flattest point of
/// the first platform (a stretch of half-width `c_half` varying by less than
/// `flat_tol`), or the window edge when no platform is reached.
fn front_region(w: &[f64], center: usize, c_half: usize, flat_tol: f64) -> (usize, usize) {
    let n = w.len();
    let local = |m: usize| variation(&w[m.saturating_sub(c_half)..(m + c_half + 1).min(n)]);
    let flattest = |range: Vec<usize>| -> usize {
        let slope = |j: usize| (w[j + 1] - w[j]).abs();
        let min = range.iter().map(|&j| slope(j)).fold(f64::INFINITY, f64::min);
        let cut = (2.0 * min).max(1e-14);
        range.into_iter().filter(|&j| slope(j) <= cut).last().expect("non-empty range")
    };
    let hi = match (center..n).find(|&m| local(m) < flat_tol) {
        Some(start) if start + 1 < n => flattest((start..n - 1).collect()) + 1,
        _ => n - 1,
    };
    let lo = match (0..=center).rev().find(|&m| local(m) < flat_tol) {
        Some(start) if start > 0 => flattest((0..start).rev().collect()),
        _ => 0,
    };
    (lo, hi)
}

/// Shifted-profile limit along the level `alpha` (rightmost crossing).
pub fn limit_profile(traj: &Trajectory, alpha: f64, tols: &ProfileTolerances) -> Result<LimitProfile> {
    let mut shifts = Vec::with_capacity(traj.n_periods());
    for (k, f) in traj.period_snapshots() {
        shifts.push((k, level_crossing(f, alpha, Which::Rightmost)?));
    }
    if shifts.len() < 3 {
        return Err(LabError::Insufficient("limit profile needs at least three period snapshots".into()));
    }
    let period = traj.period();
    let dxi = traj.grid().dx();
    let half = (tols.window / dxi).round() as usize;
    let n_xi = 2 * half + 1;
    let xi_min = -(half as f64) * dxi;

    let period_fields: Vec<(usize, &Field)> = traj.period_snapshots().collect();
    let last = period_fields.len() - 1;
    let shifted_at = |idx: usize| {
        let f = period_fields[idx].1;
        let p = UniformPchip::new(f.grid.xmin, f.grid.dx(), f.values.clone());
        sample_shifted(&p, shifts[idx].1, xi_min, dxi, n_xi)
    };
    let w_last = shifted_at(last);
    let w_prev = shifted_at(last - 1);
    let c_half = ((CENTRAL_HALF_WIDTH / dxi).round() as usize).min(half);
    let region = front_region(&w_last, half, c_half, tols.flat_tol);
    let tails = (w_last[region.0], w_last[region.1]);
    let convergence_defect = w_last[region.0..=region.1]
        .iter()
        .zip(&w_prev[region.0..=region.1])
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));

    // Base the stored period on the last complete one.
    let (base_k, _) = period_fields[last - 1];
    let base_shift = shifts[last - 1].1;
    let speed = (shifts[last].1 - shifts[last - 1].1) / period;
    let t0 = base_k as f64 * period;
    let mut tau = Vec::new();
    let mut profiles = Vec::new();
    for f in traj.period_window(base_k) {
        let phase = f.t - t0;
        if phase >= period - 1e-9 * period {
            continue;
        }
        let p = UniformPchip::new(f.grid.xmin, f.grid.dx(), f.values.clone());
        tau.push(phase.max(0.0));
        profiles.push(sample_shifted(&p, base_shift + speed * phase, xi_min, dxi, n_xi));
    }

    let central_variation = variation(&w_last[half - c_half..=half + c_half]);
    let verdict = if central_variation < tols.flat_tol {
        Verdict::Platform
    } else if convergence_defect < tols.profile_tol && variation(&w_last) > tols.flat_tol {
        Verdict::Wave
    } else {
        Verdict::Undecided
    };
    Ok(LimitProfile {
        alpha,
        xi_min,
        dxi,
        tau,
        profiles,
        speed,
        base_period: base_k,
        base_shift,
        region,
        tails,
        convergence_defect,
        central_variation,
        verdict,
        shifts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadingBracket {
    pub c_lower: f64,
    pub c_upper: f64,
    pub stderr_lower: f64,
    pub stderr_upper: f64,
}

/// Speeds of the leftmost `(p − eps)`-crossing and rightmost `eps`-crossing,
/// with `p` read from the left end of each snapshot.
pub fn spreading_bracket(traj: &Trajectory, eps: f64) -> Result<SpreadingBracket> {
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (k, f) in traj.period_snapshots() {
        let top = f.values[0];
        if let (Ok(r), Ok(l)) =
            (level_crossing(f, eps, Which::Rightmost), level_crossing(f, top - eps, Which::Leftmost))
        {
            upper.push((k, r));
            lower.push((k, l));
        }
    }
    let burn_in = (0.3 * upper.len().saturating_sub(1) as f64).ceil() as usize;
    if upper.len() < burn_in + 10 {
        return Err(LabError::Insufficient(format!(
            "spreading bracket needs ≥ {} usable period snapshots, found {}",
            burn_in + 10,
            upper.len()
        )));
    }
    let period = traj.period();
    let fit = |entries: Vec<(usize, f64)>| {
        estimate_speed(&LevelTrack { alpha: eps, entries, truncated: false }, period, burn_in)
    };
    let up = fit(upper)?;
    let low = fit(lower)?;
    Ok(SpreadingBracket {
        c_lower: low.c.min(up.c),
        c_upper: up.c,
        stderr_lower: low.stderr,
        stderr_upper: up.stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::NonlinearitySpec;
    use crate::pde::{heaviside_ic, simulate, BoundaryPolicy, Grid, SimParams};
    use proptest::prelude::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Grid {
        Grid::new(lo, hi, n).unwrap()
    }

    fn tanh_front(g: Grid, center: f64, width: f64) -> Field {
        Field::from_fn(g, 0.0, |x| 0.5 * (1.0 - ((x - center) / width).tanh()))
    }

    #[test]
    fn crossing_examples() {
        let g = grid(-10.0, 10.0, 201);
        let h = heaviside_ic(&g, 0.0, 1.0);
        let x = level_crossing(&h, 0.5, Which::Unique).unwrap();
        assert!((x - 0.05).abs() < 1e-12);
        let ramp = Field::from_fn(grid(0.0, 1.0, 21), 0.0, |x| 1.0 - x);
        assert!((level_crossing(&ramp, 0.25, Which::Unique).unwrap() - 0.75).abs() < 1e-12);
        let bump = Field::from_fn(g, 0.0, |x| (-x * x).exp());
        assert!(matches!(level_crossing(&bump, 0.5, Which::Unique), Err(LabError::Ambiguous { count: 2, .. })));
        let l = level_crossing(&bump, 0.5, Which::Leftmost).unwrap();
        let r = level_crossing(&bump, 0.5, Which::Rightmost).unwrap();
        assert!((l + r).abs() < 1e-9 && r > 0.0);
        assert!(matches!(level_crossing(&bump, 1.5, Which::Unique), Err(LabError::LevelRange { .. })));
    }

    #[test]
    fn speed_of_exact_line() {
        let track = LevelTrack { alpha: 0.5, entries: (0..40).map(|k| (k, 2.0 * k as f64 * 0.5)).collect(), truncated: false };
        let s = estimate_speed(&track, 0.5, default_burn_in(&track)).unwrap();
        assert!((s.c - 2.0).abs() < 1e-12 && s.stderr < 1e-12 && !s.disagreement);
        let short = LevelTrack { entries: track.entries[..12].to_vec(), ..track };
        assert!(estimate_speed(&short, 0.5, 5).is_err());
    }

    #[test]
    fn sign_change_examples() {
        assert_eq!(sign_changes(&[1.0, -1.0, 2.0, -3.0], 0.0), 3);
        assert_eq!(sign_changes(&[0.0; 5], 0.0), -1);
        assert_eq!(sign_changes(&[1.0, 1e-15, -1.0], 1e-12), 1);
        assert_eq!(sign_changes(&[2.0, 1.0], 0.0), 0);
    }

    #[test]
    fn steepness_examples() {
        let g = grid(-20.0, 20.0, 401);
        let jump = heaviside_ic(&g, 0.0, 1.0);
        let smooth = tanh_front(g, 0.0, 2.0);
        assert_eq!(is_steeper(&jump, &smooth, 1e-9).unwrap(), Steepness::Steeper);
        assert_eq!(is_steeper(&smooth, &jump, 1e-9).unwrap(), Steepness::LessSteep);
        assert_eq!(is_steeper(&smooth, &smooth.translated(7), 1e-9).unwrap(), Steepness::Mutually);
        let high = Field::from_fn(g, 0.0, |x| 0.6 + 0.4 * 0.5 * (1.0 - x.tanh()));
        let low = Field::from_fn(g, 0.0, |x| 0.4 * 0.5 * (1.0 - x.tanh()));
        assert_eq!(is_steeper(&high, &low, 1e-9).unwrap(), Steepness::Mutually);
        let bump = Field::from_fn(g, 0.0, |x| (-x * x).exp());
        assert!(is_steeper(&bump, &smooth, 1e-9).is_err());
        // Two fronts with crossing slopes at different heights.
        let s1 = Field::from_fn(g, 0.0, |x| 0.5 * (1.0 - (x / if x < 0.0 { 0.5 } else { 4.0 }).tanh()));
        let s2 = tanh_front(g, 0.0, 1.5);
        assert_eq!(is_steeper(&s1, &s2, 1e-9).unwrap(), Steepness::Incomparable);
    }

    #[test]
    fn flat_segment_at_level_is_incomparable() {
        let g = grid(-20.0, 20.0, 401);
        let stair = Field::from_fn(g, 0.0, |x| if x < -5.0 { 1.0 } else if x <= 5.0 { 0.5 } else { 0.0 });
        let smooth = tanh_front(g, 0.0, 2.0);
        let p = Profile::new(&stair);
        assert!(p.crossing(0.5).is_none());
        assert!(is_steeper(&stair, &smooth, 1e-9).is_ok());
    }

    fn bistable_run(a: f64, t_end: f64) -> Trajectory {
        let spec = NonlinearitySpec::bistable(a, 1.0).unwrap();
        let g = Grid::with_spacing(-40.0, 120.0, 0.1).unwrap();
        let params = SimParams::new(0.02, t_end).with_stride(10, Some(1.0));
        simulate(&spec, &heaviside_ic(&g, 0.0, 1.0), BoundaryPolicy::default(), &params).unwrap()
    }

    #[test]
    fn bistable_front_speed_and_profile() {
        let traj = bistable_run(0.25, 120.0);
        let c_exact = 0.5 / 2f64.sqrt();
        let tracks = track_levels(&traj, &[0.5]);
        assert!(!tracks[0].truncated);
        let s = estimate_speed(&tracks[0], 1.0, default_burn_in(&tracks[0])).unwrap();
        assert!((s.c - c_exact).abs() < 0.01 * c_exact, "c = {}", s.c);

        let lp = limit_profile(&traj, 0.5, &ProfileTolerances::for_top(1.0)).unwrap();
        assert_eq!(lp.verdict, Verdict::Wave, "defect {}", lp.convergence_defect);
        assert_eq!(lp.tau.len(), 5);
        let w = &lp.profiles[0];
        let err = (0..lp.n_xi())
            .map(|m| (w[m] - 1.0 / (1.0 + (lp.xi(m) / 2f64.sqrt()).exp())).abs())
            .fold(0.0, f64::max);
        assert!(err < 5e-3, "profile error {err}");

        let b = spreading_bracket(&traj, 1e-3).unwrap();
        assert!((b.c_lower - c_exact).abs() < 0.01 && (b.c_upper - c_exact).abs() < 0.01, "{b:?}");

        // Heaviside-data snapshots are steeper than the wave; a run from a wide
        // tanh front is less steep than it.
        let wave = lp.as_field();
        let aligned = |f: &Field| {
            let p = UniformPchip::new(f.grid.xmin, f.grid.dx(), f.values.clone());
            let a = level_crossing(f, 0.5, Which::Rightmost).unwrap();
            Field::from_fn(wave.grid, 0.0, |x| p.eval(x + a))
        };
        let early = aligned(&traj.snapshots[10]);
        assert_eq!(is_steeper(&wave, &early, 1e-6).unwrap(), Steepness::LessSteep);
        let spec = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        let g = traj.grid();
        let wide = tanh_front(g, 0.0, 8.0);
        let flat_run = simulate(&spec, &wide, BoundaryPolicy::default(), &SimParams::new(0.02, 5.0)).unwrap();
        for f in &flat_run.snapshots {
            assert!(is_steeper(&wave, &aligned(f), 1e-6).unwrap().steeper_or_mutually());
        }
    }

    #[test]
    fn heat_flow_has_no_limit_wave() {
        let spec = NonlinearitySpec::zero(1.0);
        let g = Grid::with_spacing(-100.0, 100.0, 0.2).unwrap();
        let traj = simulate(&spec, &heaviside_ic(&g, 0.0, 1.0), BoundaryPolicy::default(), &SimParams::new(0.05, 60.0)).unwrap();
        let track = &track_levels(&traj, &[0.5])[0];
        let first = track.entries[0].1;
        assert!(track.entries.iter().all(|&(_, a)| (a - first).abs() < 0.06), "{:?}", &track.entries[..5]);
        let lp = limit_profile(&traj, 0.5, &ProfileTolerances::for_top(1.0)).unwrap();
        assert_eq!(lp.verdict, Verdict::Undecided);
    }

    #[test]
    fn zero_number_of_ordered_runs() {
        let spec = NonlinearitySpec::bistable(0.3, 1.0).unwrap();
        let g = Grid::with_spacing(-30.0, 30.0, 0.1).unwrap();
        let params = SimParams::new(0.02, 10.0);
        let a = simulate(&spec, &heaviside_ic(&g, -1.0, 1.0), BoundaryPolicy::default(), &params).unwrap();
        let b = simulate(&spec, &heaviside_ic(&g, 2.0, 1.0), BoundaryPolicy::default(), &params).unwrap();
        let same = zero_number_series(&a, &a, 0.0, 0).unwrap();
        assert!(same.iter().all(|&(_, z)| z == -1));
        let ordered = zero_number_series(&a, &b, 0.0, 0).unwrap();
        assert_eq!(ordered.len(), 11);
        assert!(ordered.iter().all(|&(_, z)| z == 0 || z == -1));
        assert!(zero_number_series(&a, &b, 0.05, 0).is_err());
        let lagged = zero_number_series(&a, &b, 1.0, 3).unwrap();
        assert_eq!(lagged.len(), 8);
        assert!(lagged.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn steepness_is_shift_invariant(w1 in 0.3f64..3.0, w2 in 0.3f64..3.0, m1 in -20i64..20, m2 in -20i64..20) {
            let g = grid(-30.0, 30.0, 601);
            let v1 = tanh_front(g, 0.0, w1);
            let v2 = tanh_front(g, 0.0, w2);
            let base = is_steeper(&v1, &v2, 1e-9).unwrap();
            let moved = is_steeper(&v1.translated(m1), &v2.translated(m2), 1e-9).unwrap();
            prop_assert_eq!(base, moved);
            let expected = if (w1 - w2).abs() < 1e-12 { Steepness::Mutually } else if w1 < w2 { Steepness::Steeper } else { Steepness::LessSteep };
            if (w1 - w2).abs() > 0.05 {
                prop_assert_eq!(base, expected);
            }
        }

        #[test]
        fn linear_crossing_hits_the_level(alpha in 0.01f64..0.99, c in -5.0f64..5.0) {
            let g = grid(-20.0, 20.0, 401);
            let f = tanh_front(g, c, 1.3);
            let x = level_crossing(&f, alpha, Which::Unique).unwrap();
            let k = ((x - g.xmin) / g.dx()).floor() as usize;
            let lin = f.values[k] + (f.values[k + 1] - f.values[k]) * (x - g.x(k)) / g.dx();
            prop_assert!((lin - alpha).abs() <= LEVEL_TOL);
        }

        #[test]
        fn sign_changes_bounded_by_length(v in proptest::collection::vec(-1.0f64..1.0, 0..40)) {
            let z = sign_changes(&v, 0.0);
            prop_assert!(z >= -1 && z <= v.len().saturating_sub(1) as i64);
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            prop_assert_eq!(z, sign_changes(&neg, 0.0));
        }
    }
}
