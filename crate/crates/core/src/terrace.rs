//! Minimal propagating terrace: extraction from a Heaviside-data run, shift
//! functions, the stacked-wave residual, and structural checks.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::front::{
    default_burn_in, estimate_speed, is_steeper, limit_profile, track_levels, LevelTrack, LimitProfile,
    ProfileTolerances, SpeedEstimate, Steepness, Verdict,
};
use crate::interp::UniformPchip;
use crate::nonlinearity::NonlinearitySpec;
use crate::pde::{heaviside_ic, simulate, BoundaryPolicy, Field, Grid, SimParams, Trajectory};
use crate::periodic::{PeriodicSolution, StabilityRecord, TriState};
use crate::stats::linear_fit;

/// Tolerances and limits for terrace work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerraceConfig {
    pub profile_tol: f64,
    /// Relative to `p(0)`.
    pub flat_tol_rel: f64,
    pub window: f64,
    /// Maximum number of limit-profile attempts.
    pub alpha_budget: usize,
    /// Distance within which a wave tail is identified with a ladder entry.
    pub snap_tol: f64,
    pub speed_zero_tol: f64,
    /// Relative to `T`.
    pub shift_conv_tol_rel: f64,
    /// Relative to `p(0)`.
    pub residual_pass_rel: f64,
    /// Jump location of the Heaviside data.
    pub jump: f64,
}

impl Default for TerraceConfig {
    fn default() -> Self {
        Self {
            profile_tol: crate::front::PROFILE_TOL,
            flat_tol_rel: crate::front::FLAT_TOL_REL,
            window: crate::front::WINDOW,
            alpha_budget: 12,
            snap_tol: 1e-2,
            speed_zero_tol: 5e-3,
            shift_conv_tol_rel: 1e-3,
            residual_pass_rel: 5e-3,
            jump: 0.0,
        }
    }
}

impl TerraceConfig {
    pub fn profile_tolerances(&self, p0: f64) -> ProfileTolerances {
        ProfileTolerances { profile_tol: self.profile_tol, flat_tol: self.flat_tol_rel * p0, window: self.window }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    /// `(p_{i−1}(0) + p_i(0)) / 2`.
    pub level: f64,
    /// `|Ũ(0, 0) − level|`.
    pub defect: f64,
}

/// A periodic travelling wave stored in its moving frame:
/// `U(t, x) = Ũ(t mod T, x − c t)` with `Ũ` sampled on `τ_j × ξ_m`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveProfile {
    pub speed: f64,
    pub stderr: f64,
    #[serde(rename = "period_T")]
    pub period: f64,
    pub upper: PeriodicSolution,
    pub lower: PeriodicSolution,
    pub anchor: Anchor,
    pub xi_min: f64,
    pub dxi: f64,
    pub tau: Vec<f64>,
    pub profile: Vec<Vec<f64>>,
    #[serde(skip)]
    interp: OnceLock<Vec<UniformPchip>>,
}

impl WaveProfile {
    pub fn new(
        speed: f64,
        stderr: f64,
        upper: PeriodicSolution,
        lower: PeriodicSolution,
        lp: &LimitProfile,
    ) -> Self {
        let level = 0.5 * (upper.q0() + lower.q0());
        let mut wave = Self {
            speed,
            stderr,
            period: upper.period,
            upper,
            lower,
            anchor: Anchor { level, defect: 0.0 },
            xi_min: lp.xi(lp.region.0),
            dxi: lp.dxi,
            tau: lp.tau.clone(),
            profile: lp.profiles.iter().map(|row| row[lp.region.0..=lp.region.1].to_vec()).collect(),
            interp: OnceLock::new(),
        };
        wave.anchor.defect = (wave.eval_frame(0.0, 0.0) - level).abs();
        wave
    }

    pub fn xi_max(&self) -> f64 {
        self.xi_min + self.dxi * (self.profile[0].len() - 1) as f64
    }

    fn interp(&self) -> &[UniformPchip] {
        self.interp
            .get_or_init(|| self.profile.iter().map(|row| UniformPchip::new(self.xi_min, self.dxi, row.clone())).collect())
    }

    /// `Ũ(τ, ξ)`, periodic in `τ`, extended by the platforms outside the window.
    pub fn eval_frame(&self, tau: f64, xi: f64) -> f64 {
        let tau = tau.rem_euclid(self.period);
        if xi < self.xi_min {
            return self.upper.value_at(tau);
        }
        if xi > self.xi_max() {
            return self.lower.value_at(tau);
        }
        let rows = self.interp();
        let n = self.tau.len();
        if n == 1 {
            return rows[0].eval(xi);
        }
        let j = self.tau.partition_point(|&s| s <= tau).saturating_sub(1);
        let (t0, t1, next) = if j + 1 < n { (self.tau[j], self.tau[j + 1], j + 1) } else { (self.tau[j], self.period, 0) };
        let w = if t1 > t0 { (tau - t0) / (t1 - t0) } else { 0.0 };
        (1.0 - w) * rows[j].eval(xi) + w * rows[next].eval(xi)
    }

    /// `U(t, x) = Ũ(t mod T, x − c t)`.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.eval_frame(t, x - self.speed * t)
    }

    /// Frame snapshot at phase `tau` on the stored `ξ` grid.
    pub fn frame_field(&self, tau: f64) -> Field {
        let n = self.profile[0].len();
        let grid = Grid { xmin: self.xi_min, xmax: self.xi_max(), n_x: n };
        Field::from_fn(grid, tau, |xi| self.eval_frame(tau, xi))
    }

    /// `max |Ũ(τ_j, ·) − p(τ_j)|` at both window edges.
    pub fn tail_defect(&self) -> f64 {
        self.tau
            .iter()
            .zip(&self.profile)
            .map(|(&t, row)| {
                let left = (row[0] - self.upper.value_at(t)).abs();
                let right = (row[row.len() - 1] - self.lower.value_at(t)).abs();
                left.max(right)
            })
            .fold(0.0, f64::max)
    }

    /// Every stored frame row is non-increasing within `tol`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.profile.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0] + tol))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Terrace {
    /// `p_0 > p_1 > … > p_N = 0`.
    pub platforms: Vec<PeriodicSolution>,
    /// `waves[i]` connects `platforms[i]` (left) to `platforms[i + 1]` (right).
    pub waves: Vec<WaveProfile>,
    pub log: Vec<String>,
}

impl Terrace {
    pub fn n(&self) -> usize {
        self.waves.len()
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.waves.iter().map(|w| w.speed).collect()
    }

    /// Compact JSON description; `profile_refs[i]` names wave `i`'s profile file.
    pub fn document(&self, profile_refs: &[String]) -> serde_json::Value {
        serde_json::json!({
            "platforms": self.platforms.iter().map(|p| p.q0()).collect::<Vec<_>>(),
            "waves": self.waves.iter().enumerate().map(|(i, w)| serde_json::json!({
                "c": w.speed,
                "stderr": w.stderr,
                "anchor": w.anchor.level,
                "profile_ref": profile_refs.get(i),
            })).collect::<Vec<_>>(),
        })
    }
}

/// A terrace together with the Heaviside-data run it was read from.
#[derive(Debug, Clone)]
pub struct TerraceRun {
    pub terrace: Terrace,
    pub trajectory: Trajectory,
}

fn snap<'a>(ladder: &'a [PeriodicSolution], value: f64) -> Option<(usize, &'a PeriodicSolution)> {
    ladder
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let d = if value < s.bottom0() {
                s.bottom0() - value
            } else if value > s.top0() {
                value - s.top0()
            } else {
                0.0
            };
            (i, s, d)
        })
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(i, s, _)| (i, s))
}

/// Limit profile plus a regression speed for one level.
fn profile_at(traj: &Trajectory, alpha: f64, tols: &ProfileTolerances) -> Result<(LimitProfile, SpeedEstimate)> {
    let lp = limit_profile(traj, alpha, tols)?;
    let track = LevelTrack { alpha, entries: lp.shifts.clone(), truncated: false };
    let speed = estimate_speed(&track, traj.period(), default_burn_in(&track))?;
    Ok((lp, speed))
}

/// Run Heaviside data and read the terrace off it, top platform first.
///
/// `ladder` is the increasing list of periodic solutions in `[0, p]`; its last
/// entry is the upper state `p` and its first the zero solution.
pub fn extract_terrace(
    spec: &NonlinearitySpec,
    ladder: &[PeriodicSolution],
    grid: &Grid,
    params: &SimParams,
    cfg: &TerraceConfig,
) -> Result<TerraceRun> {
    if ladder.len() < 2 {
        return Err(LabError::Precondition("the ladder needs at least the states 0 and p".into()));
    }
    let top = ladder.last().expect("non-empty").clone();
    let p0 = top.q0();
    let ic = heaviside_ic(grid, cfg.jump, p0);
    let trajectory = simulate(spec, &ic, BoundaryPolicy::default(), params)?;
    let terrace = extract_from_run(&trajectory, ladder, cfg)?;
    Ok(TerraceRun { terrace, trajectory })
}

/// Terrace construction on an existing Heaviside-data trajectory.
pub fn extract_from_run(traj: &Trajectory, ladder: &[PeriodicSolution], cfg: &TerraceConfig) -> Result<Terrace> {
    let top = ladder.last().expect("non-empty ladder").clone();
    let tols = cfg.profile_tolerances(top.q0());
    let mut platforms = vec![top];
    let mut waves: Vec<WaveProfile> = Vec::new();
    let mut log = Vec::new();
    let mut current = ladder.len() - 1;
    let mut attempts = 0;

    while current > 0 {
        let upper = &ladder[current];
        let next = &ladder[current - 1];
        let mut alpha = 0.5 * (next.top0() + upper.bottom0());
        let found = loop {
            if attempts >= cfg.alpha_budget {
                return Err(LabError::PartialTerrace {
                    stages: waves.len(),
                    reason: format!("alpha budget of {} exhausted below platform {:.6}", cfg.alpha_budget, upper.q0()),
                });
            }
            attempts += 1;
            let lp = match limit_profile(traj, alpha, &tols) {
                Ok(lp) => lp,
                Err(e) => {
                    log.push(format!("alpha = {alpha:.6}: {e}"));
                    return Err(LabError::PartialTerrace { stages: waves.len(), reason: e.to_string() });
                }
            };
            log.push(format!(
                "alpha = {alpha:.6}: verdict {:?}, defect {:.3e}",
                lp.verdict, lp.convergence_defect
            ));
            match lp.verdict {
                Verdict::Wave => break lp,
                Verdict::Platform | Verdict::Undecided => alpha = 0.5 * (alpha + next.top0()),
            }
        };
        let tail = found.tails.1;
        let (lower_idx, lower) = snap(&ladder[..current], tail).expect("ladder below current is non-empty");
        if (tail - lower.q0()).abs() > cfg.snap_tol && !(tail >= lower.bottom0() && tail <= lower.top0()) {
            log.push(format!("lower tail {tail:.6} is {:.3e} from ladder entry {:.6}", (tail - lower.q0()).abs(), lower.q0()));
        }
        let level = 0.5 * (upper.q0() + lower.q0());
        let (lp, speed) = profile_at(traj, level, &tols).map_err(|e| LabError::PartialTerrace {
            stages: waves.len(),
            reason: format!("re-anchoring at {level}: {e}"),
        })?;
        log.push(format!(
            "wave {}: {:.6} -> {:.6}, c = {:.6} ± {:.2e}",
            waves.len() + 1,
            upper.q0(),
            lower.q0(),
            speed.c,
            speed.stderr
        ));
        waves.push(WaveProfile::new(speed.c, speed.stderr, upper.clone(), lower.clone(), &lp));
        platforms.push(lower.clone());
        current = lower_idx;
    }

    for (i, w) in waves.windows(2).enumerate() {
        if w[0].speed > w[1].speed + 3.0 * (w[0].stderr + w[1].stderr) {
            return Err(LabError::SpeedOrdering { index: i, left: w[0].speed, right: w[1].speed });
        }
    }
    Ok(Terrace { platforms, waves, log })
}

/// Drift `η_i(t)` of one wave, sampled at period snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTrack {
    pub wave: usize,
    /// `(kT, η_i(kT))`.
    pub series: Vec<(f64, f64)>,
    /// Limit when the tail variation is below the convergence tolerance.
    pub limit: Option<f64>,
    pub tail_variation: f64,
    pub truncated: bool,
}

impl ShiftTrack {
    /// Linear interpolation between period samples, constant outside.
    pub fn eta(&self, t: f64) -> f64 {
        let s = &self.series;
        let j = s.partition_point(|&(tk, _)| tk <= t);
        if j == 0 {
            return s[0].1;
        }
        if j == s.len() {
            return s[j - 1].1;
        }
        let (t0, e0) = s[j - 1];
        let (t1, e1) = s[j];
        e0 + (e1 - e0) * (t - t0) / (t1 - t0)
    }

    /// `|η(t_end)| / t_end`.
    pub fn sublinear_ratio(&self) -> f64 {
        let &(t, e) = self.series.last().expect("non-empty series");
        if t > 0.0 {
            e.abs() / t
        } else {
            f64::INFINITY
        }
    }
}

/// `η_i(kT) = a_{i,k} − c_i kT` with `a_{i,k}` the crossing of the anchor level.
pub fn fit_shift_functions(traj: &Trajectory, terrace: &Terrace, cfg: &TerraceConfig) -> Vec<ShiftTrack> {
    let period = traj.period();
    let levels: Vec<f64> = terrace.waves.iter().map(|w| w.anchor.level).collect();
    track_levels(traj, &levels)
        .into_iter()
        .zip(&terrace.waves)
        .enumerate()
        .map(|(i, (track, wave))| {
            let series: Vec<(f64, f64)> = track
                .entries
                .iter()
                .map(|&(k, a)| {
                    let t = k as f64 * period;
                    (t, a - wave.speed * t)
                })
                .collect();
            let from = series.len() - (series.len() / 4).max(1);
            let tail = &series[from..];
            let tail_variation: f64 = tail.windows(2).map(|w| (w[1].1 - w[0].1).abs()).sum();
            let limit = (tail_variation < cfg.shift_conv_tol_rel * period).then(|| tail.last().expect("non-empty").1);
            ShiftTrack { wave: i, series, limit, tail_variation, truncated: track.truncated }
        })
        .collect()
}

/// Stacked-wave ansatz `Σ Ũ_i(t, x − c_i t − η_i) − Σ_{i≥1} p_i(t)` at one point.
pub fn ansatz(terrace: &Terrace, t: f64, x: f64, shifts: &[f64]) -> f64 {
    let waves: f64 =
        terrace.waves.iter().zip(shifts).map(|(w, &eta)| w.eval_frame(t, x - w.speed * t - eta)).sum();
    let platforms: f64 = terrace.platforms[1..].iter().map(|p| p.value_at(t)).sum();
    waves - platforms
}

/// `max |u − ansatz|` over the grid, excluding `margin` at each end.
pub fn terrace_residual(field: &Field, terrace: &Terrace, shifts: &[f64], margin: f64) -> Result<f64> {
    if shifts.len() != terrace.n() {
        return Err(LabError::Precondition(format!("{} shifts for {} waves", shifts.len(), terrace.n())));
    }
    if terrace.waves.iter().any(|w| w.profile.is_empty()) {
        return Err(LabError::Precondition("wave profile data missing".into()));
    }
    let g = field.grid;
    let mut worst = 0.0_f64;
    for (i, &u) in field.values.iter().enumerate() {
        let x = g.x(i);
        if x < g.xmin + margin || x > g.xmax - margin {
            continue;
        }
        worst = worst.max((u - ansatz(terrace, field.t, x, shifts)).abs());
    }
    Ok(worst)
}

/// Residual at every period snapshot with the fitted shifts.
pub fn residual_series(
    traj: &Trajectory,
    terrace: &Terrace,
    shifts: &[ShiftTrack],
    margin: f64,
) -> Result<Vec<(f64, f64)>> {
    traj.period_snapshots()
        .map(|(_, f)| {
            let eta: Vec<f64> = shifts.iter().map(|s| s.eta(f.t)).collect();
            Ok((f.t, terrace_residual(f, terrace, &eta, margin)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub nu: f64,
    pub r2: f64,
    pub n: usize,
    /// Fitted time window.
    pub window: (f64, f64),
    /// Rates from the two halves of the window.
    pub half_rates: (f64, f64),
    pub non_exponential: bool,
    /// The window was cut before a noise floor.
    pub floor_truncated: bool,
}

/// Log-linear decay rate of a residual series.
///
/// A noise floor at the end of the series is cut off, then the first
/// `burn_in` fraction of the remaining time span is dropped. Decay is flagged non-exponential when `r² < 0.9`,
/// the rate is not positive, or the two half-window rates differ by more than
/// a factor of 1.5.
pub fn exponential_rate(series: &[(f64, f64)], burn_in: f64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|&(_, r)| r > 0.0 && r.is_finite()).collect();
    if pts.len() < 8 {
        return Err(LabError::Insufficient(format!("{} positive residuals; need 8", pts.len())));
    }
    // The median of the last fifth stands for the noise floor; the fit stops
    // once the residual comes within a decade of it.
    let mut tail: Vec<f64> = pts[pts.len() - (pts.len() / 5).max(3)..].iter().map(|p| p.1).collect();
    tail.sort_by(|a, b| a.total_cmp(b));
    let floor = tail[tail.len() / 2];
    let mut end = pts.len();
    if pts[0].1 > 100.0 * floor {
        end = pts.iter().position(|&(_, r)| r < 10.0 * floor).unwrap_or(pts.len());
    }
    let floor_truncated = end < pts.len();
    let (t_first, t_cut) = (pts[0].0, pts[end - 1].0);
    let start = pts.partition_point(|&(t, _)| t < t_first + burn_in * (t_cut - t_first));
    let window = &pts[start..end];
    if window.len() < 6 {
        return Err(LabError::Insufficient(format!("only {} residuals in the fit window", window.len())));
    }
    let fit_of = |w: &[(f64, f64)]| {
        let t: Vec<f64> = w.iter().map(|p| p.0).collect();
        let y: Vec<f64> = w.iter().map(|p| p.1.ln()).collect();
        linear_fit(&t, &y)
    };
    let fit = fit_of(window).ok_or_else(|| LabError::Insufficient("degenerate rate fit".into()))?;
    let half = window.len() / 2;
    let r1 = fit_of(&window[..half.max(2)]).map_or(f64::NAN, |f| -f.slope);
    let r2_ = fit_of(&window[half..]).map_or(f64::NAN, |f| -f.slope);
    let nu = -fit.slope;
    let inconsistent = !(r1 > 0.0 && r2_ > 0.0) || r1.max(r2_) > 1.5 * r1.min(r2_);
    Ok(RateFit {
        nu,
        r2: fit.r2,
        n: window.len(),
        window: (window[0].0, window[window.len() - 1].0),
        half_rates: (r1, r2_),
        non_exponential: fit.r2 < 0.9 || nu <= 0.0 || inconsistent,
        floor_truncated,
    })
}

/// Boundary speeds `c̄_0 … c̄_N` and a margin `ϱ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub cbar: Vec<f64>,
    pub varrho: f64,
}

impl RegionPartition {
    /// Requires strictly increasing speeds; `ϱ ≤ ¼ min{c_i − c̄_{i−1}, c̄_i − c_i}`.
    pub fn new(speeds: &[f64], varrho: Option<f64>) -> Result<Self> {
        if speeds.is_empty() {
            return Err(LabError::Precondition("no speeds".into()));
        }
        if speeds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::Precondition("region partition needs distinct increasing speeds".into()));
        }
        let n = speeds.len();
        let mut cbar = vec![speeds[0] - 1.0];
        cbar.extend(speeds.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        cbar.push(speeds[n - 1] + 1.0);
        let bound = 0.25 * (0..n).map(|i| (speeds[i] - cbar[i]).min(cbar[i + 1] - speeds[i])).fold(f64::INFINITY, f64::min);
        let varrho = varrho.unwrap_or(bound);
        if !(varrho > 0.0 && varrho <= bound) {
            return Err(LabError::Precondition(format!("varrho {varrho} outside (0, {bound}]")));
        }
        Ok(Self { cbar, varrho })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub wave: Option<usize>,
    pub description: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub clauses: Vec<Clause>,
}

impl StructureReport {
    pub fn all_pass(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }
}

/// Stability/isolation requirements implied by each wave's speed sign.
///
/// `records[i]` belongs to `terrace.platforms[i]`. With `multistable`, also
/// requires `0` and `p` to be linearly stable.
pub fn check_terrace_structure(
    terrace: &Terrace,
    records: &[StabilityRecord],
    speed_zero_tol: f64,
    multistable: bool,
) -> Result<StructureReport> {
    if records.len() != terrace.platforms.len() {
        return Err(LabError::Precondition(format!(
            "{} stability records for {} platforms",
            records.len(),
            terrace.platforms.len()
        )));
    }
    let mut clauses = Vec::new();
    for (i, w) in terrace.waves.iter().enumerate() {
        let (up, low) = (&records[i], &records[i + 1]);
        let from_below = Clause {
            wave: Some(i + 1),
            description: format!("upper platform {:.6} stable and isolated from below", w.upper.q0()),
            pass: up.stable_below == TriState::Yes && up.isolated_below == TriState::Yes,
        };
        let from_above = Clause {
            wave: Some(i + 1),
            description: format!("lower platform {:.6} stable and isolated from above", w.lower.q0()),
            pass: low.stable_above == TriState::Yes && low.isolated_above == TriState::Yes,
        };
        if w.speed.abs() < speed_zero_tol {
            clauses.push(from_below);
            clauses.push(from_above);
        } else if w.speed > 0.0 {
            clauses.push(from_below);
        } else {
            clauses.push(from_above);
        }
    }
    if multistable {
        let (top, bottom) = (&records[0], &records[records.len() - 1]);
        clauses.push(Clause { wave: None, description: "p linearly stable".into(), pass: top.mu > 0.0 });
        clauses.push(Clause { wave: None, description: "0 linearly stable".into(), pass: bottom.mu > 0.0 });
    }
    Ok(StructureReport { clauses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalityCheck {
    pub wave: usize,
    pub candidate: usize,
    pub tau: f64,
    pub verdict: Steepness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub checks: Vec<MinimalityCheck>,
}

impl MinimalityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict.steeper_or_mutually())
    }
}

/// Compare each terrace wave against candidate waves between the same platforms.
///
/// `candidates` pairs a wave index with a competing profile.
pub fn check_minimality(terrace: &Terrace, candidates: &[(usize, WaveProfile)], tol: f64) -> Result<MinimalityReport> {
    let mut checks = Vec::new();
    for (ci, (i, cand)) in candidates.iter().enumerate() {
        let wave = terrace
            .waves
            .get(*i)
            .ok_or_else(|| LabError::Precondition(format!("candidate refers to missing wave {i}")))?;
        for &tau in &wave.tau {
            let verdict = is_steeper(&wave.frame_field(tau), &cand.frame_field(tau), tol)?;
            checks.push(MinimalityCheck { wave: *i, candidate: ci, tau, verdict });
        }
    }
    Ok(MinimalityReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::Family;
    use crate::periodic::{classify_stability, find_periodic_solutions, OdeConfig};

    fn bistable_terrace(a: f64, t_end: f64) -> (NonlinearitySpec, TerraceRun, Vec<PeriodicSolution>) {
        let spec = NonlinearitySpec::bistable(a, 1.0).unwrap();
        let ladder = find_periodic_solutions(&spec, 0.0, 1.0, 32, &OdeConfig::default()).unwrap();
        let grid = Grid::with_spacing(-60.0, 110.0, 0.1).unwrap();
        let params = SimParams::new(0.02, t_end);
        let run = extract_terrace(&spec, &ladder, &grid, &params, &TerraceConfig::default()).unwrap();
        (spec, run, ladder)
    }

    #[test]
    fn single_bistable_wave() {
        let (spec, run, ladder) = bistable_terrace(0.25, 120.0);
        let t = &run.terrace;
        assert_eq!(t.n(), 1, "{:?}", t.log);
        assert!((t.platforms[0].q0() - 1.0).abs() < 1e-8 && t.platforms[1].q0().abs() < 1e-8);
        let c = 0.5 / 2f64.sqrt();
        assert!((t.waves[0].speed - c).abs() < 0.01 * c);
        assert!(t.waves[0].anchor.defect < 1e-3);
        assert!(t.waves[0].tail_defect() < 1e-6);
        assert!(t.waves[0].is_monotone(1e-10));

        let cfg = TerraceConfig::default();
        let shifts = fit_shift_functions(&run.trajectory, t, &cfg);
        assert!(shifts[0].limit.is_some(), "tail variation {}", shifts[0].tail_variation);
        assert!(shifts[0].sublinear_ratio() < 0.02);
        let series = residual_series(&run.trajectory, t, &shifts, 10.0).unwrap();
        assert!(series.last().unwrap().1 < 1e-3);

        let cfg_ode = OdeConfig::default();
        let records: Vec<_> = t.platforms.iter().map(|p| classify_stability(&spec, p, &ladder, &cfg_ode)).collect();
        let report = check_terrace_structure(t, &records, cfg.speed_zero_tol, true).unwrap();
        assert!(report.all_pass(), "{report:?}");
        assert_eq!(report.clauses.len(), 3);

        // The wave against itself shifted, and against a flattened copy.
        let mut shifted = t.waves[0].clone();
        shifted.xi_min += 7.0 * shifted.dxi;
        shifted.interp = OnceLock::new();
        let mut flat = t.waves[0].clone();
        flat.dxi *= 1.5;
        flat.xi_min *= 1.5;
        flat.interp = OnceLock::new();
        let rep = check_minimality(t, &[(0, shifted), (0, flat)], 1e-6).unwrap();
        assert!(rep.all_pass());
        assert_eq!(rep.checks[0].verdict, Steepness::Mutually);
        assert_eq!(rep.checks[1].verdict, Steepness::Steeper);
    }

    #[test]
    fn exact_ansatz_has_interpolation_residual() {
        let (_, run, _) = bistable_terrace(0.3, 40.0);
        let t = &run.terrace;
        let g = Grid::with_spacing(-50.0, 50.0, 0.05).unwrap();
        let field = Field::from_fn(g, 7.0, |x| ansatz(t, 7.0, x, &[1.25]));
        assert!(terrace_residual(&field, t, &[1.25], 0.0).unwrap() < 1e-12);
        assert!(terrace_residual(&field, t, &[1.25, 0.0], 0.0).is_err());
    }

    #[test]
    fn synthetic_translated_wave_has_constant_shift() {
        let (spec, run, _) = bistable_terrace(0.25, 60.0);
        let wave = &run.terrace.waves[0];
        // Trajectory whose period snapshots are the exact travelling wave shifted by 3.
        let g = Grid::with_spacing(-40.0, 80.0, 0.1).unwrap();
        let snapshots: Vec<Field> = (0..30).map(|k| {
            let t = k as f64;
            Field::from_fn(g, t, |x| wave.eval(t, x - 3.0))
        }).collect();
        let period_index = (0..30).map(|k| (k, k)).collect();
        let traj = Trajectory { spec, bc: BoundaryPolicy::default(), dt: 0.02, snapshots, period_index };
        let shifts = fit_shift_functions(&traj, &run.terrace, &TerraceConfig::default());
        let s = &shifts[0].series;
        assert!(s.iter().all(|&(_, e)| (e - s[0].1).abs() < 1e-3), "{s:?}");
        assert!((s[0].1 - 3.0).abs() < 1e-2);
    }

    #[test]
    fn exponential_rate_of_synthetic_series() {
        let series: Vec<(f64, f64)> = (0..100).map(|k| (k as f64, 3.0 * (-0.5 * k as f64).exp())).collect();
        let fit = exponential_rate(&series, 0.0).unwrap();
        assert!((fit.nu - 0.5).abs() < 1e-10 && fit.r2 > 1.0 - 1e-12 && !fit.non_exponential);

        let floored: Vec<(f64, f64)> = (0..100).map(|k| (k as f64, 3.0 * (-0.5 * k as f64).exp() + 1e-9)).collect();
        let fit = exponential_rate(&floored, 0.0).unwrap();
        assert!(fit.floor_truncated && (fit.nu - 0.5).abs() < 0.01, "{fit:?}");

        let algebraic: Vec<(f64, f64)> = (1..200).map(|k| (k as f64, 1.0 / k as f64)).collect();
        assert!(exponential_rate(&algebraic, 0.3).unwrap().non_exponential);
        assert!(exponential_rate(&series[..5], 0.0).is_err());
    }

    #[test]
    fn region_partition() {
        let r = RegionPartition::new(&[0.2, 0.6], None).unwrap();
        assert_eq!(r.cbar, vec![-0.8, 0.4, 1.6]);
        assert!((r.varrho - 0.05).abs() < 1e-12);
        assert!(RegionPartition::new(&[0.2, 0.6], Some(0.06)).is_err());
        assert!(RegionPartition::new(&[0.6, 0.2], None).is_err());
    }

    #[test]
    fn budget_exhaustion_is_partial() {
        let spec = NonlinearitySpec::new(Family::Kpp { rate: 1.0 }, 1.0).unwrap();
        let ladder = find_periodic_solutions(&spec, 0.0, 1.0, 32, &OdeConfig::default()).unwrap();
        let grid = Grid::with_spacing(-20.0, 60.0, 0.2).unwrap();
        let cfg = TerraceConfig { alpha_budget: 1, ..TerraceConfig::default() };
        let err = extract_terrace(&spec, &ladder, &grid, &SimParams::new(0.05, 8.0), &cfg).unwrap_err();
        assert!(matches!(err, LabError::PartialTerrace { stages: 0, .. }), "{err}");
    }
}
