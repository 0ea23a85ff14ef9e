//! Finite-difference IMEX integration of `u_t = u_xx + f(t, u)` on a truncated
//! interval.
//!
//! One step is a Strang splitting: half a step of explicit-midpoint reaction,
//! a full backward-Euler diffusion step (tridiagonal solve), and another half
//! step of reaction. Backward Euler is an M-matrix solve, so the scheme keeps
//! the discrete comparison principle whenever the reaction substep is monotone
//! (see [`monotone_dt`]).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::nonlinearity::NonlinearitySpec;
use crate::ode::BLOWUP;

/// Magnitudes below this are set to zero after each step.
const TINY: f64 = 1e-200;

/// Uniform grid on `[xmin, xmax]` with `n_x` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub xmin: f64,
    pub xmax: f64,
    pub n_x: usize,
}

impl Grid {
    pub fn new(xmin: f64, xmax: f64, n_x: usize) -> Result<Self> {
        if n_x < 16 {
            return Err(LabError::InvalidSpec(format!("grid needs at least 16 points, got {n_x}")));
        }
        if !(xmin.is_finite() && xmax.is_finite() && xmax > xmin) {
            return Err(LabError::InvalidSpec(format!("bad grid bounds [{xmin}, {xmax}]")));
        }
        Ok(Self { xmin, xmax, n_x })
    }

    /// Grid with spacing `dx` (rounded so that `xmax` is a node).
    pub fn with_spacing(xmin: f64, xmax: f64, dx: f64) -> Result<Self> {
        let cells = ((xmax - xmin) / dx).round() as usize;
        Self::new(xmin, xmax, cells + 1)
    }

    pub fn dx(&self) -> f64 {
        (self.xmax - self.xmin) / (self.n_x - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.xmin + i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let s = ((x - self.xmin) / self.dx()).round();
        s.clamp(0.0, (self.n_x - 1) as f64) as usize
    }

    /// The same grid translated by `m` whole cells.
    pub fn shifted(&self, m: i64) -> Self {
        let d = m as f64 * self.dx();
        Self { xmin: self.xmin + d, xmax: self.xmax + d, n_x: self.n_x }
    }
}

/// State `u(t, ·)` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: Grid,
    pub t: f64,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, t: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_x {
            return Err(LabError::GridMismatch(format!("{} values for {} nodes", values.len(), grid.n_x)));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::BlowUp { index: i, time: t });
        }
        Ok(Self { grid, t, values })
    }

    pub fn constant(grid: Grid, t: f64, value: f64) -> Self {
        Self { grid, t, values: vec![value; grid.n_x] }
    }

    pub fn from_fn(grid: Grid, t: f64, f: impl Fn(f64) -> f64) -> Self {
        Self { grid, t, values: grid.xs().into_iter().map(f).collect() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Non-increasing in `x` up to `tol`.
    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// Translate by `m` cells to the right, padding with the end values.
    pub fn translated(&self, m: i64) -> Self {
        let n = self.values.len() as i64;
        let values = (0..n).map(|i| self.values[(i - m).clamp(0, n - 1) as usize]).collect();
        Self { grid: self.grid, t: self.t, values }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,u")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.17e},{v:.17e}", self.grid.x(i))?;
        }
        Ok(())
    }
}

/// Treatment of one end of the truncated interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// The end node follows the spatially homogeneous ODE from its current value.
    Track,
    /// The end node is held at a constant.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPolicy {
    pub left: Boundary,
    pub right: Boundary,
}

impl Default for BoundaryPolicy {
    /// Left end tracks the upper state, right end pinned to 0.
    fn default() -> Self {
        Self { left: Boundary::Track, right: Boundary::Fixed(0.0) }
    }
}

impl BoundaryPolicy {
    pub fn tracking() -> Self {
        Self { left: Boundary::Track, right: Boundary::Track }
    }
}

/// Warning text when a jump at `a` is outside or close to the grid ends.
pub fn jump_warning(grid: &Grid, a: f64) -> Option<String> {
    let margin = 10.0 * grid.dx();
    if a < grid.xmin || a > grid.xmax {
        Some(format!("jump {a} outside grid [{}, {}]", grid.xmin, grid.xmax))
    } else if a - grid.xmin < margin || grid.xmax - a < margin {
        Some(format!("jump {a} within 10 cells of a grid end"))
    } else {
        None
    }
}

/// `p0` for `x ≤ a`, 0 beyond, with the jump snapped to the nearest node.
pub fn heaviside_ic(grid: &Grid, a: f64, p0: f64) -> Field {
    let values = if a < grid.xmin - 0.5 * grid.dx() {
        vec![0.0; grid.n_x]
    } else {
        let j = grid.nearest(a);
        (0..grid.n_x).map(|i| if i <= j { p0 } else { 0.0 }).collect()
    };
    Field { grid: *grid, t: 0.0, values }
}

/// [`heaviside_ic`] that fails on a boundary warning when `strict` is set.
pub fn heaviside_ic_checked(grid: &Grid, a: f64, p0: f64, strict: bool) -> Result<(Field, Option<String>)> {
    let warning = jump_warning(grid, a);
    match warning {
        Some(w) if strict => Err(LabError::Precondition(w)),
        _ => Ok((heaviside_ic(grid, a, p0), warning)),
    }
}

/// Profile between the two jump locations of a sandwiched initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    LinearRamp,
    /// Linear ramp plus a Gaussian bump of height `amplitude·p0` centred at
    /// relative position `center ∈ (0,1)` with relative width `width`.
    RampBump { amplitude: f64, center: f64, width: f64 },
    /// Values sampled uniformly on `[a_minus, a_plus]`, linearly interpolated.
    Samples { values: Vec<f64> },
    /// Front-like data that need not take the values `p0` and 0 at the ends:
    /// `left` on `(−∞, a_minus]`, `right` on `[a_plus, ∞)`, a smooth blend in
    /// between plus a `sin²` bump of height `bump` on the left half, peaking at
    /// the first quarter point.
    /// Not clipped.
    GeneralH3 { left: f64, right: f64, bump: f64 },
}

pub fn sandwich_ic(grid: &Grid, a_minus: f64, a_plus: f64, p0: f64, shape: &Shape) -> Result<Field> {
    if !(a_minus < a_plus) {
        return Err(LabError::Precondition(format!("need a_minus < a_plus, got {a_minus} ≥ {a_plus}")));
    }
    let width = a_plus - a_minus;
    let inner = |s: f64| -> f64 {
        match shape {
            Shape::LinearRamp => p0 * (1.0 - s),
            Shape::RampBump { amplitude, center, width } => {
                p0 * (1.0 - s) + amplitude * p0 * (-((s - center) / width).powi(2)).exp()
            }
            Shape::Samples { values } => {
                if values.is_empty() {
                    return p0 * (1.0 - s);
                }
                if values.len() == 1 {
                    return values[0];
                }
                crate::interp::linear(0.0, 1.0 / (values.len() - 1) as f64, values, s)
            }
            Shape::GeneralH3 { .. } => unreachable!(),
        }
    };
    let values = grid
        .xs()
        .into_iter()
        .map(|x| {
            if let Shape::GeneralH3 { left, right, bump } = shape {
                let s = ((x - a_minus) / width).clamp(0.0, 1.0);
                let blend = 0.5 * (1.0 + (std::f64::consts::PI * s).cos());
                let b = if s < 0.5 { bump * (2.0 * std::f64::consts::PI * s).sin().powi(2) } else { 0.0 };
                return right + (left - right) * blend + b;
            }
            if x <= a_minus {
                p0
            } else if x >= a_plus {
                0.0
            } else {
                inner((x - a_minus) / width).clamp(0.0, p0)
            }
        })
        .collect();
    Ok(Field { grid: *grid, t: 0.0, values })
}

/// Largest step `≤ dt` that divides `T` and keeps the reaction substep
/// monotone for states in `[u_lo, u_hi]`.
pub fn monotone_dt(spec: &NonlinearitySpec, u_lo: f64, u_hi: f64, dt: f64) -> f64 {
    let lip = spec.sup_abs_du(u_lo, u_hi, 400);
    let cap = if lip > 0.0 { dt.min(0.5 / lip) } else { dt };
    let period = spec.period();
    period / (period / cap).ceil()
}

/// Precomputed backward-Euler diffusion solver for a fixed grid and step.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    spec: &'a NonlinearitySpec,
    bc: BoundaryPolicy,
    dt: f64,
    r: f64,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a NonlinearitySpec, grid: &Grid, dt: f64, bc: BoundaryPolicy) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(LabError::InvalidSpec(format!("dt must be positive, got {dt}")));
        }
        let r = dt / (grid.dx() * grid.dx());
        let m = grid.n_x - 2;
        let b = 1.0 + 2.0 * r;
        let mut c_prime = vec![0.0; m];
        let mut inv_denom = vec![0.0; m];
        for i in 0..m {
            let denom = if i == 0 { b } else { b + r * c_prime[i - 1] };
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = -r * inv_denom[i];
        }
        Ok(Self { spec, bc, dt, r, c_prime, inv_denom, scratch: vec![0.0; m] })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn react(&self, u: &mut [f64], t: f64, h: f64) {
        let n = u.len();
        let lo = if matches!(self.bc.left, Boundary::Track) { 0 } else { 1 };
        let hi = if matches!(self.bc.right, Boundary::Track) { n } else { n - 1 };
        let f0 = self.spec.frozen(t);
        let fm = self.spec.frozen(t + 0.5 * h);
        for v in &mut u[lo..hi] {
            let k1 = f0.eval(*v);
            *v += h * fm.eval(*v + 0.5 * h * k1);
        }
    }

    fn diffuse(&mut self, u: &mut [f64]) {
        let n = u.len();
        let m = n - 2;
        let r = self.r;
        let d = &mut self.scratch;
        // Both sweeps are order preserving, and so is flushing tiny values.
        let flush = |v: f64| if v.abs() < TINY { 0.0 } else { v };
        let (u_left, u_right) = (u[0], u[n - 1]);
        let inv = &self.inv_denom[..m];
        let rhs = &mut u[1..=m];
        rhs[0] += r * u_left;
        rhs[m - 1] += r * u_right;
        let mut prev = 0.0;
        for ((di, &bi), &wi) in d.iter_mut().zip(rhs.iter()).zip(inv) {
            prev = flush((bi + r * prev) * wi);
            *di = prev;
        }
        let mut next = 0.0;
        for ((ui, &di), &ci) in rhs.iter_mut().zip(d.iter()).zip(&self.c_prime[..m]).rev() {
            next = flush(di - ci * next);
            *ui = next;
        }
    }

    /// Advance `u` in place from `t` to `t + dt`.
    pub fn advance(&mut self, u: &mut [f64], t: f64) -> Result<()> {
        let h = 0.5 * self.dt;
        if let Boundary::Fixed(v) = self.bc.left {
            u[0] = v;
        }
        if let Boundary::Fixed(v) = self.bc.right {
            let n = u.len();
            u[n - 1] = v;
        }
        self.react(u, t, h);
        self.diffuse(u);
        self.react(u, t + h, h);
        let mut bad = None;
        for (i, v) in u.iter_mut().enumerate() {
            // Flushing far tails to zero keeps subnormal arithmetic out of the
            // hot loop; the map is monotone so comparison is unaffected.
            if v.abs() < TINY {
                *v = 0.0;
            } else if !v.is_finite() || v.abs() > BLOWUP {
                bad.get_or_insert(i);
            }
        }
        match bad {
            Some(index) => Err(LabError::BlowUp { index, time: t + self.dt }),
            None => Ok(()),
        }
    }
}

/// One IMEX step of `field`.
pub fn step(field: &Field, spec: &NonlinearitySpec, dt: f64, bc: BoundaryPolicy) -> Result<Field> {
    let mut stepper = Stepper::new(spec, &field.grid, dt, bc)?;
    let mut out = field.clone();
    stepper.advance(&mut out.values, field.t)?;
    out.t = field.t + dt;
    Ok(out)
}

/// Grid shifting that keeps the rightmost front away from the right end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingWindow {
    /// Minimum distance between the rightmost disturbed node and `xmax`.
    pub margin: f64,
    /// A node is disturbed when it differs from the right end value by more than this.
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub dt: f64,
    pub t_end: f64,
    /// Store every `snapshot_stride`-th step (0 stores period snapshots only).
    pub snapshot_stride: usize,
    /// Restrict stride snapshots to the final `stride_window` time units.
    pub stride_window: Option<f64>,
    pub moving_window: Option<MovingWindow>,
}

impl SimParams {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self { dt, t_end, snapshot_stride: 0, stride_window: None, moving_window: None }
    }

    pub fn with_stride(mut self, stride: usize, window: Option<f64>) -> Self {
        self.snapshot_stride = stride;
        self.stride_window = window;
        self
    }
}

/// Steps per period, or an error if `dt` does not divide `T`.
pub fn steps_per_period(period: f64, dt: f64) -> Result<usize> {
    let m = (period / dt).round();
    if m < 1.0 || (m * dt - period).abs() > 1e-9 * period {
        return Err(LabError::Precondition(format!("dt = {dt} does not divide the period {period}")));
    }
    Ok(m as usize)
}

/// A stored run: snapshots in time order, with the `t = kT` subset indexed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub spec: NonlinearitySpec,
    pub bc: BoundaryPolicy,
    pub dt: f64,
    pub snapshots: Vec<Field>,
    /// `(k, index into snapshots)` for every snapshot at `t = kT`.
    pub period_index: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn period(&self) -> f64 {
        self.spec.period()
    }

    pub fn grid(&self) -> Grid {
        self.snapshots[0].grid
    }

    pub fn last(&self) -> &Field {
        self.snapshots.last().expect("trajectory has snapshots")
    }

    pub fn period_snapshots(&self) -> impl Iterator<Item = (usize, &Field)> + '_ {
        self.period_index.iter().map(move |&(k, i)| (k, &self.snapshots[i]))
    }

    pub fn n_periods(&self) -> usize {
        self.period_index.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|f| f.t).collect()
    }

    /// Snapshots with `kT ≤ t ≤ (k+1)T`, in time order.
    pub fn period_window(&self, k: usize) -> Vec<&Field> {
        let period = self.period();
        let (lo, hi) = (k as f64 * period, (k + 1) as f64 * period);
        let slack = 1e-9 * period;
        self.snapshots.iter().filter(|f| f.t >= lo - slack && f.t <= hi + slack).collect()
    }

    /// Write one CSV per snapshot plus `index.json`; returns the files written.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.snapshots.len() + 1);
        let mut entries = Vec::with_capacity(self.snapshots.len());
        for (i, f) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{i:06}.csv");
            let path = dir.join(&name);
            f.write_csv(BufWriter::new(File::create(&path)?))?;
            let k = self.period_index.iter().find(|&&(_, j)| j == i).map(|&(k, _)| k);
            entries.push(SnapshotEntry { index: i, t: f.t, period: k, xmin: f.grid.xmin, file: name });
            files.push(path);
        }
        let index = TrajectoryIndex {
            spec: self.spec.clone(),
            grid: self.grid(),
            bc: self.bc,
            dt: self.dt,
            snapshots: entries,
        };
        let path = dir.join("index.json");
        serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &index)?;
        files.push(path);
        Ok(files)
    }

    /// Columnar dump: `TRL1`, then `n_x` and `n_snapshots` as little-endian
    /// u64, then `dx`, then per snapshot `t`, `xmin` and the `n_x` values, all
    /// little-endian f64.
    pub fn write_columnar<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(b"TRL1")?;
        w.write_all(&(self.grid().n_x as u64).to_le_bytes())?;
        w.write_all(&(self.snapshots.len() as u64).to_le_bytes())?;
        w.write_all(&self.grid().dx().to_le_bytes())?;
        for f in &self.snapshots {
            w.write_all(&f.t.to_le_bytes())?;
            w.write_all(&f.grid.xmin.to_le_bytes())?;
            for v in &f.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotEntry {
    index: usize,
    t: f64,
    period: Option<usize>,
    xmin: f64,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectoryIndex {
    spec: NonlinearitySpec,
    grid: Grid,
    bc: BoundaryPolicy,
    dt: f64,
    snapshots: Vec<SnapshotEntry>,
}

/// Read back a columnar dump as a list of fields.
pub fn read_columnar(path: &Path) -> Result<Vec<Field>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"TRL1" {
        return Err(LabError::InvalidSpec("not a TRL1 dump".into()));
    }
    let mut b8 = [0u8; 8];
    let mut u64_ = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let n_x = u64_(&mut r)? as usize;
    let n_s = u64_(&mut r)? as usize;
    let dx = f64::from_bits(u64_(&mut r)?);
    let mut out = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        let t = f64::from_bits(u64_(&mut r)?);
        let xmin = f64::from_bits(u64_(&mut r)?);
        let mut values = Vec::with_capacity(n_x);
        for _ in 0..n_x {
            values.push(f64::from_bits(u64_(&mut r)?));
        }
        let grid = Grid { xmin, xmax: xmin + dx * (n_x - 1) as f64, n_x };
        out.push(Field { grid, t, values });
    }
    Ok(out)
}

/// Run from `ic` (whose time must be a multiple of `T`) to `t_end`.
pub fn simulate(spec: &NonlinearitySpec, ic: &Field, bc: BoundaryPolicy, params: &SimParams) -> Result<Trajectory> {
    let period = spec.period();
    let dt = params.dt;
    let m = steps_per_period(period, dt)?;
    let k0 = (ic.t / period).round();
    if (k0 * period - ic.t).abs() > 1e-9 * period {
        return Err(LabError::Precondition(format!("initial time {} is not a multiple of T", ic.t)));
    }
    if !(params.t_end > ic.t) {
        return Err(LabError::Precondition(format!("t_end {} must exceed the initial time {}", params.t_end, ic.t)));
    }
    let k0 = k0 as usize;
    let t0 = ic.t;
    let n_end = ((params.t_end - t0) / dt).round() as usize;
    let stride_from = params.stride_window.map_or(0.0, |w| params.t_end - w);

    let mut grid = ic.grid;
    let mut stepper = Stepper::new(spec, &grid, dt, bc)?;
    let mut u = ic.values.clone();
    let mut snapshots = vec![ic.clone()];
    let mut period_index = vec![(k0, 0)];
    for n in 1..=n_end {
        let t_prev = t0 + (n - 1) as f64 * dt;
        stepper.advance(&mut u, t_prev)?;
        let t = t0 + n as f64 * dt;
        let at_period = n % m == 0;
        if at_period {
            if let Some(mw) = params.moving_window {
                grid = shift_window(&mut u, grid, &mw);
            }
        }
        let at_stride = params.snapshot_stride > 0 && n % params.snapshot_stride == 0 && t >= stride_from - 1e-9 * dt;
        if at_period || at_stride || n == n_end {
            if at_period {
                period_index.push((k0 + n / m, snapshots.len()));
            }
            snapshots.push(Field { grid, t, values: u.clone() });
        }
    }
    Ok(Trajectory { spec: spec.clone(), bc, dt, snapshots, period_index })
}

fn shift_window(u: &mut [f64], grid: Grid, mw: &MovingWindow) -> Grid {
    let n = u.len();
    let right = u[n - 1];
    let Some(last) = (0..n).rev().find(|&i| (u[i] - right).abs() > mw.level) else {
        return grid;
    };
    let gap = grid.xmax - grid.x(last);
    if gap >= mw.margin {
        return grid;
    }
    let m = ((2.0 * mw.margin - gap) / grid.dx()).ceil() as usize;
    let m = m.min(n - 1);
    u.copy_within(m.., 0);
    for v in &mut u[n - m..] {
        *v = right;
    }
    grid.shifted(m as i64)
}
