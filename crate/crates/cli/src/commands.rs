//! Subcommand pipelines. Each returns a [`Report`]; the manifest is written
//! whether or not the pipeline completes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use terrace_lab::front::{estimate_speed, default_burn_in, is_steeper, spreading_bracket, track_levels, zero_number_series, Steepness};
use terrace_lab::pde::{heaviside_ic, sandwich_ic, simulate, BoundaryPolicy, Field, Grid, Shape, SimParams, Trajectory};
use terrace_lab::periodic::{
    classify_stability, find_periodic_solutions, PeriodicSolution, SolutionKind, StabilityRecord,
};
use terrace_lab::supersub::{
    check_comparison, flattening_super, front_like_bounds, search_eps0, Bound, CheckOptions,
};
use terrace_lab::terrace::{
    check_minimality, check_terrace_structure, exponential_rate, extract_from_run, fit_shift_functions,
    residual_series, Terrace,
};
use terrace_lab::{LabError, NonlinearitySpec};

use crate::config::{terrace_key, InitialConfig, ScenarioConfig, SnapshotFormat};
use crate::error::{CliError, CliResult};
use crate::manifest::{unix_now, CheckOutcome, Outputs, Relation, RunManifest, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ode,
    Simulate,
    Terrace,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ode => "ode",
            Command::Simulate => "simulate",
            Command::Terrace => "terrace",
            Command::Verify => "verify",
        }
    }
}

/// Settings shared by all scenarios of one invocation.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub strict: bool,
    /// Directory for cached terraces.
    pub cache: Option<PathBuf>,
}

impl Context {
    pub fn from_env(strict: bool) -> Self {
        let cache = std::env::var_os("TERRACE_LAB_CACHE").filter(|v| !v.is_empty()).map(PathBuf::from);
        Self { strict, cache }
    }
}

#[derive(Debug)]
pub struct Report {
    pub scenario: String,
    pub command: Command,
    pub out_dir: PathBuf,
    pub lines: Vec<String>,
    pub checks: Vec<CheckOutcome>,
    pub error: Option<CliError>,
}

impl Report {
    /// 0 on success, 1 on failed checks (and unmet hypotheses under `strict`),
    /// otherwise the error's code.
    pub fn exit_code(&self, strict: bool) -> i32 {
        if let Some(e) = &self.error {
            return e.exit_code();
        }
        let failed = self
            .checks
            .iter()
            .any(|c| c.status == Status::Fail || (strict && c.status == Status::HypothesesUnmet));
        i32::from(failed)
    }

    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| c.status == Status::Fail).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Periodic solutions, their stability, and everything derived from the config.
pub struct Prepared<'a> {
    pub cfg: &'a ScenarioConfig,
    pub spec: NonlinearitySpec,
    pub grid: Grid,
    pub params: SimParams,
    pub solutions: Vec<PeriodicSolution>,
    pub records: Vec<StabilityRecord>,
    /// Index of the upper state `p` in `solutions`.
    pub top: usize,
}

impl<'a> Prepared<'a> {
    /// With `needs_top`, fails unless a positive upper state exists and the
    /// tracked levels lie below it.
    pub fn new(cfg: &'a ScenarioConfig, needs_top: bool) -> CliResult<Self> {
        let spec = cfg.nonlinearity.clone();
        let grid = cfg.grid()?;
        let ps = cfg.platforms;
        let solutions = find_periodic_solutions(&spec, ps.lo, ps.hi, ps.n_seed, &cfg.ode)?;
        if solutions.is_empty() {
            return Err(CliError::config(format!("no periodic solutions with q(0) in [{}, {}]", ps.lo, ps.hi)));
        }
        let records: Vec<StabilityRecord> =
            solutions.iter().map(|q| classify_stability(&spec, q, &solutions, &cfg.ode)).collect();
        let top = records.iter().rposition(|r| r.linearly_stable()).unwrap_or(solutions.len() - 1);
        let p0 = solutions[top].q0();
        if !needs_top {
            return Ok(Self { cfg, spec, grid, params: cfg.sim_params(), solutions, records, top });
        }
        if !(p0 > 0.0) {
            return Err(CliError::config(format!("no positive upper state found (top q(0) = {p0})")));
        }
        for &l in &cfg.analysis.levels {
            if !(l > 0.0 && l < p0) {
                return Err(CliError::config(format!("level {l} outside (0, p(0)) = (0, {p0})")));
            }
        }
        Ok(Self { cfg, spec, grid, params: cfg.sim_params(), solutions, records, top })
    }

    pub fn p0(&self) -> f64 {
        self.solutions[self.top].q0()
    }

    pub fn top_solution(&self) -> &PeriodicSolution {
        &self.solutions[self.top]
    }

    /// Periodic solutions from `0` up to `p`.
    pub fn ladder(&self) -> CliResult<Vec<PeriodicSolution>> {
        let ladder = self.solutions[..=self.top].to_vec();
        if ladder[0].bottom0().abs() > self.cfg.terrace.snap_tol {
            return Err(CliError::config("the zero solution was not found; lower platforms.lo"));
        }
        if ladder.len() < 2 {
            return Err(CliError::config("need at least the states 0 and p"));
        }
        Ok(ladder)
    }

    fn record_near(&self, value: f64) -> StabilityRecord {
        let j = self
            .solutions
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.q0() - value).abs().total_cmp(&(b.1.q0() - value).abs()))
            .map_or(0, |(j, _)| j);
        self.records[j]
    }

    fn zero_record(&self) -> StabilityRecord {
        self.record_near(0.0)
    }

    fn boundary(&self) -> BoundaryPolicy {
        match self.cfg.initial {
            InitialConfig::H1 { .. } => BoundaryPolicy::default(),
            _ => BoundaryPolicy::tracking(),
        }
    }

    /// The configured initial data; front-like data are checked against the basins.
    pub fn initial_field(&self) -> CliResult<Field> {
        let u0 = self.cfg.initial.build(&self.grid, self.p0(), self.cfg.seed)?;
        if let InitialConfig::H3 { .. } = self.cfg.initial {
            front_like_bounds(&u0, &self.spec, self.top_solution(), &self.cfg.ode).map_err(|e| match e {
                LabError::Precondition(m) => CliError::config(format!("initial data are not front-like: {m}")),
                other => other.into(),
            })?;
        }
        Ok(u0)
    }

    fn run(&self, u0: &Field) -> CliResult<Trajectory> {
        Ok(simulate(&self.spec, u0, self.boundary(), &self.params)?)
    }

    fn heaviside_run(&self, a: f64) -> CliResult<Trajectory> {
        Ok(simulate(&self.spec, &heaviside_ic(&self.grid, a, self.p0()), self.boundary(), &self.params)?)
    }

    /// Reasons why `0` or `p` fails to be linearly stable.
    fn stability_hypotheses(&self) -> Option<String> {
        let zero = self.zero_record();
        let top = self.records[self.top];
        let mut reasons = Vec::new();
        if !zero.linearly_stable() {
            reasons.push(format!("0 is not linearly stable (mu = {:.6})", zero.mu));
        }
        if !top.linearly_stable() {
            reasons.push(format!("p is not linearly stable (mu = {:.6})", top.mu));
        }
        (!reasons.is_empty()).then(|| reasons.join("; "))
    }
}

struct Session<'a> {
    prep: &'a Prepared<'a>,
    ctx: &'a Context,
    out: Outputs,
    lines: Vec<String>,
    checks: Vec<CheckOutcome>,
}

/// Run one subcommand for one scenario, writing outputs under `out_dir`.
pub fn run_command(cmd: Command, cfg: &ScenarioConfig, config_hash: &str, out_dir: &Path, ctx: &Context) -> Report {
    let started = unix_now();
    let mut report = Report {
        scenario: cfg.name.clone(),
        command: cmd,
        out_dir: out_dir.to_path_buf(),
        lines: Vec::new(),
        checks: Vec::new(),
        error: None,
    };
    let out = match Outputs::create(out_dir.to_path_buf()) {
        Ok(o) => o,
        Err(e) => {
            report.error = Some(e);
            return report;
        }
    };
    let prep = match Prepared::new(cfg, cmd != Command::Ode) {
        Ok(p) => p,
        Err(e) => {
            report.error = Some(e);
            finish(&mut report, out, config_hash, started);
            return report;
        }
    };
    let mut s = Session { prep: &prep, ctx, out, lines: Vec::new(), checks: Vec::new() };
    let result = match cmd {
        Command::Ode => cmd_ode(&mut s),
        Command::Simulate => cmd_simulate(&mut s).map(|_| ()),
        Command::Terrace => cmd_terrace(&mut s),
        Command::Verify => cmd_verify(&mut s),
    };
    report.lines = std::mem::take(&mut s.lines);
    report.checks = std::mem::take(&mut s.checks);
    report.error = result.err();
    finish(&mut report, s.out, config_hash, started);
    report
}

fn finish(report: &mut Report, out: Outputs, config_hash: &str, started: u64) {
    let manifest = out.inventory().map(|files| RunManifest {
        scenario: report.scenario.clone(),
        command: report.command.name().into(),
        config_hash: config_hash.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: unix_now(),
        files,
        checks: report.checks.clone(),
        error: report.error.as_ref().map(|e| e.to_string()),
    });
    if let Err(e) = manifest.and_then(|m| m.write(&out.dir)) {
        report.error.get_or_insert(e);
    }
}

fn write_series(w: impl Write, header: &str, rows: &[(f64, f64)]) -> CliResult<()> {
    let mut w = w;
    writeln!(w, "{header}")?;
    for (a, b) in rows {
        writeln!(w, "{a},{b}")?;
    }
    w.flush()?;
    Ok(())
}

fn boolean(name: &str, pass: bool, detail: impl Into<String>) -> CheckOutcome {
    CheckOutcome::compare(name, if pass { 1.0 } else { 0.0 }, Relation::Ge, 1.0).with_detail(detail)
}

// ---------------------------------------------------------------------------
// ode

#[derive(Serialize)]
struct OdeEntry {
    index: usize,
    q0: f64,
    kind: SolutionKind,
    #[serde(flatten)]
    record: StabilityRecord,
    linearly_stable: bool,
    file: String,
}

fn cmd_ode(s: &mut Session) -> CliResult<()> {
    let prep = s.prep;
    let mut entries = Vec::new();
    s.lines.push(format!("{:>3}  {:>12}  {:>10}  {:>12}  {}", "i", "q(0)", "stability", "mu", "kind"));
    for (i, (q, r)) in prep.solutions.iter().zip(&prep.records).enumerate() {
        let file = format!("periodic_{i}.csv");
        s.out.write_with(&file, |w| Ok(q.write_csv(w)?))?;
        let kind = match q.kind {
            SolutionKind::Point => "point".to_string(),
            SolutionKind::IntervalOfEquilibria { lo, hi } => format!("plateau [{lo:.6}, {hi:.6}]"),
        };
        let stab = if r.mu.abs() < 1e-12 {
            "neutral"
        } else if r.linearly_stable() {
            "stable"
        } else {
            "unstable"
        };
        s.lines.push(format!("{i:>3}  {:>12.8}  {stab:>10}  {:>12.6}  {kind}", q.q0(), r.mu));
        entries.push(OdeEntry { index: i, q0: q.q0(), kind: q.kind, record: *r, linearly_stable: r.linearly_stable(), file });
    }
    s.out.write_json("ode.json", &serde_json::json!({ "top": prep.top, "solutions": entries }))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Serialize)]
struct LevelSpeed {
    level: f64,
    c: Option<f64>,
    stderr: Option<f64>,
    truncated: bool,
    note: Option<String>,
}

fn level_speeds(s: &mut Session, traj: &Trajectory, levels: &[f64]) -> CliResult<Vec<LevelSpeed>> {
    let mut speeds = Vec::new();
    for (j, track) in track_levels(traj, levels).into_iter().enumerate() {
        s.out.write_with(&format!("level_{j}.csv"), |w| Ok(track.write_csv(w)?))?;
        let entry = match estimate_speed(&track, traj.period(), default_burn_in(&track)) {
            Ok(e) => {
                s.lines.push(format!("level {:.6}: c = {:.6} ± {:.2e}", track.alpha, e.c, e.stderr));
                LevelSpeed { level: track.alpha, c: Some(e.c), stderr: Some(e.stderr), truncated: track.truncated, note: None }
            }
            Err(err) => {
                s.lines.push(format!("level {:.6}: no speed ({err})", track.alpha));
                LevelSpeed { level: track.alpha, c: None, stderr: None, truncated: track.truncated, note: Some(err.to_string()) }
            }
        };
        speeds.push(entry);
    }
    s.out.write_json("speeds.json", &speeds)?;
    Ok(speeds)
}

fn write_snapshots(s: &mut Session, traj: &Trajectory) -> CliResult<()> {
    let fmt = s.prep.cfg.output.snapshots;
    if matches!(fmt, SnapshotFormat::Csv | SnapshotFormat::Both) {
        for f in traj.write_dir(&s.out.path("snapshots"))? {
            s.out.add(f);
        }
    }
    if matches!(fmt, SnapshotFormat::Columnar | SnapshotFormat::Both) {
        s.out.write_with("trajectory.columnar", |w| Ok(traj.write_columnar(w)?))?;
    }
    Ok(())
}

fn cmd_simulate(s: &mut Session) -> CliResult<Trajectory> {
    let u0 = s.prep.initial_field()?;
    let traj = s.prep.run(&u0)?;
    s.lines.push(format!("simulated to t = {} ({} snapshots)", traj.last().t, traj.snapshots.len()));
    write_snapshots(s, &traj)?;
    let levels = s.prep.cfg.analysis.levels.clone();
    if !levels.is_empty() {
        level_speeds(s, &traj, &levels)?;
    }
    Ok(traj)
}

// ---------------------------------------------------------------------------
// terrace

fn cache_path(ctx: &Context, cfg: &ScenarioConfig) -> CliResult<Option<PathBuf>> {
    match &ctx.cache {
        Some(dir) => Ok(Some(dir.join(format!("terrace-{}.json", terrace_key(cfg)?)))),
        None => Ok(None),
    }
}

fn load_cached(path: &Path) -> Option<Terrace> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Terrace from the cache, from `heaviside` if given, or from a fresh run.
fn obtain_terrace(s: &mut Session, heaviside: Option<&Trajectory>) -> CliResult<Terrace> {
    let prep = s.prep;
    let cache = cache_path(s.ctx, prep.cfg)?;
    if let Some(t) = cache.as_deref().and_then(load_cached) {
        s.lines.push(format!("terrace loaded from cache ({} waves)", t.n()));
        return Ok(t);
    }
    let ladder = prep.ladder()?;
    let fresh;
    let traj = match heaviside {
        Some(t) => t,
        None => {
            fresh = simulate(
                &prep.spec,
                &heaviside_ic(&prep.grid, prep.cfg.terrace.jump, prep.p0()),
                BoundaryPolicy::default(),
                &prep.params,
            )?;
            &fresh
        }
    };
    let terrace = match extract_from_run(traj, &ladder, &prep.cfg.terrace) {
        Ok(t) => t,
        Err(LabError::PartialTerrace { stages, reason }) => {
            s.out.write_json("progress.json", &serde_json::json!({ "stages": stages, "reason": reason }))?;
            return Err(LabError::PartialTerrace { stages, reason }.into());
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = cache {
        // Write then rename so concurrent scenarios never read a partial file.
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, serde_json::to_vec(&terrace)?)?;
        std::fs::rename(&tmp, &path)?;
    }
    Ok(terrace)
}

fn write_terrace(s: &mut Session, terrace: &Terrace) -> CliResult<()> {
    let mut refs = Vec::new();
    for (i, w) in terrace.waves.iter().enumerate() {
        let name = format!("profile_{i}.csv");
        s.out.write_with(&name, |out| Ok(w.frame_field(0.0).write_csv(out)?))?;
        refs.push(name);
    }
    for (i, p) in terrace.platforms.iter().enumerate() {
        s.out.write_with(&format!("platform_{i}.csv"), |out| Ok(p.write_csv(out)?))?;
    }
    s.out.write_json("terrace.json", &terrace.document(&refs))?;
    s.out.write_json("terrace_full.json", terrace)?;
    for (i, w) in terrace.waves.iter().enumerate() {
        s.lines.push(format!(
            "wave {}: {:.6} -> {:.6}, c = {:.6} ± {:.2e}",
            i + 1,
            w.upper.q0(),
            w.lower.q0(),
            w.speed,
            w.stderr
        ));
    }
    Ok(())
}

fn structure_checks(s: &mut Session, terrace: &Terrace) -> CliResult<()> {
    let prep = s.prep;
    let records: Vec<StabilityRecord> = terrace.platforms.iter().map(|p| prep.record_near(p.q0())).collect();
    let report =
        check_terrace_structure(terrace, &records, prep.cfg.terrace.speed_zero_tol, prep.cfg.analysis.multistable)?;
    for (j, c) in report.clauses.iter().enumerate() {
        s.checks.push(boolean(&format!("structure_{j}"), c.pass, c.description.clone()));
    }
    s.out.write_json("structure.json", &report)?;
    Ok(())
}

/// Compare each wave with the wave between the same platforms read off ramp data.
fn minimality_checks(s: &mut Session, terrace: &Terrace) -> CliResult<()> {
    let prep = s.prep;
    let jump = prep.cfg.terrace.jump;
    let u0 = sandwich_ic(&prep.grid, jump - 10.0, jump + 10.0, prep.p0(), &Shape::LinearRamp)?;
    let traj = simulate(&prep.spec, &u0, BoundaryPolicy::default(), &prep.params)?;
    let other = extract_from_run(&traj, &prep.ladder()?, &prep.cfg.terrace)?;
    let tol = prep.cfg.terrace.snap_tol;
    let mut candidates = Vec::new();
    for cand in other.waves {
        let same = terrace.waves.iter().position(|w| {
            (w.upper.q0() - cand.upper.q0()).abs() < tol && (w.lower.q0() - cand.lower.q0()).abs() < tol
        });
        if let Some(i) = same {
            candidates.push((i, cand));
        }
    }
    let report = check_minimality(terrace, &candidates, prep.cfg.verify.steepness_tol)?;
    let bad = report.checks.iter().filter(|c| !c.verdict.steeper_or_mutually()).count();
    s.checks.push(
        CheckOutcome::compare("minimality_violations", bad as f64, Relation::Le, 0.0)
            .with_detail(format!("{} comparisons against {} candidate waves", report.checks.len(), candidates.len())),
    );
    s.out.write_json("minimality.json", &report)?;
    Ok(())
}

fn cmd_terrace(s: &mut Session) -> CliResult<()> {
    let terrace = obtain_terrace(s, None)?;
    write_terrace(s, &terrace)?;
    structure_checks(s, &terrace)?;
    if s.prep.cfg.analysis.minimality {
        minimality_checks(s, &terrace)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

/// Largest rise above the running minimum over the trailing `frac` of a series.
pub fn tail_growth(series: &[(f64, f64)], frac: f64) -> f64 {
    let n = series.len();
    let from = n - ((frac * n as f64).ceil() as usize).clamp(1, n);
    let mut lowest = f64::INFINITY;
    let mut growth = 0.0_f64;
    for &(_, r) in &series[from..] {
        growth = growth.max(r - lowest);
        lowest = lowest.min(r);
    }
    growth
}

fn cmd_verify(s: &mut Session) -> CliResult<()> {
    let prep = s.prep;
    let cfg = prep.cfg;
    let an = &cfg.analysis;
    let vc = &cfg.verify;
    let p0 = prep.p0();
    let period = prep.spec.period();

    let hypotheses = prep.stability_hypotheses();
    let rate_ok = an.exponential_rate && hypotheses.is_none();
    let sandwich_ok = an.sandwich && hypotheses.is_none();
    if let Some(reason) = &hypotheses {
        if an.exponential_rate {
            s.checks.push(CheckOutcome::unmet("exponential_rate", reason.clone()));
        }
        if an.sandwich {
            s.checks.push(CheckOutcome::unmet("sandwich", reason.clone()));
        }
    }

    let u0 = prep.initial_field()?;
    let main = prep.run(&u0)?;
    s.lines.push(format!("simulated to t = {} ({} period snapshots)", main.last().t, main.n_periods()));
    let mut level_results = Vec::new();
    if !an.levels.is_empty() {
        level_results = level_speeds(s, &main, &an.levels)?;
    }

    let needs_terrace = an.terrace || an.residual || an.shift_convergence || rate_ok || an.certification;
    let terrace = if needs_terrace {
        let heaviside = matches!(cfg.initial, InitialConfig::H1 { .. }).then_some(&main);
        let t = obtain_terrace(s, heaviside)?;
        write_terrace(s, &t)?;
        if an.terrace {
            structure_checks(s, &t)?;
        }
        Some(t)
    } else {
        None
    };

    if let Some(terrace) = &terrace {
        if an.residual || an.shift_convergence || rate_ok {
            let shifts = fit_shift_functions(&main, terrace, &cfg.terrace);
            let mut rows = Vec::new();
            for sh in &shifts {
                rows.extend(sh.series.iter().map(|&(t, e)| (sh.wave, t, e)));
            }
            s.out.write_with("shifts.csv", |mut w| {
                writeln!(w, "wave,t,eta")?;
                for (i, t, e) in rows {
                    writeln!(w, "{i},{t},{e}")?;
                }
                Ok(w.flush()?)
            })?;
            if an.shift_convergence {
                for sh in &shifts {
                    s.checks.push(CheckOutcome::compare(
                        format!("eta_{}_tail_variation", sh.wave + 1),
                        sh.tail_variation,
                        Relation::Lt,
                        cfg.terrace.shift_conv_tol_rel * period,
                    ));
                }
            }
            let series = residual_series(&main, terrace, &shifts, vc.residual_margin)?;
            s.out.write_with("residual.csv", |w| write_series(w, "t,residual", &series))?;
            if an.residual {
                let last = series.last().map_or(f64::NAN, |r| r.1);
                s.checks.push(CheckOutcome::compare("residual_final", last, Relation::Lt, cfg.terrace.residual_pass_rel * p0));
                s.checks.push(CheckOutcome::compare(
                    "residual_tail_growth",
                    tail_growth(&series, vc.monotone_tail),
                    Relation::Le,
                    vc.monotone_noise_rel * p0,
                ));
            }
            if rate_ok {
                match exponential_rate(&series, vc.rate_burn_in) {
                    Ok(fit) => {
                        s.out.write_json("rate.json", &fit)?;
                        s.checks.push(CheckOutcome::compare("exponential_rate_nu", fit.nu, Relation::Gt, 0.0));
                        s.checks.push(CheckOutcome::compare("exponential_rate_r2", fit.r2, Relation::Ge, vc.r2_min));
                    }
                    Err(e) => s.checks.push(CheckOutcome::failed("exponential_rate", e.to_string())),
                }
            }
        }
    }

    if sandwich_ok {
        let hat_plus = prep.heaviside_run(cfg.initial.right_jump() + vc.sandwich_offset)?;
        let hat_minus = prep.heaviside_run(cfg.initial.left_jump() - vc.sandwich_offset)?;
        let fit = terrace_lab::supersub::sandwich_fit(&main, &hat_plus, &hat_minus, 0.0)?;
        s.out.write_json("sandwich.json", &fit)?;
        let check = CheckOutcome::compare("sandwich_beta0", fit.beta0_hat, Relation::Gt, 0.0);
        s.checks.push(match &fit.note {
            Some(n) => check.with_detail(n.clone()),
            None => check.with_detail(format!("K0 = {:.3e}", fit.k0_hat)),
        });
    }

    if an.zero_number || an.steepness {
        let companion = prep.heaviside_run(cfg.initial.left_jump())?;
        if an.zero_number {
            let series = zero_number_series(&main, &companion, vc.zero_number_shift, vc.zero_number_lag)?;
            let increases = series.windows(2).filter(|w| w[1].1 > w[0].1).count();
            s.out.write_with("zero_number.csv", |mut w| {
                writeln!(w, "t,zero_number")?;
                for (t, z) in &series {
                    writeln!(w, "{t},{z}")?;
                }
                Ok(w.flush()?)
            })?;
            s.checks.push(
                CheckOutcome::compare("zero_number_increases", increases as f64, Relation::Le, 0.0)
                    .with_detail(format!("{} samples", series.len())),
            );
        }
        if an.steepness {
            steepness_checks(s, &companion, &main)?;
        }
    }

    if an.spreading {
        let b = spreading_bracket(&main, vc.spreading_eps)?;
        s.out.write_json("spreading.json", &b)?;
        let (lo, hi) = (b.c_lower - 3.0 * b.stderr_lower, b.c_upper + 3.0 * b.stderr_upper);
        s.lines.push(format!("spreading bracket [{:.6}, {:.6}]", b.c_lower, b.c_upper));
        for l in &level_results {
            if let Some(c) = l.c {
                let outside = (lo - c).max(c - hi).max(0.0);
                s.checks.push(
                    CheckOutcome::compare(format!("spreading_level_{}", l.level), outside, Relation::Le, 0.0)
                        .with_detail(format!("c = {c:.6} in [{lo:.6}, {hi:.6}]")),
                );
            }
        }
    }

    if an.certification {
        let terrace = terrace.as_ref().expect("certification requests a terrace");
        certification_checks(s, terrace, &u0, &main)?;
    }
    Ok(())
}

fn steepness_checks(s: &mut Session, steep: &Trajectory, other: &Trajectory) -> CliResult<()> {
    let tol = s.prep.cfg.verify.steepness_tol;
    let mut verdicts: Vec<(f64, Steepness)> = Vec::new();
    for ((_, a), (_, b)) in steep.period_snapshots().zip(other.period_snapshots()) {
        match is_steeper(a, b, tol) {
            Ok(v) => verdicts.push((a.t, v)),
            Err(LabError::Precondition(m)) => {
                s.checks.push(CheckOutcome::unmet("steepness", format!("at t = {}: {m}", a.t)));
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        }
    }
    let initial = verdicts.first().map(|v| v.1);
    let broken = verdicts.iter().filter(|v| !v.1.steeper_or_mutually()).count();
    s.out.write_json("steepness.json", &verdicts)?;
    s.checks.push(boolean(
        "steepness_initial",
        initial == Some(Steepness::Steeper),
        format!("initial verdict {initial:?}"),
    ));
    s.checks.push(
        CheckOutcome::compare("steepness_violations", broken as f64, Relation::Le, 0.0)
            .with_detail(format!("{} snapshots", verdicts.len())),
    );
    Ok(())
}

fn certification_checks(s: &mut Session, terrace: &Terrace, u0: &Field, main: &Trajectory) -> CliResult<()> {
    let prep = s.prep;
    let cc = &prep.cfg.certification;
    let p0 = prep.p0();
    let u_lo = u0.min().min(0.0) - 0.1 * p0;
    let u_hi = u0.max().max(p0) + 0.1 * p0;
    let cert_tol = cc.cert_tol_rel * prep.spec.sup_abs(u_lo, u_hi, 400);
    let opts = CheckOptions { dt: prep.cfg.time.dt, refine: cc.refine, cert_tol };
    let samples = |h: f64| -> Vec<f64> {
        let n = (h / cc.scan_dt).round().max(1.0) as usize;
        (0..=n).map(|j| h * j as f64 / n as f64).collect()
    };
    let unmet = |name: &str, e: LabError| match e {
        LabError::Precondition(m) => Ok(CheckOutcome::unmet(name, m)),
        other => Err(CliError::from(other)),
    };

    // Travelling-frame super-solution with a decaying corrector.
    let wave = terrace
        .waves
        .get(cc.wave)
        .ok_or_else(|| CliError::config(format!("certification.wave = {} but the terrace has {}", cc.wave, terrace.n())))?;
    let scan = Grid::with_spacing(-cc.window, cc.window, cc.scan_dx)?;
    let c = wave.speed + cc.speed_offset;
    match search_eps0(&prep.spec, Bound::Upper, wave, c, cc.k, &scan, &samples(cc.horizon), &opts) {
        Ok(search) => {
            s.out.write_json("fife_mcleod.json", &search)?;
            let eps = search.eps_hat.unwrap_or(0.0);
            s.checks.push(
                CheckOutcome::compare("fife_mcleod_eps0", eps, Relation::Ge, cc.eps_min)
                    .with_detail(format!("c = {c:.6}, certified = {}", search.report.certified)),
            );
        }
        Err(e) => s.checks.push(unmet("fife_mcleod_eps0", e)?),
    }

    // Flattening fronts around the initial data.
    let horizon = cc.flattening_horizon.min(prep.cfg.time.t_end);
    let times = samples(horizon);
    let mut fronts = Vec::new();
    for (bound, name) in [(Bound::Upper, "flattening_upper"), (Bound::Lower, "flattening_lower")] {
        match flattening_super(u0, &prep.spec, prep.top_solution(), bound, horizon, &prep.cfg.ode) {
            Ok(cf) => {
                let rep = check_comparison(&cf, &prep.spec, &prep.grid, &times, &opts);
                let (value, rel, thr) = match bound {
                    Bound::Upper => (rep.min_residual, Relation::Ge, -cert_tol),
                    Bound::Lower => (rep.min_residual, Relation::Le, cert_tol),
                };
                s.checks.push(CheckOutcome::compare(name, value, rel, thr));
                s.out.write_json(&format!("{name}.json"), &rep)?;
                fronts.push((bound, cf));
            }
            Err(e) => s.checks.push(unmet(name, e)?),
        }
    }
    if fronts.len() == 2 {
        let mut worst = 0.0_f64;
        for f in main.snapshots.iter().filter(|f| f.t <= horizon + 1e-9) {
            for (bound, cf) in &fronts {
                let w = cf.field(prep.grid, f.t);
                for (u, wv) in f.values.iter().zip(&w.values) {
                    let gap = match bound {
                        Bound::Upper => u - wv,
                        Bound::Lower => wv - u,
                    };
                    worst = worst.max(gap);
                }
            }
        }
        s.checks.push(CheckOutcome::compare("flattening_domination", worst, Relation::Le, cc.domination_tol));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_growth_ignores_earlier_history() {
        let s: Vec<(f64, f64)> = [5.0, 1.0, 0.5, 0.4, 0.41, 0.3].iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
        assert!((tail_growth(&s, 0.5) - 0.01).abs() < 1e-12);
        assert_eq!(tail_growth(&s[..4], 0.5), 0.0);
    }
}
