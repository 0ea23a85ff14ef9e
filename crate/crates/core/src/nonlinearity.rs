//! Reaction terms `f(t, u)`, periodic in `t` with period `T` and vanishing at
//! `u = 0`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Default step for central finite-difference `u`-derivatives.
pub const FD_STEP: f64 = 1e-6;

/// How `∂_u f` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DuMode {
    #[default]
    Analytic,
    FiniteDifference(f64),
}

/// Time dependence of one term of a custom polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TimeMode {
    Constant,
    Sin,
    Cos,
}

/// `coef * u^power * φ(t)` with `φ ∈ {1, sin(2πt/T), cos(2πt/T)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyTerm {
    pub power: u32,
    pub time: TimeMode,
    pub coef: f64,
}

/// Catalog of nonlinearity families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `r u (1 - u)`.
    Kpp { rate: f64 },
    /// `u (1 - u) (u - a)`.
    BistableCubic { a: f64 },
    /// `κ u (u - θ₁)(u - q)(u - θ₂)(1 - u)`; 0, q and 1 are stable.
    MultistableQuintic { kappa: f64, theta1: f64, q: f64, theta2: f64 },
    /// `0` on `u ≤ θ`, `(u - θ)(p - u)` above.
    Combustion { theta: f64, p: f64 },
    /// `(1 + ρ sin(2πt/T)) f̄(u)` with an autonomous base family `f̄`.
    TimePeriodicProduct { rho: f64, base: Box<Family> },
    /// `Σ c_jk u^j φ_k(t)`; every power is at least one so that `f(t,0)=0`.
    CustomPolynomial { terms: Vec<PolyTerm> },
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Kpp { .. } => "kpp",
            Family::BistableCubic { .. } => "bistable-cubic",
            Family::MultistableQuintic { .. } => "multistable-quintic",
            Family::Combustion { .. } => "combustion",
            Family::TimePeriodicProduct { .. } => "time-periodic-product",
            Family::CustomPolynomial { .. } => "custom-polynomial",
        }
    }

    fn is_autonomous(&self) -> bool {
        match self {
            Family::TimePeriodicProduct { rho, .. } => *rho == 0.0,
            Family::CustomPolynomial { terms } => terms.iter().all(|t| t.time == TimeMode::Constant),
            _ => true,
        }
    }

    /// Ascending polynomial coefficients in `u` for the autonomous polynomial
    /// families, `None` otherwise.
    fn polynomial(&self) -> Option<Vec<f64>> {
        match self {
            Family::Kpp { rate } => Some(vec![0.0, *rate, -*rate]),
            Family::BistableCubic { a } => Some(poly_from_factors(1.0, &[0.0, 1.0, *a]).negate()),
            Family::MultistableQuintic { kappa, theta1, q, theta2 } => {
                Some(poly_from_factors(*kappa, &[0.0, *theta1, *q, *theta2, 1.0]).negate())
            }
            Family::CustomPolynomial { terms } if self.is_autonomous() => {
                let deg = terms.iter().map(|t| t.power as usize).max().unwrap_or(0);
                let mut c = vec![0.0; deg + 1];
                for t in terms {
                    c[t.power as usize] += t.coef;
                }
                Some(c)
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::InvalidSpec(m));
        match self {
            Family::Kpp { rate } if !(rate.is_finite() && *rate > 0.0) => bad(format!("kpp rate must be positive, got {rate}")),
            Family::BistableCubic { a } if !(a.is_finite() && *a > 0.0 && *a < 1.0) => {
                bad(format!("bistable-cubic needs 0 < a < 1, got {a}"))
            }
            Family::MultistableQuintic { kappa, theta1, q, theta2 }
                if !(*kappa > 0.0 && 0.0 < *theta1 && theta1 < q && q < theta2 && *theta2 < 1.0) =>
            {
                bad("multistable-quintic needs kappa > 0 and 0 < theta1 < q < theta2 < 1".into())
            }
            Family::Combustion { theta, p } if !(*theta >= 0.0 && theta < p) => {
                bad(format!("combustion needs 0 <= theta < p, got theta={theta}, p={p}"))
            }
            Family::TimePeriodicProduct { rho, base } => {
                if !(rho.is_finite() && rho.abs() < 1.0) {
                    return bad(format!("time-periodic-product needs |rho| < 1, got {rho}"));
                }
                if !base.is_autonomous() || matches!(**base, Family::TimePeriodicProduct { .. }) {
                    return bad("time-periodic-product base must be an autonomous catalog family".into());
                }
                base.validate()
            }
            Family::CustomPolynomial { terms } => {
                if let Some(t) = terms.iter().find(|t| t.power == 0) {
                    return bad(format!("custom-polynomial term with power 0 ({t:?}) breaks f(t,0)=0"));
                }
                if terms.iter().any(|t| !t.coef.is_finite()) {
                    return bad("custom-polynomial coefficients must be finite".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

trait Negate {
    fn negate(self) -> Self;
}

impl Negate for Vec<f64> {
    fn negate(mut self) -> Self {
        for c in &mut self {
            *c = -*c;
        }
        self
    }
}

/// Coefficients of `scale * Π (u - r)`.
fn poly_from_factors(scale: f64, roots: &[f64]) -> Vec<f64> {
    let mut c = vec![scale];
    for r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= r * ci;
        }
        c = next;
    }
    c
}

/// Sort terms by (power, time mode) and merge duplicates.
fn canonicalize(terms: &mut Vec<PolyTerm>) {
    terms.sort_by_key(|t| (t.power, t.time));
    let mut merged: Vec<PolyTerm> = Vec::with_capacity(terms.len());
    for t in terms.drain(..) {
        match merged.last_mut() {
            Some(last) if last.power == t.power && last.time == t.time => last.coef += t.coef,
            _ => merged.push(t),
        }
    }
    *terms = merged;
}

#[inline]
fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ci| acc * u + ci)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, ci)| i as f64 * ci).collect()
}

fn antiderivative(c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    out.extend(c.iter().enumerate().map(|(i, ci)| ci / (i + 1) as f64));
    out
}

/// A validated reaction term together with its period.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    family: Family,
    period: f64,
    du_mode: DuMode,
    // Expanded coefficients of the autonomous polynomial part (base family for
    // products) and of its derivative.
    poly: Option<Vec<f64>>,
    dpoly: Option<Vec<f64>>,
}

/// `u ↦ f(t, u)` with the time dependence evaluated once, for sweeping a
/// whole grid at a common time.
#[derive(Debug, Clone, PartialEq)]
pub enum FrozenRate {
    /// Coefficients in increasing powers of `u`.
    Polynomial(Vec<f64>),
    Combustion { theta: f64, p: f64, scale: f64 },
}

impl FrozenRate {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            FrozenRate::Polynomial(c) => horner(c, u),
            FrozenRate::Combustion { theta, p, scale } => scale * combustion(*theta, *p, u),
        }
    }
}

impl NonlinearitySpec {
    pub fn new(mut family: Family, period: f64) -> Result<Self> {
        if let Family::CustomPolynomial { terms } = &mut family {
            canonicalize(terms);
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(LabError::InvalidSpec(format!("period must be positive, got {period}")));
        }
        family.validate()?;
        let base = match &family {
            Family::TimePeriodicProduct { base, .. } => base.as_ref(),
            f => f,
        };
        let poly = base.polynomial();
        let dpoly = poly.as_deref().map(derivative);
        Ok(Self { family, period, du_mode: DuMode::Analytic, poly, dpoly })
    }

    pub fn with_du_mode(mut self, mode: DuMode) -> Result<Self> {
        if let DuMode::FiniteDifference(h) = mode {
            if !(h.is_finite() && h > 0.0) {
                return Err(LabError::InvalidSpec(format!("finite-difference step must be positive, got {h}")));
            }
        }
        self.du_mode = mode;
        Ok(self)
    }

    pub fn kpp(period: f64) -> Self {
        Self::new(Family::Kpp { rate: 1.0 }, period).expect("valid kpp")
    }

    pub fn bistable(a: f64, period: f64) -> Result<Self> {
        Self::new(Family::BistableCubic { a }, period)
    }

    /// `f ≡ 0`: the pure heat equation.
    pub fn zero(period: f64) -> Self {
        Self::new(Family::CustomPolynomial { terms: Vec::new() }, period).expect("valid zero spec")
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn du_mode(&self) -> DuMode {
        self.du_mode
    }

    pub fn is_autonomous(&self) -> bool {
        self.family.is_autonomous()
    }

    /// `f(t, u)` without input validation; the hot path of every integrator.
    #[inline]
    pub fn rate(&self, t: f64, u: f64) -> f64 {
        eval_family(&self.family, self.period, t, u)
    }

    /// The reaction term frozen at time `t`.
    pub fn frozen(&self, t: f64) -> FrozenRate {
        let phase = TAU * t / self.period;
        let scaled = |c: &[f64], b: f64| FrozenRate::Polynomial(c.iter().map(|v| v * b).collect());
        match &self.family {
            Family::Combustion { theta, p } => FrozenRate::Combustion { theta: *theta, p: *p, scale: 1.0 },
            Family::TimePeriodicProduct { rho, base } => {
                let b = 1.0 + rho * phase.sin();
                match (&**base, &self.poly) {
                    (Family::Combustion { theta, p }, _) => FrozenRate::Combustion { theta: *theta, p: *p, scale: b },
                    (_, Some(c)) => scaled(c, b),
                    _ => unreachable!("validated base family"),
                }
            }
            Family::CustomPolynomial { terms } => {
                let deg = terms.iter().map(|t| t.power as usize).max().unwrap_or(0);
                let mut c = vec![0.0; deg + 1];
                for t in terms {
                    c[t.power as usize] += t.coef * time_factor(t.time, phase);
                }
                FrozenRate::Polynomial(c)
            }
            _ => scaled(self.poly.as_deref().expect("polynomial family"), 1.0),
        }
    }

    /// `∂_u f(t, u)` without input validation.
    #[inline]
    pub fn rate_du(&self, t: f64, u: f64) -> f64 {
        match self.du_mode {
            DuMode::FiniteDifference(h) => (self.rate(t, u + h) - self.rate(t, u - h)) / (2.0 * h),
            DuMode::Analytic => self.analytic_du(t, u),
        }
    }

    fn analytic_du(&self, t: f64, u: f64) -> f64 {
        let phase = TAU * t / self.period;
        match &self.family {
            Family::Combustion { theta, p } => combustion_du(*theta, *p, u),
            Family::TimePeriodicProduct { rho, base } => {
                let b = 1.0 + rho * phase.sin();
                let du = match (&**base, &self.dpoly) {
                    (Family::Combustion { theta, p }, _) => combustion_du(*theta, *p, u),
                    (_, Some(d)) => horner(d, u),
                    _ => unreachable!("validated base family"),
                };
                b * du
            }
            Family::CustomPolynomial { terms } => terms
                .iter()
                .map(|term| term.coef * term.power as f64 * u.powi(term.power as i32 - 1) * time_factor(term.time, phase))
                .sum(),
            _ => horner(self.dpoly.as_ref().expect("polynomial family"), u),
        }
    }

    /// Checked `f(t, u)`.
    pub fn eval(&self, t: f64, u: f64) -> Result<f64> {
        if !u.is_finite() || !t.is_finite() {
            return Err(LabError::Domain { value: if u.is_finite() { t } else { u } });
        }
        Ok(self.rate(t, u))
    }

    /// Checked `∂_u f(t, u)`.
    pub fn eval_du(&self, t: f64, u: f64) -> Result<f64> {
        self.eval(t, u)?;
        Ok(self.rate_du(t, u))
    }

    /// `F(u) = ∫₀ᵘ f(s) ds` for autonomous specs.
    pub fn potential(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(LabError::Domain { value: u });
        }
        if !self.is_autonomous() {
            return Err(LabError::Unsupported(format!(
                "potential of time-dependent family {}",
                self.family.tag()
            )));
        }
        let base = match &self.family {
            Family::TimePeriodicProduct { base, .. } => base.as_ref(),
            f => f,
        };
        if let Family::Combustion { theta, p } = base {
            if u <= *theta {
                return Ok(0.0);
            }
            // ∫_θ^u (s-θ)(p-s) ds with s-θ = r.
            let r = u - theta;
            let gap = p - theta;
            return Ok(gap * r * r / 2.0 - r * r * r / 3.0);
        }
        let c = base.polynomial().expect("autonomous polynomial family");
        Ok(horner(&antiderivative(&c), u))
    }

    /// Largest `|∂_u f|` on `[0, T] × [u_lo, u_hi]`, sampled on an `n × n` grid.
    pub fn sup_abs_du(&self, u_lo: f64, u_hi: f64, n: usize) -> f64 {
        let n = n.max(2);
        let mut best: f64 = 0.0;
        for i in 0..n {
            let t = self.period * i as f64 / n as f64;
            for j in 0..n {
                let u = u_lo + (u_hi - u_lo) * j as f64 / (n - 1) as f64;
                best = best.max(self.rate_du(t, u).abs());
            }
        }
        best
    }

    /// Sampled sup-norm of `f` on `[0, T] × [u_lo, u_hi]`.
    pub fn sup_abs(&self, u_lo: f64, u_hi: f64, n: usize) -> f64 {
        let n = n.max(2);
        let mut best: f64 = 0.0;
        for i in 0..n {
            let t = self.period * i as f64 / n as f64;
            for j in 0..n {
                let u = u_lo + (u_hi - u_lo) * j as f64 / (n - 1) as f64;
                best = best.max(self.rate(t, u).abs());
            }
        }
        best
    }
}

impl fmt::Display for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(T={})", self.family.tag(), self.period)
    }
}

#[inline]
fn time_factor(mode: TimeMode, phase: f64) -> f64 {
    match mode {
        TimeMode::Constant => 1.0,
        TimeMode::Sin => phase.sin(),
        TimeMode::Cos => phase.cos(),
    }
}

#[inline]
fn combustion(theta: f64, p: f64, u: f64) -> f64 {
    if u <= theta {
        0.0
    } else {
        (u - theta) * (p - u)
    }
}

#[inline]
fn combustion_du(theta: f64, p: f64, u: f64) -> f64 {
    if u <= theta {
        0.0
    } else {
        p + theta - 2.0 * u
    }
}

#[inline]
fn eval_autonomous(family: &Family, u: f64) -> f64 {
    match family {
        Family::Kpp { rate } => rate * u * (1.0 - u),
        Family::BistableCubic { a } => u * (1.0 - u) * (u - a),
        Family::MultistableQuintic { kappa, theta1, q, theta2 } => {
            kappa * u * (u - theta1) * (u - q) * (u - theta2) * (1.0 - u)
        }
        Family::Combustion { theta, p } => combustion(*theta, *p, u),
        Family::CustomPolynomial { terms } => terms.iter().map(|t| t.coef * u.powi(t.power as i32)).sum(),
        Family::TimePeriodicProduct { .. } => unreachable!("products are not autonomous bases"),
    }
}

#[inline]
fn eval_family(family: &Family, period: f64, t: f64, u: f64) -> f64 {
    match family {
        Family::TimePeriodicProduct { rho, base } => (1.0 + rho * (TAU * t / period).sin()) * eval_autonomous(base, u),
        Family::CustomPolynomial { terms } => {
            let phase = TAU * t / period;
            terms
                .iter()
                .map(|term| term.coef * u.powi(term.power as i32) * time_factor(term.time, phase))
                .sum()
        }
        f => eval_autonomous(f, u),
    }
}

// ---------------------------------------------------------------------------
// JSON document form: {family, params, period_T[, base][, du_mode]}.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(rename = "period_T")]
    pub period_t: f64,
    /// Base family tag for `time-periodic-product`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub du_mode: Option<DuMode>,
}

struct Params<'a> {
    map: &'a BTreeMap<String, f64>,
    used: Vec<&'static str>,
}

impl<'a> Params<'a> {
    fn get(&mut self, key: &'static str, default: Option<f64>) -> Result<f64> {
        self.used.push(key);
        match (self.map.get(key), default) {
            (Some(v), _) => Ok(*v),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(LabError::InvalidSpec(format!("missing parameter `{key}`"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(LabError::InvalidSpec(format!("unknown parameter `{k}`"))),
            None => Ok(()),
        }
    }
}

fn autonomous_from_params(tag: &str, p: &mut Params<'_>) -> Result<Family> {
    Ok(match tag {
        "kpp" => Family::Kpp { rate: p.get("r", Some(1.0))? },
        "bistable-cubic" => Family::BistableCubic { a: p.get("a", None)? },
        "multistable-quintic" => Family::MultistableQuintic {
            kappa: p.get("kappa", Some(1.0))?,
            theta1: p.get("theta1", None)?,
            q: p.get("q", None)?,
            theta2: p.get("theta2", None)?,
        },
        "combustion" => Family::Combustion { theta: p.get("theta", None)?, p: p.get("p", Some(1.0))? },
        other => return Err(LabError::InvalidSpec(format!("unknown or non-autonomous base family `{other}`"))),
    })
}

fn parse_poly_key(key: &str) -> Option<(u32, TimeMode)> {
    let rest = key.strip_prefix('u')?;
    let (power, mode) = match rest.split_once('_') {
        None => (rest, TimeMode::Constant),
        Some((p, "sin")) => (p, TimeMode::Sin),
        Some((p, "cos")) => (p, TimeMode::Cos),
        Some(_) => return None,
    };
    Some((power.parse().ok()?, mode))
}

fn poly_key(term: &PolyTerm) -> String {
    match term.time {
        TimeMode::Constant => format!("u{}", term.power),
        TimeMode::Sin => format!("u{}_sin", term.power),
        TimeMode::Cos => format!("u{}_cos", term.power),
    }
}

fn autonomous_params(family: &Family, out: &mut BTreeMap<String, f64>) {
    match family {
        Family::Kpp { rate } => {
            out.insert("r".into(), *rate);
        }
        Family::BistableCubic { a } => {
            out.insert("a".into(), *a);
        }
        Family::MultistableQuintic { kappa, theta1, q, theta2 } => {
            out.insert("kappa".into(), *kappa);
            out.insert("theta1".into(), *theta1);
            out.insert("q".into(), *q);
            out.insert("theta2".into(), *theta2);
        }
        Family::Combustion { theta, p } => {
            out.insert("theta".into(), *theta);
            out.insert("p".into(), *p);
        }
        _ => {}
    }
}

impl TryFrom<SpecDocument> for NonlinearitySpec {
    type Error = LabError;

    fn try_from(doc: SpecDocument) -> Result<Self> {
        let mut params = Params { map: &doc.params, used: Vec::new() };
        let family = match doc.family.as_str() {
            "time-periodic-product" => {
                let rho = params.get("rho", None)?;
                let tag = doc
                    .base
                    .as_deref()
                    .ok_or_else(|| LabError::InvalidSpec("time-periodic-product requires `base`".into()))?;
                let base = autonomous_from_params(tag, &mut params)?;
                params.finish()?;
                Family::TimePeriodicProduct { rho, base: Box::new(base) }
            }
            "custom-polynomial" => {
                let mut terms = Vec::new();
                for (k, v) in &doc.params {
                    let (power, time) = parse_poly_key(k)
                        .ok_or_else(|| LabError::InvalidSpec(format!("bad custom-polynomial key `{k}`")))?;
                    terms.push(PolyTerm { power, time, coef: *v });
                }
                Family::CustomPolynomial { terms }
            }
            tag => {
                if doc.base.is_some() {
                    return Err(LabError::InvalidSpec("`base` is only valid for time-periodic-product".into()));
                }
                let family = autonomous_from_params(tag, &mut params)?;
                params.finish()?;
                family
            }
        };
        let spec = NonlinearitySpec::new(family, doc.period_t)?;
        match doc.du_mode {
            Some(mode) => spec.with_du_mode(mode),
            None => Ok(spec),
        }
    }
}

impl From<&NonlinearitySpec> for SpecDocument {
    fn from(spec: &NonlinearitySpec) -> Self {
        let mut params = BTreeMap::new();
        let mut base = None;
        match &spec.family {
            Family::TimePeriodicProduct { rho, base: b } => {
                params.insert("rho".into(), *rho);
                autonomous_params(b, &mut params);
                base = Some(b.tag().to_string());
            }
            Family::CustomPolynomial { terms } => {
                for t in terms {
                    *params.entry(poly_key(t)).or_insert(0.0) += t.coef;
                }
            }
            f => autonomous_params(f, &mut params),
        }
        SpecDocument {
            family: spec.family.tag().to_string(),
            params,
            period_t: spec.period,
            base,
            du_mode: (spec.du_mode != DuMode::Analytic).then_some(spec.du_mode),
        }
    }
}

impl Serialize for NonlinearitySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpecDocument::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for NonlinearitySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = SpecDocument::deserialize(d)?;
        NonlinearitySpec::try_from(doc).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Vec<NonlinearitySpec> {
        let combustion = Family::Combustion { theta: 0.3, p: 1.0 };
        vec![
            NonlinearitySpec::kpp(1.0),
            NonlinearitySpec::bistable(0.25, 1.0).unwrap(),
            NonlinearitySpec::new(
                Family::MultistableQuintic { kappa: 10.0, theta1: 0.2, q: 0.5, theta2: 0.8 },
                2.0,
            )
            .unwrap(),
            NonlinearitySpec::new(combustion.clone(), 1.0).unwrap(),
            NonlinearitySpec::new(Family::TimePeriodicProduct { rho: 0.5, base: Box::new(combustion) }, 1.5).unwrap(),
            NonlinearitySpec::new(
                Family::TimePeriodicProduct { rho: 0.5, base: Box::new(Family::BistableCubic { a: 0.3 }) },
                1.0,
            )
            .unwrap(),
            NonlinearitySpec::new(
                Family::CustomPolynomial {
                    terms: vec![
                        PolyTerm { power: 1, time: TimeMode::Constant, coef: 1.0 },
                        PolyTerm { power: 2, time: TimeMode::Constant, coef: -1.0 },
                        PolyTerm { power: 1, time: TimeMode::Sin, coef: 0.3 },
                        PolyTerm { power: 2, time: TimeMode::Cos, coef: 0.2 },
                    ],
                },
                0.7,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn catalog_examples() {
        let kpp = NonlinearitySpec::kpp(1.0);
        assert_eq!(kpp.eval(3.7, 0.0).unwrap(), 0.0);
        let cubic = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        assert_eq!(cubic.eval(0.0, 0.5).unwrap(), 0.0625);
        let product = NonlinearitySpec::new(
            Family::TimePeriodicProduct { rho: 0.5, base: Box::new(Family::Combustion { theta: 0.3, p: 1.0 }) },
            2.0,
        )
        .unwrap();
        assert_eq!(product.eval(0.5, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn derivative_examples() {
        let kpp = NonlinearitySpec::kpp(1.0);
        assert!((kpp.eval_du(0.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
        assert!((kpp.eval_du(0.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let cubic = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        assert!((cubic.eval_du(0.0, 0.0).unwrap() + 0.25).abs() < 1e-15);
    }

    #[test]
    fn potential_examples() {
        let kpp = NonlinearitySpec::kpp(1.0);
        assert_eq!(kpp.potential(0.0).unwrap(), 0.0);
        assert!((kpp.potential(1.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);

        // Oracle: dense sampling on a 1e-4 grid picks the maximizer of F.
        let cubic = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
        let (mut best_u, mut best_f) = (0.0, f64::NEG_INFINITY);
        for i in 0..=10_000 {
            let u = i as f64 * 1e-4;
            let v = cubic.potential(u).unwrap();
            if v > best_f {
                best_f = v;
                best_u = u;
            }
        }
        assert_eq!(best_u, 1.0);

        let product = &catalog()[5];
        assert!(matches!(product.potential(0.5), Err(LabError::Unsupported(_))));
    }

    #[test]
    fn potential_matches_quadrature() {
        for spec in catalog().into_iter().filter(|s| s.is_autonomous()) {
            let n = 2000;
            let h = 1.2 / n as f64;
            let samples: Vec<f64> = (0..=n).map(|i| spec.rate(0.0, i as f64 * h)).collect();
            let quad = crate::stats::simpson(&samples, h);
            let exact = spec.potential(1.2).unwrap();
            assert!((quad - exact).abs() < 1e-6, "{spec}: {quad} vs {exact}");
        }
    }

    #[test]
    fn non_finite_state_is_a_domain_error() {
        let kpp = NonlinearitySpec::kpp(1.0);
        assert!(matches!(kpp.eval(0.0, f64::NAN), Err(LabError::Domain { .. })));
        assert!(matches!(kpp.eval_du(0.0, f64::INFINITY), Err(LabError::Domain { .. })));
    }

    #[test]
    fn finite_difference_mode() {
        let spec = NonlinearitySpec::bistable(0.3, 1.0)
            .unwrap()
            .with_du_mode(DuMode::FiniteDifference(FD_STEP))
            .unwrap();
        let exact = NonlinearitySpec::bistable(0.3, 1.0).unwrap();
        for u in [-0.2, 0.1, 0.45, 0.9] {
            assert!((spec.rate_du(0.0, u) - exact.rate_du(0.0, u)).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(NonlinearitySpec::bistable(1.5, 1.0).is_err());
        assert!(NonlinearitySpec::bistable(0.3, 0.0).is_err());
        let bad = Family::CustomPolynomial { terms: vec![PolyTerm { power: 0, time: TimeMode::Sin, coef: 1.0 }] };
        assert!(NonlinearitySpec::new(bad, 1.0).is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        for spec in catalog() {
            let text = serde_json::to_string(&spec).unwrap();
            let back: NonlinearitySpec = serde_json::from_str(&text).unwrap();
            assert_eq!(back, spec, "{text}");
        }
        let doc = r#"{"family":"bistable-cubic","params":{"a":0.25,"b":1.0},"period_T":1.0}"#;
        assert!(serde_json::from_str::<NonlinearitySpec>(doc).is_err());
        let doc = r#"{"family":"time-periodic-product","params":{"rho":0.5,"a":0.3},"base":"bistable-cubic","period_T":1.0}"#;
        let spec: NonlinearitySpec = serde_json::from_str(doc).unwrap();
        assert_eq!(spec, catalog()[5]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn periodic_in_time(idx in 0usize..7, t in -50.0f64..50.0, u in -0.5f64..1.5) {
                let spec = &catalog()[idx];
                let d = spec.rate(t + spec.period(), u) - spec.rate(t, u);
                prop_assert!(d.abs() <= 1e-12, "{} differs by {}", spec, d);
            }

            #[test]
            fn frozen_matches_rate(idx in 0usize..7, t in -5.0f64..5.0, u in -0.5f64..1.5) {
                let spec = &catalog()[idx];
                let d = spec.frozen(t).eval(u) - spec.rate(t, u);
                prop_assert!(d.abs() <= 1e-12 * (1.0 + spec.rate(t, u).abs()), "{} differs by {}", spec, d);
            }

            #[test]
            fn vanishes_at_zero(idx in 0usize..7, t in -50.0f64..50.0) {
                prop_assert_eq!(catalog()[idx].rate(t, 0.0), 0.0);
            }

            #[test]
            fn analytic_derivative_matches_central_difference(idx in 0usize..7, t in 0.0f64..3.0, u in -0.5f64..1.5) {
                let spec = &catalog()[idx];
                // Stay away from the combustion kink at theta.
                prop_assume!((u - 0.3).abs() > 1e-3);
                let h = 1e-6;
                let fd = (spec.rate(t, u + h) - spec.rate(t, u - h)) / (2.0 * h);
                let exact = spec.rate_du(t, u);
                prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "{}: {} vs {}", spec, fd, exact);
            }
        }
    }
}
