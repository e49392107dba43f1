//! Stability machinery over a canonical system: derivative-rank criterion,
//! sign check of the averaging mapping, canonical Lyapunov construction and
//! verification, and region scans that aggregate per-curve verdicts.
//!
//! All verdicts are sampled evidence, not proofs: "stable-evidence" states
//! that every checked criterion held at every valid grid point.

use crate::cascade::CanonicalSystem;
use crate::expr::{Binding, EquivError, EvalError, Expr, Func, Grid};
use serde::Serialize;
use thiserror::Error;

/// Numeric zero for "identically vanishing on the restriction".
pub const RANK_ZERO_TOL: f64 = 1e-9;
/// Highest derivative order probed before reporting degenerate-beyond-cap.
pub const S_MAX_DEFAULT: usize = 5;
/// A sampled sign is reported only when this fraction of valid points agrees.
pub const SIGN_CONSTANCY: f64 = 0.999;
/// Ball around y = 0 excluded from strict-sign checks (dV/dt -> 0 there).
pub const ORIGIN_BALL: f64 = 1e-6;
/// Per-step tolerance for strict decrease of W along a trajectory.
pub const MONOTONE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("invalid Lyapunov spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Equiv(#[from] EquivError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Weights and exponent of W = sum a_i y_i^l and the factor (lambda + e^-t).
#[derive(Debug, Clone)]
pub struct LyapunovSpec {
    pub weights: Vec<f64>,
    pub l: u32,
    pub lambda: f64,
}

impl LyapunovSpec {
    pub fn defaults(n: usize) -> Self {
        Self { weights: vec![1.0; n], l: 2, lambda: 1.0 }
    }

    pub fn validate(&self, n: usize) -> Result<(), StabilityError> {
        if self.weights.len() != n {
            return Err(StabilityError::InvalidSpec(format!(
                "expected {n} weights, got {}",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|a| *a <= 0.0) {
            return Err(StabilityError::InvalidSpec("weights must be positive".into()));
        }
        if self.l < 2 || self.l % 2 != 0 {
            return Err(StabilityError::InvalidSpec(format!(
                "exponent must be even and >= 2, got {}",
                self.l
            )));
        }
        if self.lambda < 1.0 {
            return Err(StabilityError::InvalidSpec(format!(
                "lambda must be >= 1, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    Odd,
    Even,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sign {
    Negative,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    StableEvidence,
    Inconclusive,
    UnstableEvidence,
    DegenerateBeyondCap,
}

/// Result of the derivative-rank probe for one component.
#[derive(Debug, Clone, Serialize)]
pub struct RankResult {
    /// Smallest derivative order not identically zero on {y_i = 0};
    /// None when every order up to the cap vanished.
    pub rank: Option<usize>,
    pub parity: Option<Parity>,
    /// Reported only when constant across >= 99.9% of valid grid points.
    pub sign: Option<Sign>,
    pub max_abs: f64,
    pub valid_points: usize,
}

/// Sign pattern of one canonical component over a sampled box:
/// f vanishes on {y_i = 0}, is negative for y_i > 0, positive for y_i < 0.
#[derive(Debug, Clone, Serialize)]
pub struct AmapReport {
    pub positive: bool,
    pub violations: usize,
    pub checked: usize,
    /// Worst violating point (name/value pairs) and the offending value.
    pub worst: Option<(Vec<(String, f64)>, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    pub component: usize,
    pub rank: Option<usize>,
    pub parity: Option<Parity>,
    pub sign: Option<Sign>,
    pub amap: AmapReport,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    #[serde(rename = "min_V")]
    pub min_v: f64,
    #[serde(rename = "max_dVdt")]
    pub max_dvdt: f64,
    pub positive_definite: bool,
    pub derivative_negative: bool,
    pub paths_checked: usize,
    pub path_steps_checked: usize,
    pub path_violations: usize,
    pub verified: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveVerdict {
    pub c: Vec<f64>,
    pub xi: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemVerdict {
    pub xi: Vec<f64>,
    pub verdict: Verdict,
}

/// Aggregated verdicts over a (xi, c) product grid. Every aggregate is the
/// conjunction of its constituents, so shrinking a grid can only keep or
/// improve verdicts on the surviving points.
#[derive(Debug, Clone, Serialize)]
pub struct RegionScan {
    pub per_curve: Vec<CurveVerdict>,
    pub per_system: Vec<SystemVerdict>,
    pub inclusion: Verdict,
}

/// Full JSON-facing stability report.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub components: Vec<ComponentReport>,
    pub lyapunov: LyapunovReport,
    pub scan: RegionScan,
}

/// A canonical trajectory sampled at increasing times.
#[derive(Debug, Clone)]
pub struct SampledPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// The s-th partial of f_i^n in y_i, restricted to {y_i = 0}.
pub fn restricted_derivative(cs: &CanonicalSystem, i: usize, s: usize) -> Expr {
    let yi = &cs.y_names[i - 1];
    let mut d = cs.rhs_canon[i - 1].clone();
    for _ in 0..s {
        d = d.diff(yi).simplify();
    }
    d.subst_var(yi, &Expr::zero()).simplify()
}

/// Default probe grid for the rank criterion: t over the scan range, the
/// other canonical coordinates over a few offsets. Levels and parameters
/// come from the caller's base binding.
pub fn default_rank_grid(cs: &CanonicalSystem, i: usize) -> Grid {
    let mut grid = Grid::new().axis(
        "t",
        vec![cs.t0, cs.t0 + 3.0, cs.t0 + 6.0, cs.t0 + 9.0, cs.t0 + 12.0],
    );
    for (j, name) in cs.y_names.iter().enumerate() {
        if j + 1 != i {
            grid = grid.axis(name.clone(), vec![-0.3, 0.0, 0.4]);
        }
    }
    grid
}

/// Finds the first derivative order whose restriction to {y_i = 0} is not
/// numerically zero, together with its parity and (if constant) sign.
pub fn classificational_rank(
    cs: &CanonicalSystem,
    i: usize,
    s_max: usize,
    grid: &Grid,
    base: &Binding,
) -> Result<RankResult, StabilityError> {
    for s in 1..=s_max {
        let d = restricted_derivative(cs, i, s);
        let mut max_abs: f64 = 0.0;
        let mut neg = 0usize;
        let mut pos = 0usize;
        let mut valid = 0usize;
        for point in grid.points() {
            let mut b = base.merged(&point);
            b.set(cs.y_names[i - 1].clone(), 0.0);
            if !cs.guards_hold(&b) {
                continue;
            }
            let v = match d.eval(&b) {
                Ok(v) => v,
                Err(EvalError::DomainViolation { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            valid += 1;
            max_abs = max_abs.max(v.abs());
            if v < -RANK_ZERO_TOL {
                neg += 1;
            } else if v > RANK_ZERO_TOL {
                pos += 1;
            }
        }
        if valid == 0 {
            return Err(StabilityError::Equiv(EquivError::AllPointsInvalid(grid.len())));
        }
        if max_abs > RANK_ZERO_TOL {
            let parity = if s % 2 == 1 { Parity::Odd } else { Parity::Even };
            let sign = if neg as f64 >= SIGN_CONSTANCY * valid as f64 {
                Some(Sign::Negative)
            } else if pos as f64 >= SIGN_CONSTANCY * valid as f64 {
                Some(Sign::Positive)
            } else {
                None
            };
            return Ok(RankResult {
                rank: Some(s),
                parity: Some(parity),
                sign,
                max_abs,
                valid_points: valid,
            });
        }
    }
    Ok(RankResult { rank: None, parity: None, sign: None, max_abs: 0.0, valid_points: 0 })
}

/// Verdict from rank, parity and sign alone. Rank 1 with a negative sign is
/// the shortcut case: odd parity is automatic, no sweep over higher orders.
pub fn criterion_verdict(r: &RankResult) -> Verdict {
    match (r.rank, r.parity, r.sign) {
        (None, _, _) => Verdict::DegenerateBeyondCap,
        (Some(_), Some(Parity::Odd), Some(Sign::Negative)) => Verdict::StableEvidence,
        (Some(_), Some(Parity::Odd), Some(Sign::Positive)) => Verdict::UnstableEvidence,
        _ => Verdict::Inconclusive,
    }
}

/// Default sampled box for the sign check: the y-square (-0.5, 1.5) per
/// coordinate, t clipped to the scan range.
pub fn default_amap_grid(cs: &CanonicalSystem) -> Grid {
    let mut grid = Grid::new().linspace("t", cs.t0, cs.t0 + 12.0, 7);
    for name in &cs.y_names {
        grid = grid.linspace(name.clone(), -0.5, 1.5, 9);
    }
    grid
}

/// Checks the sign pattern of f_i^n over the sampled box: near-zero on
/// {y_i = 0}, strictly negative above it, strictly positive below it.
pub fn a_mapping_check(
    cs: &CanonicalSystem,
    i: usize,
    grid: &Grid,
    base: &Binding,
) -> Result<AmapReport, StabilityError> {
    let f = &cs.rhs_canon[i - 1];
    let yi = &cs.y_names[i - 1];
    let mut violations = 0usize;
    let mut checked = 0usize;
    let mut worst: Option<(Vec<(String, f64)>, f64)> = None;
    for point in grid.points() {
        let b = base.merged(&point);
        if !cs.guards_hold(&b) {
            continue;
        }
        let v = match f.eval(&b) {
            Ok(v) => v,
            Err(EvalError::DomainViolation { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        checked += 1;
        let yi_val = b.get(yi).expect("grid binds every canonical coordinate");
        let ok = if yi_val == 0.0 {
            v.abs() <= RANK_ZERO_TOL
        } else if yi_val > 0.0 {
            v < 0.0
        } else {
            v > 0.0
        };
        if !ok {
            violations += 1;
            let badness = if yi_val == 0.0 { v.abs() } else { v.abs() };
            if worst.as_ref().map_or(true, |(_, w)| badness > w.abs()) {
                let pt = point.iter().map(|(k, vv)| (k.to_string(), vv)).collect();
                worst = Some((pt, v));
            }
        }
    }
    if checked == 0 {
        return Err(StabilityError::Equiv(EquivError::AllPointsInvalid(grid.len())));
    }
    Ok(AmapReport { positive: violations == 0, violations, checked, worst })
}

/// W = sum a_i y_i^l and V = W * (lambda + e^-t).
pub fn build_lyapunov(spec: &LyapunovSpec, n: usize) -> Result<(Expr, Expr), StabilityError> {
    spec.validate(n)?;
    let mut w: Option<Expr> = None;
    for (i, a) in spec.weights.iter().enumerate() {
        let term = Expr::var(format!("y{}", i + 1)).pow(Expr::constant(spec.l as f64));
        let term = if *a == 1.0 { term } else { Expr::constant(*a).mul(term) };
        w = Some(match w {
            None => term,
            Some(acc) => acc.add(term),
        });
    }
    let w = w.expect("n >= 1");
    let factor = Expr::constant(spec.lambda).add(Expr::apply(Func::Exp, Expr::var("t").neg()));
    let v = w.clone().mul(factor);
    Ok((w, v))
}

/// Symbolic total derivative of V along the canonical flow:
/// dV/dt = dV/dt|_explicit + sum_i dV/dy_i * f_i^n.
pub fn lyapunov_derivative(cs: &CanonicalSystem, v: &Expr) -> Expr {
    let mut d = v.diff("t");
    for (name, f) in cs.y_names.iter().zip(&cs.rhs_canon) {
        d = d.add(v.diff(name).mul(f.clone()));
    }
    d.simplify()
}

/// Samples V for positivity off the origin, dV/dt for strict negativity off
/// a small ball, and W for strict decrease along the supplied trajectories.
pub fn verify_lyapunov(
    cs: &CanonicalSystem,
    spec: &LyapunovSpec,
    grid: &Grid,
    base: &Binding,
    paths: &[SampledPath],
) -> Result<LyapunovReport, StabilityError> {
    let (w, v) = build_lyapunov(spec, cs.n)?;
    let dv = lyapunov_derivative(cs, &v);

    let mut min_v = f64::INFINITY;
    let mut max_dvdt = f64::NEG_INFINITY;
    let mut positive_definite = true;
    let mut derivative_negative = true;
    let mut any_valid = false;
    for point in grid.points() {
        let b = base.merged(&point);
        let y_norm = cs
            .y_names
            .iter()
            .map(|n| b.get(n).expect("grid binds every canonical coordinate").powi(2))
            .sum::<f64>()
            .sqrt();
        if y_norm > 0.0 {
            let vv = v.eval(&b)?;
            any_valid = true;
            min_v = min_v.min(vv);
            if vv <= 0.0 {
                positive_definite = false;
            }
        }
        if y_norm >= ORIGIN_BALL && cs.guards_hold(&b) {
            let d = match dv.eval(&b) {
                Ok(d) => d,
                Err(EvalError::DomainViolation { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            max_dvdt = max_dvdt.max(d);
            if d >= 0.0 {
                derivative_negative = false;
            }
        }
    }
    if !any_valid {
        return Err(StabilityError::Equiv(EquivError::AllPointsInvalid(grid.len())));
    }

    let mut path_steps_checked = 0usize;
    let mut path_violations = 0usize;
    for path in paths {
        let mut prev: Option<f64> = None;
        for (t, y) in path.times.iter().zip(&path.states) {
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-9 {
                break;
            }
            let mut b = base.clone();
            b.set("t", *t);
            for (name, val) in cs.y_names.iter().zip(y) {
                b.set(name.clone(), *val);
            }
            let wv = w.eval(&b)?;
            if let Some(p) = prev {
                path_steps_checked += 1;
                if wv - p >= MONOTONE_TOL {
                    path_violations += 1;
                }
            }
            prev = Some(wv);
        }
    }

    Ok(LyapunovReport {
        min_v,
        max_dvdt,
        positive_definite,
        derivative_negative,
        paths_checked: paths.len(),
        path_steps_checked,
        path_violations,
        verified: positive_definite && derivative_negative && path_violations == 0,
    })
}

/// Options for a region scan.
#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub s_max: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { s_max: S_MAX_DEFAULT }
    }
}

fn conjunction(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut out = Verdict::StableEvidence;
    for v in verdicts {
        match v {
            Verdict::UnstableEvidence => return Verdict::UnstableEvidence,
            Verdict::StableEvidence => {}
            _ => out = Verdict::Inconclusive,
        }
    }
    out
}

/// Coarser box for region scans, where the sign check runs once per grid
/// point of the (xi, c) product and evaluation cost dominates.
pub fn scan_amap_grid(cs: &CanonicalSystem) -> Grid {
    let mut grid = Grid::new().linspace("t", cs.t0, cs.t0 + 12.0, 5);
    for name in &cs.y_names {
        grid = grid.axis(name.clone(), vec![-0.5, -0.2, 0.0, 0.4, 0.9, 1.5]);
    }
    grid
}

/// Analyses one curve (fixed c and xi): rank criterion plus sign check per
/// component, conjunction across components.
pub fn analyze_curve(
    cs: &CanonicalSystem,
    c: &[f64],
    xi: &Binding,
    opts: &ScanOptions,
) -> Result<Vec<ComponentReport>, StabilityError> {
    let mut base = xi.clone();
    for (name, v) in cs.level_names.iter().zip(c) {
        base.set(name.clone(), *v);
    }
    let mut out = Vec::with_capacity(cs.n);
    for i in 1..=cs.n {
        let rank = classificational_rank(cs, i, opts.s_max, &default_rank_grid(cs, i), &base)?;
        let amap = a_mapping_check(cs, i, &scan_amap_grid(cs), &base)?;
        let mut verdict = criterion_verdict(&rank);
        if verdict == Verdict::StableEvidence && !amap.positive {
            verdict = Verdict::Inconclusive;
        }
        out.push(ComponentReport {
            component: i,
            rank: rank.rank,
            parity: rank.parity,
            sign: rank.sign,
            amap,
            verdict,
        });
    }
    Ok(out)
}

/// Scans a product grid of parameter points and level points, aggregating
/// per-curve verdicts into per-system (fixed xi, all c) and inclusion-level
/// (all xi, all c) verdicts by conjunction.
pub fn scan_region(
    cs: &CanonicalSystem,
    xi_points: &[Vec<f64>],
    c_points: &[Vec<f64>],
    opts: &ScanOptions,
) -> Result<RegionScan, StabilityError> {
    let mut per_curve = Vec::with_capacity(xi_points.len() * c_points.len());
    let mut per_system = Vec::with_capacity(xi_points.len());
    for xi in xi_points {
        let xi_binding: Binding = cs
            .param_names
            .iter()
            .cloned()
            .zip(xi.iter().copied())
            .collect();
        let mut system_verdicts = Vec::with_capacity(c_points.len());
        for c in c_points {
            let components = analyze_curve(cs, c, &xi_binding, opts)?;
            let verdict = conjunction(components.iter().map(|r| r.verdict));
            system_verdicts.push(verdict);
            per_curve.push(CurveVerdict { c: c.clone(), xi: xi.clone(), verdict });
        }
        per_system.push(SystemVerdict { xi: xi.clone(), verdict: conjunction(system_verdicts) });
    }
    let inclusion = conjunction(per_system.iter().map(|s| s.verdict));
    Ok(RegionScan { per_curve, per_system, inclusion })
}
