//! System definitions: right-hand sides, first integrals, solved forms,
//! parameter/level boxes, and the correspondence between level constants
//! and initial states.

use crate::expr::{self, lie_derivative, Binding, EvalError, Expr, Grid};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SysDefError {
    #[error("cannot read '{path}': {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid system file: {0}")]
    Format(String),
    #[error("expression parse error in `{key}`: {source}")]
    ExprParse { key: String, source: expr::ParseError },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("`{key}` references undeclared variable '{var}'")]
    FreeVar { key: String, var: String },
    #[error(transparent)]
    Domain(#[from] EvalError),
    #[error("all grid points violate the domain guards")]
    AllPointsInvalid,
    #[error("Newton iteration did not converge: last residual {residual:.3e}")]
    NewtonNoConvergence { residual: f64 },
    #[error("Jacobian is numerically singular (condition estimate {cond:.3e})")]
    JacobianSingular { cond: f64 },
    #[error("no solved form available for component {0}")]
    MissingSolvedForm(usize),
}

/// Component `index` expressed as a function of (t, other states, c_i, params).
#[derive(Debug, Clone)]
pub struct SolvedForm {
    pub index: usize,
    pub expr: Expr,
}

/// Closed box with an optional distinguished point.
#[derive(Debug, Clone)]
pub struct ParamBox {
    pub names: Vec<String>,
    pub intervals: Vec<(f64, f64)>,
    pub hat: Option<Vec<f64>>,
}

impl ParamBox {
    /// The distinguished point as a binding; falls back to interval midpoints.
    pub fn hat_binding(&self) -> Binding {
        match &self.hat {
            Some(hat) => self.names.iter().cloned().zip(hat.iter().copied()).collect(),
            None => self
                .names
                .iter()
                .cloned()
                .zip(self.intervals.iter().map(|(lo, hi)| 0.5 * (lo + hi)))
                .collect(),
        }
    }

    pub fn hat_vec(&self) -> Vec<f64> {
        let b = self.hat_binding();
        self.names.iter().map(|n| b.get(n).unwrap()).collect()
    }

    /// Corner points of the box plus its center.
    pub fn vertices_and_center(&self) -> Vec<Vec<f64>> {
        let dim = self.intervals.len();
        let mut out = Vec::with_capacity((1 << dim) + 1);
        for mask in 0..(1u32 << dim) {
            out.push(
                self.intervals
                    .iter()
                    .enumerate()
                    .map(|(j, (lo, hi))| if mask >> j & 1 == 1 { *hi } else { *lo })
                    .collect(),
            );
        }
        out.push(self.intervals.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
        out
    }

    pub fn binding(&self, point: &[f64]) -> Binding {
        self.names.iter().cloned().zip(point.iter().copied()).collect()
    }

    /// Uniform grid with `count` samples per coordinate.
    pub fn grid(&self, count: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .intervals
            .iter()
            .map(|(lo, hi)| expr::linspace(*lo, *hi, count))
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for prefix in &out {
                for v in axis {
                    let mut p = prefix.clone();
                    p.push(*v);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }

    /// The same box scaled about its distinguished point.
    pub fn scaled_about_hat(&self, scale: f64) -> ParamBox {
        let hat = self.hat_vec();
        let intervals = self
            .intervals
            .iter()
            .zip(&hat)
            .map(|((lo, hi), h)| (h + (lo - h) * scale, h + (hi - h) * scale))
            .collect();
        ParamBox { names: self.names.clone(), intervals, hat: Some(hat) }
    }
}

/// Vector of level constants, one per first integral.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelVec(pub Vec<f64>);

impl LevelVec {
    pub fn binding(&self, names: &[String]) -> Binding {
        names.iter().cloned().zip(self.0.iter().copied()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SystemDef {
    pub n: usize,
    pub m: usize,
    pub t0: f64,
    pub state_names: Vec<String>,
    pub param_names: Vec<String>,
    pub rhs: Vec<Expr>,
    pub integrals: Vec<Expr>,
    pub solved_forms: Vec<Option<SolvedForm>>,
    pub domain_guards: Vec<Expr>,
    pub param_box: ParamBox,
    pub level_box: ParamBox,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralValidation {
    pub ok: bool,
    /// Max |Lie derivative| per integral over the valid grid points.
    pub max_drift: Vec<f64>,
    /// Fraction of valid grid points where the state Jacobian of g has full rank.
    pub full_rank_fraction: f64,
    pub valid_points: usize,
    pub witness: Option<String>,
}

pub const DRIFT_TOL: f64 = 1e-8;
pub const RANK_SV_TOL: f64 = 1e-6;
pub const RANK_FRACTION: f64 = 0.95;
pub const NEWTON_RESIDUAL_TOL: f64 = 1e-10;
pub const NEWTON_MAX_STEPS: usize = 50;
pub const NEWTON_COND_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    Constant,
    Infimum,
}

pub fn load_system(path: impl AsRef<Path>) -> Result<SystemDef, SysDefError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SysDefError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SystemDef::from_str(&text)
}

impl SystemDef {
    /// The bundled example system.
    pub fn bundled_example() -> SystemDef {
        SystemDef::from_str(crate::EXAMPLE_SYSTEM).expect("bundled example must parse")
    }

    pub fn from_str(text: &str) -> Result<SystemDef, SysDefError> {
        let doc: toml::Value =
            toml::from_str(text).map_err(|e| SysDefError::Format(e.to_string()))?;
        let system = section(&doc, "system")?;
        let n = get_int(system, "system", "n")?;
        let m = get_int(system, "system", "m")?;
        let t0 = get_float(system, "system", "t0")?;
        let state_names = get_strings(system, "system", "states")?;
        let param_names = get_strings(system, "system", "params")?;
        if state_names.len() != n {
            return Err(SysDefError::DimensionMismatch(format!(
                "n = {n} but {} states declared",
                state_names.len()
            )));
        }
        if param_names.len() != m {
            return Err(SysDefError::DimensionMismatch(format!(
                "m = {m} but {} params declared",
                param_names.len()
            )));
        }

        let mut allowed: HashSet<String> = HashSet::new();
        allowed.insert("t".to_string());
        allowed.extend(state_names.iter().cloned());
        allowed.extend(param_names.iter().cloned());

        let rhs_table = section(&doc, "rhs")?;
        let mut rhs = Vec::with_capacity(n);
        for name in &state_names {
            let e = get_expr(rhs_table, "rhs", name)?;
            check_free_vars(&e, &allowed, &format!("rhs.{name}"))?;
            rhs.push(e);
        }

        let g_table = section(&doc, "integrals")?;
        let declared = g_table.as_table().map(|t| t.len()).unwrap_or(0);
        if declared != n {
            return Err(SysDefError::DimensionMismatch(format!(
                "{n} states but {declared} integrals declared"
            )));
        }
        let mut integrals = Vec::with_capacity(n);
        for i in 1..=n {
            let key = format!("g{i}");
            let e = get_expr(g_table, "integrals", &key)?;
            check_free_vars(&e, &allowed, &format!("integrals.{key}"))?;
            integrals.push(e);
        }

        let mut solved_forms = vec![None; n];
        if let Some(solved) = doc.get("solved") {
            for i in 1..=n {
                let key = format!("phi{i}");
                if solved.get(&key).is_some() {
                    let e = get_expr(solved, "solved", &key)?;
                    let mut ok: HashSet<String> = allowed.clone();
                    ok.remove(&state_names[i - 1]);
                    ok.insert(format!("c{i}"));
                    check_free_vars(&e, &ok, &format!("solved.{key}"))?;
                    solved_forms[i - 1] = Some(SolvedForm { index: i - 1, expr: e });
                }
            }
        }

        let mut domain_guards = Vec::new();
        if let Some(domain) = doc.get("domain") {
            for (idx, s) in get_strings(domain, "domain", "guard")?.iter().enumerate() {
                let e = expr::parse(s).map_err(|source| SysDefError::ExprParse {
                    key: format!("domain.guard[{idx}]"),
                    source,
                })?;
                check_free_vars(&e, &allowed, &format!("domain.guard[{idx}]"))?;
                domain_guards.push(e);
            }
        }

        let param_box = read_box(&doc, "param_box", &param_names)?;
        let c_names: Vec<String> = (1..=n).map(|i| format!("c{i}")).collect();
        let level_box = read_box(&doc, "level_box", &c_names)?;

        let mut warnings = Vec::new();
        if m < n {
            warnings.push(format!(
                "parameter dimension m = {m} is smaller than state dimension n = {n}"
            ));
        }

        Ok(SystemDef {
            n,
            m,
            t0,
            state_names,
            param_names,
            rhs,
            integrals,
            solved_forms,
            domain_guards,
            param_box,
            level_box,
            warnings,
        })
    }

    pub fn level_names(&self) -> Vec<String> {
        (1..=self.n).map(|i| format!("c{i}")).collect()
    }

    /// True when every domain guard evaluates > 0 and no guard errors out.
    pub fn guards_hold(&self, binding: &Binding) -> bool {
        self.domain_guards.iter().all(|g| matches!(g.eval(binding), Ok(v) if v > 0.0))
    }

    /// Generic sampling window over t in [t0, t0+12] and each state in
    /// [0.6, 3.0]. Points violating guards are skipped by the consumers, so
    /// the window only has to overlap the valid domain.
    pub fn default_grid(&self) -> Grid {
        let mut grid = Grid::new().linspace("t", self.t0, self.t0 + 12.0, 10);
        for name in &self.state_names {
            grid = grid.linspace(name.clone(), 0.6, 3.0, 10);
        }
        grid
    }

    /// Checks that each g_i has vanishing Lie derivative along the flow and
    /// that the integrals are independent (full-rank state Jacobian) at
    /// almost all valid grid points.
    pub fn validate_integrals(
        &self,
        grid: &Grid,
        params: &Binding,
    ) -> Result<IntegralValidation, SysDefError> {
        let lie: Vec<Expr> = self
            .integrals
            .iter()
            .map(|g| {
                lie_derivative(g, "t", &self.state_names, &self.rhs)
                    .map_err(|e| SysDefError::DimensionMismatch(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let jac: Vec<Vec<Expr>> = self
            .integrals
            .iter()
            .map(|g| self.state_names.iter().map(|s| g.diff(s).simplify()).collect())
            .collect();

        let mut max_drift = vec![0.0f64; self.n];
        let mut witness = None;
        let mut valid = 0usize;
        let mut full_rank = 0usize;
        for point in grid.points() {
            let b = params.merged(&point);
            if !self.guards_hold(&b) {
                continue;
            }
            let mut values = Vec::with_capacity(self.n);
            let mut invalid = false;
            for ld in &lie {
                match ld.eval(&b) {
                    Ok(v) => values.push(v),
                    Err(EvalError::DomainViolation { .. }) => {
                        invalid = true;
                        break;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if invalid {
                continue;
            }
            let mut jrows = Vec::with_capacity(self.n * self.n);
            for row in &jac {
                for entry in row {
                    match entry.eval(&b) {
                        Ok(v) => jrows.push(v),
                        Err(EvalError::DomainViolation { .. }) => {
                            invalid = true;
                            break;
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                if invalid {
                    break;
                }
            }
            if invalid {
                continue;
            }
            valid += 1;
            for (i, v) in values.iter().enumerate() {
                if v.abs() > max_drift[i] {
                    max_drift[i] = v.abs();
                    if v.abs() > DRIFT_TOL && witness.is_none() {
                        witness = Some(format!("integral g{} drifts {v:.3e} at {b:?}", i + 1));
                    }
                }
            }
            let jm = DMatrix::from_row_slice(self.n, self.n, &jrows);
            let svd = jm.svd(false, false);
            if svd.singular_values.iter().all(|s| *s > RANK_SV_TOL) {
                full_rank += 1;
            }
        }
        if valid == 0 {
            return Err(SysDefError::AllPointsInvalid);
        }
        let full_rank_fraction = full_rank as f64 / valid as f64;
        let ok = max_drift.iter().all(|d| *d <= DRIFT_TOL) && full_rank_fraction >= RANK_FRACTION;
        Ok(IntegralValidation { ok, max_drift, full_rank_fraction, valid_points: valid, witness })
    }

    /// c_i = g_i(t0, x0; xi).
    pub fn c_from_x0(&self, x0: &[f64], params: &Binding) -> Result<LevelVec, SysDefError> {
        let mut b = params.clone();
        b.set("t", self.t0);
        for (name, v) in self.state_names.iter().zip(x0) {
            b.set(name.clone(), *v);
        }
        for g in &self.domain_guards {
            let v = g.eval(&b)?;
            if v <= 0.0 {
                return Err(EvalError::DomainViolation {
                    expr: g.to_string(),
                    detail: format!("guard value {v} is not positive"),
                }
                .into());
            }
        }
        let c = self
            .integrals
            .iter()
            .map(|g| g.eval(&b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LevelVec(c))
    }

    /// Newton solve of g(t0, x; xi) = c for the initial state x0.
    pub fn psi_solve(
        &self,
        c: &LevelVec,
        params: &Binding,
        guess: &[f64],
    ) -> Result<Vec<f64>, SysDefError> {
        let jac: Vec<Vec<Expr>> = self
            .integrals
            .iter()
            .map(|g| self.state_names.iter().map(|s| g.diff(s).simplify()).collect())
            .collect();
        let mut x = DVector::from_column_slice(guess);
        let mut last_residual = f64::INFINITY;
        for _ in 0..NEWTON_MAX_STEPS {
            let mut b = params.clone();
            b.set("t", self.t0);
            for (name, v) in self.state_names.iter().zip(x.iter()) {
                b.set(name.clone(), *v);
            }
            let r: Vec<f64> = self
                .integrals
                .iter()
                .zip(&c.0)
                .map(|(g, ci)| g.eval(&b).map(|v| v - ci))
                .collect::<Result<_, _>>()
                .map_err(|_| SysDefError::NewtonNoConvergence { residual: last_residual })?;
            last_residual = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if last_residual < NEWTON_RESIDUAL_TOL {
                let x0: Vec<f64> = x.iter().copied().collect();
                // converged point must satisfy the guards
                let mut bf = params.clone();
                bf.set("t", self.t0);
                for (name, v) in self.state_names.iter().zip(&x0) {
                    bf.set(name.clone(), *v);
                }
                for g in &self.domain_guards {
                    let v = g.eval(&bf)?;
                    if v <= 0.0 {
                        return Err(EvalError::DomainViolation {
                            expr: g.to_string(),
                            detail: format!("guard value {v} at the Newton solution"),
                        }
                        .into());
                    }
                }
                return Ok(x0);
            }
            let mut jvals = Vec::with_capacity(self.n * self.n);
            for row in &jac {
                for entry in row {
                    jvals.push(entry.eval(&b).map_err(|_| SysDefError::NewtonNoConvergence {
                        residual: last_residual,
                    })?);
                }
            }
            let jm = DMatrix::from_row_slice(self.n, self.n, &jvals);
            let svd = jm.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin <= 0.0 || smax / smin > NEWTON_COND_MAX {
                return Err(SysDefError::JacobianSingular {
                    cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
                });
            }
            let rhs = DVector::from_column_slice(&r);
            let delta = jm
                .lu()
                .solve(&rhs)
                .ok_or(SysDefError::JacobianSingular { cond: f64::INFINITY })?;
            x -= delta;
        }
        Err(SysDefError::NewtonNoConvergence { residual: last_residual })
    }

    /// Distance between two leaves of the i-th foliation at t0.
    pub fn leaf_distance(
        &self,
        i: usize,
        c_upper: f64,
        c_lower: f64,
        mode: DistanceMode,
        grid: &Grid,
        base: &Binding,
    ) -> Result<f64, SysDefError> {
        match mode {
            DistanceMode::Constant => Ok((c_upper - c_lower).abs()),
            DistanceMode::Infimum => {
                let form = self.solved_forms[i]
                    .as_ref()
                    .ok_or(SysDefError::MissingSolvedForm(i + 1))?;
                let ci = format!("c{}", i + 1);
                let mut best = f64::INFINITY;
                let mut any = false;
                for point in grid.points() {
                    let mut b = base.merged(&point);
                    b.set("t", self.t0);
                    b.set(ci.clone(), c_upper);
                    let hi = match form.expr.eval(&b) {
                        Ok(v) => v,
                        Err(EvalError::DomainViolation { .. }) => continue,
                        Err(e) => return Err(e.into()),
                    };
                    b.set(ci.clone(), c_lower);
                    let lo = match form.expr.eval(&b) {
                        Ok(v) => v,
                        Err(EvalError::DomainViolation { .. }) => continue,
                        Err(e) => return Err(e.into()),
                    };
                    any = true;
                    best = best.min((hi - lo).abs());
                }
                if !any {
                    return Err(SysDefError::AllPointsInvalid);
                }
                Ok(best)
            }
        }
    }
}

fn section<'a>(doc: &'a toml::Value, name: &str) -> Result<&'a toml::Value, SysDefError> {
    doc.get(name)
        .ok_or_else(|| SysDefError::Format(format!("missing [{name}] section")))
}

fn get_int(v: &toml::Value, section: &str, key: &str) -> Result<usize, SysDefError> {
    v.get(key)
        .and_then(|x| x.as_integer())
        .map(|x| x as usize)
        .ok_or_else(|| SysDefError::Format(format!("missing or non-integer {section}.{key}")))
}

fn get_float(v: &toml::Value, section: &str, key: &str) -> Result<f64, SysDefError> {
    v.get(key)
        .and_then(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)))
        .ok_or_else(|| SysDefError::Format(format!("missing or non-numeric {section}.{key}")))
}

fn get_strings(v: &toml::Value, section: &str, key: &str) -> Result<Vec<String>, SysDefError> {
    let arr = v
        .get(key)
        .and_then(|x| x.as_array())
        .ok_or_else(|| SysDefError::Format(format!("missing array {section}.{key}")))?;
    arr.iter()
        .map(|x| {
            x.as_str()
                .map(str::to_string)
                .ok_or_else(|| SysDefError::Format(format!("non-string entry in {section}.{key}")))
        })
        .collect()
}

fn get_expr(v: &toml::Value, section: &str, key: &str) -> Result<Expr, SysDefError> {
    let text = v
        .get(key)
        .and_then(|x| x.as_str())
        .ok_or_else(|| SysDefError::Format(format!("missing expression {section}.{key}")))?;
    expr::parse(text).map_err(|source| SysDefError::ExprParse {
        key: format!("{section}.{key}"),
        source,
    })
}

fn check_free_vars(
    e: &Expr,
    allowed: &HashSet<String>,
    key: &str,
) -> Result<(), SysDefError> {
    for var in e.free_vars() {
        if !allowed.contains(&var) {
            return Err(SysDefError::FreeVar { key: key.to_string(), var });
        }
    }
    Ok(())
}

fn read_floats(v: &toml::Value, section: &str, key: &str) -> Result<Vec<f64>, SysDefError> {
    let arr = v
        .get(key)
        .and_then(|x| x.as_array())
        .ok_or_else(|| SysDefError::Format(format!("missing array {section}.{key}")))?;
    arr.iter()
        .map(|x| {
            x.as_float()
                .or_else(|| x.as_integer().map(|i| i as f64))
                .ok_or_else(|| SysDefError::Format(format!("non-numeric entry in {section}.{key}")))
        })
        .collect()
}

fn read_box(doc: &toml::Value, section: &str, names: &[String]) -> Result<ParamBox, SysDefError> {
    let table = self::section(doc, section)?;
    let mut intervals = Vec::with_capacity(names.len());
    for name in names {
        let pair = read_floats(table, section, name)?;
        if pair.len() != 2 || pair[0] > pair[1] {
            return Err(SysDefError::Format(format!(
                "{section}.{name} must be [lo, hi] with lo <= hi"
            )));
        }
        intervals.push((pair[0], pair[1]));
    }
    let hat = if table.get("hat").is_some() {
        let h = read_floats(table, section, "hat")?;
        if h.len() != names.len() {
            return Err(SysDefError::Format(format!(
                "{section}.hat has {} entries, expected {}",
                h.len(),
                names.len()
            )));
        }
        for ((lo, hi), v) in intervals.iter().zip(&h) {
            if v < lo || v > hi {
                return Err(SysDefError::Format(format!(
                    "{section}.hat point {v} outside [{lo}, {hi}]"
                )));
            }
        }
        Some(h)
    } else {
        None
    };
    Ok(ParamBox { names: names.to_vec(), intervals, hat })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xi_hat(s: &SystemDef) -> Binding {
        s.param_box.hat_binding()
    }

    #[test]
    fn loads_bundled_example() {
        let s = SystemDef::bundled_example();
        assert_eq!(s.n, 2);
        assert_eq!(s.m, 4);
        assert_eq!(s.t0, 0.0);
        assert_eq!(s.state_names, vec!["x1", "x2"]);
        assert!(s.solved_forms.iter().all(Option::is_some));
        assert_eq!(s.domain_guards.len(), 1);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn dimension_mismatch_detected() {
        let text = r#"
[system]
n = 2
m = 1
t0 = 0.0
states = ["x1", "x2"]
params = ["xi1"]
[rhs]
x1 = "0"
x2 = "0"
[integrals]
g1 = "x1"
[param_box]
xi1 = [0.0, 1.0]
[level_box]
c1 = [0.0, 1.0]
c2 = [0.0, 1.0]
"#;
        assert!(matches!(
            SystemDef::from_str(text),
            Err(SysDefError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn undeclared_variable_detected() {
        let text = r#"
[system]
n = 1
m = 1
t0 = 0.0
states = ["x1"]
params = ["xi1"]
[rhs]
x1 = "x3"
[integrals]
g1 = "x1"
[param_box]
xi1 = [0.0, 1.0]
[level_box]
c1 = [0.0, 1.0]
"#;
        match SystemDef::from_str(text) {
            Err(SysDefError::FreeVar { var, .. }) => assert_eq!(var, "x3"),
            other => panic!("expected free-variable error, got {other:?}"),
        }
    }

    #[test]
    fn bundled_integrals_validate_at_hat() {
        let s = SystemDef::bundled_example();
        let v = s.validate_integrals(&s.default_grid(), &xi_hat(&s)).unwrap();
        assert!(v.ok, "validation failed: {v:?}");
        assert!(v.max_drift.iter().all(|d| *d < DRIFT_TOL));
    }

    #[test]
    fn corrupted_integral_detected() {
        let mut s = SystemDef::bundled_example();
        s.integrals[0] = expr::parse("x1 + x2").unwrap();
        let v = s.validate_integrals(&s.default_grid(), &xi_hat(&s)).unwrap();
        assert!(!v.ok);
        assert!(v.witness.is_some());
    }

    #[test]
    fn trivial_system_validates_exactly() {
        let text = r#"
[system]
n = 1
m = 1
t0 = 0.0
states = ["x1"]
params = ["xi1"]
[rhs]
x1 = "0"
[integrals]
g1 = "x1"
[param_box]
xi1 = [0.0, 1.0]
hat = [0.5]
[level_box]
c1 = [0.0, 1.0]
hat = [0.5]
"#;
        let s = SystemDef::from_str(text).unwrap();
        let grid = Grid::new().linspace("t", 0.0, 12.0, 5).linspace("x1", -1.0, 1.0, 5);
        let v = s.validate_integrals(&grid, &s.param_box.hat_binding()).unwrap();
        assert!(v.ok);
        assert_eq!(v.max_drift, vec![0.0]);
    }

    #[test]
    fn c_from_x0_matches_known_point() {
        let s = SystemDef::bundled_example();
        let c = s.c_from_x0(&[2.0, 1.5], &xi_hat(&s)).unwrap();
        assert!((c.0[0] - 0.5).abs() < 1e-12);
        assert!((c.0[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn c_from_x0_on_zero_level_set() {
        let s = SystemDef::bundled_example();
        let r2 = 2.0f64.sqrt();
        let c = s.c_from_x0(&[r2, r2], &xi_hat(&s));
        // x1 = x2 makes g2's denominator vanish
        assert!(matches!(c, Err(SysDefError::Domain(_))));
    }

    #[test]
    fn psi_solve_recovers_initial_state() {
        let s = SystemDef::bundled_example();
        let x0 = s
            .psi_solve(&LevelVec(vec![0.5, 0.5]), &xi_hat(&s), &[2.0, 1.0])
            .unwrap();
        assert!((x0[0] - 2.0).abs() < 1e-9);
        assert!((x0[1] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn psi_roundtrip() {
        let s = SystemDef::bundled_example();
        let xi = xi_hat(&s);
        let c = LevelVec(vec![0.3, 0.7]);
        let x0 = s.psi_solve(&c, &xi, &[2.0, 1.0]).unwrap();
        let back = s.c_from_x0(&x0, &xi).unwrap();
        for (a, b) in back.0.iter().zip(&c.0) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn leaf_distance_modes_agree_at_t0() {
        let s = SystemDef::bundled_example();
        let d_const = s
            .leaf_distance(0, 0.7, 0.2, DistanceMode::Constant, &Grid::new(), &Binding::new())
            .unwrap();
        assert!((d_const - 0.5).abs() < 1e-15);
        // phi1 = x2 + c1*exp(-xi1*t): the gap |dc| * exp(-xi1*t0) = |dc| at t0 = 0
        let grid = Grid::new().linspace("x2", 0.5, 2.5, 9);
        let d_inf = s
            .leaf_distance(0, 0.7, 0.2, DistanceMode::Infimum, &grid, &xi_hat(&s))
            .unwrap();
        assert!((d_inf - 0.5).abs() < 1e-9);
    }

    #[test]
    fn leaf_distance_zero_for_equal_levels() {
        let s = SystemDef::bundled_example();
        let d = s
            .leaf_distance(0, 0.4, 0.4, DistanceMode::Constant, &Grid::new(), &Binding::new())
            .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn leaf_distance_infimum_requires_solved_form() {
        let mut s = SystemDef::bundled_example();
        s.solved_forms[0] = None;
        assert!(matches!(
            s.leaf_distance(0, 0.7, 0.2, DistanceMode::Infimum, &Grid::new(), &Binding::new()),
            Err(SysDefError::MissingSolvedForm(1))
        ));
    }
}
