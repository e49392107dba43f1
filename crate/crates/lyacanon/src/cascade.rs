//! The stage-by-stage flattening cascade.
//!
//! Stage k substitutes x_k = y_k + phi_k, where phi_k solves the (already
//! transformed) k-th integral g_k = c_k for x_k. After all n stages the
//! transformed right-hand side vanishes component-wise on {y_i = 0}, so
//! y = 0 is the distinguished trajectory and every original trajectory is
//! recovered through the composed coordinate map.

use crate::expr::{equiv_sample, Binding, EquivError, EvalError, Expr, Grid};
use crate::sysdef::SystemDef;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

pub const RESIDUAL_TOL: f64 = 1e-9;
pub const FLATNESS_TOL: f64 = 1e-9;
pub const INVERSE_TOL: f64 = 1e-8;
/// Bound on sup-gap / radius above which the coordinate map is not
/// accepted as uniformly convergent on the scanned time range.
pub const CONVERGENCE_K_CAP: f64 = 100.0;

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("component {component}: integral cannot be solved for its state (no linear or quadratic pattern, no usable solved form)")]
    Unsolvable { component: usize },
    #[error("component {component}: stage residual check failed, max |g - c| on {{y={component} = 0}} is {max_abs:.3e}")]
    ResidualCheck { component: usize, max_abs: f64 },
    #[error("state name '{0}' collides with a canonical coordinate name")]
    NameCollision(String),
    #[error("flatness check failed for component {component}: max |f| on the zero plane is {max_abs:.3e}")]
    Flatness { component: usize, max_abs: f64 },
    #[error("inverse check failed: max round-trip deviation {max_abs:.3e}")]
    InverseCheck { max_abs: f64 },
    #[error(transparent)]
    Equiv(#[from] EquivError),
    #[error(transparent)]
    Domain(#[from] EvalError),
}

/// One flattening substitution x_k = y_k + phi.
#[derive(Debug, Clone)]
pub struct CascadeStage {
    pub k: usize,
    pub phi: Expr,
    /// Max |g_k - c_k| on {y_k = 0} over the verification grid.
    pub residual_max: f64,
}

/// The fully flattened system plus the recorded coordinate maps.
#[derive(Debug, Clone)]
pub struct CanonicalSystem {
    pub n: usize,
    pub t0: f64,
    pub state_names: Vec<String>,
    pub y_names: Vec<String>,
    pub param_names: Vec<String>,
    pub level_names: Vec<String>,
    pub rhs_canon: Vec<Expr>,
    pub stages: Vec<CascadeStage>,
    /// x_i as a function of (t, y, c, xi).
    pub forward_map: Vec<Expr>,
    /// y_i as a function of (t, x, c, xi).
    pub inverse_map: Vec<Expr>,
    pub domain_guards: Vec<Expr>,
    /// The same guards composed with the forward map, as functions of
    /// (t, y, c, xi); a point is in the system's domain iff all are > 0.
    pub canonical_guards: Vec<Expr>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlatnessStat {
    pub component: usize,
    pub max_abs: f64,
    pub valid_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub radii: Vec<f64>,
    pub sup_gap: Vec<f64>,
    pub fitted_k: f64,
    pub monotone: bool,
    pub uniform_convergence_evidence: bool,
}

/// JSON-facing view of a canonical system with verification statistics.
#[derive(Debug, Clone, Serialize)]
pub struct CanonicalReport {
    pub stages: Vec<StageReport>,
    pub rhs_canon: Vec<String>,
    pub forward_map: Vec<String>,
    pub inverse_map: Vec<String>,
    pub flatness: Vec<FlatnessStat>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub k: usize,
    pub phi: String,
    pub residual_max: f64,
}

/// Intermediate system state between stages: right-hand sides and integrals
/// over the mixed coordinates (y_1..y_k, x_{k+1}..x_n).
#[derive(Debug, Clone)]
pub struct StageState {
    pub rhs: Vec<Expr>,
    pub integrals: Vec<Expr>,
}

fn y_name(k: usize) -> String {
    format!("y{k}")
}

/// Replaces `var^2` by a fresh marker variable. Used to detect integrals
/// that depend on the target state only through its square.
fn replace_square(e: &Expr, var: &str, marker: &str) -> Expr {
    match e {
        Expr::Pow(a, b) => {
            if matches!(&**a, Expr::Var(name) if name == var)
                && matches!(&**b, Expr::Const(c) if *c == 2.0)
            {
                return Expr::var(marker);
            }
            replace_square(a, var, marker).pow(replace_square(b, var, marker))
        }
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => replace_square(a, var, marker).neg(),
        Expr::Fn(f, a) => Expr::apply(*f, replace_square(a, var, marker)),
        Expr::Add(a, b) => replace_square(a, var, marker).add(replace_square(b, var, marker)),
        Expr::Sub(a, b) => replace_square(a, var, marker).sub(replace_square(b, var, marker)),
        Expr::Mul(a, b) => replace_square(a, var, marker).mul(replace_square(b, var, marker)),
        Expr::Div(a, b) => replace_square(a, var, marker).div(replace_square(b, var, marker)),
    }
}

/// Solves `g = c` for `var`.
///
/// Strategy, in order: peel the expression tree node by node while the
/// unknown sits in exactly one operand (keeps the result free of spurious
/// quotients), fall back to the linear form g = A*var + B, then to the
/// quadratic case where g depends on var only through var^2 (taking the
/// positive square root, which is what the domain guards of the supported
/// systems select).
fn solve_for(g: &Expr, var: &str, c: &Expr) -> Option<Expr> {
    let g = g.simplify();
    if let Some(sol) = isolate(&g, var, c.clone()) {
        return Some(sol.simplify());
    }
    // linear: g = A*var + B with A, B free of var
    let slope = g.diff(var).simplify();
    if !slope.is_zero() && !slope.contains_var(var) {
        let offset = g.subst_var(var, &Expr::zero()).simplify();
        return Some(c.clone().sub(offset).div(slope).simplify());
    }
    // quadratic: g depends on var only through var^2
    let marker = "__sq";
    let gu = replace_square(&g, var, marker).simplify();
    if !gu.contains_var(var) && gu.contains_var(marker) {
        let square = solve_for(&gu, marker, c)?;
        return Some(Expr::apply(crate::expr::Func::Sqrt, square).simplify());
    }
    None
}

/// Inverts `lhs = rhs` for `var` by peeling one operation per step, as long
/// as only one operand of each node contains the unknown.
fn isolate(lhs: &Expr, var: &str, rhs: Expr) -> Option<Expr> {
    use crate::expr::Func;
    match lhs {
        Expr::Var(name) if name == var => Some(rhs),
        Expr::Neg(a) => isolate(a, var, rhs.neg()),
        Expr::Add(a, b) => match (a.contains_var(var), b.contains_var(var)) {
            (true, false) => isolate(a, var, rhs.sub((**b).clone())),
            (false, true) => isolate(b, var, rhs.sub((**a).clone())),
            _ => None,
        },
        Expr::Sub(a, b) => match (a.contains_var(var), b.contains_var(var)) {
            (true, false) => isolate(a, var, rhs.add((**b).clone())),
            (false, true) => isolate(b, var, (**a).clone().sub(rhs)),
            _ => None,
        },
        Expr::Mul(a, b) => match (a.contains_var(var), b.contains_var(var)) {
            (true, false) => isolate(a, var, rhs.div((**b).clone())),
            (false, true) => isolate(b, var, rhs.div((**a).clone())),
            _ => None,
        },
        Expr::Div(a, b) => match (a.contains_var(var), b.contains_var(var)) {
            (true, false) => isolate(a, var, rhs.mul((**b).clone())),
            (false, true) => isolate(b, var, (**a).clone().div(rhs)),
            _ => None,
        },
        Expr::Pow(a, b) if !b.contains_var(var) => match &**b {
            Expr::Const(v) if *v == 2.0 => {
                isolate(a, var, Expr::apply(Func::Sqrt, rhs))
            }
            _ => None,
        },
        Expr::Fn(Func::Sqrt, a) => isolate(a, var, rhs.clone().mul(rhs)),
        Expr::Fn(Func::Exp, a) => isolate(a, var, Expr::apply(Func::Ln, rhs)),
        Expr::Fn(Func::Ln, a) => isolate(a, var, Expr::apply(Func::Exp, rhs)),
        _ => None,
    }
}

/// Verification grid over the mixed stage coordinates: t, already-flattened
/// y's, not-yet-flattened x's, level constants over their box, parameters at
/// the distinguished point.
fn stage_grid(s: &SystemDef, y_count: usize, x_from: usize) -> (Grid, Binding) {
    let mut grid = Grid::new().linspace("t", s.t0, s.t0 + 12.0, 5);
    for k in 1..=y_count {
        grid = grid.axis(y_name(k), vec![-0.3, 0.0, 0.4]);
    }
    for name in &s.state_names[x_from..] {
        grid = grid.linspace(name.clone(), 0.8, 2.5, 4);
    }
    for (j, (lo, hi)) in s.level_box.intervals.iter().enumerate() {
        grid = grid.linspace(format!("c{}", j + 1), *lo, *hi, 3);
    }
    (grid, s.param_box.hat_binding())
}

/// Derives stage k: solves the transformed k-th integral for x_k and checks
/// the residual identity on {y_k = 0}.
pub fn derive_stage(
    s: &SystemDef,
    k: usize,
    current: &StageState,
) -> Result<CascadeStage, CascadeError> {
    let xk = &s.state_names[k - 1];
    let ck = Expr::var(format!("c{k}"));
    let gk = &current.integrals[k - 1];
    let phi = solve_for(gk, xk, &ck)
        .or_else(|| {
            // fall back to a user-supplied solved form; it is written in the
            // original coordinates, so it is only directly usable at stage 1
            // (later stages would re-introduce already-flattened states)
            if k == 1 {
                s.solved_forms[0].as_ref().map(|form| form.expr.clone())
            } else {
                None
            }
        })
        .ok_or(CascadeError::Unsolvable { component: k })?;

    // Eq-pattern residual: substituting x_k = y_k + phi into g_k - c_k and
    // restricting to y_k = 0 must vanish.
    let substituted = gk.subst_var(xk, &Expr::var(y_name(k)).add(phi.clone()));
    let residual = substituted.sub(ck).subst_var(&y_name(k), &Expr::zero()).simplify();
    let (grid, base) = stage_grid(s, k - 1, k);
    let report = equiv_sample(&residual, &Expr::zero(), &grid, &base, RESIDUAL_TOL)?;
    if !report.equivalent {
        return Err(CascadeError::ResidualCheck { component: k, max_abs: report.max_abs_diff });
    }
    Ok(CascadeStage { k, phi, residual_max: report.max_abs_diff })
}

/// Applies stage k to the current right-hand sides and integrals.
///
/// Non-flattened components transform by substitution alone. The flattened
/// component picks up the total-derivative correction of phi, evaluated
/// with the already-transformed right-hand sides.
pub fn apply_stage(
    s: &SystemDef,
    stage: &CascadeStage,
    current: &StageState,
) -> StageState {
    let k = stage.k;
    let xk = &s.state_names[k - 1];
    let theta = Expr::var(y_name(k)).add(stage.phi.clone());

    let mut next_rhs: Vec<Expr> = current
        .rhs
        .iter()
        .map(|f| f.subst_var(xk, &theta).simplify())
        .collect();

    // dy_k/dt = dx_k/dt - d(phi)/dt with the chain expanded over t, the
    // flattened y_j (j < k) and the remaining x_j (j > k)
    let mut correction = stage.phi.diff("t");
    for j in 1..k {
        correction = correction.add(stage.phi.diff(&y_name(j)).mul(next_rhs[j - 1].clone()));
    }
    for j in (k + 1)..=s.n {
        correction = correction
            .add(stage.phi.diff(&s.state_names[j - 1]).mul(next_rhs[j - 1].clone()));
    }
    next_rhs[k - 1] = next_rhs[k - 1].clone().sub(correction).simplify();

    let next_integrals = current
        .integrals
        .iter()
        .map(|g| g.subst_var(xk, &theta).simplify())
        .collect();

    StageState { rhs: next_rhs, integrals: next_integrals }
}

/// Runs the full cascade and assembles the canonical system with its
/// forward (y -> x) and inverse (x -> y) coordinate maps.
pub fn build_canonical(s: &SystemDef) -> Result<CanonicalSystem, CascadeError> {
    let y_names: Vec<String> = (1..=s.n).map(y_name).collect();
    for name in &s.state_names {
        if y_names.contains(name) || name == "t" {
            return Err(CascadeError::NameCollision(name.clone()));
        }
    }

    let mut current = StageState { rhs: s.rhs.clone(), integrals: s.integrals.clone() };
    let mut stages = Vec::with_capacity(s.n);
    for k in 1..=s.n {
        let stage = derive_stage(s, k, &current)?;
        current = apply_stage(s, &stage, &current);
        stages.push(stage);
    }

    // forward map: back-substitute from the last stage down
    let mut forward: Vec<Option<Expr>> = vec![None; s.n];
    for k in (1..=s.n).rev() {
        let mut e = Expr::var(y_name(k)).add(stages[k - 1].phi.clone());
        let mut map = HashMap::new();
        for j in (k + 1)..=s.n {
            map.insert(s.state_names[j - 1].clone(), forward[j - 1].clone().unwrap());
        }
        e = e.substitute(&map).simplify();
        forward[k - 1] = Some(e);
    }
    let forward_map: Vec<Expr> = forward.into_iter().map(Option::unwrap).collect();

    // inverse map: y_k = x_k - phi_k with earlier y's substituted
    let mut inverse: Vec<Expr> = Vec::with_capacity(s.n);
    for k in 1..=s.n {
        let mut map = HashMap::new();
        for j in 1..k {
            map.insert(y_name(j), inverse[j - 1].clone());
        }
        let e = Expr::var(s.state_names[k - 1].clone())
            .sub(stages[k - 1].phi.substitute(&map))
            .simplify();
        inverse.push(e);
    }

    let state_to_forward: HashMap<String, Expr> = s
        .state_names
        .iter()
        .cloned()
        .zip(forward_map.iter().cloned())
        .collect();
    let canonical_guards = s
        .domain_guards
        .iter()
        .map(|g| g.substitute(&state_to_forward).simplify())
        .collect();

    let cs = CanonicalSystem {
        n: s.n,
        t0: s.t0,
        state_names: s.state_names.clone(),
        y_names,
        param_names: s.param_names.clone(),
        level_names: s.level_names(),
        rhs_canon: current.rhs,
        stages,
        forward_map,
        inverse_map: inverse,
        domain_guards: s.domain_guards.clone(),
        canonical_guards,
    };

    // invariants: flatness and forward/inverse consistency
    let (grid, base) = default_canonical_grid(&cs, s);
    let flat = cs.verify_flatness(&grid, &base)?;
    for f in &flat {
        if f.max_abs > FLATNESS_TOL {
            return Err(CascadeError::Flatness { component: f.component, max_abs: f.max_abs });
        }
    }
    cs.check_inverse(&grid, &base)?;
    Ok(cs)
}

/// Default verification grid in canonical coordinates: t over the scan
/// range, each y_i over a few offsets, level constants over their box,
/// parameters at the distinguished point.
pub fn default_canonical_grid(cs: &CanonicalSystem, s: &SystemDef) -> (Grid, Binding) {
    let mut grid = Grid::new().axis("t", vec![cs.t0, cs.t0 + 3.0, cs.t0 + 6.0, cs.t0 + 9.0, cs.t0 + 12.0]);
    for name in &cs.y_names {
        grid = grid.axis(name.clone(), vec![-0.4, -0.2, 0.0, 0.3, 0.5, 1.0]);
    }
    for (j, (lo, hi)) in s.level_box.intervals.iter().enumerate() {
        grid = grid.linspace(format!("c{}", j + 1), *lo, *hi, 3);
    }
    (grid, s.param_box.hat_binding())
}

impl CanonicalSystem {
    /// True when every domain guard is positive at the canonical point.
    pub fn guards_hold(&self, b: &Binding) -> bool {
        self.canonical_guards.iter().all(|g| matches!(g.eval(b), Ok(v) if v > 0.0))
    }

    /// Binding for a canonical point (t, y) in context (c, xi).
    fn binding(&self, t: f64, y: &[f64], c: &[f64], xi: &Binding) -> Binding {
        let mut b = xi.clone();
        b.set("t", t);
        for (name, v) in self.y_names.iter().zip(y) {
            b.set(name.clone(), *v);
        }
        for (name, v) in self.level_names.iter().zip(c) {
            b.set(name.clone(), *v);
        }
        b
    }

    /// phi-bar: maps an original-coordinate point to canonical coordinates.
    pub fn canonize_point(
        &self,
        t: f64,
        x: &[f64],
        c: &[f64],
        xi: &Binding,
    ) -> Result<Vec<f64>, EvalError> {
        let mut b = xi.clone();
        b.set("t", t);
        for (name, v) in self.state_names.iter().zip(x) {
            b.set(name.clone(), *v);
        }
        for (name, v) in self.level_names.iter().zip(c) {
            b.set(name.clone(), *v);
        }
        self.inverse_map.iter().map(|e| e.eval(&b)).collect()
    }

    /// phi-bar inverse: maps a canonical point back to original coordinates.
    pub fn decanonize_point(
        &self,
        t: f64,
        y: &[f64],
        c: &[f64],
        xi: &Binding,
    ) -> Result<Vec<f64>, EvalError> {
        let b = self.binding(t, y, c, xi);
        self.forward_map.iter().map(|e| e.eval(&b)).collect()
    }

    /// Max |f_i^n| restricted to {y_i = 0}, per component.
    pub fn verify_flatness(
        &self,
        grid: &Grid,
        base: &Binding,
    ) -> Result<Vec<FlatnessStat>, CascadeError> {
        let mut out = Vec::with_capacity(self.n);
        for (i, f) in self.rhs_canon.iter().enumerate() {
            let restricted = f.subst_var(&self.y_names[i], &Expr::zero()).simplify();
            let report = equiv_sample(&restricted, &Expr::zero(), grid, base, FLATNESS_TOL)?;
            out.push(FlatnessStat {
                component: i + 1,
                max_abs: report.max_abs_diff,
                valid_points: report.valid_points,
            });
        }
        Ok(out)
    }

    fn check_inverse(&self, grid: &Grid, base: &Binding) -> Result<(), CascadeError> {
        // forward then inverse must reproduce y on valid points
        let mut max_abs: f64 = 0.0;
        let mut valid = 0usize;
        for point in grid.points() {
            let b = base.merged(&point);
            let t = b.get("t").unwrap();
            let y: Vec<f64> = self.y_names.iter().map(|n| b.get(n).unwrap()).collect();
            let c: Vec<f64> = self.level_names.iter().map(|n| b.get(n).unwrap()).collect();
            let x = match self.decanonize_point(t, &y, &c, &b) {
                Ok(x) => x,
                Err(EvalError::DomainViolation { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            let back = match self.canonize_point(t, &x, &c, &b) {
                Ok(v) => v,
                Err(EvalError::DomainViolation { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            valid += 1;
            for (a, bb) in y.iter().zip(&back) {
                max_abs = max_abs.max((a - bb).abs());
            }
        }
        if valid == 0 {
            return Err(CascadeError::Equiv(EquivError::AllPointsInvalid(grid.len())));
        }
        if max_abs > INVERSE_TOL {
            return Err(CascadeError::InverseCheck { max_abs });
        }
        Ok(())
    }

    /// Sup over the grid of the coordinate-map gap between y and 0,
    /// per shrinking radius of the canonical perturbation.
    pub fn check_uniform_convergence(
        &self,
        radii: &[f64],
        grid: &Grid,
        base: &Binding,
    ) -> Result<ConvergenceReport, CascadeError> {
        let directions = unit_directions(self.n);
        let mut sup_gap = Vec::with_capacity(radii.len());
        for &r in radii {
            let mut sup: f64 = 0.0;
            let mut any = false;
            for point in grid.points() {
                let b = base.merged(&point);
                let t = b.get("t").unwrap();
                let c: Vec<f64> = self.level_names.iter().map(|n| b.get(n).unwrap()).collect();
                let zero = vec![0.0; self.n];
                let x0 = match self.decanonize_point(t, &zero, &c, &b) {
                    Ok(v) => v,
                    Err(EvalError::DomainViolation { .. }) => continue,
                    Err(e) => return Err(e.into()),
                };
                for dir in &directions {
                    for scale in [1.0, 0.5] {
                        let y: Vec<f64> = dir.iter().map(|d| d * r * scale).collect();
                        let x = match self.decanonize_point(t, &y, &c, &b) {
                            Ok(v) => v,
                            Err(EvalError::DomainViolation { .. }) => continue,
                            Err(e) => return Err(e.into()),
                        };
                        any = true;
                        for (a, bb) in x.iter().zip(&x0) {
                            sup = sup.max((a - bb).abs());
                        }
                    }
                }
            }
            if !any && r > 0.0 {
                return Err(CascadeError::Equiv(EquivError::AllPointsInvalid(grid.len())));
            }
            sup_gap.push(sup);
        }
        // radii are expected largest-first; the gap must not grow as the
        // radius shrinks, and gap/radius must stay bounded
        let monotone = sup_gap.windows(2).all(|w| w[1] <= w[0] + 1e-15);
        let fitted_k = radii
            .iter()
            .zip(&sup_gap)
            .filter(|(r, _)| **r > 0.0)
            .map(|(r, g)| g / r)
            .fold(0.0f64, f64::max);
        let verdict = monotone && fitted_k <= CONVERGENCE_K_CAP;
        Ok(ConvergenceReport {
            radii: radii.to_vec(),
            sup_gap,
            fitted_k,
            monotone,
            uniform_convergence_evidence: verdict,
        })
    }

    pub fn report(&self, flatness: Vec<FlatnessStat>) -> CanonicalReport {
        CanonicalReport {
            stages: self
                .stages
                .iter()
                .map(|s| StageReport {
                    k: s.k,
                    phi: s.phi.to_string(),
                    residual_max: s.residual_max,
                })
                .collect(),
            rhs_canon: self.rhs_canon.iter().map(|e| e.to_string()).collect(),
            forward_map: self.forward_map.iter().map(|e| e.to_string()).collect(),
            inverse_map: self.inverse_map.iter().map(|e| e.to_string()).collect(),
            flatness,
        }
    }
}

fn unit_directions(n: usize) -> Vec<Vec<f64>> {
    // axis directions plus diagonals; enough to probe sup over a small ball
    let mut dirs = Vec::new();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = sign;
            dirs.push(d);
        }
    }
    if n >= 2 {
        let inv = 1.0 / (n as f64).sqrt();
        for mask in 0..(1u32 << n) {
            let d: Vec<f64> = (0..n)
                .map(|i| if mask >> i & 1 == 1 { inv } else { -inv })
                .collect();
            dirs.push(d);
        }
    }
    dirs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::sysdef::LevelVec;

    fn bundled() -> (SystemDef, CanonicalSystem) {
        let s = SystemDef::bundled_example();
        let cs = build_canonical(&s).unwrap();
        (s, cs)
    }

    fn xi_hat(s: &SystemDef) -> Binding {
        s.param_box.hat_binding()
    }

    #[test]
    fn stage_one_phi_matches_hand_derivation() {
        let s = SystemDef::bundled_example();
        let current = StageState { rhs: s.rhs.clone(), integrals: s.integrals.clone() };
        let stage = derive_stage(&s, 1, &current).unwrap();
        // phi_1 = x2 + c1 / eta(t, xi1)
        let expected = parse("x2 + c1/exp(xi1*t)").unwrap();
        let grid = Grid::new()
            .linspace("t", 0.0, 12.0, 5)
            .linspace("x2", 0.5, 2.5, 5)
            .linspace("c1", -1.0, 1.0, 5)
            .axis("xi1", vec![0.9, 1.0, 1.1]);
        let r = equiv_sample(&stage.phi, &expected, &grid, &Binding::new(), 1e-9).unwrap();
        assert!(r.equivalent, "max diff {}", r.max_abs_diff);
    }

    #[test]
    fn stage_two_phi_matches_hand_derivation() {
        let s = SystemDef::bundled_example();
        let mut current = StageState { rhs: s.rhs.clone(), integrals: s.integrals.clone() };
        let s1 = derive_stage(&s, 1, &current).unwrap();
        current = apply_stage(&s, &s1, &current);
        let s2 = derive_stage(&s, 2, &current).unwrap();
        // phi_2 = sqrt(gamma + c2 (y1 + c1/eta))
        let expected =
            parse("sqrt(xi2 + xi3*sin(xi4*t) + c2*(y1 + c1/exp(xi1*t)))").unwrap();
        let grid = Grid::new()
            .linspace("t", 0.0, 12.0, 5)
            .axis("y1", vec![-0.3, 0.0, 0.4])
            .linspace("c1", -1.0, 1.0, 3)
            .linspace("c2", 0.0, 1.0, 3);
        let base = xi_hat(&s);
        let r = equiv_sample(&s2.phi, &expected, &grid, &base, 1e-9).unwrap();
        assert!(r.equivalent, "max diff {}", r.max_abs_diff);
    }

    #[test]
    fn first_canonical_component_is_linear_decay() {
        let (s, cs) = bundled();
        // f_1^2 value-equals -xi1*y1
        let expected = parse("-(xi1*y1)").unwrap();
        let (grid, base) = default_canonical_grid(&cs, &s);
        let r = equiv_sample(&cs.rhs_canon[0], &expected, &grid, &base, 1e-9).unwrap();
        assert!(r.equivalent, "max diff {}", r.max_abs_diff);
    }

    #[test]
    fn flatness_of_both_components() {
        let (s, cs) = bundled();
        let (grid, base) = default_canonical_grid(&cs, &s);
        let flat = cs.verify_flatness(&grid, &base).unwrap();
        assert!(flat[0].max_abs < 1e-12, "component 1: {}", flat[0].max_abs);
        assert!(flat[1].max_abs < 1e-9, "component 2: {}", flat[1].max_abs);
    }

    #[test]
    fn corrupted_stage_detected_by_flatness() {
        let (s, mut cs) = bundled();
        cs.rhs_canon[1] = cs.rhs_canon[1].clone().add(Expr::constant(0.01));
        let (grid, base) = default_canonical_grid(&cs, &s);
        let flat = cs.verify_flatness(&grid, &base).unwrap();
        assert!(flat[1].max_abs > 1e-3);
    }

    #[test]
    fn forward_map_matches_closed_form() {
        let (s, cs) = bundled();
        let x1 = parse(
            "y1 + y2 + c1/exp(xi1*t) + sqrt(xi2 + xi3*sin(xi4*t) + c2*(y1 + c1/exp(xi1*t)))",
        )
        .unwrap();
        let x2 = parse("y2 + sqrt(xi2 + xi3*sin(xi4*t) + c2*(y1 + c1/exp(xi1*t)))").unwrap();
        let (grid, base) = default_canonical_grid(&cs, &s);
        for (ours, expected) in cs.forward_map.iter().zip([x1, x2]) {
            let r = equiv_sample(ours, &expected, &grid, &base, 1e-9).unwrap();
            assert!(r.equivalent, "max diff {}", r.max_abs_diff);
        }
    }

    #[test]
    fn decanonize_at_origin_reproduces_initial_state() {
        let (s, cs) = bundled();
        let x = cs
            .decanonize_point(0.0, &[0.0, 0.0], &[0.5, 0.5], &xi_hat(&s))
            .unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn decanonize_at_zero_levels() {
        let (s, cs) = bundled();
        let x = cs
            .decanonize_point(0.0, &[0.0, 0.0], &[0.0, 0.0], &xi_hat(&s))
            .unwrap();
        let r2 = 2.0f64.sqrt();
        assert!((x[0] - r2).abs() < 1e-12);
        assert!((x[1] - r2).abs() < 1e-12);
    }

    #[test]
    fn canonize_inverts_decanonize() {
        let (s, cs) = bundled();
        let xi = xi_hat(&s);
        // deterministic pseudo-random points
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut rand01 = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut checked = 0;
        while checked < 100 {
            let t = 12.0 * rand01();
            let y = [rand01() - 0.4, rand01() - 0.4];
            let c = [2.0 * rand01() - 1.0, rand01()];
            let Ok(x) = cs.decanonize_point(t, &y, &c, &xi) else { continue };
            let Ok(back) = cs.canonize_point(t, &x, &c, &xi) else { continue };
            assert!((back[0] - y[0]).abs() < 1e-8);
            assert!((back[1] - y[1]).abs() < 1e-8);
            checked += 1;
        }
    }

    #[test]
    fn trivial_single_state_system() {
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
c1 = [-1.0, 1.0]
hat = [0.5]
"#;
        let s = SystemDef::from_str(text).unwrap();
        let cs = build_canonical(&s).unwrap();
        // phi_1 = c1, forward map x = y + c1, canonical rhs identically 0
        assert_eq!(cs.stages[0].phi.simplify(), Expr::var("c1"));
        assert_eq!(cs.forward_map[0], parse("y1 + c1").unwrap());
        assert_eq!(cs.rhs_canon[0].simplify(), Expr::zero());
    }

    #[test]
    fn unsolvable_component_reported() {
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
g1 = "x1 + sin(x1)"
[param_box]
xi1 = [0.0, 1.0]
[level_box]
c1 = [0.0, 1.0]
"#;
        let s = SystemDef::from_str(text).unwrap();
        assert!(matches!(
            build_canonical(&s),
            Err(CascadeError::Unsolvable { component: 1 })
        ));
    }

    #[test]
    fn uniform_convergence_on_bundled_example() {
        let (s, cs) = bundled();
        let grid = Grid::new()
            .linspace("t", 0.0, 12.0, 7)
            .linspace("c1", -1.0, 1.0, 3)
            .linspace("c2", 0.0, 1.0, 3);
        let report = cs
            .check_uniform_convergence(&[0.5, 0.25, 0.1, 0.05, 0.01], &grid, &xi_hat(&s))
            .unwrap();
        assert!(report.uniform_convergence_evidence, "{report:?}");
        assert!(report.monotone);
    }

    #[test]
    fn zero_radius_has_zero_gap() {
        let (s, cs) = bundled();
        let grid = Grid::new().axis("t", vec![0.0, 6.0]).axis("c1", vec![0.5]).axis("c2", vec![0.5]);
        let report = cs.check_uniform_convergence(&[0.1, 0.0], &grid, &xi_hat(&s)).unwrap();
        assert_eq!(*report.sup_gap.last().unwrap(), 0.0);
    }

    #[test]
    fn injected_growth_term_fails_convergence_check() {
        let (s, mut cs) = bundled();
        // a gap that blows up along t breaks uniformity in time
        let bad = parse("y1/(t + 1)*exp(t)").unwrap();
        cs.forward_map[0] = cs.forward_map[0].clone().add(bad);
        let grid = Grid::new()
            .linspace("t", 0.0, 12.0, 7)
            .axis("c1", vec![0.5])
            .axis("c2", vec![0.5]);
        let report = cs
            .check_uniform_convergence(&[0.5, 0.25, 0.1, 0.05, 0.01], &grid, &xi_hat(&s))
            .unwrap();
        assert!(!report.uniform_convergence_evidence);
    }

    #[test]
    fn psi_and_forward_map_agree() {
        let (s, cs) = bundled();
        let xi = xi_hat(&s);
        let c = LevelVec(vec![0.5, 0.5]);
        let from_psi = s.psi_solve(&c, &xi, &[2.0, 1.0]).unwrap();
        let from_map = cs.decanonize_point(0.0, &[0.0, 0.0], &c.0, &xi).unwrap();
        for (a, b) in from_psi.iter().zip(&from_map) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
