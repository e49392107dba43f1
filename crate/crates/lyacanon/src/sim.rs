//! Numerical integration of the original and canonical systems, parameter
//! sweeps, oracle comparison and plot-data generation.
//!
//! The integrator is an embedded Dormand-Prince 5(4) pair with adaptive
//! step-size control; steps are clipped so every requested sample time is
//! hit exactly. Accuracy is pinned against closed-form oracles, not against
//! the integrator's own error estimate.

use crate::cascade::CanonicalSystem;
use crate::expr::{Binding, EvalError, Expr};
use crate::sysdef::SystemDef;
use serde::Serialize;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
/// Default number of output samples over the scan range.
pub const DEFAULT_SAMPLES: usize = 241;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step size underflow at t = {t:.6} (domain boundary hit)")]
    StepUnderflow { t: f64 },
    #[error("domain violation at t = {t:.6}: {source}")]
    Domain { t: f64, source: EvalError },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    BadInput(String),
    #[error("plot kind needs {0}")]
    PlotInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sample_times: Vec<f64>,
}

impl IntegrateOptions {
    pub fn over(t0: f64, tf: f64) -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            sample_times: sample_times(t0, tf, DEFAULT_SAMPLES),
        }
    }
}

/// Uniform output grid including both endpoints.
pub fn sample_times(t0: f64, tf: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|k| t0 + (tf - t0) * k as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
    /// Per-integral max |g_i(t, x(t)) - c_i|; empty for canonical runs.
    pub drift: Vec<f64>,
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Rhs<'a> {
    exprs: &'a [Expr],
    names: &'a [String],
    binding: Binding,
}

impl Rhs<'_> {
    fn eval(&mut self, t: f64, y: &[f64]) -> Result<Vec<f64>, SimError> {
        self.binding.set("t", t);
        for (name, v) in self.names.iter().zip(y) {
            self.binding.set(name.clone(), *v);
        }
        self.exprs
            .iter()
            .map(|e| e.eval(&self.binding).map_err(|source| SimError::Domain { t, source }))
            .collect()
    }
}

/// Integrates dy/dt = rhs(t, y) from t0, sampling at the requested times.
/// `ctx` supplies every non-state variable (parameters, level constants).
pub fn integrate(
    rhs: &[Expr],
    state_names: &[String],
    x0: &[f64],
    ctx: &Binding,
    opts: &IntegrateOptions,
) -> Result<Trajectory, SimError> {
    if opts.rel_tol <= 0.0 || opts.abs_tol <= 0.0 {
        return Err(SimError::BadInput("tolerances must be positive".into()));
    }
    if opts.sample_times.len() < 2
        || opts.sample_times.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(SimError::BadInput("sample times must be strictly increasing".into()));
    }
    if x0.len() != rhs.len() || state_names.len() != rhs.len() {
        return Err(SimError::BadInput("dimension mismatch".into()));
    }
    let n = rhs.len();
    let t0 = opts.sample_times[0];
    let tf = *opts.sample_times.last().unwrap();

    let mut f = Rhs { exprs: rhs, names: state_names, binding: ctx.clone() };
    let mut t = t0;
    let mut y = x0.to_vec();
    let mut h = ((tf - t0) / 100.0).max(1e-6);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut times = Vec::with_capacity(opts.sample_times.len());
    let mut states = Vec::with_capacity(opts.sample_times.len());
    times.push(t0);
    states.push(y.clone());

    let mut k = vec![vec![0.0; n]; 7];
    for &target in &opts.sample_times[1..] {
        while t < target - 1e-12 {
            let ht = h.min(target - t);
            if ht < 1e-13 * t.abs().max(1.0) {
                return Err(SimError::StepUnderflow { t });
            }
            k[0] = f.eval(t, &y)?;
            for s in 0..6 {
                let mut ys = y.clone();
                for j in 0..=s {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..n {
                            ys[i] += ht * a * k[j][i];
                        }
                    }
                }
                k[s + 1] = f.eval(t + C[s] * ht, &ys)?;
            }
            let mut y5 = y.clone();
            let mut y4 = y.clone();
            for s in 0..7 {
                for i in 0..n {
                    y5[i] += ht * B5[s] * k[s][i];
                    y4[i] += ht * B4[s] * k[s][i];
                }
            }
            let mut err = 0.0f64;
            for i in 0..n {
                // conservative controller: first integrals of the supported
                // systems can amplify state error by large factors (shrinking
                // denominators), so the per-step target sits well below the
                // requested tolerance
                let scale =
                    (opts.abs_tol + opts.rel_tol * y[i].abs().max(y5[i].abs())) * 1e-4;
                err += ((y5[i] - y4[i]) / scale).powi(2);
            }
            err = (err / n as f64).sqrt();
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t += ht;
                y = y5;
                accepted += 1;
                h = (ht * factor).min(tf - t0);
            } else {
                rejected += 1;
                h = ht * factor;
            }
        }
        t = target;
        times.push(target);
        states.push(y.clone());
    }

    Ok(Trajectory { times, states, accepted, rejected, drift: Vec::new() })
}

/// Max |g_i(t, x(t)) - c_i| over the trajectory, per integral. Sample points
/// where an integral is singular (e.g. a vanishing denominator on the curve
/// itself) are skipped; an integral with no regular sample point reports
/// infinity.
pub fn integral_drift(
    traj: &Trajectory,
    integrals: &[Expr],
    state_names: &[String],
    ctx: &Binding,
    c: &[f64],
) -> Result<Vec<f64>, SimError> {
    let mut out = vec![0.0f64; integrals.len()];
    let mut valid = vec![0usize; integrals.len()];
    let mut b = ctx.clone();
    for (t, x) in traj.times.iter().zip(&traj.states) {
        b.set("t", *t);
        for (name, v) in state_names.iter().zip(x) {
            b.set(name.clone(), *v);
        }
        for (i, g) in integrals.iter().enumerate() {
            match g.eval(&b) {
                Ok(v) => {
                    valid[i] += 1;
                    out[i] = out[i].max((v - c[i]).abs());
                }
                Err(EvalError::DomainViolation { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    for (o, v) in out.iter_mut().zip(&valid) {
        if *v == 0 {
            *o = f64::INFINITY;
        }
    }
    Ok(out)
}

/// Integrates the original system and records the per-integral drift.
pub fn integrate_original(
    s: &SystemDef,
    x0: &[f64],
    c: &[f64],
    xi: &Binding,
    opts: &IntegrateOptions,
) -> Result<Trajectory, SimError> {
    let mut traj = integrate(&s.rhs, &s.state_names, x0, xi, opts)?;
    traj.drift = integral_drift(&traj, &s.integrals, &s.state_names, xi, c)?;
    Ok(traj)
}

/// Integrates the canonical system; `ctx` must bind the level constants and
/// parameters.
pub fn integrate_canonical(
    cs: &CanonicalSystem,
    y0: &[f64],
    ctx: &Binding,
    opts: &IntegrateOptions,
) -> Result<Trajectory, SimError> {
    integrate(&cs.rhs_canon, &cs.y_names, y0, ctx, opts)
}

/// Max over output times of the infinity-norm gap between the trajectory and
/// closed-form state expressions of t.
pub fn compare_to_oracle(
    traj: &Trajectory,
    oracle: &[Expr],
    ctx: &Binding,
) -> Result<f64, SimError> {
    let mut b = ctx.clone();
    let mut max_dev = 0.0f64;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        b.set("t", *t);
        for (e, v) in oracle.iter().zip(x) {
            let o = e.eval(&b).map_err(|source| SimError::Domain { t: *t, source })?;
            max_dev = max_dev.max((o - v).abs());
        }
    }
    Ok(max_dev)
}

/// Integrates the canonical system from y0 and the original system from the
/// mapped initial point, then reports the max gap between the mapped
/// canonical trajectory and the original one over the output times.
pub fn cross_coordinate_check(
    s: &SystemDef,
    cs: &CanonicalSystem,
    c: &[f64],
    xi: &Binding,
    y0: &[f64],
    opts: &IntegrateOptions,
) -> Result<f64, SimError> {
    let t0 = opts.sample_times[0];
    let mut ctx = xi.clone();
    for (name, v) in cs.level_names.iter().zip(c) {
        ctx.set(name.clone(), *v);
    }
    let x0 = cs.decanonize_point(t0, y0, c, xi)?;
    let y_traj = integrate_canonical(cs, y0, &ctx, opts)?;
    let x_traj = integrate(&s.rhs, &s.state_names, &x0, xi, opts)?;
    let mut max_dev = 0.0f64;
    for ((t, y), x) in y_traj.times.iter().zip(&y_traj.states).zip(&x_traj.states) {
        let mapped = cs.decanonize_point(*t, y, c, xi)?;
        for (a, b) in mapped.iter().zip(x) {
            max_dev = max_dev.max((a - b).abs());
        }
    }
    Ok(max_dev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepSpace {
    Original,
    Canonical,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub final_state: Vec<f64>,
    pub drift: Vec<f64>,
    /// ||y(T)|| / ||y(0)|| for canonical runs.
    pub decay_ratio: Option<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub c: Vec<f64>,
    pub xi: Vec<f64>,
    pub summary: Option<PointSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub space: SweepSpace,
    pub points: Vec<SweepPoint>,
}

/// Parallelism cap: `LYACANON_THREADS` if set (values below 1 read as 1),
/// otherwise the machine's available parallelism.
pub fn thread_cap() -> usize {
    match std::env::var("LYACANON_THREADS") {
        Ok(v) => v.trim().parse::<usize>().unwrap_or(1).max(1),
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    }
}

/// One trajectory per (c, xi) grid point, assembled in deterministic grid
/// order regardless of the thread count. Original-space runs start on the
/// integral curve (y = 0); canonical runs start from the supplied
/// perturbation. Per-point failures are recorded and the sweep continues.
pub fn sweep(
    s: &SystemDef,
    cs: &CanonicalSystem,
    space: SweepSpace,
    c_points: &[Vec<f64>],
    xi_points: &[Vec<f64>],
    y0: &[f64],
    opts: &IntegrateOptions,
) -> SweepResult {
    let jobs: Vec<(&Vec<f64>, &Vec<f64>)> = xi_points
        .iter()
        .flat_map(|xi| c_points.iter().map(move |c| (xi, c)))
        .collect();
    let run_point = |(xi, c): (&Vec<f64>, &Vec<f64>)| -> SweepPoint {
        let xi_binding: Binding =
            s.param_names.iter().cloned().zip(xi.iter().copied()).collect();
        let run = || -> Result<PointSummary, SimError> {
            let t0 = opts.sample_times[0];
            match space {
                SweepSpace::Original => {
                    let x0 = cs.decanonize_point(t0, &vec![0.0; cs.n], c, &xi_binding)?;
                    let traj = integrate_original(s, &x0, c, &xi_binding, opts)?;
                    Ok(PointSummary {
                        final_state: traj.states.last().unwrap().clone(),
                        drift: traj.drift,
                        decay_ratio: None,
                        accepted: traj.accepted,
                        rejected: traj.rejected,
                    })
                }
                SweepSpace::Canonical => {
                    let mut ctx = xi_binding.clone();
                    for (name, v) in cs.level_names.iter().zip(c) {
                        ctx.set(name.clone(), *v);
                    }
                    let traj = integrate_canonical(cs, y0, &ctx, opts)?;
                    let norm0 = y0.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let last = traj.states.last().unwrap();
                    let norm_t = last.iter().map(|v| v * v).sum::<f64>().sqrt();
                    Ok(PointSummary {
                        final_state: last.clone(),
                        drift: Vec::new(),
                        decay_ratio: (norm0 > 0.0).then(|| norm_t / norm0),
                        accepted: traj.accepted,
                        rejected: traj.rejected,
                    })
                }
            }
        };
        let (summary, error) = match run() {
            Ok(sum) => (Some(sum), None),
            Err(e) => (None, Some(e.to_string())),
        };
        SweepPoint { c: c.clone(), xi: xi.clone(), summary, error }
    };

    let workers = thread_cap().min(jobs.len()).max(1);
    let points = if workers <= 1 {
        jobs.into_iter().map(run_point).collect()
    } else {
        let mut slots: Vec<Option<SweepPoint>> = (0..jobs.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::with_capacity(workers);
            for w in 0..workers {
                let jobs = &jobs;
                let run_point = &run_point;
                handles.push(scope.spawn(move || {
                    jobs.iter()
                        .enumerate()
                        .skip(w)
                        .step_by(workers)
                        .map(|(idx, job)| (idx, run_point(*job)))
                        .collect::<Vec<_>>()
                }));
            }
            for h in handles {
                for (idx, p) in h.join().expect("sweep worker panicked") {
                    slots[idx] = Some(p);
                }
            }
        });
        slots.into_iter().map(Option::unwrap).collect()
    };
    SweepResult { space, points }
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros stripped,
/// scientific notation outside [1e-4, 1e12).
pub fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if exp < -4 || exp >= 12 {
        let s = format!("{:.11e}", v);
        let (m, e) = s.split_once('e').unwrap();
        let m = m.trim_end_matches('0').trim_end_matches('.');
        let e: i32 = e.parse().unwrap();
        format!("{m}e{e:+03}")
    } else {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// t, x1..xn per (c, xi) curve.
    IntegralCurves,
    /// Leaf sections x = psi(t, c, xi) over the level grid at fixed times.
    LevelSections,
    /// First y-derivative of the last canonical component on its zero plane,
    /// over (t, y1).
    Criterion3d,
    /// Same quantity on y = 0, against t, per level point.
    Criterion1d,
    /// Last canonical right-hand side over (y1, y2) at fixed time sections.
    RhsSurface,
}

#[derive(Debug, Clone)]
pub struct PlotOptions {
    pub c_points: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t0: f64,
    pub tf: f64,
}

impl PlotOptions {
    pub fn example_defaults(s: &SystemDef) -> Self {
        Self {
            c_points: vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![-0.5, 0.5]],
            xi: s.param_box.hat_vec(),
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            t0: s.t0,
            tf: s.t0 + 12.0,
        }
    }
}

/// Writes one CSV per call: header row, comma separator, `%.12g` values,
/// LF line endings. Identical inputs produce identical bytes.
pub fn emit_plot_data(
    kind: PlotKind,
    s: &SystemDef,
    cs: &CanonicalSystem,
    opts: &PlotOptions,
    path: &Path,
) -> Result<(), SimError> {
    let xi_binding: Binding =
        s.param_names.iter().cloned().zip(opts.xi.iter().copied()).collect();
    let mut int_opts = IntegrateOptions::over(opts.t0, opts.tf);
    int_opts.rel_tol = opts.rel_tol;
    int_opts.abs_tol = opts.abs_tol;
    if cs.n < 2 && !matches!(kind, PlotKind::IntegralCurves | PlotKind::LevelSections) {
        return Err(SimError::PlotInput("a system with at least two states".into()));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let header: String;
    match kind {
        PlotKind::IntegralCurves => {
            let state_cols =
                s.state_names.iter().map(String::as_str).collect::<Vec<_>>().join(",");
            header = format!("{},t,{state_cols}", level_cols(cs));
            for c in &opts.c_points {
                let x0 = cs.decanonize_point(opts.t0, &vec![0.0; cs.n], c, &xi_binding)?;
                let traj = integrate_original(s, &x0, c, &xi_binding, &int_opts)?;
                for (t, x) in traj.times.iter().zip(&traj.states) {
                    let mut row = c.clone();
                    row.push(*t);
                    row.extend_from_slice(x);
                    rows.push(row);
                }
            }
        }
        PlotKind::LevelSections => {
            let state_cols =
                s.state_names.iter().map(String::as_str).collect::<Vec<_>>().join(",");
            header = format!("t,{},{state_cols}", level_cols(cs));
            for t in [opts.t0, opts.t0 + (opts.tf - opts.t0) / 2.0] {
                for c in &opts.c_points {
                    let x = cs.decanonize_point(t, &vec![0.0; cs.n], c, &xi_binding)?;
                    let mut row = vec![t];
                    row.extend_from_slice(c);
                    row.extend_from_slice(&x);
                    rows.push(row);
                }
            }
        }
        PlotKind::Criterion3d => {
            header = format!("{},t,y1,value", level_cols(cs));
            let d = crate::stability::restricted_derivative(cs, cs.n, 1);
            let Some(c) = opts.c_points.first() else {
                return write_csv(path, &header, &[]);
            };
            let mut b = context(cs, c, &xi_binding);
            for ti in 0..25 {
                let t = opts.t0 + (opts.tf - opts.t0) * ti as f64 / 24.0;
                for yi in 0..21 {
                    let y1 = -0.5 + 2.0 * yi as f64 / 20.0;
                    b.set("t", t);
                    b.set("y1", y1);
                    zero_other_ys(cs, &mut b);
                    let Ok(v) = d.eval(&b) else { continue };
                    let mut row = c.clone();
                    row.extend_from_slice(&[t, y1, v]);
                    rows.push(row);
                }
            }
        }
        PlotKind::Criterion1d => {
            header = format!("{},t,value", level_cols(cs));
            let d = crate::stability::restricted_derivative(cs, cs.n, 1);
            for c in &opts.c_points {
                let mut b = context(cs, c, &xi_binding);
                for name in &cs.y_names {
                    b.set(name.clone(), 0.0);
                }
                for ti in 0..DEFAULT_SAMPLES {
                    let t = opts.t0
                        + (opts.tf - opts.t0) * ti as f64 / (DEFAULT_SAMPLES - 1) as f64;
                    b.set("t", t);
                    let Ok(v) = d.eval(&b) else { continue };
                    let mut row = c.clone();
                    row.extend_from_slice(&[t, v]);
                    rows.push(row);
                }
            }
        }
        PlotKind::RhsSurface => {
            header = format!("{},t,y1,y2,value", level_cols(cs));
            let f = &cs.rhs_canon[cs.n - 1];
            let Some(c) = opts.c_points.first() else {
                return write_csv(path, &header, &[]);
            };
            let mut b = context(cs, c, &xi_binding);
            for t in [opts.t0, opts.t0 + (opts.tf - opts.t0) / 2.0, opts.tf] {
                for i in 0..21 {
                    let y1 = -0.5 + 2.0 * i as f64 / 20.0;
                    for j in 0..21 {
                        let y2 = -0.5 + 2.0 * j as f64 / 20.0;
                        b.set("t", t);
                        b.set("y1", y1);
                        b.set("y2", y2);
                        zero_other_ys(cs, &mut b);
                        let Ok(v) = f.eval(&b) else { continue };
                        let mut row = c.clone();
                        row.extend_from_slice(&[t, y1, y2, v]);
                        rows.push(row);
                    }
                }
            }
        }
    }

    write_csv(path, &header, &rows)
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<(), SimError> {
    let mut out = Vec::new();
    out.extend_from_slice(header.as_bytes());
    out.push(b'\n');
    for row in rows {
        let line = row.iter().map(|v| fmt_g(*v)).collect::<Vec<_>>().join(",");
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

fn level_cols(cs: &CanonicalSystem) -> String {
    cs.level_names.iter().map(String::as_str).collect::<Vec<_>>().join(",")
}

fn context(cs: &CanonicalSystem, c: &[f64], xi: &Binding) -> Binding {
    let mut b = xi.clone();
    for (name, v) in cs.level_names.iter().zip(c) {
        b.set(name.clone(), *v);
    }
    b
}

fn zero_other_ys(cs: &CanonicalSystem, b: &mut Binding) {
    for name in &cs.y_names {
        if b.get(name).is_none() {
            b.set(name.clone(), 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::build_canonical;
    use crate::expr::parse;

    fn bundled() -> (SystemDef, CanonicalSystem) {
        let s = SystemDef::bundled_example();
        let cs = build_canonical(&s).unwrap();
        (s, cs)
    }

    fn oracle() -> Vec<Expr> {
        // exact integral-curve solution of the bundled system
        vec![
            parse("c1*exp(-xi1*t) + sqrt(xi2 + xi3*sin(xi4*t) + c1*c2*exp(-xi1*t))").unwrap(),
            parse("sqrt(xi2 + xi3*sin(xi4*t) + c1*c2*exp(-xi1*t))").unwrap(),
        ]
    }

    fn ctx(s: &SystemDef, c: &[f64]) -> Binding {
        let mut b = s.param_box.hat_binding();
        for (j, v) in c.iter().enumerate() {
            b.set(format!("c{}", j + 1), *v);
        }
        b
    }

    #[test]
    fn constant_rhs_stays_constant() {
        let rhs = vec![Expr::zero(), Expr::zero()];
        let names = vec!["x1".to_string(), "x2".to_string()];
        let opts = IntegrateOptions::over(0.0, 12.0);
        let traj = integrate(&rhs, &names, &[1.0, -2.0], &Binding::new(), &opts).unwrap();
        for x in &traj.states {
            assert_eq!(x, &vec![1.0, -2.0]);
        }
    }

    #[test]
    fn example_trajectory_matches_closed_form() {
        let (s, _) = bundled();
        let c = [0.5, 0.5];
        let opts = IntegrateOptions::over(0.0, 12.0);
        let traj =
            integrate_original(&s, &[2.0, 1.5], &c, &s.param_box.hat_binding(), &opts).unwrap();
        let dev = compare_to_oracle(&traj, &oracle(), &ctx(&s, &c)).unwrap();
        assert!(dev < 1e-6, "deviation {dev}");
        for d in &traj.drift {
            assert!(*d < 1e-6, "drift {d}");
        }
    }

    #[test]
    fn zero_level_trajectory_matches_closed_form() {
        let (s, cs) = bundled();
        let c = [0.0, 0.0];
        let xi = s.param_box.hat_binding();
        let x0 = cs.decanonize_point(0.0, &[0.0, 0.0], &c, &xi).unwrap();
        assert!((x0[0] - 2.0f64.sqrt()).abs() < 1e-12);
        let opts = IntegrateOptions::over(0.0, 12.0);
        let traj = integrate_original(&s, &x0, &c, &xi, &opts).unwrap();
        // closed form degenerates to x1 = x2 = sqrt(2 + sin t)
        let dev = compare_to_oracle(&traj, &oracle(), &ctx(&s, &c)).unwrap();
        assert!(dev < 1e-6, "deviation {dev}");
    }

    #[test]
    fn canonical_perturbation_decays() {
        let (s, cs) = bundled();
        let opts = IntegrateOptions::over(0.0, 12.0);
        let traj =
            integrate_canonical(&cs, &[0.3, 0.2], &ctx(&s, &[0.0, 0.0]), &opts).unwrap();
        let norm0 = (0.3f64.powi(2) + 0.2f64.powi(2)).sqrt();
        let last = traj.states.last().unwrap();
        let norm_t = last.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm_t < 1e-2 * norm0, "ratio {}", norm_t / norm0);
    }

    #[test]
    fn oracle_comparison_is_zero_for_exact_data() {
        let rhs = vec![Expr::zero()];
        let names = vec!["x1".to_string()];
        let opts = IntegrateOptions::over(0.0, 1.0);
        let traj = integrate(&rhs, &names, &[3.0], &Binding::new(), &opts).unwrap();
        let dev = compare_to_oracle(&traj, &[Expr::constant(3.0)], &Binding::new()).unwrap();
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn halving_tolerance_does_not_hurt() {
        let (s, _) = bundled();
        let c = [0.5, 0.5];
        let xi = s.param_box.hat_binding();
        let mut opts = IntegrateOptions::over(0.0, 12.0);
        let traj = integrate_original(&s, &[2.0, 1.5], &c, &xi, &opts).unwrap();
        let dev = compare_to_oracle(&traj, &oracle(), &ctx(&s, &c)).unwrap();
        opts.rel_tol /= 2.0;
        opts.abs_tol /= 2.0;
        let traj2 = integrate_original(&s, &[2.0, 1.5], &c, &xi, &opts).unwrap();
        let dev2 = compare_to_oracle(&traj2, &oracle(), &ctx(&s, &c)).unwrap();
        assert!(dev2 <= 2.0 * dev, "dev {dev} -> {dev2}");
    }

    #[test]
    fn cross_coordinate_consistency() {
        let (s, cs) = bundled();
        let xi = s.param_box.hat_binding();
        let opts = IntegrateOptions::over(0.0, 12.0);
        let dev =
            cross_coordinate_check(&s, &cs, &[0.5, 0.5], &xi, &[0.0, 0.0], &opts).unwrap();
        assert!(dev < 1e-6, "zero perturbation: {dev}");
        let dev =
            cross_coordinate_check(&s, &cs, &[0.5, 0.5], &xi, &[0.1, -0.1], &opts).unwrap();
        assert!(dev < 1e-5, "perturbed: {dev}");
    }

    #[test]
    fn sweep_over_level_grid() {
        let (s, cs) = bundled();
        let c_points =
            vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![-0.5, 0.5]];
        let xi_points = vec![s.param_box.hat_vec()];
        let opts = IntegrateOptions::over(0.0, 12.0);
        let result = sweep(
            &s,
            &cs,
            SweepSpace::Original,
            &c_points,
            &xi_points,
            &[],
            &opts,
        );
        assert_eq!(result.points.len(), 3);
        for p in &result.points {
            let sum = p.summary.as_ref().expect("point failed");
            // g2 is singular on the c1 = 0 curve itself (x1 = x2), so only
            // regular integrals report a finite drift there
            for d in sum.drift.iter().filter(|d| d.is_finite()) {
                assert!(*d < 1e-6);
            }
            assert!(sum.drift.iter().any(|d| d.is_finite()));
        }
    }

    #[test]
    fn empty_sweep_is_empty() {
        let (s, cs) = bundled();
        let opts = IntegrateOptions::over(0.0, 12.0);
        let result =
            sweep(&s, &cs, SweepSpace::Original, &[], &[s.param_box.hat_vec()], &[], &opts);
        assert!(result.points.is_empty());
    }

    #[test]
    fn canonical_sweep_decays_on_vertices() {
        let (s, cs) = bundled();
        let c_points = vec![
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![-1.0, 1.0],
            vec![1.0, 1.0],
        ];
        let opts = IntegrateOptions::over(0.0, 12.0);
        let result = sweep(
            &s,
            &cs,
            SweepSpace::Canonical,
            &c_points,
            &[s.param_box.hat_vec()],
            &[0.3, 0.2],
            &opts,
        );
        for p in &result.points {
            let sum = p.summary.as_ref().expect("point failed");
            let ratio = sum.decay_ratio.unwrap();
            assert!(ratio < 1e-2, "c = {:?}: ratio {ratio}", p.c);
        }
    }

    #[test]
    fn fmt_g_matches_c_formatting() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(0.1), "0.1");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g(1e-7), "1e-07");
        assert_eq!(fmt_g(1.5e13), "1.5e+13");
        assert_eq!(fmt_g(12.25), "12.25");
    }

    #[test]
    fn plot_data_is_deterministic() {
        let (s, cs) = bundled();
        let opts = PlotOptions::example_defaults(&s);
        let dir = tempfile::tempdir().unwrap();
        for kind in [
            PlotKind::IntegralCurves,
            PlotKind::LevelSections,
            PlotKind::Criterion3d,
            PlotKind::Criterion1d,
            PlotKind::RhsSurface,
        ] {
            let a = dir.path().join("a.csv");
            let b = dir.path().join("b.csv");
            emit_plot_data(kind, &s, &cs, &opts, &a).unwrap();
            emit_plot_data(kind, &s, &cs, &opts, &b).unwrap();
            let ba = std::fs::read(&a).unwrap();
            let bb = std::fs::read(&b).unwrap();
            assert!(!ba.is_empty());
            assert_eq!(ba, bb, "{kind:?}");
            let text = String::from_utf8(ba).unwrap();
            let mut lines = text.lines();
            let header = lines.next().unwrap();
            assert!(header.contains("c1"), "{kind:?}: {header}");
            assert!(lines.count() > 1, "{kind:?}");
            assert!(!text.contains('\r'));
        }
    }

    #[test]
    fn criterion_1d_matches_known_value_at_t0() {
        let (s, cs) = bundled();
        let opts = PlotOptions::example_defaults(&s);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crit.csv");
        emit_plot_data(PlotKind::Criterion1d, &s, &cs, &opts, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // first data row is c = (0,0), t = 0: value -1.25
        let row = text.lines().nth(1).unwrap();
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[0], "0");
        assert_eq!(cols[1], "0");
        assert_eq!(cols[2], "0");
        let v: f64 = cols[3].parse().unwrap();
        assert!((v + 1.25).abs() < 1e-9, "{v}");
    }

    #[test]
    fn bad_inputs_rejected() {
        let rhs = vec![Expr::zero()];
        let names = vec!["x1".to_string()];
        let mut opts = IntegrateOptions::over(0.0, 1.0);
        opts.rel_tol = 0.0;
        assert!(matches!(
            integrate(&rhs, &names, &[0.0], &Binding::new(), &opts),
            Err(SimError::BadInput(_))
        ));
        let mut opts = IntegrateOptions::over(0.0, 1.0);
        opts.sample_times = vec![0.0, 0.0];
        assert!(matches!(
            integrate(&rhs, &names, &[0.0], &Binding::new(), &opts),
            Err(SimError::BadInput(_))
        ));
    }
}
