//! Command-line surface: `validate`, `canonize`, `stability`, `simulate`
//! and `reproduce-example`, tied together over a shared option set.
//!
//! Exit codes: 0 success, 1 analysis failure, 2 usage or load error.

use crate::cascade::{self, build_canonical, CanonicalSystem};
use crate::expr::{Expr, Grid};
use crate::sim::{
    self, compare_to_oracle, cross_coordinate_check, emit_plot_data, integrate_canonical,
    integrate_original, IntegrateOptions, PlotKind, PlotOptions, SweepSpace,
};
use crate::stability::{
    self, a_mapping_check, analyze_curve, restricted_derivative, scan_region, verify_lyapunov,
    LyapunovReport, LyapunovSpec, SampledPath, ScanOptions, StabilityReport, Verdict,
};
use crate::sysdef::{load_system, SystemDef};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const TOL_MIN: f64 = 1e-14;
pub const TOL_MAX: f64 = 1e-2;

#[derive(Debug, Parser)]
#[command(name = "lyacanon", version, about = "Canonical forms, Lyapunov functions and stability evidence for ODE systems with known first integrals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: RunOptions,
}

#[derive(Debug, Clone, Args)]
pub struct RunOptions {
    /// System definition file (TOML); defaults to the bundled example.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Directory for JSON reports and CSV plot data.
    #[arg(long, global = true, default_value = "lyacanon-out")]
    pub out_dir: PathBuf,
    /// Relative integration tolerance, within [1e-14, 1e-2].
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    /// Absolute integration tolerance, within [1e-14, 1e-2].
    #[arg(long, global = true)]
    pub abs_tol: Option<f64>,
    /// Time samples per verification grid.
    #[arg(long, global = true, default_value_t = 7)]
    pub grid_t: usize,
    /// Samples per canonical coordinate in verification grids.
    #[arg(long, global = true, default_value_t = 7)]
    pub grid_y: usize,
    /// Scales the parameter box about its distinguished point.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub xi_box_scale: f64,
    /// Seed for randomized spot checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Lyapunov time factor lambda; must be >= 1.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub lambda: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that the declared first integrals are conserved and independent.
    Validate,
    /// Run the flattening cascade and write the canonical system.
    Canonize,
    /// Derivative-rank criteria, sign checks, Lyapunov verification, region scan.
    Stability,
    /// Integrate both coordinate systems and emit CSV plot data.
    Simulate {
        /// Also compare trajectories against the closed-form solution.
        #[arg(long)]
        oracle: bool,
    },
    /// Full pipeline on the bundled example with pinned acceptance checks.
    ReproduceExample,
}

pub fn run_from_env() -> i32 {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn analysis(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    let opts = &cli.opts;
    for (name, tol) in [("--rel-tol", opts.rel_tol), ("--abs-tol", opts.abs_tol)] {
        if let Some(t) = tol {
            if !(TOL_MIN..=TOL_MAX).contains(&t) {
                return Err(usage(format!("{name} must lie in [{TOL_MIN:e}, {TOL_MAX:e}]")));
            }
        }
    }
    if opts.lambda < 1.0 {
        return Err(usage(format!("--lambda must be >= 1, got {}", opts.lambda)));
    }
    if opts.grid_t < 2 || opts.grid_y < 2 {
        return Err(usage("--grid-t and --grid-y must be at least 2"));
    }
    if opts.xi_box_scale <= 0.0 {
        return Err(usage("--xi-box-scale must be positive"));
    }
    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| usage(format!("cannot create {}: {e}", opts.out_dir.display())))?;

    match cli.command {
        Command::Validate => cmd_validate(opts),
        Command::Canonize => cmd_canonize(opts),
        Command::Stability => cmd_stability(opts),
        Command::Simulate { oracle } => cmd_simulate(opts, oracle),
        Command::ReproduceExample => cmd_reproduce_example(opts),
    }
}

fn load(opts: &RunOptions) -> Result<SystemDef, Failure> {
    match &opts.input {
        Some(path) => load_system(path).map_err(|e| usage(e.to_string())),
        None => Ok(SystemDef::bundled_example()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| analysis(format!("serialization failed: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn integrate_opts(opts: &RunOptions, t0: f64) -> IntegrateOptions {
    let mut io = IntegrateOptions::over(t0, t0 + 12.0);
    if let Some(r) = opts.rel_tol {
        io.rel_tol = r;
    }
    if let Some(a) = opts.abs_tol {
        io.abs_tol = a;
    }
    io
}

fn default_y0(n: usize) -> Vec<f64> {
    if n == 2 {
        vec![0.3, 0.2]
    } else {
        vec![0.3; n]
    }
}

// ---------------------------------------------------------------- validate

fn cmd_validate(opts: &RunOptions) -> Result<i32, Failure> {
    let s = load(opts)?;
    let report = s
        .validate_integrals(&s.default_grid(), &s.param_box.hat_binding())
        .map_err(|e| analysis(e.to_string()))?;
    write_json(&opts.out_dir.join("validate.json"), &report)?;
    for (i, d) in report.max_drift.iter().enumerate() {
        println!("integral g{}: max drift {:.3e}", i + 1, d);
    }
    println!(
        "independence: full rank at {:.1}% of {} valid points",
        report.full_rank_fraction * 100.0,
        report.valid_points
    );
    if report.ok {
        println!("validate: ok");
        Ok(0)
    } else {
        if let Some(w) = &report.witness {
            eprintln!("witness: {w}");
        }
        eprintln!("validate: failed");
        Ok(1)
    }
}

// ---------------------------------------------------------------- canonize

#[derive(Serialize)]
struct CanonizeOutput {
    #[serde(flatten)]
    report: cascade::CanonicalReport,
    convergence: cascade::ConvergenceReport,
}

fn build(s: &SystemDef) -> Result<CanonicalSystem, Failure> {
    build_canonical(s).map_err(|e| analysis(e.to_string()))
}

fn cmd_canonize(opts: &RunOptions) -> Result<i32, Failure> {
    let s = load(opts)?;
    let cs = build(&s)?;
    let (grid, base) = cascade::default_canonical_grid(&cs, &s);
    let flatness = cs.verify_flatness(&grid, &base).map_err(|e| analysis(e.to_string()))?;
    let conv_grid = convergence_grid(&s);
    let convergence = cs
        .check_uniform_convergence(&[0.5, 0.25, 0.1, 0.05, 0.01], &conv_grid, &base)
        .map_err(|e| analysis(e.to_string()))?;
    let out = CanonizeOutput { report: cs.report(flatness), convergence };
    write_json(&opts.out_dir.join("canonize.json"), &out)?;
    for stage in &out.report.stages {
        println!("stage {}: phi = {}", stage.k, stage.phi);
    }
    for f in &out.report.flatness {
        println!("flatness component {}: max |f| = {:.3e}", f.component, f.max_abs);
    }
    println!("canonize: ok");
    Ok(0)
}

fn convergence_grid(s: &SystemDef) -> Grid {
    let mut grid = Grid::new().linspace("t", s.t0, s.t0 + 12.0, 7);
    for (j, (lo, hi)) in s.level_box.intervals.iter().enumerate() {
        grid = grid.linspace(format!("c{}", j + 1), *lo, *hi, 3);
    }
    grid
}

// ---------------------------------------------------------------- stability

fn lyapunov_grid(cs: &CanonicalSystem, c: &[f64], opts: &RunOptions) -> Grid {
    let mut grid = Grid::new().linspace("t", cs.t0, cs.t0 + 12.0, opts.grid_t);
    for name in &cs.y_names {
        grid = grid.linspace(name.clone(), -0.4, 1.4, opts.grid_y);
    }
    for (name, v) in cs.level_names.iter().zip(c) {
        grid = grid.axis(name.clone(), vec![*v]);
    }
    grid
}

fn merge_lyapunov(mut acc: Option<LyapunovReport>, next: LyapunovReport) -> LyapunovReport {
    match acc.take() {
        None => next,
        Some(a) => LyapunovReport {
            min_v: a.min_v.min(next.min_v),
            max_dvdt: a.max_dvdt.max(next.max_dvdt),
            positive_definite: a.positive_definite && next.positive_definite,
            derivative_negative: a.derivative_negative && next.derivative_negative,
            paths_checked: a.paths_checked + next.paths_checked,
            path_steps_checked: a.path_steps_checked + next.path_steps_checked,
            path_violations: a.path_violations + next.path_violations,
            verified: a.verified && next.verified,
        },
    }
}

/// Lyapunov verification merged over the supplied level points, with one
/// perturbed canonical trajectory per point.
fn lyapunov_over_levels(
    s: &SystemDef,
    cs: &CanonicalSystem,
    opts: &RunOptions,
    c_points: &[Vec<f64>],
) -> Result<LyapunovReport, Failure> {
    let spec = LyapunovSpec { lambda: opts.lambda, ..LyapunovSpec::defaults(cs.n) };
    let io = integrate_opts(opts, cs.t0);
    let xi = s.param_box.hat_binding();
    let y0 = default_y0(cs.n);
    let mut merged: Option<LyapunovReport> = None;
    for c in c_points {
        let mut base = xi.clone();
        for (name, v) in cs.level_names.iter().zip(c) {
            base.set(name.clone(), *v);
        }
        let path = integrate_canonical(cs, &y0, &base, &io)
            .map(|traj| SampledPath { times: traj.times, states: traj.states })
            .map_err(|e| analysis(format!("perturbed trajectory at c = {c:?}: {e}")))?;
        let report = verify_lyapunov(cs, &spec, &lyapunov_grid(cs, c, opts), &xi, &[path])
            .map_err(|e| analysis(e.to_string()))?;
        merged = Some(merge_lyapunov(merged, report));
    }
    merged.ok_or_else(|| analysis("no level points to verify"))
}

fn cmd_stability(opts: &RunOptions) -> Result<i32, Failure> {
    let s = load(opts)?;
    let cs = build(&s)?;
    let scan_opts = ScanOptions::default();
    let c_points = s.level_box.vertices_and_center();
    let xi_points = s.param_box.scaled_about_hat(opts.xi_box_scale).grid(3);

    let components = analyze_curve(&cs, &s.level_box.hat_vec(), &s.param_box.hat_binding(), &scan_opts)
        .map_err(|e| analysis(e.to_string()))?;
    let lyapunov = lyapunov_over_levels(&s, &cs, opts, &c_points)?;
    let scan = scan_region(&cs, &xi_points, &c_points, &scan_opts)
        .map_err(|e| analysis(e.to_string()))?;

    for r in &components {
        println!(
            "component {}: rank {:?}, parity {:?}, sign {:?}, amap violations {}, verdict {:?}",
            r.component, r.rank, r.parity, r.sign, r.amap.violations, r.verdict
        );
    }
    println!(
        "lyapunov: min V = {:.3e}, max dV/dt = {:.3e}, verified = {}",
        lyapunov.min_v, lyapunov.max_dvdt, lyapunov.verified
    );
    println!("scan: inclusion verdict {:?}", scan.inclusion);

    let ok = scan.inclusion == Verdict::StableEvidence && lyapunov.verified;
    if !ok {
        for p in scan.per_curve.iter().filter(|p| p.verdict != Verdict::StableEvidence) {
            eprintln!("failing point: c = {:?}, xi = {:?}: {:?}", p.c, p.xi, p.verdict);
        }
    }
    let report = StabilityReport { components, lyapunov, scan };
    write_json(&opts.out_dir.join("stability.json"), &report)?;
    Ok(if ok { 0 } else { 1 })
}

// ---------------------------------------------------------------- simulate

const PLOT_FILES: [(PlotKind, &str); 5] = [
    (PlotKind::IntegralCurves, "integral_curves.csv"),
    (PlotKind::LevelSections, "level_sections.csv"),
    (PlotKind::Criterion3d, "criterion_surface.csv"),
    (PlotKind::Criterion1d, "criterion_time.csv"),
    (PlotKind::RhsSurface, "rhs_surface.csv"),
];

fn plot_options(s: &SystemDef, opts: &RunOptions) -> PlotOptions {
    let mut po = if opts.input.is_none() {
        PlotOptions::example_defaults(s)
    } else {
        PlotOptions {
            c_points: s.level_box.vertices_and_center(),
            xi: s.param_box.hat_vec(),
            rel_tol: sim::DEFAULT_REL_TOL,
            abs_tol: sim::DEFAULT_ABS_TOL,
            t0: s.t0,
            tf: s.t0 + 12.0,
        }
    };
    if let Some(r) = opts.rel_tol {
        po.rel_tol = r;
    }
    if let Some(a) = opts.abs_tol {
        po.abs_tol = a;
    }
    po
}

/// Closed-form solution on the integral curve: the forward map with every
/// canonical coordinate pinned to zero.
fn zero_level_oracle(cs: &CanonicalSystem) -> Vec<Expr> {
    cs.forward_map
        .iter()
        .map(|e| {
            let mut out = e.clone();
            for name in &cs.y_names {
                out = out.subst_var(name, &Expr::zero());
            }
            out.simplify()
        })
        .collect()
}

fn oracle_threshold(rel_tol: f64) -> f64 {
    (1e-6 * rel_tol / sim::DEFAULT_REL_TOL).clamp(1e-6, 1e-3)
}

#[derive(Serialize)]
struct SimulateOutput {
    sweep: sim::SweepResult,
    oracle_max_deviation: Option<f64>,
    oracle_threshold: Option<f64>,
    csv_files: Vec<String>,
}

fn cmd_simulate(opts: &RunOptions, oracle: bool) -> Result<i32, Failure> {
    let s = load(opts)?;
    let cs = build(&s)?;
    let po = plot_options(&s, opts);
    let mut csv_files = Vec::new();
    for (kind, file) in PLOT_FILES {
        let path = opts.out_dir.join(file);
        emit_plot_data(kind, &s, &cs, &po, &path).map_err(|e| analysis(e.to_string()))?;
        csv_files.push(file.to_string());
        println!("wrote {}", path.display());
    }

    let mut io = integrate_opts(opts, s.t0);
    io.rel_tol = po.rel_tol;
    io.abs_tol = po.abs_tol;
    let sweep = sim::sweep(
        &s,
        &cs,
        SweepSpace::Original,
        &po.c_points,
        &[s.param_box.hat_vec()],
        &[],
        &io,
    );

    let mut oracle_max = None;
    let threshold = oracle_threshold(io.rel_tol);
    if oracle {
        let oracle_exprs = zero_level_oracle(&cs);
        let xi = s.param_box.hat_binding();
        let mut max_dev = 0.0f64;
        for c in &po.c_points {
            let x0 = cs
                .decanonize_point(s.t0, &vec![0.0; cs.n], c, &xi)
                .map_err(|e| analysis(e.to_string()))?;
            let traj = integrate_original(&s, &x0, c, &xi, &io)
                .map_err(|e| analysis(e.to_string()))?;
            let mut ctx = xi.clone();
            for (name, v) in cs.level_names.iter().zip(c) {
                ctx.set(name.clone(), *v);
            }
            let dev = compare_to_oracle(&traj, &oracle_exprs, &ctx)
                .map_err(|e| analysis(e.to_string()))?;
            max_dev = max_dev.max(dev);
        }
        println!("oracle: max deviation {max_dev:.3e} (threshold {threshold:.3e})");
        oracle_max = Some(max_dev);
    }

    let out = SimulateOutput {
        sweep,
        oracle_max_deviation: oracle_max,
        oracle_threshold: oracle.then_some(threshold),
        csv_files,
    };
    write_json(&opts.out_dir.join("simulate.json"), &out)?;
    if let Some(dev) = oracle_max {
        if dev > threshold {
            eprintln!("oracle comparison failed: {dev:.3e} > {threshold:.3e}");
            return Ok(1);
        }
    }
    println!("simulate: ok");
    Ok(0)
}

// ---------------------------------------------------- reproduce-example

#[derive(Serialize)]
struct Criterion {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct Summary {
    criteria: Vec<Criterion>,
    all_pass: bool,
}

struct Lcg(u64);

impl Lcg {
    fn next01(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn in_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next01()
    }
}

fn example_c_points() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![-0.5, 0.5]]
}

fn cmd_reproduce_example(opts: &RunOptions) -> Result<i32, Failure> {
    let started = std::time::Instant::now();
    let s = SystemDef::bundled_example();
    let cs = build(&s)?;
    let xi = s.param_box.hat_binding();
    let io = integrate_opts(opts, s.t0);
    let mut criteria: Vec<Criterion> = Vec::new();
    let push = |criteria: &mut Vec<Criterion>, id, name, pass, detail: String| {
        println!("criterion {id:>2} {}: {name} ({detail})", if pass { "PASS" } else { "FAIL" });
        criteria.push(Criterion { id, name, pass, detail });
    };

    // 1: the first canonical component decays linearly with the exact rate.
    {
        let d = restricted_derivative(&cs, 1, 1);
        let mut max_err = 0.0f64;
        for t in [0.0, 3.0, 6.0, 9.0, 12.0] {
            for y2 in [-0.3, 0.0, 0.4] {
                let b = xi.clone().with("t", t).with("y2", y2).with("c1", 0.5).with("c2", 0.5);
                let v = d.eval(&b).map_err(|e| analysis(e.to_string()))?;
                max_err = max_err.max((v + 1.0).abs());
            }
        }
        push(&mut criteria, 1, "exact linear decay rate of component 1", max_err < 1e-12,
            format!("max |d + 1| = {max_err:.3e}"));
    }

    // 2: cascade-derived derivative of component 2 matches the closed form.
    {
        let derived = restricted_derivative(&cs, 2, 1);
        let printed = crate::expr::parse(
            "-(xi1 + (xi3*xi4*cos(xi4*t) + xi1*(xi2 + xi3*sin(xi4*t)))/(xi2 + xi3*sin(xi4*t) + c2*(y1 + c1*exp(-xi1*t))))/2",
        )
        .expect("closed form parses");
        let mut max_err = 0.0f64;
        for c in example_c_points() {
            for t in [0.0, 3.0, 6.0, 9.0, 12.0] {
                for y1 in [-0.2, 0.0, 0.5] {
                    let b = xi
                        .clone()
                        .with("t", t)
                        .with("y1", y1)
                        .with("c1", c[0])
                        .with("c2", c[1]);
                    let a = derived.eval(&b).map_err(|e| analysis(e.to_string()))?;
                    let bb = printed.eval(&b).map_err(|e| analysis(e.to_string()))?;
                    max_err = max_err.max((a - bb).abs());
                }
            }
        }
        push(&mut criteria, 2, "closed-form derivative of component 2", max_err < 1e-9,
            format!("max gap {max_err:.3e}"));
    }

    // 3 + 4: integral-curve trajectories match the closed form and conserve
    // the first integrals.
    {
        let oracle = zero_level_oracle(&cs);
        let mut max_dev = 0.0f64;
        let mut max_drift = 0.0f64;
        let mut singular_skipped = 0usize;
        for c in example_c_points() {
            let x0 = cs
                .decanonize_point(s.t0, &[0.0, 0.0], &c, &xi)
                .map_err(|e| analysis(e.to_string()))?;
            let traj = integrate_original(&s, &x0, &c, &xi, &io)
                .map_err(|e| analysis(e.to_string()))?;
            let mut ctx = xi.clone();
            ctx.set("c1", c[0]);
            ctx.set("c2", c[1]);
            let dev = compare_to_oracle(&traj, &oracle, &ctx)
                .map_err(|e| analysis(e.to_string()))?;
            max_dev = max_dev.max(dev);
            for d in &traj.drift {
                if d.is_finite() {
                    max_drift = max_drift.max(*d);
                } else {
                    // the second integral is singular on the whole c1 = 0
                    // curve (x1 = x2); no regular sample point exists there
                    singular_skipped += 1;
                }
            }
        }
        push(&mut criteria, 3, "trajectories match the closed-form solution", max_dev < 1e-6,
            format!("max deviation {max_dev:.3e}"));
        push(&mut criteria, 4, "first-integral conservation", max_drift < 1e-6,
            format!("max drift {max_drift:.3e}, {singular_skipped} singular integral(s) skipped"));
    }

    // 5: canonical right-hand sides vanish on their zero planes.
    {
        let (grid, base) = cascade::default_canonical_grid(&cs, &s);
        let flat = cs.verify_flatness(&grid, &base).map_err(|e| analysis(e.to_string()))?;
        let worst = flat.iter().map(|f| f.max_abs).fold(0.0f64, f64::max);
        push(&mut criteria, 5, "flatness on the zero planes", worst < 1e-9,
            format!("max |f| = {worst:.3e}"));
    }

    // 6: canonical trajectories map onto original ones.
    {
        let mut worst = 0.0f64;
        for y0 in [[0.0, 0.0], [0.1, -0.1]] {
            let dev = cross_coordinate_check(&s, &cs, &[0.5, 0.5], &xi, &y0, &io)
                .map_err(|e| analysis(e.to_string()))?;
            worst = worst.max(dev);
        }
        push(&mut criteria, 6, "coordinate-map consistency of trajectories", worst < 1e-5,
            format!("max deviation {worst:.3e}"));
    }

    // 7: Lyapunov function verified over the level box.
    {
        let c_points = s.level_box.vertices_and_center();
        let report = lyapunov_over_levels(&s, &cs, opts, &c_points)?;
        push(&mut criteria, 7, "Lyapunov verification", report.verified,
            format!("min V = {:.3e}, max dV/dt = {:.3e}, path violations {}",
                report.min_v, report.max_dvdt, report.path_violations));
    }

    // 8: sign pattern of component 2 holds without violations.
    {
        let mut violations = 0usize;
        for c in example_c_points() {
            let mut base = xi.clone();
            base.set("c1", c[0]);
            base.set("c2", c[1]);
            let r = a_mapping_check(&cs, 2, &stability::default_amap_grid(&cs), &base)
                .map_err(|e| analysis(e.to_string()))?;
            violations += r.violations;
        }
        push(&mut criteria, 8, "sign pattern of the averaging mapping", violations == 0,
            format!("{violations} violation(s)"));
    }

    // 9: canonical perturbations decay across the level-box vertices.
    {
        let result = sim::sweep(
            &s,
            &cs,
            SweepSpace::Canonical,
            &s.level_box.vertices_and_center(),
            &[s.param_box.hat_vec()],
            &default_y0(cs.n),
            &io,
        );
        let mut worst = 0.0f64;
        let mut ok = true;
        for p in &result.points {
            match &p.summary {
                Some(sum) => {
                    let r = sum.decay_ratio.unwrap_or(f64::INFINITY);
                    worst = worst.max(r);
                    ok &= r < 1e-2;
                }
                None => ok = false,
            }
        }
        push(&mut criteria, 9, "canonical perturbation decay", ok,
            format!("worst ratio {worst:.3e}"));
    }

    // 10: seeded spot checks — symbolic derivatives against central finite
    // differences, and level-constant round trips through the psi map.
    {
        let mut rng = Lcg(opts.seed.wrapping_mul(2862933555777941757).wrapping_add(1));
        let mut max_rel = 0.0f64;
        let h = 1e-6;
        let mut checked = 0usize;
        while checked < 100 {
            let b = xi
                .clone()
                .with("t", rng.in_range(0.0, 6.0))
                .with("x1", rng.in_range(0.8, 2.5))
                .with("x2", rng.in_range(0.8, 2.5));
            for f in &s.rhs {
                for var in ["x1", "x2", "t"] {
                    let sym = f.diff(var).simplify();
                    let x = b.get(var).unwrap();
                    let (Ok(fp), Ok(fm), Ok(sv)) = (
                        f.eval(&b.clone().with(var, x + h)),
                        f.eval(&b.clone().with(var, x - h)),
                        sym.eval(&b),
                    ) else {
                        continue;
                    };
                    let fd = (fp - fm) / (2.0 * h);
                    max_rel = max_rel.max((sv - fd).abs() / sv.abs().max(1.0));
                    checked += 1;
                }
            }
        }
        let mut max_round = 0.0f64;
        let mut rounds = 0usize;
        while rounds < 20 {
            let c = crate::sysdef::LevelVec(vec![
                rng.in_range(-1.0, 1.0),
                rng.in_range(0.0, 1.0),
            ]);
            let Ok(x0) = s.psi_solve(&c, &xi, &[2.0, 1.0]) else { continue };
            let Ok(back) = s.c_from_x0(&x0, &xi) else { continue };
            for (a, b) in c.0.iter().zip(&back.0) {
                max_round = max_round.max((a - b).abs());
            }
            rounds += 1;
        }
        let pass = max_rel < 1e-5 && max_round < 1e-9;
        push(&mut criteria, 10, "seeded derivative and round-trip spot checks", pass,
            format!("max fd gap {max_rel:.3e}, max round trip {max_round:.3e}, seed {}", opts.seed));
    }

    // 11: stability evidence across the scaled parameter box.
    {
        let xi_points = s.param_box.scaled_about_hat(opts.xi_box_scale).vertices_and_center();
        let scan = scan_region(&cs, &xi_points, &s.level_box.vertices_and_center(), &ScanOptions::default())
            .map_err(|e| analysis(e.to_string()))?;
        push(&mut criteria, 11, "stability evidence across the parameter box",
            scan.inclusion == Verdict::StableEvidence,
            format!("inclusion verdict {:?} over {} curves (sampled evidence, not proof)",
                scan.inclusion, scan.per_curve.len()));
    }

    // also emit the standard artifacts for inspection
    let po = PlotOptions {
        rel_tol: io.rel_tol,
        abs_tol: io.abs_tol,
        ..PlotOptions::example_defaults(&s)
    };
    for (kind, file) in PLOT_FILES {
        emit_plot_data(kind, &s, &cs, &po, &opts.out_dir.join(file))
            .map_err(|e| analysis(e.to_string()))?;
    }

    let all_pass = criteria.iter().all(|c| c.pass);
    let summary = Summary { criteria, all_pass };
    write_json(&opts.out_dir.join("summary.json"), &summary)?;
    println!(
        "reproduce-example: {} in {:.1}s",
        if all_pass { "ok" } else { "FAILED" },
        started.elapsed().as_secs_f64()
    );
    if all_pass {
        Ok(0)
    } else {
        let first = summary.criteria.iter().find(|c| !c.pass).unwrap();
        Err(analysis(format!("criterion {} failed: {}", first.id, first.name)))
    }
}
