//! Integrates the original system along three leaves, reports conservation
//! drift and the deviation from a closed-form solution, cross-checks the
//! canonical trajectory against the original one through the coordinate
//! maps, and runs a parallel sweep over the level box. Plot data (the same
//! CSVs the CLI emits) lands in a temporary directory.
//!
//! Run with: cargo run --example simulate_sweep

use lyacanon::cascade::build_canonical;
use lyacanon::expr::parse;
use lyacanon::sim::{
    compare_to_oracle, cross_coordinate_check, emit_plot_data, integrate_original, sweep,
    IntegrateOptions, PlotKind, PlotOptions, SweepSpace,
};
use lyacanon::sysdef::SystemDef;

fn main() {
    let s = SystemDef::bundled_example();
    let cs = build_canonical(&s).expect("the bundled system flattens");
    let xi = s.param_box.hat_binding();
    let opts = IntegrateOptions::over(s.t0, s.t0 + 12.0);

    // The bundled system has a closed-form solution on each leaf; compare
    // the integrated trajectory against it for three level points.
    let oracle = [
        parse("sqrt(xi2 + xi3*sin(xi4*t) + c1*c2*exp(-xi1*t)) + c1*exp(-xi1*t)").unwrap(),
        parse("sqrt(xi2 + xi3*sin(xi4*t) + c1*c2*exp(-xi1*t))").unwrap(),
    ];
    for c in [vec![0.0, 0.0], vec![0.5, 0.5], vec![-0.5, 0.5]] {
        // Initial state on the leaf: the forward map at y = 0. (psi_solve
        // would do as well away from c1 = 0, where the second integral is
        // singular on the whole leaf.)
        let x0 = cs
            .decanonize_point(s.t0, &[0.0, 0.0], &c, &xi)
            .expect("forward map evaluates");
        let traj = integrate_original(&s, &x0, &c, &xi, &opts).expect("integration succeeds");
        let mut ctx = xi.clone();
        for (name, v) in cs.level_names.iter().zip(&c) {
            ctx.set(name.clone(), *v);
        }
        let dev = compare_to_oracle(&traj, &oracle, &ctx).expect("oracle evaluates");
        println!(
            "c = {:?}: x0 = [{:.6}, {:.6}], oracle deviation {:.3e}, drift {:?}",
            c, x0[0], x0[1], dev, traj.drift
        );
    }

    // Same dynamics seen from both coordinate systems.
    let gap = cross_coordinate_check(&s, &cs, &[0.5, 0.5], &xi, &[0.1, -0.1], &opts)
        .expect("both integrations succeed");
    println!("\ncross-coordinate gap for y0 = [0.1, -0.1]: {gap:.3e}");

    // Parallel sweep over the level box at nominal parameters; honours the
    // LYACANON_THREADS cap.
    let c_points = s.level_box.grid(3);
    let xi_points = vec![s.param_box.hat_vec()];
    let result = sweep(
        &s,
        &cs,
        SweepSpace::Canonical,
        &c_points,
        &xi_points,
        &[0.3, 0.2],
        &opts,
    );
    println!("\nsweep over {} level points (canonical coordinates):", result.points.len());
    for p in &result.points {
        match (&p.summary, &p.error) {
            (Some(sum), _) => println!(
                "  c = {:?}: ||y(T)||/||y(0)|| = {:.3e}",
                p.c,
                sum.decay_ratio.unwrap_or(f64::NAN)
            ),
            (None, Some(e)) => println!("  c = {:?}: {e}", p.c),
            _ => unreachable!(),
        }
    }

    let dir = std::env::temp_dir().join("lyacanon_plots");
    std::fs::create_dir_all(&dir).expect("temp dir is writable");
    let plot_opts = PlotOptions::example_defaults(&s);
    for (kind, file) in [
        (PlotKind::IntegralCurves, "integral_curves.csv"),
        (PlotKind::Criterion1d, "criterion_time.csv"),
    ] {
        let path = dir.join(file);
        emit_plot_data(kind, &s, &cs, &plot_opts, &path).expect("CSV writes");
        println!("wrote {}", path.display());
    }
}
