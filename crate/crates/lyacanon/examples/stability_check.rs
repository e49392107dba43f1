//! Applies the derivative-rank and sign-pattern criteria to the canonical
//! system at the nominal parameters, then verifies a canonical Lyapunov
//! function V(t, y) = (a1 y1^l + a2 y2^l)(lambda + e^{-t}) on a box and
//! along a perturbed trajectory.
//!
//! Run with: cargo run --example stability_check

use lyacanon::cascade::build_canonical;
use lyacanon::expr::Grid;
use lyacanon::sim::{integrate_canonical, IntegrateOptions};
use lyacanon::stability::{
    analyze_curve, verify_lyapunov, LyapunovSpec, SampledPath, ScanOptions,
};
use lyacanon::sysdef::SystemDef;

fn main() {
    let s = SystemDef::bundled_example();
    let cs = build_canonical(&s).expect("the bundled system flattens");
    let xi = s.param_box.hat_binding();
    let c = vec![0.5, 0.5];

    let reports =
        analyze_curve(&cs, &c, &xi, &ScanOptions::default()).expect("analysis grid evaluates");
    for r in &reports {
        println!(
            "component {}: rank {:?}, parity {:?}, sign {:?}, sign-pattern violations {}/{}, verdict {:?}",
            r.component, r.rank, r.parity, r.sign, r.amap.violations, r.amap.checked, r.verdict
        );
    }

    // Lyapunov check over a box, plus strict decrease of W = sum a_i y_i^l
    // along one perturbed canonical trajectory.
    let mut base = xi.clone();
    for (name, v) in cs.level_names.iter().zip(&c) {
        base.set(name.clone(), *v);
    }
    let opts = IntegrateOptions::over(s.t0, s.t0 + 12.0);
    let traj = integrate_canonical(&cs, &[0.3, 0.2], &base, &opts).expect("integration succeeds");
    let path = SampledPath { times: traj.times, states: traj.states };

    let grid = Grid::new()
        .linspace("t", s.t0, s.t0 + 12.0, 7)
        .linspace("y1", -0.4, 1.4, 9)
        .linspace("y2", -0.4, 1.4, 9);
    let spec = LyapunovSpec::defaults(cs.n);
    let report =
        verify_lyapunov(&cs, &spec, &grid, &base, &[path]).expect("Lyapunov grid evaluates");
    println!(
        "\nLyapunov: min V = {:.3e}, max dV/dt = {:.3e}",
        report.min_v, report.max_dvdt
    );
    println!(
        "positive definite: {}, derivative negative: {}, path violations: {}/{}",
        report.positive_definite,
        report.derivative_negative,
        report.path_violations,
        report.path_steps_checked
    );
    println!("verified: {}", report.verified);
}
