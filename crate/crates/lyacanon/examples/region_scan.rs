//! Scans the stability criteria over a parameter box (nominal values
//! perturbed by +/-10%) crossed with the level-constant box, aggregating
//! per-curve verdicts into per-system and inclusion-level verdicts by
//! conjunction. A stable-evidence verdict at every point is evidence, not
//! proof, that the attractor persists across the whole family.
//!
//! Run with: cargo run --example region_scan

use lyacanon::cascade::build_canonical;
use lyacanon::stability::{scan_region, ScanOptions, Verdict};
use lyacanon::sysdef::SystemDef;

fn main() {
    let s = SystemDef::bundled_example();
    let cs = build_canonical(&s).expect("the bundled system flattens");

    let xi_points = s.param_box.scaled_about_hat(0.1).vertices_and_center();
    let c_points = s.level_box.vertices_and_center();
    println!(
        "scanning {} parameter points x {} level points",
        xi_points.len(),
        c_points.len()
    );

    let scan = scan_region(&cs, &xi_points, &c_points, &ScanOptions::default())
        .expect("scan grid evaluates");

    for sv in &scan.per_system {
        println!("xi = {:?}: {:?}", sv.xi, sv.verdict);
    }
    for cv in scan.per_curve.iter().filter(|cv| cv.verdict != Verdict::StableEvidence) {
        println!("  non-stable curve: c = {:?}, xi = {:?}: {:?}", cv.c, cv.xi, cv.verdict);
    }
    println!("\ninclusion verdict: {:?}", scan.inclusion);
}
