//! Randomized properties of the symbolic kernel and the analysis pipeline:
//! symbolic derivatives agree with finite differences, simplification and
//! printing preserve values, the psi map round-trips, scan verdicts are
//! monotone under grid shrinking, and the degenerate parameter slice is
//! never reported as stable evidence.

use std::sync::OnceLock;

use proptest::prelude::*;

use lyacanon::cascade::{build_canonical, CanonicalSystem};
use lyacanon::expr::{parse, Binding, Expr, Func};
use lyacanon::stability::{analyze_curve, scan_region, RegionScan, ScanOptions, Verdict};
use lyacanon::sysdef::{LevelVec, SystemDef};

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0..3.0f64).prop_map(Expr::constant),
        prop_oneof![Just("t"), Just("u"), Just("v")].prop_map(Expr::var),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.sub(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.div(b)),
            inner.clone().prop_map(Expr::neg),
            (inner.clone(), 2u32..4u32).prop_map(|(a, k)| a.pow(Expr::constant(k as f64))),
            inner.clone().prop_map(|a| Expr::apply(Func::Sin, a)),
            inner.clone().prop_map(|a| Expr::apply(Func::Cos, a)),
            inner.clone().prop_map(|a| Expr::apply(Func::Exp, a)),
            inner.clone().prop_map(|a| Expr::apply(Func::Sqrt, a)),
            inner.clone().prop_map(|a| Expr::apply(Func::Ln, a)),
        ]
    })
}

fn binding(t: f64, u: f64, v: f64) -> Binding {
    Binding::new().with("t", t).with("u", u).with("v", v)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    /// The symbolic derivative matches a central finite difference wherever
    /// both are well conditioned.
    #[test]
    fn derivative_matches_finite_difference(
        e in arb_expr(),
        t in -2.0..2.0f64,
        u in -2.0..2.0f64,
        v in -2.0..2.0f64,
    ) {
        let d = e.diff("u");
        let b = binding(t, u, v);
        let sym = match d.eval(&b) {
            Ok(x) if x.is_finite() && x.abs() < 1e6 => x,
            _ => return Ok(()),
        };
        let fd_at = |h: f64| -> Option<f64> {
            let up = e.eval(&binding(t, u + h, v)).ok()?;
            let dn = e.eval(&binding(t, u - h, v)).ok()?;
            let fd = (up - dn) / (2.0 * h);
            fd.is_finite().then_some(fd)
        };
        let (Some(fd1), Some(fd2)) = (fd_at(1e-5), fd_at(5e-6)) else { return Ok(()) };
        // skip badly conditioned points: the two step sizes must agree first
        let scale = sym.abs().max(fd1.abs()).max(1.0);
        prop_assume!((fd1 - fd2).abs() / scale < 1e-6);
        prop_assert!(
            (sym - fd1).abs() / scale < 1e-5,
            "symbolic {sym} vs finite difference {fd1}"
        );
    }

    /// Simplification never changes the value of an expression.
    #[test]
    fn simplify_preserves_values(
        e in arb_expr(),
        t in -2.0..2.0f64,
        u in -2.0..2.0f64,
        v in -2.0..2.0f64,
    ) {
        let b = binding(t, u, v);
        let before = match e.eval(&b) {
            Ok(x) if x.is_finite() => x,
            _ => return Ok(()),
        };
        let after = e.simplify().eval(&b).expect("simplified form evaluates where the original does");
        prop_assert!(
            (before - after).abs() <= 1e-12 * before.abs().max(1.0),
            "{before} became {after}"
        );
    }

    /// Printing and re-parsing an expression preserves its value.
    #[test]
    fn print_parse_round_trip(
        e in arb_expr(),
        t in -2.0..2.0f64,
        u in -2.0..2.0f64,
        v in -2.0..2.0f64,
    ) {
        let reparsed = parse(&e.to_string()).expect("printed form parses");
        let b = binding(t, u, v);
        match (e.eval(&b), reparsed.eval(&b)) {
            (Ok(a), Ok(c)) => prop_assert!(
                (a - c).abs() <= 1e-12 * a.abs().max(1.0) || (a.is_nan() && c.is_nan()),
                "{a} became {c} through {}", e
            ),
            (Err(_), Err(_)) => {}
            (a, c) => prop_assert!(false, "eval disagreement: {a:?} vs {c:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    /// Solving g(t0, x0) = c for x0 and reading the levels back recovers c.
    #[test]
    fn psi_round_trip(
        c1 in prop_oneof![-1.0..-0.05f64, 0.05..1.0f64],
        c2 in 0.0..1.0f64,
        scale in proptest::collection::vec(0.9..1.1f64, 4),
    ) {
        let s = SystemDef::bundled_example();
        let hat = s.param_box.hat_vec();
        let xi: Binding = s
            .param_names
            .iter()
            .cloned()
            .zip(hat.iter().zip(&scale).map(|(h, f)| h * f))
            .collect();
        let c = LevelVec(vec![c1, c2]);
        let Ok(x0) = s.psi_solve(&c, &xi, &[2.0, 1.0]) else { return Ok(()) };
        let back = s.c_from_x0(&x0, &xi).expect("levels evaluate at the solution");
        for (want, got) in c.0.iter().zip(&back.0) {
            prop_assert!((want - got).abs() < 1e-9, "{want} became {got}");
        }
    }
}

fn bundled_canonical() -> &'static (SystemDef, CanonicalSystem) {
    static CELL: OnceLock<(SystemDef, CanonicalSystem)> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = SystemDef::bundled_example();
        let cs = build_canonical(&s).expect("the bundled system flattens");
        (s, cs)
    })
}

fn full_scan() -> &'static RegionScan {
    static CELL: OnceLock<RegionScan> = OnceLock::new();
    CELL.get_or_init(|| {
        let (s, cs) = bundled_canonical();
        let xi_points = vec![s.param_box.hat_vec()];
        let c_points = s.level_box.vertices_and_center();
        scan_region(cs, &xi_points, &c_points, &ScanOptions::default())
            .expect("scan grid evaluates")
    })
}

fn strength(v: Verdict) -> u8 {
    match v {
        Verdict::StableEvidence => 2,
        Verdict::UnstableEvidence => 0,
        _ => 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// Dropping points from a scan grid can only keep or improve the
    /// aggregate verdict, never worsen it.
    #[test]
    fn scan_verdict_monotone_under_grid_shrinking(mask in proptest::collection::vec(any::<bool>(), 5)) {
        prop_assume!(mask.iter().any(|m| *m));
        let (s, cs) = bundled_canonical();
        let full = full_scan();
        let all_c = s.level_box.vertices_and_center();
        let subset: Vec<Vec<f64>> = all_c
            .iter()
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|(c, _)| c.clone())
            .collect();
        let sub = scan_region(cs, &[s.param_box.hat_vec()], &subset, &ScanOptions::default())
            .expect("scan grid evaluates");
        prop_assert!(strength(sub.inclusion) >= strength(full.inclusion));
    }

    /// With the decay parameter at or below zero the first component is not
    /// attracting, and the verdict must leave stable-evidence.
    #[test]
    fn degenerate_decay_parameter_is_detected(xi1 in -1.0..=0.0f64) {
        let (s, cs) = bundled_canonical();
        let mut xi = s.param_box.hat_binding();
        xi.set("xi1", xi1);
        let reports = analyze_curve(cs, &[0.5, 0.5], &xi, &ScanOptions::default())
            .expect("analysis grid evaluates");
        prop_assert_ne!(reports[0].verdict, Verdict::StableEvidence);
    }
}
