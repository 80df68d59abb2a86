use curvestyle::geometry::{CubicBezier, CurveSet, Point, Subpath, ViewBox};
use curvestyle::gradcheck::check_rules;
use curvestyle::rules::{
    apply_rules, apply_rules_value, rule_cp_translate, rule_rigid, Granularities, Granularity, RuleConfig, RuleKind,
    RuleParams,
};
use proptest::prelude::*;

fn pt() -> impl Strategy<Value = Point> {
    (-20.0..20.0f64, -20.0..20.0f64).prop_map(|(x, y)| Point::new(x, y))
}

/// A closed three-curve loop plus an open two-curve chain.
fn scene() -> impl Strategy<Value = CurveSet> {
    prop::collection::vec(pt(), 16).prop_map(|p| {
        let closed = vec![
            CubicBezier::new(p[0], p[1], p[2], p[3]),
            CubicBezier::new(p[3], p[4], p[5], p[6]),
            CubicBezier::new(p[6], p[7], p[8], p[0]),
        ];
        let open = vec![
            CubicBezier::new(p[9], p[10], p[11], p[12]),
            CubicBezier::new(p[12], p[13], p[14], p[15]),
        ];
        CurveSet::new(
            vec![
                Subpath { curves: closed, closed: true },
                Subpath { curves: open, closed: false },
            ],
            ViewBox { min_x: -20.0, min_y: -20.0, width: 40.0, height: 40.0 },
        )
    })
}

fn config() -> impl Strategy<Value = RuleConfig> {
    let gran = prop_oneof![Just(Granularity::Global), Just(Granularity::PerCurve)];
    (
        prop::collection::vec(any::<bool>(), 5),
        gran.clone(),
        gran.clone(),
        gran.clone(),
        gran,
        0.1..5.0f64,
    )
        .prop_map(|(on, rigid, shear, curvature, smoothing, lambda)| RuleConfig {
            enabled: RuleKind::ALL.iter().zip(on).filter(|(_, b)| *b).map(|(k, _)| *k).collect(),
            granularity: Granularities { rigid, shear, curvature, smoothing },
            lambda,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zero_theta_is_exact_identity(cs in scene(), cfg in config()) {
        let params = RuleParams::for_curves(&cfg, &cs);
        let out = apply_rules_value(&params, &cs, &cfg).unwrap();
        prop_assert_eq!(out, cs);
    }

    #[test]
    fn connectivity_survives_any_theta(cs in scene(), cfg in config(), seed in any::<u64>()) {
        let mut params = RuleParams::for_curves(&cfg, &cs);
        let mut x = seed;
        for t in params.theta.iter_mut() {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *t = ((x >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 6.0;
        }
        let (out, jac) = apply_rules(&params, &cs, &cfg).unwrap();
        prop_assert!(out.connectivity_holds());
        prop_assert!(out.is_finite() && jac.is_finite());
        prop_assert_eq!(jac.nrows(), 8 * cs.num_curves());
    }

    #[test]
    fn cp_translate_is_bounded(cs in scene(), lambda in 0.1..5.0f64, u in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 1..64)) {
        let groups = cs.weld_groups.num_groups();
        let u: Vec<(f64, f64)> = (0..groups).map(|g| u[g % u.len()]).collect();
        let out = rule_cp_translate(&cs, &u, lambda);
        for (a, b) in cs.coords().iter().zip(out.coords()) {
            prop_assert!((a - b).abs() <= lambda * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rigid_is_an_isometry(p in prop::array::uniform4(pt()), tx in -10.0..10.0f64, ty in -10.0..10.0f64, phi in -7.0..7.0f64) {
        let c = CubicBezier::new(p[0], p[1], p[2], p[3]);
        let out = rule_rigid(&c, tx, ty, phi);
        for i in 0..4 {
            for j in i + 1..4 {
                let before = c.pts[i].distance(c.pts[j]);
                let after = out.pts[i].distance(out.pts[j]);
                prop_assert!((before - after).abs() < 1e-12, "{} vs {}", before, after);
            }
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    for seed in 0..5 {
        let r = check_rules(seed);
        assert!(r.max_rel_error < 1e-5, "seed {seed}: {}", r.max_rel_error);
    }
}

#[test]
fn cp_translate_example() {
    let cs = CurveSet::new(
        vec![Subpath {
            curves: vec![CubicBezier::line(Point::new(0.0, 0.0), Point::new(3.0, 0.0))],
            closed: false,
        }],
        ViewBox { min_x: 0.0, min_y: 0.0, width: 3.0, height: 3.0 },
    );
    let u = vec![(0.5, -0.5); cs.weld_groups.num_groups()];
    let out = rule_cp_translate(&cs, &u, 2.0);
    let d = out.curves().next().unwrap().pts[0];
    let expect = 2.0 * 0.5f64.tanh();
    assert!((d.x - expect).abs() < 1e-15 && (d.y + expect).abs() < 1e-15);
    assert!((expect - 0.9242).abs() < 1e-4);
}
