mod common;

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64 as C64;
use parallel_tori::cli::RunConfig;
use parallel_tori::curve::HyperellipticCurve;
use parallel_tori::family::{FamilyAngles, StandardExample};
use parallel_tori::numerics::c64;
use proptest::prelude::*;

fn complex(r: f64) -> impl Strategy<Value = C64> {
    (-r..r, -r..r).prop_map(|(a, b)| c64(a, b))
}

fn off_unit_circle(r: f64) -> impl Strategy<Value = C64> {
    complex(r).prop_filter("near |z| = 1", |z| (z.norm() - 1.0).abs() >= 0.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn residue_theorem(terms in prop::collection::vec((off_unit_circle(2.0), complex(2.0), complex(1.0)), 1..5)) {
        let poles: Vec<C64> = terms.iter().map(|t| t.0).collect();
        let simple: Vec<C64> = terms.iter().map(|t| t.1).collect();
        let double: Vec<C64> = terms.iter().map(|t| t.2).collect();
        common::residue_case(&poles, &simple, &double).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn monodromy_parity(roots in prop::collection::vec(off_unit_circle(2.0), 4)) {
        common::monodromy_case(&roots).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn reciprocal_chart_agrees(roots in prop::collection::vec(complex(2.0), 4), z in off_unit_circle(3.0)) {
        prop_assume!(z.norm() > 0.1);
        let curve = HyperellipticCurve::new(roots, vec![], c64(1.0, 0.0)).unwrap();
        let zeta = 1.0 / z;
        let q = curve.eval_q(z);
        prop_assert!((curve.eval_reciprocal(zeta) - q * zeta.powu(4)).norm() <= 1e-10 * (1.0 + q.norm() * zeta.norm().powi(4)));
        let p = curve.point_near(z, c64(1.0, 0.0));
        let back = curve.to_standard(&curve.to_reciprocal(&p).unwrap()).unwrap();
        prop_assert!((back.z - p.z).norm() < 1e-12 * (1.0 + p.z.norm()));
        prop_assert!((back.w - p.w).norm() < 1e-10 * (1.0 + p.w.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn contour_deformation(
        theta in PI / 6.0..PI / 3.0,
        alpha in 0.0f64..1.5,
        beta in 0.0f64..1.5,
        center in complex(0.1),
        a in 0.7f64..1.4,
        b in 0.7f64..1.4,
        tilt in -FRAC_PI_4..FRAC_PI_4,
    ) {
        let ex = StandardExample::from_angles(theta, alpha, beta);
        prop_assume!(ex.is_ok());
        let ex = ex.unwrap();
        let contour = common::deformed_gamma2(&ex, center, a, b, tilt);
        prop_assume!(contour.is_some());
        common::deformation_case(&ex, &contour.unwrap()).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn config_round_trip(theta in 0.01f64..1.5, res in 8usize..512, tol in 1e-14f64..1e-6) {
        let cfg = RunConfig { theta: Some(theta), res: Some(res), abs_tol: Some(tol), ..RunConfig::default() };
        let text = parallel_tori::cli::to_json(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pullbacks(triple in 0usize..5, r in 0.2f64..3.0, phase in 0.0f64..2.0 * PI) {
        let (t, a, b) = common::pullback_triples()[triple];
        let ex = StandardExample::from_angles(t, a, b).unwrap();
        let z = C64::from_polar(r, phase);
        prop_assume!(common::clear_point(&ex, z));
        common::pullback_case(&ex, z).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn angle_validation(theta in -1.0f64..3.0, alpha in -1.0f64..3.0, beta in -1.0f64..3.0) {
        let inside = |x: f64| (0.0..=PI / 2.0).contains(&x);
        let result = FamilyAngles::new(theta, alpha, beta);
        if theta <= 0.0 || theta >= PI / 2.0 || !inside(alpha) || !inside(beta) {
            prop_assert!(result.is_err());
        }
    }
}

#[test]
fn seeded_suites_are_clean() {
    for (name, failed, cases) in common::property_suites(99) {
        assert_eq!(failed, 0, "{name}: {failed}/{cases}");
    }
}
