use parallel_tori::boundary::{
    build_k1_torus, catenoid_functions, theta_map, CatenoidChartPoint, ChartPoint, ThetaValue,
};
use parallel_tori::family::StandardExample;
use parallel_tori::numerics::{c64, QuadratureConfig};
use parallel_tori::periods::closes_periods;
use proptest::prelude::*;

fn quad() -> QuadratureConfig {
    QuadratureConfig::default()
}

/// The g-plane branch values of a family member near the catenoid limit, as a chart point.
fn chart_point_of(theta: f64, alpha: f64, beta: f64) -> Option<CatenoidChartPoint> {
    let ex = StandardExample::from_angles(theta, alpha, beta).ok()?;
    let d = ex.gauss_datum(&quad()).ok()?;
    let mut r = d.curve.finite_roots.clone();
    if r.len() != 4 {
        return None;
    }
    r.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
    CatenoidChartPoint::from_branch_values([r[0], r[1]], [r[2], r[3]]).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closing_chart_points_hit_the_theta_target(theta in 0.2f64..0.7, alpha in 0.0f64..0.4, beta in 0.0f64..0.4) {
        let p = chart_point_of(theta, alpha, beta);
        prop_assume!(p.is_some());
        let p = p.unwrap();
        let d = build_k1_torus(&ChartPoint::Catenoid(p.clone()), &quad());
        prop_assume!(d.is_ok());
        let cv = closes_periods(&d.unwrap(), 1e-8, &quad()).unwrap();
        prop_assert!(cv.is_some());
        let cv = cv.unwrap();
        let th = theta_map(&p, &quad()).unwrap();
        let dist = th.distance(&ThetaValue::closing_target(cv.a, cv.b, 1));
        prop_assert!(dist < 1e-7, "{dist}");
    }
}

#[test]
fn non_closing_point_misses_the_theta_target() {
    let p = chart_point_of(0.4, 0.2, 0.3).unwrap().shifted(1, c64(0.01, 0.005));
    let d = build_k1_torus(&ChartPoint::Catenoid(p.clone()), &quad()).unwrap();
    assert!(closes_periods(&d, 1e-8, &quad()).unwrap().is_none());
    let th = theta_map(&p, &quad()).unwrap();
    // the best (a, b) read off Theta itself: b from A_1 and t from the mean of 1/B
    let t = 0.5 * (th.entries[2] + th.entries[3]);
    let a = (-1.0 / t.re).sqrt();
    assert!(th.distance(&ThetaValue::closing_target(a, th.entries[0], 1)) > 1e-6);
}

#[test]
fn a_and_b_extend_through_the_nodal_locus() {
    // a point on the collision locus y_1 = x_1^2, approached along three rays
    let x1 = c64(0.03, 0.01);
    let base = CatenoidChartPoint::new(vec![x1, c64(0.02, -0.01)], vec![x1 * x1, c64(0.004, 0.001)]).unwrap();
    assert!(base.is_nodal());
    let limit = catenoid_functions(&base, &quad()).unwrap();
    let rays = [[c64(1.0, 0.0), c64(0.0, 0.0)], [c64(0.0, 0.0), c64(0.0, 1.0)], [c64(0.6, -0.3), c64(-0.5, 0.4)]];
    let eval = |ray: &[parallel_tori::numerics::C64; 2], t: f64| {
        let p = base.shifted(0, ray[0] * t).shifted(2, ray[1] * t);
        assert!(!p.is_nodal());
        let f = catenoid_functions(&p, &quad()).unwrap();
        f.a.into_iter().chain(f.b_tilde).collect::<Vec<_>>()
    };
    for ray in &rays {
        // linear extrapolation to t = 0 from t and t/2
        let t = 1e-3;
        let (far, near) = (eval(ray, t), eval(ray, 0.5 * t));
        for ((f, n), l) in far.iter().zip(&near).zip(limit.a.iter().chain(&limit.b_tilde)) {
            let estimate = 2.0 * n - f;
            assert!((estimate - l).norm() < 1e-4, "ray {ray:?}: {estimate} vs {l}");
        }
    }
}
