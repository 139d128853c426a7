//! Invariants of the Kerr geometry layer.

use pricelaw::geometry::{
    horizon_radii, inverse_tortoise, metric_bl, tortoise, tortoise_derivative, trapped_polynomial,
    trapped_polynomial_scale, trapped_root, BlackHoleParams, Coord, TrappedSetQuery,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = BlackHoleParams> {
    (0.2..5.0f64, -0.99..0.99f64).prop_map(|(m, chi)| BlackHoleParams::new(m, chi * m).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metric_inverse_is_exact(p in params(), x in 1.01..20.0f64, theta in 0.05..3.09f64) {
        let (r_plus, _) = horizon_radii(&p).unwrap();
        let g = metric_bl(&p, x * r_plus, theta).unwrap();
        let scale = g.covariant.iter().flatten().chain(g.contravariant.iter().flatten()).fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(g.inverse_defect() <= 1e-12 * scale);
    }

    #[test]
    fn tortoise_is_increasing_and_steeper_than_r(p in params(), x in 1.001..50.0f64, dx in 1e-3..1.0f64) {
        let (r_plus, _) = horizon_radii(&p).unwrap();
        let r = x * r_plus;
        prop_assert!(tortoise_derivative(&p, r).unwrap() > 1.0);
        prop_assert!(tortoise(&p, r + dx).unwrap() > tortoise(&p, r).unwrap());
    }

    #[test]
    fn tortoise_round_trips(p in params(), x in 1.05..50.0f64) {
        let (r_plus, _) = horizon_radii(&p).unwrap();
        let r = x * r_plus;
        let back = inverse_tortoise(&p, tortoise(&p, r).unwrap()).unwrap();
        prop_assert!((back - r).abs() <= 1e-9 * r);
    }

    #[test]
    fn trapped_root_is_homogeneous(m in 0.2..5.0f64, chi in -0.1..0.1f64, phi in -1.0..1.0f64, lambda in 0.01..100.0f64) {
        let p = BlackHoleParams::new(m, chi * m).unwrap();
        let phi_freq = phi * m;
        let q = |s: f64| trapped_root(&TrappedSetQuery { tau: s, phi_freq: s * phi_freq, params: p }).unwrap();
        let (a, b) = (q(1.0), q(lambda));
        prop_assert!((a - b).abs() <= 1e-12 * a);
        let rel = trapped_polynomial(&p, a, 1.0, phi_freq).abs() / trapped_polynomial_scale(&p, a, 1.0, phi_freq);
        prop_assert!(rel <= 1e-12);
    }
}

#[test]
fn contravariant_radial_component_vanishes_at_the_horizon() {
    for chi in [0.0, 0.3, 0.9] {
        let p = BlackHoleParams::new(1.0, chi).unwrap();
        let (r_plus, _) = horizon_radii(&p).unwrap();
        let g = metric_bl(&p, r_plus * (1.0 + 1e-12), 1.0).unwrap();
        assert!(g.upper(Coord::R, Coord::R).abs() <= 1e-10, "a = {chi}");
    }
}

#[test]
fn kerr_components_converge_to_schwarzschild() {
    let schw = metric_bl(&BlackHoleParams::schwarzschild(1.0).unwrap(), 5.0, 1.0).unwrap();
    let diff = |a: f64| {
        let g = metric_bl(&BlackHoleParams::new(1.0, a).unwrap(), 5.0, 1.0).unwrap();
        std::array::from_fn::<_, 4, _>(|i| {
            std::array::from_fn::<_, 4, _>(|j| (g.covariant[i][j] - schw.covariant[i][j]).abs())
        })
    };
    let (d2, d3, d4) = (diff(1e-2), diff(1e-3), diff(1e-4));
    for i in 0..4 {
        for j in 0..4 {
            if d2[i][j] == 0.0 {
                continue;
            }
            // Each component moves at O(a) or O(a²): ratio 10 or 100 per decade.
            for (coarse, fine) in [(d2[i][j], d3[i][j]), (d3[i][j], d4[i][j])] {
                let ratio = coarse / fine;
                assert!((ratio - 10.0).abs() < 0.5 || (ratio - 100.0).abs() < 5.0, "g[{i}][{j}] ratio {ratio}");
            }
        }
    }
}
