//! Property tests for the weighted spacetime norms and the Sobolev check.

use pricelaw::analysis::{
    block_squares, bracket, cone_partition, le_norm, pairing, sobolev_check, NormSpec, NormVariant, SpacetimeField,
};
use proptest::prelude::*;

fn times() -> Vec<f64> {
    (0..=40).map(|i| 0.5 * i as f64).collect()
}

fn radii() -> Vec<f64> {
    (0..=240).map(|i| 0.125 * i as f64).collect()
}

/// `a cos(k t + φ) exp(−(r − b)²/2c²)`.
fn field(p: [f64; 5]) -> SpacetimeField {
    let [a, b, c, k, phase] = p;
    SpacetimeField::sample(0, times(), radii(), |t, r| {
        a * (k * t + phase).cos() * (-(r - b).powi(2) / (2.0 * c * c)).exp()
    })
    .unwrap()
}

fn params() -> impl Strategy<Value = [f64; 5]> {
    (-3.0..3.0f64, 0.0..30.0f64, 0.5..8.0f64, 0.0..2.0f64, 0.0..6.3f64).prop_map(|(a, b, c, k, p)| [a, b, c, k, p])
}

fn norm(u: &SpacetimeField, v: NormVariant, t0: f64, t1: f64) -> f64 {
    le_norm(u, &NormSpec::new(v, t0, t1)).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn duality_bounds_the_pairing(p in params(), q in params()) {
        let (u, f) = (field(p), field(q));
        let bound = norm(&u, NormVariant::Le, 0.0, 20.0) * norm(&f, NormVariant::LeStar, 0.0, 20.0);
        prop_assert!(pairing(&u, &f, (0.0, 20.0)).unwrap().abs() <= bound * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn dyadic_blocks_partition_the_integral(p in params()) {
        let u = field(p);
        let blocks = block_squares(&u, (0.0, 20.0), 0.0, |j, i| u.at(j, i)).unwrap();
        let whole = pairing(&u, &u, (0.0, 20.0)).unwrap();
        let summed: f64 = blocks.values().sum();
        prop_assert!((summed - whole).abs() <= 1e-12 * whole.max(1e-300));
    }

    #[test]
    fn block_squares_are_additive_in_time(p in params(), split in 1usize..39) {
        let u = field(p);
        let s = 0.5 * split as f64;
        let sq = |a: f64, b: f64| block_squares(&u, (a, b), -1.0, |j, i| u.at(j, i)).unwrap();
        let (left, right, whole) = (sq(0.0, s), sq(s, 20.0), sq(0.0, 20.0));
        for (k, w) in &whole {
            let parts = left.get(k).copied().unwrap_or(0.0) + right.get(k).copied().unwrap_or(0.0);
            prop_assert!((parts - w).abs() <= 1e-12 * w.max(1e-300));
        }
    }

    #[test]
    fn norms_grow_with_the_interval(p in params(), a in 1usize..20, b in 21usize..40) {
        let u = field(p);
        for v in [NormVariant::Le, NormVariant::LeStar, NormVariant::Le1] {
            let short = norm(&u, v, 0.0, 0.5 * a as f64);
            let mid = norm(&u, v, 0.0, 0.5 * b as f64);
            let long = norm(&u, v, 0.0, 20.0);
            prop_assert!(short <= mid * (1.0 + 1e-12) && mid <= long * (1.0 + 1e-12));
        }
    }

    #[test]
    fn norms_are_absolutely_homogeneous(p in params(), lambda in -5.0..5.0f64) {
        let u = field(p);
        let scaled = field([lambda * p[0], p[1], p[2], p[3], p[4]]);
        for v in [NormVariant::Le, NormVariant::LeStar, NormVariant::Le1] {
            let (a, b) = (norm(&scaled, v, 0.0, 20.0), lambda.abs() * norm(&u, v, 0.0, 20.0));
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }
    }
}

#[test]
fn sobolev_ratio_is_stable_across_slab_scales() {
    let t_grid: Vec<f64> = (0..=500).map(|i| 16.0 + i as f64).collect();
    let r_grid: Vec<f64> = (1..=600).map(|i| 0.5 * i as f64).collect();
    for q in [1.5, 2.0, 3.0] {
        let w = SpacetimeField::sample(0, t_grid.clone(), r_grid.clone(), |t, r| {
            bracket(t).recip() * bracket(t - r).powf(-q)
        })
        .unwrap();
        let ratios: Vec<f64> = [32.0, 64.0, 128.0]
            .iter()
            .map(|&ts| {
                cone_partition(ts).unwrap().iter().map(|g| sobolev_check(&w, g).unwrap().ratio).fold(0.0, f64::max)
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(lo > 0.0 && hi / lo <= 2.0, "q = {q}: ratios {ratios:?}");
    }
}
