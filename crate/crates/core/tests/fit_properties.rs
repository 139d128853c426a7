//! Invariances of the decay fits under amplitude and time-unit changes.

use pricelaw::tailfit::{fit_decay, local_power_index, power_law_slope, FitOptions, PowerIndexMethod};
use proptest::prelude::*;

fn series(t0: f64, t1: f64, n: usize, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let t: Vec<f64> = (0..n).map(|i| t0 * (t1 / t0).powf(i as f64 / (n - 1) as f64)).collect();
    let u = t.iter().map(|&x| f(x)).collect();
    (t, u)
}

fn methods() -> impl Strategy<Value = PowerIndexMethod> {
    prop_oneof![
        Just(PowerIndexMethod::LogDerivative),
        (0.02..0.2f64).prop_map(|half_width| PowerIndexMethod::WindowedSlope { half_width })
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pure_power_law_is_recovered(p in 1.0..9.0f64, amp in prop_oneof![-1e6..-1e-6f64, 1e-6..1e6f64], m in methods()) {
        let (t, u) = series(50.0, 1000.0, 400, |x| amp * x.powf(-p));
        let fit = fit_decay(&t, &u, &FitOptions { method: m, window: Some((100.0, 1000.0)), ..Default::default() }).unwrap();
        prop_assert!((fit.p_final.unwrap() + p).abs() <= 1e-9);
        prop_assert!((power_law_slope(&t, &u, (100.0, 1000.0)).unwrap() + p).abs() <= 1e-9);
    }

    #[test]
    fn index_ignores_amplitude(c in 1.0..50.0f64, amp in prop_oneof![-1e6..-1e-6f64, 1e-6..1e6f64], m in methods()) {
        let f = |x: f64| x.powf(-3.0) * (1.0 + c / x);
        let (t, u) = series(20.0, 800.0, 300, f);
        let scaled: Vec<f64> = u.iter().map(|v| amp * v).collect();
        let (a, b) = (local_power_index(&t, &u, m).unwrap(), local_power_index(&t, &scaled, m).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.p - y.p).abs() <= 1e-9);
        }
    }

    #[test]
    fn index_is_invariant_under_time_units(c in 1.0..50.0f64, lambda in 0.1..10.0f64, m in methods()) {
        let f = |x: f64| x.powf(-3.0) * (1.0 + c / x);
        let (t, u) = series(20.0, 800.0, 300, f);
        let t_scaled: Vec<f64> = t.iter().map(|x| lambda * x).collect();
        let (a, b) = (local_power_index(&t, &u, m).unwrap(), local_power_index(&t_scaled, &u, m).unwrap());
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.p - y.p).abs() <= 1e-9 && (lambda * x.t - y.t).abs() <= 1e-9 * y.t);
        }
    }
}
