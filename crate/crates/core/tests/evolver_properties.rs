//! Properties of the mode evolver against exact flat solutions and structural invariants.

use pricelaw::evolver::{
    energy, evolve, Background, Evolution, GridSpec, InitialData, Observer, OuterBoundary, StencilOrder, Trajectory,
};
use pricelaw::geometry::BlackHoleParams;
use pricelaw::reduction::RadialPotential;

fn grid(rstar_min: f64, rstar_max: f64, h: f64, t_max: f64, order: StencilOrder) -> GridSpec {
    GridSpec { rstar_min, rstar_max, h, cfl: 0.5, t_max, order, outer: OuterBoundary::Causal }
}

fn schwarzschild(ell: u32) -> Background {
    Background::Schwarzschild(RadialPotential::new(ell, BlackHoleParams::schwarzschild(1.0).unwrap()).unwrap())
}

fn value_at(traj: &Trajectory, observer: usize, t: f64) -> f64 {
    let s =
        traj.observer_series(observer).into_iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs())).unwrap();
    assert!((s.t - t).abs() < 1e-9, "no sample at t = {t}");
    s.psi
}

/// d'Alembert solution for static Gaussian data on the line.
fn dalembert(x: f64, t: f64, c: f64, w: f64) -> f64 {
    let g = |y: f64| (-((y - c) / w).powi(2)).exp();
    0.5 * (g(x - t) + g(x + t))
}

fn flat_error(h: f64, order: StencilOrder) -> f64 {
    let mut ev = Evolution::new(grid(-60.0, 60.0, h, 20.0, order), Background::FlatLine);
    ev.data = vec![InitialData::gaussian(0.0, 2.0, 1.0)];
    let xs = [-15.0, -3.2, 0.0, 8.0, 20.0];
    ev.observers = xs.iter().map(|&x| Observer::fixed(x)).collect();
    let traj = evolve(&ev).unwrap();
    let mut err: f64 = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        for t in [5.0, 10.0, 20.0] {
            err = err.max((value_at(&traj, k, t) - dalembert(x, t, 0.0, 2.0)).abs());
        }
    }
    err
}

#[test]
fn second_order_convergence_to_dalembert() {
    let e: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&h| flat_error(h, StencilOrder::Second)).collect();
    for w in e.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.9, "errors {e:?}");
    }
}

#[test]
fn fourth_order_convergence_to_dalembert() {
    let e: Vec<f64> = [0.4, 0.2, 0.1, 0.05].iter().map(|&h| flat_error(h, StencilOrder::Fourth)).collect();
    for w in e.windows(2) {
        assert!((w[0] / w[1]).log2() >= 3.8, "errors {e:?}");
    }
}

#[test]
fn flat_line_is_translation_invariant() {
    let run = |shift: f64| {
        let mut ev = Evolution::new(grid(-100.0, 100.0, 0.1, 30.0, StencilOrder::Second), Background::FlatLine);
        ev.data = vec![InitialData::gaussian(-10.0 + shift, 1.5, 1.0)];
        ev.observers = vec![Observer::fixed(5.0 + shift)];
        evolve(&ev).unwrap()
    };
    let (a, b) = (run(0.0), run(5.0));
    assert_eq!(a.samples.len(), b.samples.len());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert!((x.psi - y.psi).abs() <= 1e-12, "t = {}: {} vs {}", x.t, x.psi, y.psi);
    }
}

#[test]
fn no_signal_outside_the_light_cone() {
    let data = InitialData::gaussian(60.0, 1.0, 1.0);
    let mut ev = Evolution::new(grid(-150.0, 250.0, 0.05, 80.0, StencilOrder::Second), schwarzschild(1));
    ev.data = vec![data];
    ev.observers = vec![Observer::fixed(0.0)];
    let traj = evolve(&ev).unwrap();
    let arrival = 60.0 - data.support_radius();
    let early = traj.samples.iter().filter(|s| s.t < arrival - 5.0).map(|s| s.psi.abs()).fold(0.0, f64::max);
    let late = traj.samples.iter().filter(|s| s.t > 65.0).map(|s| s.psi.abs()).fold(0.0, f64::max);
    assert!(early <= 1e-12, "precursor {early:e}");
    assert!(late > 1e-3, "signal never arrived: {late:e}");
}

#[test]
fn superposition_is_linear() {
    let base = |data: Vec<InitialData>| {
        let mut ev = Evolution::new(grid(-200.0, 200.0, 0.1, 80.0, StencilOrder::Second), schwarzschild(0));
        ev.data = data;
        ev.observers = vec![Observer::fixed(5.0), Observer::fixed(30.0)];
        evolve(&ev).unwrap()
    };
    let d1 = InitialData::gaussian(10.0, 1.0, 1.0);
    let d2 = InitialData::gaussian(25.0, 2.0, 1.0).with_velocity(pricelaw::evolver::Velocity::Ingoing);
    let (a, b) = (2.5, -0.75);
    let sum = base(vec![InitialData { amplitude: a, ..d1 }, InitialData { amplitude: b, ..d2 }]);
    let (u1, u2) = (base(vec![d1]), base(vec![d2]));
    for ((s, x), y) in sum.samples.iter().zip(&u1.samples).zip(&u2.samples) {
        let expected = a * x.psi + b * y.psi;
        assert!((s.psi - expected).abs() <= 1e-12 * (1.0 + expected.abs()), "t = {}", s.t);
    }
}

#[test]
fn evolution_is_bitwise_deterministic() {
    let mut ev = Evolution::new(grid(-150.0, 150.0, 0.1, 60.0, StencilOrder::Fourth), schwarzschild(2));
    ev.data = vec![InitialData::gaussian(15.0, 2.0, 1.0)];
    ev.observers = vec![Observer::fixed(10.0), Observer::null(20.0)];
    let (a, b) = (evolve(&ev).unwrap(), evolve(&ev).unwrap());
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.final_field, b.final_field);
}

#[test]
fn energy_is_conserved_and_bounds_the_field() {
    let bg = schwarzschild(1);
    let mut ev = Evolution::new(grid(-150.0, 150.0, 0.05, 60.0, StencilOrder::Second), bg);
    ev.data = vec![InitialData::gaussian(10.0, 2.0, 1.0)];
    ev.observers = vec![Observer::fixed(10.0)];
    ev.snapshot_stride = Some(200);
    let traj = evolve(&ev).unwrap();
    let energies: Vec<f64> = traj.snapshots.iter().map(|f| energy(f, &bg).unwrap()).collect();
    let e0 = energies[0];
    assert!(energies.len() > 5);
    for e in &energies {
        assert!((e - e0).abs() <= 1e-3 * e0, "energies {energies:?}");
    }
    let g0 = traj.snapshots[0].gradient_norm();
    assert!(traj.snapshots.iter().all(|f| f.gradient_norm() <= 1.5 * g0));
}
