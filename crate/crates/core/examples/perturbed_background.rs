//! Tail under a slowly decaying, time-dependent potential bump at the photon sphere.

use pricelaw::analysis::{symbol_class_check, SymbolClassSpec};
use pricelaw::evolver::{
    evolve, Background, Evolution, GridSpec, InitialData, Observer, OuterBoundary, PerturbationKind, PerturbationSpec,
    PhotonSphereWindow, StencilOrder, Velocity,
};
use pricelaw::geometry::{self, BlackHoleParams};
use pricelaw::reduction::RadialPotential;
use pricelaw::tailfit::{fit_decay, FitOptions};

fn main() -> pricelaw::Result<()> {
    let params = BlackHoleParams::schwarzschild(1.0)?;
    let grid = GridSpec {
        rstar_min: -700.0,
        rstar_max: 700.0,
        h: 0.04,
        cfl: 0.5,
        t_max: 600.0,
        order: StencilOrder::Second,
        outer: OuterBoundary::Causal,
    };
    for (epsilon, delta) in [(0.01, 0.5), (0.3, -0.5)] {
        let pert = PerturbationSpec {
            epsilon,
            decay_exponent: delta,
            window: PhotonSphereWindow::photon_sphere(1.0),
            kind: PerturbationKind::Potential,
        };
        let window = pert.window;
        let coefficient = |t: f64, r: f64| pert.profile(t) * window.at_r(r);
        let times: Vec<f64> = (0..=400).map(|i| (i as f64 * 0.02).exp() - 1.0).collect();
        let radii: Vec<f64> = (0..=40).map(|i| 2.5 + 0.025 * i as f64).collect();
        let spec = SymbolClassSpec { k: 0, depth: 1, bounds: vec![10.0, 100.0] };
        let sym = symbol_class_check(&coefficient, &spec, &times, &radii)?;

        let mut ev = Evolution::new(grid, Background::Schwarzschild(RadialPotential::new(0, params)?));
        ev.perturbation = Some(pert);
        ev.data = vec![InitialData::gaussian(10.0, 1.0, 1.0).with_velocity(Velocity::Outgoing)];
        ev.observers = vec![Observer::fixed(geometry::tortoise(&params, 10.0)?)];
        ev.output_stride = 10;
        let traj = evolve(&ev)?;
        let (t, psi): (Vec<f64>, Vec<f64>) =
            traj.observer_series(0).iter().filter(|s| s.t > 0.0).map(|s| (s.t, s.psi)).unzip();
        let fit = fit_decay(&t, &psi, &FitOptions { window: Some((300.0, 600.0)), ..FitOptions::default() })?;
        println!(
            "eps = {epsilon}, delta = {delta}: integrable {}, late slope {:.2}, p_final = {:?}",
            pert.is_integrable(),
            sym.late_time_slope,
            fit.p_final
        );
    }
    Ok(())
}
