//! Late-time `t^-3` tail of an `l = 0` pulse on Schwarzschild, seen at `r = 10M`.
//!
//! Run with `--release`; the evolution takes a few seconds.

use pricelaw::evolver::{
    evolve, Background, Evolution, GridSpec, InitialData, Observer, OuterBoundary, StencilOrder, Velocity,
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
    let mut ev = Evolution::new(grid, Background::Schwarzschild(RadialPotential::new(0, params)?));
    ev.data = vec![InitialData::gaussian(10.0, 1.0, 1.0).with_velocity(Velocity::Outgoing)];
    ev.observers = vec![Observer::fixed(geometry::tortoise(&params, 10.0)?)];
    ev.output_stride = 10;
    let traj = evolve(&ev)?;

    let (t, psi): (Vec<f64>, Vec<f64>) =
        traj.observer_series(0).iter().filter(|s| s.t > 0.0).map(|s| (s.t, s.psi)).unzip();
    let fit = fit_decay(&t, &psi, &FitOptions { window: Some((300.0, 600.0)), ..FitOptions::default() })?;
    for p in fit.p_series.iter().step_by(300) {
        println!("t = {:6.1}  p = {:.4}", p.t, p.p);
    }
    println!("p_final = {:?} +- {:.4}", fit.p_final, fit.uncertainty);
    Ok(())
}
