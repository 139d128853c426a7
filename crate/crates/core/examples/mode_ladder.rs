//! Tails `t^(-3-2l)` for the first three angular modes.

use pricelaw::evolver::{
    evolve, Background, Evolution, GridSpec, InitialData, Observer, OuterBoundary, StencilOrder, Velocity,
};
use pricelaw::geometry::{self, BlackHoleParams};
use pricelaw::reduction::RadialPotential;
use pricelaw::tailfit::{fit_decay, FitOptions, PowerIndexMethod};

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
    let opts = FitOptions {
        method: PowerIndexMethod::WindowedSlope { half_width: 0.05 },
        window: Some((300.0, 600.0)),
        ..FitOptions::default()
    };
    for ell in 0..3 {
        let mut ev = Evolution::new(grid, Background::Schwarzschild(RadialPotential::new(ell, params)?));
        // A wide pulse keeps the l = 2 tail above round-off until t = 600.
        ev.data = vec![InitialData::gaussian(20.0, 6.0, 1.0).with_velocity(Velocity::Outgoing)];
        ev.observers = vec![Observer::fixed(geometry::tortoise(&params, 10.0)?)];
        ev.output_stride = 10;
        let traj = evolve(&ev)?;
        let (t, psi): (Vec<f64>, Vec<f64>) =
            traj.observer_series(0).iter().filter(|s| s.t > 0.0).map(|s| (s.t, s.psi)).unzip();
        let fit = fit_decay(&t, &psi, &opts)?;
        println!("l = {ell}: p_final = {:?} (expected {})", fit.p_final, -3 - 2 * ell as i32);
    }
    Ok(())
}
