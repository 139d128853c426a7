//! Two-exponent envelope `|u| ~ <t>^-1 <t-r>^-2` and `|du| ~ <r>^-1 <t-r>^-3`
//! from observers inside the light cone.

use pricelaw::evolver::{
    evolve, Background, Evolution, GridSpec, InitialData, Observer, OuterBoundary, StencilOrder, Velocity,
};
use pricelaw::geometry::BlackHoleParams;
use pricelaw::reduction::RadialPotential;
use pricelaw::runner::envelope_samples;
use pricelaw::tailfit::{envelope_fit, EnvelopeModel, EnvelopeOptions};

fn main() -> pricelaw::Result<()> {
    let params = BlackHoleParams::schwarzschild(1.0)?;
    let grid = GridSpec {
        rstar_min: -700.0,
        rstar_max: 700.0,
        h: 0.05,
        cfl: 0.5,
        t_max: 600.0,
        order: StencilOrder::Second,
        outer: OuterBoundary::Causal,
    };
    let background = Background::Schwarzschild(RadialPotential::new(0, params)?);
    let mut ev = Evolution::new(grid, background);
    ev.data = vec![InitialData::gaussian(10.0, 1.0, 1.0).with_velocity(Velocity::Outgoing)];
    ev.observers = vec![Observer::ray(0.5), Observer::null(20.0), Observer::null(50.0), Observer::null(100.0)];
    ev.output_stride = 10;
    let traj = evolve(&ev)?;

    let [field, gradient] = envelope_samples(&traj, &background, ev.observers.len());
    let opts = EnvelopeOptions::default();
    let f = envelope_fit(&field, &opts)?;
    let g = envelope_fit(&gradient, &EnvelopeOptions { model: EnvelopeModel::Gradient, ..opts })?;
    println!(
        "field:    p_t = {:.3}, p_u = {:.3}, C = {:.3e}, {} slab suprema",
        f.p_t.unwrap_or(f64::NAN),
        f.p_u,
        f.c,
        f.points.len()
    );
    println!("gradient: p_u = {:.3}, C = {:.3e}", g.p_u, g.c);
    Ok(())
}
