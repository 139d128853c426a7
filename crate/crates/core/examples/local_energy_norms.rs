//! Local energy norms over growing time intervals; their increments die out.

use pricelaw::analysis::{le_norm, NormSpec, NormVariant, SpacetimeField};
use pricelaw::evolver::{evolve, Background, Evolution, GridSpec, InitialData, OuterBoundary, StencilOrder, Velocity};
use pricelaw::geometry::BlackHoleParams;
use pricelaw::reduction::RadialPotential;

fn main() -> pricelaw::Result<()> {
    let params = BlackHoleParams::schwarzschild(1.0)?;
    let grid = GridSpec {
        rstar_min: -500.0,
        rstar_max: 500.0,
        h: 0.05,
        cfl: 0.5,
        t_max: 400.0,
        order: StencilOrder::Second,
        outer: OuterBoundary::Causal,
    };
    let background = Background::Schwarzschild(RadialPotential::new(0, params)?);
    let mut ev = Evolution::new(grid, background);
    ev.data = vec![InitialData::gaussian(10.0, 1.0, 1.0).with_velocity(Velocity::Outgoing)];
    ev.snapshot_stride = Some(20);
    ev.snapshot_range = Some((-500.0, 210.0));
    ev.snapshot_spacing = 5;
    let traj = evolve(&ev)?;
    let field = SpacetimeField::from_snapshots(&traj.snapshots, &background, 1, 0.0, 200.0)?;

    for variant in [NormVariant::Le, NormVariant::LeStar, NormVariant::Le1] {
        let mut prev = 0.0;
        for t in [50.0, 100.0, 200.0, 400.0] {
            let rep = le_norm(&field, &NormSpec::new(variant, 0.0, t))?;
            println!("{:<8} [0, {t:>3}]: {:.8}  (+{:.2e})", variant.name(), rep.value, rep.value - prev);
            prev = rep.value;
        }
    }
    Ok(())
}
