//! Kerr metric in Boyer-Lindquist coordinates, horizons and the tortoise map.

use pricelaw::geometry::{self, BlackHoleParams, Coord, SlicingSpec};

fn main() -> pricelaw::Result<()> {
    let params = BlackHoleParams::new(1.0, 0.5)?;
    let (r_plus, r_minus) = geometry::horizon_radii(&params)?;
    println!("M = 1, a = 0.5: r+ = {r_plus:.12}, r- = {r_minus:.12}");

    let g = geometry::metric_bl(&params, 6.0, 1.0)?;
    println!(
        "g_tt = {:.6}, g_tphi = {:.6}, inverse defect = {:.2e}",
        g.lower(Coord::T, Coord::T),
        g.lower(Coord::T, Coord::Phi),
        g.inverse_defect()
    );

    let schw = BlackHoleParams::schwarzschild(1.0)?;
    for r in [2.5, 3.0, 10.0, 100.0] {
        let rs = geometry::tortoise(&schw, r)?;
        let back = geometry::inverse_tortoise(&schw, rs)?;
        println!("r = {r:>6}: r* = {rs:>10.6}, round trip error {:.1e}", (back - r).abs());
    }

    let spec = SlicingSpec::reference(&params)?;
    let grid: Vec<f64> = (0..100).map(|i| 1.01 * r_plus + 0.5 * i as f64).collect();
    let report = geometry::validate_slicing(&spec, &params, &grid);
    println!("reference slicing spacelike: {}, passes all checks: {}", report.spacelike, report.passed);
    Ok(())
}
