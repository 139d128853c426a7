//! Per-mode potential and its approach to the flat centrifugal term.

use pricelaw::geometry::BlackHoleParams;
use pricelaw::reduction::{self, RadialPotential};

fn main() -> pricelaw::Result<()> {
    let params = BlackHoleParams::schwarzschild(1.0)?;
    for ell in 0..3 {
        let pot = RadialPotential::new(ell, params)?;
        let peak = (0..2000)
            .map(|i| 2.05 + 0.005 * i as f64)
            .map(|r| (r, pot.at_r(r).unwrap()))
            .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        println!("l = {ell}: peak V = {:.6} at r = {:.3}", peak.1, peak.0);
    }
    let grid: Vec<f64> = (0..=40).map(|i| 100.0 * 10f64.powf(i as f64 / 20.0)).collect();
    let report = reduction::normal_form_check(&params, 2, &grid)?;
    println!(
        "l = 2: principal defect {:.1e}, r^3 |V - 6/r^2| <= {:.4}, slope {:.4}",
        report.max_principal_defect,
        report.remainder_constant,
        report.remainder_slope.unwrap_or(f64::NAN)
    );
    Ok(())
}
