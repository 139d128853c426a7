//! The scaling field commutes with the wave operator up to `+2`; with the
//! black-hole potential a lower-order remainder appears.

use pricelaw::analysis::{commutator_residual_flat, commutator_residual_mode};
use pricelaw::geometry::BlackHoleParams;
use pricelaw::reduction::RadialPotential;

fn main() -> pricelaw::Result<()> {
    let u = |t: f64, r: f64| (0.7 * t).sin() * (-(r - 6.0) * (r - 6.0) / 8.0).exp();
    let points = [(5.0, 4.0), (5.0, 6.0), (7.0, 8.0)];
    for order in [2, 4] {
        let rep = commutator_residual_flat(&u, 1, &points, &[0.2, 0.1, 0.05], order)?;
        let sups: Vec<String> = rep.levels.iter().map(|l| format!("{:.2e}", l.residual_sup)).collect();
        println!("stencil order {order}: residuals {sups:?}, observed orders {:.2?}", rep.observed_orders);
    }
    let pot = RadialPotential::new(1, BlackHoleParams::schwarzschild(1.0)?)?;
    let psi = |t: f64, x: f64| (-(x - t + 20.0) * (x - t + 20.0) / 8.0).exp();
    let rep = commutator_residual_mode(&psi, &pot, &[(30.0, 10.0), (40.0, 20.0), (60.0, 40.0)], 0.05)?;
    println!(
        "Schwarzschild l = 1: residual / bound <= {:.3}, finite-difference defect {:.1e}",
        rep.bound_ratio, rep.closed_form_defect
    );
    Ok(())
}
