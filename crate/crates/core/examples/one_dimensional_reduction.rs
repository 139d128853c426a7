//! Radial solutions of the flat inhomogeneous wave equation by quadrature
//! over the characteristic rectangle.

use pricelaw::reduction::{self, ReductionSource};

fn main() -> pricelaw::Result<()> {
    let unit = ReductionSource::new("H = 1", |_, _| 1.0);
    for (t, r) in [(2.0, 0.5), (5.0, 1.0), (10.0, 3.0)] {
        let v = reduction::oned_reduction(&unit, t, r)?;
        println!("H = 1: v({t}, {r}) = {v:.12}, closed form {:.12}", (t * t - r * r) / 8.0);
    }
    let bump = ReductionSource::new("compact bump", |s: f64, rho: f64| {
        let x = ((s - 5.0).powi(2) + (rho - 2.0).powi(2)) / 4.0;
        if x < 1.0 {
            (-1.0 / (1.0 - x)).exp()
        } else {
            0.0
        }
    });
    let check = bump.check(20.0, 200);
    println!("bump source: {check:?}");
    for r in [1.0, 3.0, 6.0] {
        println!("bump: v(10, {r}) = {:.6e}", reduction::oned_reduction(&bump, 10.0, r)?);
    }
    Ok(())
}
