//! Radius of trapped null geodesics near the photon sphere.

use pricelaw::geometry::{self, BlackHoleParams, TrappedSetQuery};

fn main() -> pricelaw::Result<()> {
    for a in [0.0, 0.05, 0.1] {
        let params = BlackHoleParams::new(1.0, a)?;
        for phi_freq in [-1.0, 0.0, 1.0] {
            let r = geometry::trapped_root(&TrappedSetQuery { tau: 1.0, phi_freq, params })?;
            let residual = geometry::trapped_polynomial(&params, r, 1.0, phi_freq).abs()
                / geometry::trapped_polynomial_scale(&params, r, 1.0, phi_freq);
            println!("a = {a:<4} Phi/tau = {phi_freq:>4}: r = {r:.15}  relative residual {residual:.1e}");
        }
    }
    Ok(())
}
