//! Sharp Huygens principle for a flat `l = 0` pulse: nothing is left behind.

use pricelaw::evolver::evolve;
use pricelaw::runner::huygens_setup;

fn main() -> pricelaw::Result<()> {
    let traj = evolve(&huygens_setup(0.05))?;
    let peak = traj.samples.iter().map(|s| s.psi.abs()).fold(0.0, f64::max);
    let after = traj.samples.iter().filter(|s| s.t > 40.0).map(|s| s.psi.abs()).fold(0.0, f64::max);
    println!("peak |psi| at r = 5: {peak:.3e}; after the pulse has passed: {after:.3e}");
    Ok(())
}
