//! Pointwise bounds from weighted `L^2` norms on the dyadic cone regions.

use pricelaw::analysis::{cone_partition, sobolev_check, SpacetimeField};

fn main() -> pricelaw::Result<()> {
    let times: Vec<f64> = (0..=500).map(|i| 16.0 + i as f64).collect();
    let radii: Vec<f64> = (1..=600).map(|i| 0.5 * i as f64).collect();
    // Outgoing shell decaying like <t>^-1 <t-r>^-2.
    let w =
        SpacetimeField::sample(0, times, radii, |t: f64, r: f64| 1.0 / ((1.0 + t) * (1.0 + (t - r).abs()).powi(2)))?;
    for t_scale in [32.0, 64.0, 128.0] {
        let mut worst: f64 = 0.0;
        for region in cone_partition(t_scale)? {
            worst = worst.max(sobolev_check(&w, &region)?.ratio);
        }
        println!("T = {t_scale:>5}: max sup / weighted norm = {worst:.4}");
    }
    Ok(())
}
