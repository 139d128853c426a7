//! Declarative experiment: run a config, then verify the run directory.

use pricelaw::config::ExperimentConfig;
use pricelaw::runner::{self, RunOptions};

const CONFIG: &str = r#"
analyses = ["tail", "commutators"]

[background]
mass = 1.0
ell = 0

[grid]
rstar_min = -400.0
rstar_max = 400.0
h = 0.1
t_max = 300.0

[[data]]
center = 10.0
width = 1.0
velocity = "outgoing"

[observers]
radii = [10.0]

[tail]
window = [150.0, 300.0]
"#;

fn main() -> pricelaw::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let root = std::env::temp_dir().join("pricelaw-config-run");
    let out = runner::run(&cfg, &RunOptions { in_place: true, output_root: Some(root) })?;
    println!("run directory {}", out.dir.display());
    for f in &out.manifest.files {
        println!("  {:<18} {:>9} bytes  {}", f.path, f.bytes, &f.sha256[..16]);
    }
    println!("tail p_final = {:?}", out.results.p_final());
    let verified = runner::report(&out.dir)?;
    println!("checksums intact: {}", verified.intact());
    Ok(())
}
