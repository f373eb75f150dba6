//! A curve that needs two turns of the circle to close.

use cylinder_rds::attractor::{pullback_attractor, FibreCloud, PullbackConfig};
use cylinder_rds::cocycle::noise_path;
use cylinder_rds::curves::{extract_curves, ExtractionConfig};
use cylinder_rds::models::zoo_entry;
use cylinder_rds::NoisePath;

fn main() -> cylinder_rds::Result<()> {
    // The planar model locks onto ±(cos πs, sin πs).
    let sys = zoo_entry("winding_two").expect("zoo entry").system()?;
    let mut cfg = PullbackConfig::new(vec![-2.0, -2.0], vec![2.0, 2.0]);
    cfg.bins = 64;
    cfg.grid_per_axis = 4;
    cfg.horizon = 20;
    let cloud = pullback_attractor(&sys, &noise_path(&sys, 5), &cfg)?;
    let set = extract_curves(&cloud, &ExtractionConfig::new(8, 0.2))?;
    println!(
        "winding_two: {} curve(s), periods {:?}, permutation {}",
        set.n(),
        set.periods(),
        set.permutation
    );

    // The same structure drawn directly in one dimension: branches ±sin πs
    // touch at s = 0 and continue through each other.
    let touching = FibreCloud::from_fn(NoisePath::new(0, 1.0, 0), 256, 1e-3, |s| {
        let v = (std::f64::consts::PI * s).sin();
        vec![vec![v], vec![-v]]
    });
    let set = extract_curves(&touching, &ExtractionConfig::new(8, 0.05))?;
    println!("±sin πs: periods {:?}, permutation {}", set.periods(), set.permutation);
    let mut out = Vec::new();
    set.write_csv(&mut out, &["example output".to_string()])?;
    for line in String::from_utf8_lossy(&out).lines().take(5) {
        println!("  {line}");
    }
    Ok(())
}
