//! Pullback clouds, covering numbers and fibre cardinality.

use cylinder_rds::attractor::{covering_number, fibre_cardinality, pullback_attractor, PullbackConfig};
use cylinder_rds::cocycle::noise_path;
use cylinder_rds::models::{zoo_entry, ForcedLinear};

fn main() -> cylinder_rds::Result<()> {
    let sys = zoo_entry("forced_linear").expect("zoo entry").system()?;
    let mut cfg = PullbackConfig::new(vec![-1.0], vec![1.0]);
    cfg.bins = 128;
    cfg.horizon = 40;
    let cloud = pullback_attractor(&sys, &noise_path(&sys, 1), &cfg)?;
    let orbit = ForcedLinear::new(1.0, 0.0);
    let err = (0..cloud.bin_count())
        .flat_map(|b| {
            let x = orbit.periodic_orbit(cloud.bin_phase(b));
            cloud.bins[b].iter().map(move |p| (p[0] - x).abs())
        })
        .fold(0.0, f64::max);
    println!(
        "forced_linear: {} points, convergence gap {:.2e}, distance to x*(s) {err:.2e}",
        cloud.len(),
        cloud.convergence_gap
    );

    let dw = zoo_entry("double_well").expect("zoo entry").system()?;
    let mut cfg = PullbackConfig::new(vec![-2.0], vec![2.0]);
    cfg.bins = 64;
    cfg.horizon = 30;
    let cloud = pullback_attractor(&dw, &noise_path(&dw, 1), &cfg)?;
    let cover = covering_number(&cloud, 0.1)?;
    let card = fibre_cardinality(&cloud, 0.2)?;
    println!(
        "double_well: covering bracket at ε = 0.1 gives n ≈ {}, clusters per fibre n = {}, separation {:.3}",
        cover.candidate_n,
        card.n,
        card.separation.unwrap_or(f64::NAN)
    );
    Ok(())
}
