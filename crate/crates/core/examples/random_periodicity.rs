//! Random periodicity of a noisy forced system, and invariance of the
//! winding periods under base shifts.

use cylinder_rds::attractor::{pullback_attractor, PullbackConfig};
use cylinder_rds::cocycle::{advance_path, discrete_reduction, noise_path};
use cylinder_rds::curves::{
    extract_curves, verify_period_shift_invariance, verify_random_periodicity, ExtractionConfig,
};
use cylinder_rds::models::zoo_entry;

fn main() -> cylinder_rds::Result<()> {
    let sys = zoo_entry("forced_linear_noisy").expect("zoo entry").system()?;
    let hat = discrete_reduction(&sys);
    let omega = noise_path(&sys, 9);
    let mut cfg = PullbackConfig::new(vec![-2.0], vec![2.0]);
    cfg.bins = 128;
    cfg.horizon = 30;
    let ext = ExtractionConfig::new(8, 0.05);

    let now = extract_curves(&pullback_attractor(&sys, &omega, &cfg)?, &ext)?;
    // A longer horizon at θ_{-1}ω gives an independent approximation.
    let mut earlier_cfg = cfg.clone();
    earlier_cfg.horizon = 45;
    let earlier_path = advance_path(&hat, &omega, -1);
    let earlier = extract_curves(&pullback_attractor(&sys, &earlier_path, &earlier_cfg)?, &ext)?;

    let rep = verify_random_periodicity(&sys, &now, &earlier, 1, None)?;
    println!(
        "φ(1, θ_(-1)ω) maps the earlier curve onto the current one: residuals {:?} (tol {:.1e}), pass = {}",
        rep.residuals, rep.tol_period, rep.pass
    );

    for j in 1..=3 {
        let shifted = extract_curves(&pullback_attractor(&sys, &advance_path(&hat, &omega, -j), &cfg)?, &ext)?;
        let inv = verify_period_shift_invariance(&now, &shifted);
        println!(
            "shift -{j}: n = {}, periods {:?}, equal = {}",
            shifted.n(),
            inv.periods_shifted,
            inv.equal
        );
    }
    Ok(())
}
