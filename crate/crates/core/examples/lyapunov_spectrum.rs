//! Top Lyapunov exponents by QR re-orthonormalization, against closed forms.

use cylinder_rds::cocycle::{noise_path, CylinderState};
use cylinder_rds::lyapunov::estimate_spectrum_ensemble;
use cylinder_rds::models::zoo_entry;
use cylinder_rds::CocycleSystem;

fn main() -> cylinder_rds::Result<()> {
    for name in ["forced_linear", "linear_multiplicative", "winding_two"] {
        let entry = zoo_entry(name).expect("zoo entry");
        let sys = entry.system()?;
        let paths: Vec<_> = (0..8).map(|i| noise_path(&sys, 100 + i)).collect();
        let z = CylinderState::new(0.0, vec![0.8; sys.dim()]);
        let est = estimate_spectrum_ensemble(&sys, &paths, &z, 200 * sys.steps_per_period(), 10)?;
        let known = entry
            .facts
            .top_exponent
            .map(|f| format!("{}", f.value))
            .unwrap_or_else(|| "-".into());
        println!(
            "{name:<22} λ = {:?} ± {:?}  known top: {known}",
            est.exponents, est.std_err
        );
        for w in &est.warnings {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
