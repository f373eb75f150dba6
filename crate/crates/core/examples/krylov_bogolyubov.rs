//! Cesàro averages of pushforwards concentrate on the invariant curve.

use cylinder_rds::attractor::krylov_bogolyubov;
use cylinder_rds::cocycle::{noise_path, CylinderState};
use cylinder_rds::models::{zoo_entry, ForcedLinear};

fn main() -> cylinder_rds::Result<()> {
    let sys = zoo_entry("forced_linear").expect("zoo entry").system()?;
    let orbit = ForcedLinear::new(1.0, 0.0);
    let initial: Vec<CylinderState> = (0..8)
        .map(|i| CylinderState::new(i as f64 / 8.0, vec![1.0 - i as f64 / 4.0]))
        .collect();
    let paths = vec![noise_path(&sys, 0)];
    for horizon in [10, 100, 1000] {
        let mu = krylov_bogolyubov(&sys, &paths, &initial, horizon)?;
        let d = mu.mean_of(|z| (z.x[0] - orbit.periodic_orbit(z.s)).abs());
        println!("N = {horizon:>5}: mean distance to the curve {d:.3e}");
    }
    Ok(())
}
