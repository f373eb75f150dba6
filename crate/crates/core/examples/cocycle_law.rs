//! The cocycle law φ(t+u, ω, z) = φ(t, θ_u ω, φ(u, ω, z)) on every zoo model.

use cylinder_rds::cocycle::{advance_path, evolve_steps, noise_path, tol_cocycle, CylinderState};
use cylinder_rds::linalg::dist;
use cylinder_rds::models::model_zoo;
use cylinder_rds::CocycleSystem;

fn main() -> cylinder_rds::Result<()> {
    for entry in model_zoo() {
        let sys = entry.system()?;
        let path = noise_path(&sys, 3);
        let z = CylinderState::new(0.3, vec![0.4; sys.dim()]);
        let (u, t) = (77, 130);

        let direct = evolve_steps(&sys, u + t, &path, &z)?;
        let mid = evolve_steps(&sys, u, &path, &z)?;
        let composed = evolve_steps(&sys, t, &advance_path(&sys, &path, u as i64), &mid)?;

        let gap = dist(&direct.x, &composed.x);
        println!(
            "{:<22} |difference| = {gap:.2e}  (tolerance {:.2e}), s = {:.6} / {:.6}",
            entry.name,
            tol_cocycle(&sys, u + t),
            direct.s,
            composed.s
        );
    }
    Ok(())
}
