//! Bringing your own vector field: a stochastic Hopf oscillator forced at
//! the circle frequency, run through the same tools as the zoo.

use std::sync::Arc;

use cylinder_rds::attractor::{pullback_attractor, PullbackConfig};
use cylinder_rds::cocycle::{noise_path, CylinderState};
use cylinder_rds::curves::{extract_curves, ExtractionConfig};
use cylinder_rds::lyapunov::estimate_spectrum;
use cylinder_rds::sde::{build_cocycle, Integrator, SdeSpec, VectorField};
use cylinder_rds::BaseFlow;

/// dz = (z(1 − |z|²) + i·2πz + 0.6 e^{2πis}) dt + σ dW.
struct ForcedHopf {
    sigma: f64,
}

impl VectorField for ForcedHopf {
    fn dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn drift(&self, s: f64, x: &[f64], out: &mut [f64]) {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let w = 2.0 * std::f64::consts::PI;
        out[0] = x[0] * (1.0 - r2) - w * x[1] + 0.6 * (w * s).cos();
        out[1] = x[1] * (1.0 - r2) + w * x[0] + 0.6 * (w * s).sin();
    }

    fn drift_jacobian(&self, _s: f64, x: &[f64], out: &mut [f64]) {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let w = 2.0 * std::f64::consts::PI;
        out[0] = 1.0 - r2 - 2.0 * x[0] * x[0];
        out[1] = -2.0 * x[0] * x[1] - w;
        out[2] = -2.0 * x[0] * x[1] + w;
        out[3] = 1.0 - r2 - 2.0 * x[1] * x[1];
    }

    fn diffusion(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[self.sigma, 0.0, 0.0, self.sigma]);
    }

    fn diffusion_jacobian(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

fn main() -> cylinder_rds::Result<()> {
    let spec = SdeSpec::new(Arc::new(ForcedHopf { sigma: 0.05 }), Integrator::HeunStratonovich, 128);
    let sys = build_cocycle(spec, &BaseFlow::Wiener { dim: 2 })?;

    let est = estimate_spectrum(
        &sys,
        &noise_path(&sys, 1),
        &CylinderState::new(0.0, vec![1.0, 0.0]),
        100 * 128,
        8,
    )?;
    println!("spectrum {:?}", est.exponents);

    let mut cfg = PullbackConfig::new(vec![-1.5, -1.5], vec![1.5, 1.5]);
    cfg.bins = 64;
    cfg.grid_per_axis = 4;
    cfg.horizon = 40;
    let cloud = pullback_attractor(&sys, &noise_path(&sys, 2), &cfg)?;
    println!("cloud accepted: {} (gap {:.2e})", cloud.accepted, cloud.convergence_gap);
    match extract_curves(&cloud, &ExtractionConfig::new(8, 0.1)) {
        Ok(set) => println!("n = {}, periods {:?}", set.n(), set.periods()),
        Err(e) => println!("no curve structure at this resolution: {e}"),
    }
    Ok(())
}
