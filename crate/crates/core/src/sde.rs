//! Time-periodic SDEs `dX = F(s, X) dt + G(s, X) dW`, autonomized on the
//! cylinder by letting the phase `s` turn at unit speed, and integrated with
//! Euler–Maruyama (Itô) or stochastic Heun (Stratonovich).
//!
//! The Jacobian returned by a step is the exact derivative of the numerical
//! scheme in `x`, so products of step Jacobians are exactly the derivative of
//! the discrete cocycle.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base::{BaseFlow, NoisePath};
use crate::cocycle::{wrap_phase, CocycleSystem, CylinderState};
use crate::error::{Error, Result};

/// Drift and diffusion of an SDE on `S¹ × ℝ^d`. Both must be 1-periodic in `s`.
///
/// Matrices are row-major: `drift_jacobian[i*d + k] = ∂F_i/∂x_k`,
/// `diffusion[i*m + j] = G_ij`, `diffusion_jacobian[(i*m + j)*d + k] = ∂G_ij/∂x_k`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self, s: f64, x: &[f64], out: &mut [f64]);
    fn drift_jacobian(&self, s: f64, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, s: f64, x: &[f64], out: &mut [f64]);
    fn diffusion_jacobian(&self, s: f64, x: &[f64], out: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpretation {
    Ito,
    Stratonovich,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    EulerMaruyama,
    HeunStratonovich,
}

impl Integrator {
    pub fn interpretation(self) -> Interpretation {
        match self {
            Integrator::EulerMaruyama => Interpretation::Ito,
            Integrator::HeunStratonovich => Interpretation::Stratonovich,
        }
    }
}

#[derive(Clone)]
pub struct SdeSpec {
    pub field: Arc<dyn VectorField>,
    pub interpretation: Interpretation,
    pub integrator: Integrator,
    /// Number of integration steps per period; the step is `h = 1/steps_per_period`.
    pub steps_per_period: u64,
    pub escape_radius: f64,
}

impl SdeSpec {
    pub fn new(field: Arc<dyn VectorField>, integrator: Integrator, steps_per_period: u64) -> Self {
        Self {
            field,
            interpretation: integrator.interpretation(),
            integrator,
            steps_per_period,
            escape_radius: 1e6,
        }
    }

    pub fn step(&self) -> f64 {
        1.0 / self.steps_per_period as f64
    }
}

/// An SDE realized as a cocycle on the cylinder.
#[derive(Clone)]
pub struct SdeSystem {
    spec: SdeSpec,
    d: usize,
    m: usize,
    h: f64,
}

/// Builds the cocycle of `spec` driven by `base`.
pub fn build_cocycle(spec: SdeSpec, base: &BaseFlow) -> Result<SdeSystem> {
    if spec.steps_per_period == 0 {
        return Err(Error::InvalidArgument("steps_per_period must be positive".into()));
    }
    if spec.interpretation != spec.integrator.interpretation() {
        return Err(Error::InvalidArgument(format!(
            "{:?} integrator cannot realize the {:?} interpretation",
            spec.integrator, spec.interpretation
        )));
    }
    let m = spec.field.noise_dim();
    let base_dim = match base {
        BaseFlow::Wiener { dim } | BaseFlow::Product { dim, .. } => *dim,
        BaseFlow::Rotation { .. } => 0,
    };
    if m > 0 && base_dim != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: base_dim,
            context: "diffusion columns vs base noise dimension",
        });
    }
    let d = spec.field.dim();
    let h = spec.step();
    Ok(SdeSystem { spec, d, m, h })
}

impl SdeSystem {
    pub fn spec(&self) -> &SdeSpec {
        &self.spec
    }

    pub fn field(&self) -> &dyn VectorField {
        self.spec.field.as_ref()
    }

    fn layout(&self) -> [usize; 15] {
        let (d, m) = (self.d, self.m);
        [
            d,
            d * m,
            d,
            d,
            d,
            d * m,
            d,
            d * d,
            d * d * m,
            d * d,
            d * d,
            d * d,
            d * d * m,
            d * d,
            d * d,
        ]
    }
}

/// Hands out consecutive disjoint pieces of a scratch buffer.
struct Carver<'a> {
    rest: &'a mut [f64],
}

impl<'a> Carver<'a> {
    fn take(&mut self, n: usize) -> &'a mut [f64] {
        let (head, tail) = std::mem::take(&mut self.rest).split_at_mut(n);
        self.rest = tail;
        head
    }
}

fn check_finite(v: &[f64], what: &'static str, s: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what, s })
    }
}

/// `out = G · dw`.
fn apply_diffusion(g: &[f64], dw: &[f64], out: &mut [f64], d: usize, m: usize) {
    for i in 0..d {
        out[i] = (0..m).map(|j| g[i * m + j] * dw[j]).sum();
    }
}

/// `out[i*d + k] = Σ_j ∂G_ij/∂x_k dw_j`.
fn contract_diffusion_jacobian(dg: &[f64], dw: &[f64], out: &mut [f64], d: usize, m: usize) {
    for i in 0..d {
        for k in 0..d {
            out[i * d + k] = (0..m).map(|j| dg[(i * m + j) * d + k] * dw[j]).sum();
        }
    }
}

impl CocycleSystem for SdeSystem {
    fn dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        self.m
    }

    fn steps_per_period(&self) -> u64 {
        self.spec.steps_per_period
    }

    fn escape_radius(&self) -> f64 {
        self.spec.escape_radius
    }

    fn local_error(&self) -> f64 {
        match self.spec.integrator {
            Integrator::EulerMaruyama => self.h,
            Integrator::HeunStratonovich => self.h.powf(1.5),
        }
    }

    fn scratch_len(&self) -> usize {
        self.layout().iter().sum()
    }

    fn step(&self, s: f64, x: &mut [f64], dw: &[f64], jac: Option<&mut [f64]>, scratch: &mut [f64]) -> Result<()> {
        let (d, m, h) = (self.d, self.m, self.h);
        let field = self.spec.field.as_ref();
        let layout = self.layout();
        let mut carver = Carver { rest: scratch };
        let mut sizes = layout.iter();
        let mut next = || carver.take(*sizes.next().unwrap());
        let (f0, g0, gdw0, xt, f1, g1, gdw1) = (next(), next(), next(), next(), next(), next(), next());
        let (df0, dg0, dgdw0, jt, df1, dg1, dgdw1, tmp) =
            (next(), next(), next(), next(), next(), next(), next(), next());

        field.drift(s, x, f0);
        check_finite(f0, "drift", s)?;
        if m > 0 {
            field.diffusion(s, x, g0);
            check_finite(g0, "diffusion", s)?;
            apply_diffusion(g0, dw, gdw0, d, m);
        } else {
            gdw0.fill(0.0);
        }
        let want_jac = jac.is_some();
        if want_jac {
            field.drift_jacobian(s, x, df0);
            if m > 0 {
                field.diffusion_jacobian(s, x, dg0);
                contract_diffusion_jacobian(dg0, dw, dgdw0, d, m);
            } else {
                dgdw0.fill(0.0);
            }
        }

        match self.spec.integrator {
            Integrator::EulerMaruyama => {
                for i in 0..d {
                    x[i] += f0[i] * h + gdw0[i];
                }
                if let Some(j) = jac {
                    for i in 0..d {
                        for k in 0..d {
                            let id = if i == k { 1.0 } else { 0.0 };
                            j[i * d + k] = id + df0[i * d + k] * h + dgdw0[i * d + k];
                        }
                    }
                }
            }
            Integrator::HeunStratonovich => {
                let s1 = wrap_phase(s + h);
                for i in 0..d {
                    xt[i] = x[i] + f0[i] * h + gdw0[i];
                }
                field.drift(s1, xt, f1);
                check_finite(f1, "drift", s1)?;
                if m > 0 {
                    field.diffusion(s1, xt, g1);
                    check_finite(g1, "diffusion", s1)?;
                    apply_diffusion(g1, dw, gdw1, d, m);
                } else {
                    gdw1.fill(0.0);
                }
                if let Some(j) = jac {
                    field.drift_jacobian(s1, xt, df1);
                    if m > 0 {
                        field.diffusion_jacobian(s1, xt, dg1);
                        contract_diffusion_jacobian(dg1, dw, dgdw1, d, m);
                    } else {
                        dgdw1.fill(0.0);
                    }
                    // Predictor Jacobian J̃ = I + DF0 h + DG0·dw.
                    for i in 0..d {
                        for k in 0..d {
                            let id = if i == k { 1.0 } else { 0.0 };
                            jt[i * d + k] = id + df0[i * d + k] * h + dgdw0[i * d + k];
                        }
                    }
                    // tmp = (DF1 h + DG1·dw) · J̃
                    for i in 0..d {
                        for k in 0..d {
                            tmp[i * d + k] = (0..d)
                                .map(|l| (df1[i * d + l] * h + dgdw1[i * d + l]) * jt[l * d + k])
                                .sum();
                        }
                    }
                    for i in 0..d {
                        for k in 0..d {
                            let id = if i == k { 1.0 } else { 0.0 };
                            j[i * d + k] = id + 0.5 * (df0[i * d + k] * h + dgdw0[i * d + k]) + 0.5 * tmp[i * d + k];
                        }
                    }
                }
                for i in 0..d {
                    x[i] += 0.5 * (f0[i] + f1[i]) * h + 0.5 * (gdw0[i] + gdw1[i]);
                }
            }
        }
        Ok(())
    }
}

/// A single integration step from `z` using the increment at `slot` of `path`;
/// returns the new state and the one-step Jacobian.
pub fn integrate_step(
    sys: &SdeSystem,
    path: &NoisePath,
    slot: i64,
    z: &CylinderState,
) -> Result<(CylinderState, Vec<f64>)> {
    let d = sys.dim();
    if z.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: z.dim(),
            context: "state dimension",
        });
    }
    let mut dw = vec![0.0; sys.noise_dim()];
    if sys.noise_dim() > 0 {
        path.fill_increment(slot, &mut dw);
    }
    let mut x = z.x.clone();
    let mut jac = vec![0.0; d * d];
    let mut scratch = vec![0.0; sys.scratch_len()];
    sys.step(z.s, &mut x, &dw, Some(&mut jac), &mut scratch)?;
    Ok((CylinderState::new(z.s + sys.step_duration(), x), jac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ForcedLinear, LinearDrift, ZeroField};

    fn system(field: Arc<dyn VectorField>, integrator: Integrator, n: u64) -> SdeSystem {
        let base = BaseFlow::Wiener { dim: field.noise_dim() };
        build_cocycle(SdeSpec::new(field, integrator, n), &base).unwrap()
    }

    #[test]
    fn zero_field_step_is_rotation_with_identity_jacobian() {
        let sys = system(Arc::new(ZeroField::new(2)), Integrator::HeunStratonovich, 100);
        let p = NoisePath::new(1, 0.01, 0);
        let z = CylinderState::new(0.5, vec![1.0, -2.0]);
        let (z1, j) = integrate_step(&sys, &p, 0, &z).unwrap();
        assert_eq!(z1.x, z.x);
        assert!((z1.s - 0.51).abs() < 1e-15);
        assert_eq!(j, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn euler_jacobian_of_linear_drift() {
        let sys = system(Arc::new(LinearDrift::new(-1.0)), Integrator::EulerMaruyama, 100);
        let p = NoisePath::new(1, 0.01, 0);
        let (_, j) = integrate_step(&sys, &p, 0, &CylinderState::new(0.0, vec![3.0])).unwrap();
        assert_eq!(j, vec![1.0 - 0.01]);
    }

    #[test]
    fn integrator_interpretation_must_agree() {
        let mut spec = SdeSpec::new(Arc::new(LinearDrift::new(-1.0)), Integrator::HeunStratonovich, 10);
        spec.interpretation = Interpretation::Ito;
        assert!(build_cocycle(spec, &BaseFlow::Wiener { dim: 0 }).is_err());
    }

    #[test]
    fn noise_dimension_mismatch_rejected() {
        let spec = SdeSpec::new(Arc::new(ForcedLinear::new(1.0, 0.2)), Integrator::HeunStratonovich, 10);
        assert!(matches!(
            build_cocycle(spec, &BaseFlow::Wiener { dim: 2 }),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_drift_is_an_error() {
        struct Bad;
        impl VectorField for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn noise_dim(&self) -> usize {
                0
            }
            fn drift(&self, _: f64, _: &[f64], out: &mut [f64]) {
                out[0] = f64::NAN;
            }
            fn drift_jacobian(&self, _: f64, _: &[f64], out: &mut [f64]) {
                out[0] = 0.0;
            }
            fn diffusion(&self, _: f64, _: &[f64], _: &mut [f64]) {}
            fn diffusion_jacobian(&self, _: f64, _: &[f64], _: &mut [f64]) {}
        }
        let sys = system(Arc::new(Bad), Integrator::EulerMaruyama, 10);
        let p = NoisePath::new(1, 0.1, 0);
        assert!(matches!(
            integrate_step(&sys, &p, 0, &CylinderState::new(0.0, vec![0.0])),
            Err(Error::NonFinite { .. })
        ));
    }
}
