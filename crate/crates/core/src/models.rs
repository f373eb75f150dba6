//! Concrete vector fields and the model zoo used by tests, examples and the CLI.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::base::BaseFlow;
use crate::error::{Error, Result};
use crate::sde::{build_cocycle, Integrator, SdeSpec, SdeSystem, VectorField};

const TAU: f64 = 2.0 * PI;

/// `dx = 0`: the cocycle is pure rotation of the circle.
#[derive(Clone, Debug)]
pub struct ZeroField {
    d: usize,
}

impl ZeroField {
    pub fn new(d: usize) -> Self {
        Self { d }
    }
}

impl VectorField for ZeroField {
    fn dim(&self) -> usize {
        self.d
    }
    fn noise_dim(&self) -> usize {
        0
    }
    fn drift(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn drift_jacobian(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self, _s: f64, _x: &[f64], _out: &mut [f64]) {}
    fn diffusion_jacobian(&self, _s: f64, _x: &[f64], _out: &mut [f64]) {}
}

/// `dx = a x dt`.
#[derive(Clone, Debug)]
pub struct LinearDrift {
    pub a: f64,
}

impl LinearDrift {
    pub fn new(a: f64) -> Self {
        Self { a }
    }
}

impl VectorField for LinearDrift {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        0
    }
    fn drift(&self, _s: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.a * x[0];
    }
    fn drift_jacobian(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = self.a;
    }
    fn diffusion(&self, _s: f64, _x: &[f64], _out: &mut [f64]) {}
    fn diffusion_jacobian(&self, _s: f64, _x: &[f64], _out: &mut [f64]) {}
}

/// `dx = (−rate·x + cos 2πs) dt + σ dW`. Deterministic when `σ = 0`.
#[derive(Clone, Debug)]
pub struct ForcedLinear {
    pub rate: f64,
    pub sigma: f64,
}

impl ForcedLinear {
    pub fn new(rate: f64, sigma: f64) -> Self {
        Self { rate, sigma }
    }

    /// The attracting periodic orbit of the noise-free equation.
    pub fn periodic_orbit(&self, s: f64) -> f64 {
        let (sn, cs) = (TAU * s).sin_cos();
        (self.rate * cs + TAU * sn) / (self.rate * self.rate + TAU * TAU)
    }
}

impl VectorField for ForcedLinear {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        usize::from(self.sigma != 0.0)
    }
    fn drift(&self, s: f64, x: &[f64], out: &mut [f64]) {
        out[0] = -self.rate * x[0] + (TAU * s).cos();
    }
    fn drift_jacobian(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = -self.rate;
    }
    fn diffusion(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        if let Some(g) = out.first_mut() {
            *g = self.sigma;
        }
    }
    fn diffusion_jacobian(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `dx = a x dt + σ x ∘ dW`, solved by `x(t) = x₀ exp(a t + σ W_t)`.
#[derive(Clone, Debug)]
pub struct LinearMultiplicative {
    pub a: f64,
    pub sigma: f64,
}

impl LinearMultiplicative {
    pub fn new(a: f64, sigma: f64) -> Self {
        Self { a, sigma }
    }
}

impl VectorField for LinearMultiplicative {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, _s: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.a * x[0];
    }
    fn drift_jacobian(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = self.a;
    }
    fn diffusion(&self, _s: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * x[0];
    }
    fn diffusion_jacobian(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma;
    }
}

/// `dx = (x − x³ + ε cos 2πs) dt + σ dW`.
#[derive(Clone, Debug)]
pub struct DoubleWell {
    pub eps: f64,
    pub sigma: f64,
}

impl DoubleWell {
    pub fn new(eps: f64, sigma: f64) -> Self {
        Self { eps, sigma }
    }
}

impl VectorField for DoubleWell {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        usize::from(self.sigma != 0.0)
    }
    fn drift(&self, s: f64, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] - x[0].powi(3) + self.eps * (TAU * s).cos();
    }
    fn drift_jacobian(&self, _s: f64, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0 - 3.0 * x[0] * x[0];
    }
    fn diffusion(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        if let Some(g) = out.first_mut() {
            *g = self.sigma;
        }
    }
    fn diffusion_jacobian(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Planar field whose attractor is the winding-2 curve
/// `s ↦ (cos πs, sin πs)`, `s ∈ [0, 2)`.
///
/// With `z = u + iv`:
/// `dz/dt = z(1 − |z|²) + i z (π − k·Im(z² e^{−2πis})) + σ dW`.
/// The radius relaxes to 1 and `ψ = 2 arg z − 2πs` obeys
/// `ψ' = −2k|z|² sin ψ`, locking `arg z` to `πs mod π`. Each fibre meets the
/// curve in the antipodal pair `±(cos πs, sin πs)`; the second coordinate is
/// `±sin πs`.
#[derive(Clone, Debug)]
pub struct WindingTwo {
    pub lock: f64,
    pub sigma: f64,
}

impl WindingTwo {
    pub fn new(lock: f64, sigma: f64) -> Self {
        Self { lock, sigma }
    }

    pub fn curve(s_lift: f64) -> [f64; 2] {
        let (sn, cs) = (PI * s_lift).sin_cos();
        [cs, sn]
    }
}

impl VectorField for WindingTwo {
    fn dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        if self.sigma != 0.0 {
            2
        } else {
            0
        }
    }
    fn drift(&self, s: f64, x: &[f64], out: &mut [f64]) {
        let (u, v) = (x[0], x[1]);
        let r2 = u * u + v * v;
        let (sn, cs) = (TAU * s).sin_cos();
        let q = 2.0 * u * v * cs - (u * u - v * v) * sn;
        let w = PI - self.lock * q;
        out[0] = u * (1.0 - r2) - v * w;
        out[1] = v * (1.0 - r2) + u * w;
    }
    fn drift_jacobian(&self, s: f64, x: &[f64], out: &mut [f64]) {
        let (u, v) = (x[0], x[1]);
        let r2 = u * u + v * v;
        let (sn, cs) = (TAU * s).sin_cos();
        let q = 2.0 * u * v * cs - (u * u - v * v) * sn;
        let w = PI - self.lock * q;
        let qu = 2.0 * v * cs - 2.0 * u * sn;
        let qv = 2.0 * u * cs + 2.0 * v * sn;
        let k = self.lock;
        out[0] = 1.0 - r2 - 2.0 * u * u + k * v * qu;
        out[1] = -2.0 * u * v - w + k * v * qv;
        out[2] = -2.0 * u * v + w - k * u * qu;
        out[3] = 1.0 - r2 - 2.0 * v * v - k * u * qv;
    }
    fn diffusion(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        if out.len() == 4 {
            out.copy_from_slice(&[self.sigma, 0.0, 0.0, self.sigma]);
        }
    }
    fn diffusion_jacobian(&self, _s: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// A known fact about a zoo model and how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct Fact<T> {
    pub value: T,
    pub basis: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveFacts {
    /// Number of invariant curves.
    pub count: usize,
    /// Winding number of each curve, sorted.
    pub windings: Vec<u32>,
}

#[derive(Clone, Debug, Default)]
pub struct KnownFacts {
    pub top_exponent: Option<Fact<f64>>,
    pub fibre_count: Option<Fact<usize>>,
    pub curves: Option<Fact<CurveFacts>>,
    /// Closed-form invariant curve on the lift, when one exists.
    pub analytic_curve: Option<fn(f64) -> Vec<f64>>,
}

#[derive(Clone)]
pub struct ModelZooEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub spec: SdeSpec,
    pub base: BaseFlow,
    pub facts: KnownFacts,
}

impl ModelZooEntry {
    pub fn system(&self) -> Result<SdeSystem> {
        build_cocycle(self.spec.clone(), &self.base)
    }
}

pub type Params = BTreeMap<String, f64>;

/// Default integration steps per period.
pub const DEFAULT_STEPS_PER_PERIOD: u64 = 128;

fn forced_linear_curve(s: f64) -> Vec<f64> {
    vec![ForcedLinear::new(1.0, 0.0).periodic_orbit(s)]
}

fn winding_two_curve(s: f64) -> Vec<f64> {
    WindingTwo::curve(s).to_vec()
}

const NAMES: [&str; 6] = [
    "zero",
    "linear",
    "forced_linear",
    "linear_multiplicative",
    "double_well",
    "winding_two",
];

pub fn registered_models() -> &'static [&'static str] {
    &NAMES
}

fn defaults(name: &str) -> Option<Params> {
    let pairs: &[(&str, f64)] = match name {
        "zero" => &[("dim", 1.0)],
        "linear" => &[("a", -1.0)],
        "forced_linear" => &[("rate", 1.0), ("sigma", 0.0)],
        "linear_multiplicative" => &[("a", -0.5), ("sigma", 0.3)],
        "double_well" => &[("eps", 0.1), ("sigma", 0.05)],
        "winding_two" => &[("lock", 2.0), ("sigma", 0.0)],
        _ => return None,
    };
    Some(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
}

/// Resolves a registered model name and parameter overrides to its full
/// parameter map.
pub fn resolve_params(name: &str, overrides: &Params) -> Result<Params> {
    let mut p = defaults(name)
        .ok_or_else(|| Error::Config(format!("unknown model `{name}` (registered: {})", NAMES.join(", "))))?;
    for (k, v) in overrides {
        if !p.contains_key(k) {
            return Err(Error::Config(format!(
                "model `{name}` has no parameter `{k}` (expected one of: {})",
                p.keys().cloned().collect::<Vec<_>>().join(", ")
            )));
        }
        p.insert(k.clone(), *v);
    }
    Ok(p)
}

/// Builds a registered vector field from its name and parameters.
pub fn build_field(name: &str, overrides: &Params) -> Result<Arc<dyn VectorField>> {
    let p = resolve_params(name, overrides)?;
    let g = |k: &str| p[k];
    Ok(match name {
        "zero" => {
            let d = g("dim");
            if d < 1.0 || d.fract() != 0.0 {
                return Err(Error::Config(format!(
                    "model `zero`: dim must be a positive integer, got {d}"
                )));
            }
            Arc::new(ZeroField::new(d as usize))
        }
        "linear" => Arc::new(LinearDrift::new(g("a"))),
        "forced_linear" => Arc::new(ForcedLinear::new(g("rate"), g("sigma"))),
        "linear_multiplicative" => Arc::new(LinearMultiplicative::new(g("a"), g("sigma"))),
        "double_well" => Arc::new(DoubleWell::new(g("eps"), g("sigma"))),
        "winding_two" => Arc::new(WindingTwo::new(g("lock"), g("sigma"))),
        _ => unreachable!("resolve_params rejects unknown names"),
    })
}

/// A registered field by name, or failing that a zoo entry's field. Zoo
/// entries take no parameter overrides.
pub fn resolve_params_or_zoo(name: &str, overrides: &Params) -> Result<Arc<dyn VectorField>> {
    if NAMES.contains(&name) {
        return build_field(name, overrides);
    }
    match zoo_entry(name) {
        Some(e) if overrides.is_empty() => Ok(e.spec.field),
        Some(_) => Err(Error::Config(format!("zoo entry `{name}` takes no parameters"))),
        None => {
            let zoo: Vec<&str> = model_zoo().iter().map(|e| e.name).collect();
            Err(Error::Config(format!(
                "unknown model `{name}` (registered: {}; zoo: {})",
                NAMES.join(", "),
                zoo.join(", ")
            )))
        }
    }
}

/// Known behaviour of a zoo entry run with its own parameters.
pub fn known_facts(name: &str, overrides: &Params) -> Option<KnownFacts> {
    if !overrides.is_empty() {
        return None;
    }
    zoo_entry(name).map(|e| e.facts)
}

fn entry(name: &'static str, summary: &'static str, field: Arc<dyn VectorField>, facts: KnownFacts) -> ModelZooEntry {
    let base = BaseFlow::Wiener { dim: field.noise_dim() };
    ModelZooEntry {
        name,
        summary,
        spec: SdeSpec::new(field, Integrator::HeunStratonovich, DEFAULT_STEPS_PER_PERIOD),
        base,
        facts,
    }
}

/// The reference models with their known behaviour.
pub fn model_zoo() -> Vec<ModelZooEntry> {
    vec![
        entry(
            "forced_linear",
            "dx = (-x + cos 2πs) dt: one attracting periodic curve",
            Arc::new(ForcedLinear::new(1.0, 0.0)),
            KnownFacts {
                top_exponent: Some(Fact {
                    value: -1.0,
                    basis: "constant Jacobian e^{-t}",
                }),
                fibre_count: Some(Fact {
                    value: 1,
                    basis: "contraction mapping; closed-form periodic solution",
                }),
                curves: Some(Fact {
                    value: CurveFacts { count: 1, windings: vec![1] },
                    basis: "closed-form periodic solution (cos 2πs + 2π sin 2πs)/(1 + 4π²)",
                }),
                analytic_curve: Some(forced_linear_curve),
            },
        ),
        entry(
            "forced_linear_noisy",
            "dx = (-x + cos 2πs) dt + 0.2 dW: one random periodic curve",
            Arc::new(ForcedLinear::new(1.0, 0.2)),
            KnownFacts {
                top_exponent: Some(Fact {
                    value: -1.0,
                    basis: "additive noise leaves the Jacobian e^{-t}",
                }),
                fibre_count: Some(Fact {
                    value: 1,
                    basis: "uniform contraction of the pullback",
                }),
                curves: Some(Fact {
                    value: CurveFacts { count: 1, windings: vec![1] },
                    basis: "uniform contraction of the pullback",
                }),
                analytic_curve: None,
            },
        ),
        entry(
            "linear_multiplicative",
            "dx = -0.5 x dt + 0.3 x ∘ dW (Stratonovich)",
            Arc::new(LinearMultiplicative::new(-0.5, 0.3)),
            KnownFacts {
                top_exponent: Some(Fact {
                    value: -0.5,
                    basis: "closed form x(t) = x0 exp(a t + σ W_t)",
                }),
                ..KnownFacts::default()
            },
        ),
        entry(
            "double_well",
            "dx = (x - x³ + 0.1 cos 2πs) dt + 0.05 dW: two curves, one per well",
            Arc::new(DoubleWell::new(0.1, 0.05)),
            KnownFacts {
                fibre_count: Some(Fact {
                    value: 2,
                    basis: "finite pullback horizons; well-to-well transitions at σ = 0.05 are exponentially rare, so the infinite-horizon limit may synchronize",
                }),
                curves: Some(Fact {
                    value: CurveFacts { count: 2, windings: vec![1, 1] },
                    basis: "finite pullback horizons, as for the fibre count",
                }),
                ..KnownFacts::default()
            },
        ),
        entry(
            "winding_two",
            "planar lock onto (cos πs, sin πs): one curve of winding 2",
            Arc::new(WindingTwo::new(2.0, 0.0)),
            KnownFacts {
                fibre_count: Some(Fact {
                    value: 2,
                    basis: "construction: antipodal pair per fibre",
                }),
                curves: Some(Fact {
                    value: CurveFacts { count: 1, windings: vec![2] },
                    basis: "construction: (cos π(s+1), sin π(s+1)) = -(cos πs, sin πs)",
                }),
                analytic_curve: Some(winding_two_curve),
                ..KnownFacts::default()
            },
        ),
    ]
}

pub fn zoo_entry(name: &str) -> Option<ModelZooEntry> {
    model_zoo().into_iter().find(|e| e.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(field: &dyn VectorField, s: f64, x: &[f64]) {
        let d = field.dim();
        let mut jac = vec![0.0; d * d];
        field.drift_jacobian(s, x, &mut jac);
        let h = 1e-6;
        for k in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let (mut fp, mut fm) = (vec![0.0; d], vec![0.0; d]);
            field.drift(s, &xp, &mut fp);
            field.drift(s, &xm, &mut fm);
            for i in 0..d {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!(
                    (fd - jac[i * d + k]).abs() < 1e-7,
                    "∂F{i}/∂x{k}: {fd} vs {}",
                    jac[i * d + k]
                );
            }
        }
    }

    #[test]
    fn drift_jacobians_match_finite_differences() {
        fd_check(&WindingTwo::new(2.0, 0.0), 0.37, &[0.3, -1.2]);
        fd_check(&DoubleWell::new(0.1, 0.0), 0.8, &[0.7]);
        fd_check(&ForcedLinear::new(1.0, 0.0), 0.1, &[0.2]);
    }

    #[test]
    fn fields_are_periodic_in_s() {
        let fields: Vec<Arc<dyn VectorField>> = vec![
            Arc::new(ForcedLinear::new(1.0, 0.2)),
            Arc::new(DoubleWell::new(0.1, 0.05)),
            Arc::new(WindingTwo::new(2.0, 0.0)),
        ];
        for f in fields {
            let d = f.dim();
            let x: Vec<f64> = (0..d).map(|i| 0.3 + i as f64).collect();
            for s in [0.0, 0.25, 0.6] {
                let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
                f.drift(s, &x, &mut a);
                f.drift(s + 1.0 - f64::EPSILON, &x, &mut b);
                f.drift(s + 1.0, &x, &mut b);
                for i in 0..d {
                    assert!((a[i] - b[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forced_linear_orbit_solves_the_ode() {
        // x' = -x + cos 2πs along s = t, checked by central differences.
        let f = ForcedLinear::new(1.0, 0.0);
        for s in [0.0, 0.2, 0.55, 0.9] {
            let h = 1e-5;
            let deriv = (f.periodic_orbit(s + h) - f.periodic_orbit(s - h)) / (2.0 * h);
            let rhs = -f.periodic_orbit(s) + (TAU * s).cos();
            assert!((deriv - rhs).abs() < 1e-8);
        }
    }

    #[test]
    fn winding_curve_is_invariant_under_drift() {
        let f = WindingTwo::new(2.0, 0.0);
        for s in [0.0, 0.3, 0.75, 1.4] {
            let p = WindingTwo::curve(s);
            let mut out = [0.0; 2];
            f.drift(s.rem_euclid(1.0), &p, &mut out);
            let tangent = [-PI * p[1], PI * p[0]];
            assert!((out[0] - tangent[0]).abs() < 1e-12 && (out[1] - tangent[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn zoo_declares_expected_facts() {
        let zoo = model_zoo();
        let a = zoo.iter().find(|e| e.name == "forced_linear").unwrap();
        assert_eq!(a.facts.fibre_count.as_ref().unwrap().value, 1);
        let b = zoo.iter().find(|e| e.name == "linear_multiplicative").unwrap();
        assert_eq!(b.facts.top_exponent.as_ref().unwrap().value, -0.5);
        let d = zoo.iter().find(|e| e.name == "winding_two").unwrap();
        assert_eq!(
            d.facts.curves.as_ref().unwrap().value,
            CurveFacts {
                count: 1,
                windings: vec![2]
            }
        );
        for e in &zoo {
            e.system().unwrap();
        }
    }

    #[test]
    fn registry_rejects_unknown_names_and_params() {
        assert!(build_field("van_der_pol", &Params::new()).is_err());
        let mut p = Params::new();
        p.insert("bogus".into(), 1.0);
        assert!(build_field("forced_linear", &p).is_err());
        for name in registered_models() {
            build_field(name, &Params::new()).unwrap();
        }
    }
}
