//! Base dynamics: the driving noise `(Ω, θ)`.
//!
//! A [`NoisePath`] is a seed plus a shift offset. The Wiener increment at grid
//! slot `k` is drawn from its own ChaCha stream, keyed by the seed and
//! indexed by a zigzag encoding of the absolute slot, so `θ_t` is literal
//! index arithmetic and negative times are as cheap as positive ones.

use std::collections::BTreeSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide that a requested shift sits on the grid.
const GRID_ALIGN_TOL: f64 = 1e-9;

/// A seeded two-sided realization of an `m`-dimensional Wiener process,
/// sampled on a uniform grid.
#[derive(Clone, Debug, Serialize)]
pub struct NoisePath {
    seed: u64,
    grid_step: f64,
    dim: usize,
    shift_offset: i64,
    #[serde(skip)]
    key: [u8; 32],
}

impl PartialEq for NoisePath {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.grid_step.to_bits() == other.grid_step.to_bits()
            && self.dim == other.dim
            && self.shift_offset == other.shift_offset
    }
}

impl Eq for NoisePath {}

fn zigzag(slot: i64) -> u64 {
    if slot >= 0 {
        (slot as u64) << 1
    } else {
        ((-(slot + 1)) as u64) << 1 | 1
    }
}

impl NoisePath {
    pub fn new(seed: u64, grid_step: f64, dim: usize) -> Self {
        assert!(grid_step > 0.0 && grid_step.is_finite(), "grid step must be positive");
        let key = ChaCha8Rng::seed_from_u64(seed).get_seed();
        Self {
            seed,
            grid_step,
            dim,
            shift_offset: 0,
            key,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shift_offset(&self) -> i64 {
        self.shift_offset
    }

    /// Converts a time to a whole number of grid slots, rejecting sub-grid
    /// requests.
    pub fn slots_for(&self, t: f64) -> Result<i64> {
        slots_for(t, self.grid_step)
    }

    /// `θ_t`: returns the path advanced by `t` time units.
    pub fn shift(&self, t: f64) -> Result<NoisePath> {
        Ok(self.shift_slots(self.slots_for(t)?))
    }

    pub fn shift_slots(&self, slots: i64) -> NoisePath {
        NoisePath {
            shift_offset: self.shift_offset + slots,
            ..self.clone()
        }
    }

    /// Writes the increment `W((slot+1)h) - W(slot h)` of the shifted path
    /// into `out`.
    pub fn fill_increment(&self, slot: i64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        if self.dim == 0 {
            return;
        }
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(zigzag(self.shift_offset + slot));
        let scale = self.grid_step.sqrt();
        for v in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = scale * z;
        }
    }

    pub fn increment(&self, slot: i64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.fill_increment(slot, &mut out);
        out
    }

    /// Increments for slots `start..start+len`, flattened slot-major.
    pub fn window(&self, start: i64, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len * self.dim];
        if self.dim == 0 {
            return out;
        }
        for (i, chunk) in out.chunks_mut(self.dim).enumerate() {
            self.fill_increment(start + i as i64, chunk);
        }
        out
    }
}

pub(crate) fn slots_for(t: f64, grid_step: f64) -> Result<i64> {
    let ratio = t / grid_step;
    let nearest = ratio.round();
    let residual = (ratio - nearest) * grid_step;
    if !t.is_finite() || residual.abs() > GRID_ALIGN_TOL * grid_step.max(t.abs()) {
        return Err(Error::SubGridShift {
            requested: t,
            grid_step,
            residual,
        });
    }
    Ok(nearest as i64)
}

/// The kind of ergodic base driving a system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseFlow {
    Wiener { dim: usize },
    Rotation { alpha: f64 },
    Product { dim: usize, alpha: f64 },
}

impl BaseFlow {
    pub fn description(&self) -> String {
        match self {
            BaseFlow::Wiener { dim } => format!("{dim}-dimensional two-sided Wiener shift"),
            BaseFlow::Rotation { alpha } => format!("circle rotation by {alpha}"),
            BaseFlow::Product { dim, alpha } => {
                format!("{dim}-dimensional Wiener shift x circle rotation by {alpha}")
            }
        }
    }
}

/// A point of the base space together with its position along the flow.
#[derive(Clone, Debug, PartialEq)]
pub enum BasePoint {
    Wiener(NoisePath),
    Rotation(RotationPhase),
    Product(NoisePath, RotationPhase),
}

impl BasePoint {
    pub fn shift_slots(&self, slots: i64) -> BasePoint {
        match self {
            BasePoint::Wiener(p) => BasePoint::Wiener(p.shift_slots(slots)),
            BasePoint::Rotation(r) => BasePoint::Rotation(r.shift_slots(slots)),
            BasePoint::Product(p, r) => BasePoint::Product(p.shift_slots(slots), r.shift_slots(slots)),
        }
    }

    pub fn path(&self) -> Option<&NoisePath> {
        match self {
            BasePoint::Wiener(p) | BasePoint::Product(p, _) => Some(p),
            BasePoint::Rotation(_) => None,
        }
    }

    pub fn phase(&self) -> Option<f64> {
        match self {
            BasePoint::Rotation(r) | BasePoint::Product(_, r) => Some(r.phase()),
            BasePoint::Wiener(_) => None,
        }
    }
}

/// Rotation `φ ↦ φ + tα mod 1` on the circle, tracked by an integer step
/// count so the group law holds exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationPhase {
    pub origin: f64,
    pub alpha: f64,
    pub grid_step: f64,
    pub steps: i64,
}

impl RotationPhase {
    pub fn new(origin: f64, alpha: f64, grid_step: f64) -> Self {
        Self {
            origin: origin.rem_euclid(1.0),
            alpha,
            grid_step,
            steps: 0,
        }
    }

    pub fn shift_slots(&self, slots: i64) -> Self {
        Self {
            steps: self.steps + slots,
            ..self.clone()
        }
    }

    pub fn phase(&self) -> f64 {
        (self.origin + self.steps as f64 * self.grid_step * self.alpha).rem_euclid(1.0)
    }
}

/// Best rational approximation `p/q` of `x` with `q ≤ max_den`, returned only
/// if it matches `x` to within `tol`.
pub fn rational_approx(x: f64, max_den: u64, tol: f64) -> Option<(i64, u64)> {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let (h2, k2) = (a as i64 * h1 + h0, a as u64 * k1 + k0);
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (x - h1 as f64 / k1 as f64).abs() <= tol {
            return Some((h1, k1));
        }
        let frac = r - a;
        if frac.abs() < 1e-15 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Which ergodic component of `θ^k` a sample was restricted to.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentInfo {
    pub index: u64,
    pub of: u64,
}

#[derive(Clone, Debug)]
pub struct ComponentSample {
    pub points: Vec<BasePoint>,
    /// `None` when `θ^k` is ergodic and sampling was unrestricted.
    pub component: Option<ComponentInfo>,
}

/// Draws `count` base points from a single ergodic component of `θ^k`.
///
/// The Wiener shift is totally ergodic, so only distinct seeds are needed.
/// A rational rotation by `p/q` splits into `g = gcd(k, q)` components under
/// `θ^k`; phases are restricted to `[0, 1/q) + (g/q)ℤ`, the component that
/// contains `[0, 1/q)`.
pub fn ergodic_component_sampler(
    flow: &BaseFlow,
    k: u64,
    count: usize,
    seed: u64,
    grid_step: f64,
) -> Result<ComponentSample> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds = BTreeSet::new();
    let mut fresh_seed = |rng: &mut ChaCha8Rng| loop {
        let s = rng.next_u64();
        if seeds.insert(s) {
            return s;
        }
    };

    let restriction = |alpha: f64| -> Option<(u64, u64)> {
        let (_, q) = rational_approx(alpha.rem_euclid(1.0), 1_000_000, 1e-12)?;
        let g = gcd(k, q);
        (g > 1).then_some((q, g))
    };
    let draw_phase = |rng: &mut ChaCha8Rng, alpha: f64| -> f64 {
        match restriction(alpha) {
            Some((q, g)) => {
                let u: f64 = rng.random::<f64>() / q as f64;
                let m = rng.random_range(0..q / g);
                (u + (m * g) as f64 / q as f64).rem_euclid(1.0)
            }
            None => rng.random::<f64>(),
        }
    };

    let mut points = Vec::with_capacity(count);
    let component = match flow {
        BaseFlow::Wiener { dim } => {
            for _ in 0..count {
                let s = fresh_seed(&mut rng);
                points.push(BasePoint::Wiener(NoisePath::new(s, grid_step, *dim)));
            }
            None
        }
        BaseFlow::Rotation { alpha } => {
            for _ in 0..count {
                let phase = draw_phase(&mut rng, *alpha);
                points.push(BasePoint::Rotation(RotationPhase::new(phase, *alpha, grid_step)));
            }
            restriction(*alpha).map(|(_, g)| ComponentInfo { index: 0, of: g })
        }
        BaseFlow::Product { dim, alpha } => {
            for _ in 0..count {
                let s = fresh_seed(&mut rng);
                let phase = draw_phase(&mut rng, *alpha);
                points.push(BasePoint::Product(
                    NoisePath::new(s, grid_step, *dim),
                    RotationPhase::new(phase, *alpha, grid_step),
                ));
            }
            restriction(*alpha).map(|(_, g)| ComponentInfo { index: 0, of: g })
        }
    };
    Ok(ComponentSample { points, component })
}
