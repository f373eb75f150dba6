//! The cocycle `φ(t, ω, s, x)` on the cylinder `S¹ × ℝ^d`, its skew product
//! `H(t, ω, s, x) = (θ_t ω, s + t mod 1, φ(t, ω, s, x))`, the Jacobian cocycle
//! `D_x φ`, and the subadditive sequence `Φ_n = ln ‖D_x φ(n)‖₂`.
//!
//! Time is measured in units of the rotation period `t₁ = 1`. A system
//! advances in fixed steps of `1 / steps_per_period`; the circle coordinate
//! is always recomputed from the starting phase and the integer step count,
//! never accumulated.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::base::{slots_for, NoisePath};
use crate::error::{Error, Result};
use crate::linalg::{self, QrAccumulator};

/// Reduces `s` into `[0, 1)`.
pub fn wrap_phase(s: f64) -> f64 {
    let r = s.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Circle coordinate after `k` steps of length `1/steps_per_period`.
pub fn phase_after(s0: f64, k: i64, steps_per_period: u64) -> f64 {
    wrap_phase(s0 + k as f64 / steps_per_period as f64)
}

/// A point `(s, x)` of the cylinder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CylinderState {
    pub s: f64,
    pub x: Vec<f64>,
}

impl CylinderState {
    pub fn new(s: f64, x: Vec<f64>) -> Self {
        Self { s: wrap_phase(s), x }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

impl PartialEq for CylinderState {
    fn eq(&self, other: &Self) -> bool {
        wrap_phase(self.s) == wrap_phase(other.s) && self.x == other.x
    }
}

/// One-step description of a random dynamical system on the cylinder.
///
/// Implementations are immutable and `Sync`; all per-call state lives in the
/// caller-provided scratch buffer.
pub trait CocycleSystem: Send + Sync {
    /// Fibre dimension `d`.
    fn dim(&self) -> usize;

    /// Dimension `m` of the driving Wiener increments (0 for deterministic systems).
    fn noise_dim(&self) -> usize;

    /// Noise grid slots consumed by one step.
    fn slots_per_step(&self) -> i64 {
        1
    }

    /// Number of steps making one full turn of the circle.
    fn steps_per_period(&self) -> u64;

    fn escape_radius(&self) -> f64 {
        1e6
    }

    /// Size of the local truncation error of one step, used to derive cocycle
    /// tolerances.
    fn local_error(&self) -> f64;

    fn scratch_len(&self) -> usize {
        0
    }

    /// Length of the noise slice consumed by [`CocycleSystem::step`].
    fn step_noise_len(&self) -> usize {
        self.noise_dim() * self.slots_per_step() as usize
    }

    fn fill_step_noise(&self, path: &NoisePath, step: i64, out: &mut [f64]) {
        let m = self.noise_dim();
        if m == 0 {
            return;
        }
        let k = self.slots_per_step();
        for (j, chunk) in out.chunks_mut(m).enumerate() {
            path.fill_increment(step * k + j as i64, chunk);
        }
    }

    /// Advances `x` by one step starting at circle phase `s`. When `jac` is
    /// given, writes the `d×d` row-major derivative of the step map in `x`.
    fn step(&self, s: f64, x: &mut [f64], dw: &[f64], jac: Option<&mut [f64]>, scratch: &mut [f64]) -> Result<()>;

    fn step_duration(&self) -> f64 {
        1.0 / self.steps_per_period() as f64
    }
}

/// Cocycle tolerance for a composition spanning `steps` steps.
pub fn tol_cocycle(sys: &dyn CocycleSystem, steps: u64) -> f64 {
    10.0 * sys.local_error() * steps.max(1) as f64
}

/// `θ` applied for `steps` system steps.
pub fn advance_path(sys: &dyn CocycleSystem, path: &NoisePath, steps: i64) -> NoisePath {
    path.shift_slots(steps * sys.slots_per_step())
}

/// A noise path whose grid matches one slot of `sys`.
pub fn noise_path(sys: &dyn CocycleSystem, seed: u64) -> NoisePath {
    NoisePath::new(seed, sys.step_duration() / sys.slots_per_step() as f64, sys.noise_dim())
}

/// Converts a time to a whole number of system steps.
pub fn steps_for(sys: &dyn CocycleSystem, t: f64) -> Result<u64> {
    let n = slots_for(t, sys.step_duration())?;
    u64::try_from(n).map_err(|_| Error::InvalidArgument(format!("negative evolution time {t}")))
}

fn check_inputs(sys: &dyn CocycleSystem, path: &NoisePath, z: &CylinderState) -> Result<()> {
    if z.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: z.dim(),
            context: "state dimension",
        });
    }
    if sys.noise_dim() > 0 && path.dim() != sys.noise_dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.noise_dim(),
            got: path.dim(),
            context: "noise dimension",
        });
    }
    Ok(())
}

fn check_escape(sys: &dyn CocycleSystem, x: &[f64], step: u64) -> Result<()> {
    let norm = linalg::vec_norm(x);
    if !norm.is_finite() || norm > sys.escape_radius() {
        return Err(Error::Blowup {
            step,
            norm,
            radius: sys.escape_radius(),
        });
    }
    Ok(())
}

/// Runs `n` steps, invoking `visit(k, s_k, x_k, J_k)` after each step with the
/// one-step Jacobian when `with_jac` is set.
pub(crate) fn drive<F>(
    sys: &dyn CocycleSystem,
    n: u64,
    path: &NoisePath,
    z: &CylinderState,
    with_jac: bool,
    mut visit: F,
) -> Result<CylinderState>
where
    F: FnMut(u64, &[f64], Option<&[f64]>),
{
    check_inputs(sys, path, z)?;
    let d = sys.dim();
    let spp = sys.steps_per_period();
    let mut x = z.x.clone();
    let mut dw = vec![0.0; sys.step_noise_len()];
    let mut scratch = vec![0.0; sys.scratch_len()];
    let mut jac = vec![0.0; if with_jac { d * d } else { 0 }];
    for k in 0..n {
        let s = phase_after(z.s, k as i64, spp);
        sys.fill_step_noise(path, k as i64, &mut dw);
        let j = if with_jac { Some(jac.as_mut_slice()) } else { None };
        sys.step(s, &mut x, &dw, j, &mut scratch)?;
        check_escape(sys, &x, k + 1)?;
        visit(k + 1, &x, with_jac.then_some(jac.as_slice()));
    }
    Ok(CylinderState {
        s: phase_after(z.s, n as i64, spp),
        x,
    })
}

/// `φ(n steps, ω, z)` together with the new circle coordinate.
pub fn evolve_steps(sys: &dyn CocycleSystem, n: u64, path: &NoisePath, z: &CylinderState) -> Result<CylinderState> {
    drive(sys, n, path, z, false, |_, _, _| {})
}

/// `φ(t, ω, z)` for a grid-aligned time `t ≥ 0`.
pub fn evolve(sys: &dyn CocycleSystem, t: f64, path: &NoisePath, z: &CylinderState) -> Result<CylinderState> {
    evolve_steps(sys, steps_for(sys, t)?, path, z)
}

/// Evolves many states over the same noise path in lockstep, drawing each
/// step's increments once.
pub fn evolve_ensemble_steps(
    sys: &dyn CocycleSystem,
    n: u64,
    path: &NoisePath,
    states: &[CylinderState],
) -> Result<Vec<CylinderState>> {
    for z in states {
        check_inputs(sys, path, z)?;
    }
    let spp = sys.steps_per_period();
    let mut xs: Vec<Vec<f64>> = states.iter().map(|z| z.x.clone()).collect();
    let mut dw = vec![0.0; sys.step_noise_len()];
    let mut scratch = vec![0.0; sys.scratch_len()];
    for k in 0..n {
        sys.fill_step_noise(path, k as i64, &mut dw);
        for (z, x) in states.iter().zip(xs.iter_mut()) {
            let s = phase_after(z.s, k as i64, spp);
            sys.step(s, x, &dw, None, &mut scratch)?;
            check_escape(sys, x, k + 1)?;
        }
    }
    Ok(states
        .iter()
        .zip(xs)
        .map(|(z, x)| CylinderState {
            s: phase_after(z.s, n as i64, spp),
            x,
        })
        .collect())
}

/// `D_x φ(n, ω, z)`; stored as `e^{log_scale} · matrix`.
#[derive(Clone, Debug)]
pub struct JacobianProduct {
    pub matrix: DMatrix<f64>,
    pub log_scale: f64,
    /// Set when the plain product overflowed and the result was recomputed
    /// through the re-orthonormalized accumulator.
    pub log_scaled: bool,
}

impl JacobianProduct {
    /// The product itself; saturates to ±∞ entries when it is not representable.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        &self.matrix * self.log_scale.exp()
    }

    pub fn log_norm(&self) -> f64 {
        self.log_scale + linalg::spectral_norm(&self.matrix).ln()
    }
}

const OVERFLOW_GUARD: f64 = 1e300;

/// Ordered product of one-step Jacobians `Dφ(1, Θ^{n-1}) ⋯ Dφ(1, ω, z)`.
pub fn jacobian_product(
    sys: &dyn CocycleSystem,
    n: u64,
    path: &NoisePath,
    z: &CylinderState,
) -> Result<(CylinderState, JacobianProduct)> {
    let d = sys.dim();
    let mut acc = vec![0.0; d * d];
    linalg::identity_into(&mut acc, d);
    let mut tmp = vec![0.0; d * d];
    let mut overflowed = false;
    let end = drive(sys, n, path, z, true, |_, _, j| {
        if overflowed {
            return;
        }
        linalg::left_mul_assign(j.unwrap(), &mut acc, &mut tmp, d);
        let m = linalg::max_abs(&acc);
        if !(m.is_finite() && m < OVERFLOW_GUARD) {
            overflowed = true;
        }
    })?;
    if !overflowed {
        return Ok((
            end,
            JacobianProduct {
                matrix: linalg::to_dmatrix(&acc, d),
                log_scale: 0.0,
                log_scaled: false,
            },
        ));
    }
    let (end, q) = accumulate_qr(sys, n, path, z, 10, |_, _| {})?;
    Ok((
        end,
        JacobianProduct {
            matrix: q.scaled_matrix(),
            log_scale: q.log_scale(),
            log_scaled: true,
        },
    ))
}

/// Runs `n` steps and folds the one-step Jacobians into a [`QrAccumulator`],
/// re-orthonormalizing every `stride` steps. `at_sync(k, acc)` fires after
/// each re-orthonormalization, including a final one at step `n`.
pub(crate) fn accumulate_qr<F>(
    sys: &dyn CocycleSystem,
    n: u64,
    path: &NoisePath,
    z: &CylinderState,
    stride: u64,
    mut at_sync: F,
) -> Result<(CylinderState, QrAccumulator)>
where
    F: FnMut(u64, &QrAccumulator),
{
    let stride = stride.max(1);
    let d = sys.dim();
    let mut qr = QrAccumulator::new(d);
    let mut block = vec![0.0; d * d];
    linalg::identity_into(&mut block, d);
    let mut tmp = vec![0.0; d * d];
    let mut pending = 0u64;
    let end = drive(sys, n, path, z, true, |k, _, j| {
        linalg::left_mul_assign(j.unwrap(), &mut block, &mut tmp, d);
        pending += 1;
        if pending == stride || k == n {
            qr.absorb(&block);
            linalg::identity_into(&mut block, d);
            pending = 0;
            at_sync(k, &qr);
        }
    })?;
    Ok((end, qr))
}

/// `Φ_n(ω, z) = ln ‖D_x φ(n, ω, z)‖₂` at one starting point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubadditiveRecord {
    pub n: u64,
    pub value: f64,
    pub state: CylinderState,
    pub path_seed: u64,
    pub path_offset: i64,
}

/// QR re-orthonormalization stride used by [`phi_n`].
pub const PHI_QR_STRIDE: u64 = 10;

pub fn phi_n(sys: &dyn CocycleSystem, n: u64, path: &NoisePath, z: &CylinderState) -> Result<SubadditiveRecord> {
    if n == 0 {
        return Err(Error::InvalidArgument("phi_n requires n >= 1".into()));
    }
    let (_, qr) = accumulate_qr(sys, n, path, z, PHI_QR_STRIDE, |_, _| {})?;
    Ok(SubadditiveRecord {
        n,
        value: qr.log_norm(),
        state: z.clone(),
        path_seed: path.seed(),
        path_offset: path.shift_offset(),
    })
}

/// `Φ_n` for every `n` in a sorted grid, from a single trajectory.
pub fn phi_on_grid(
    sys: &dyn CocycleSystem,
    grid: &[u64],
    path: &NoisePath,
    z: &CylinderState,
) -> Result<Vec<SubadditiveRecord>> {
    let Some(&max_n) = grid.iter().max() else {
        return Ok(Vec::new());
    };
    if grid.contains(&0) {
        return Err(Error::InvalidArgument("phi grid must not contain 0".into()));
    }
    let d = sys.dim();
    let mut qr = QrAccumulator::new(d);
    let mut block = vec![0.0; d * d];
    linalg::identity_into(&mut block, d);
    let mut tmp = vec![0.0; d * d];
    let mut pending = 0u64;
    let mut values = vec![f64::NAN; grid.len()];
    drive(sys, max_n, path, z, true, |k, _, j| {
        linalg::left_mul_assign(j.unwrap(), &mut block, &mut tmp, d);
        pending += 1;
        let wanted = grid.contains(&k);
        if pending == PHI_QR_STRIDE || wanted {
            qr.absorb(&block);
            linalg::identity_into(&mut block, d);
            pending = 0;
        }
        if wanted {
            let v = qr.log_norm();
            for (slot, &g) in values.iter_mut().zip(grid) {
                if g == k {
                    *slot = v;
                }
            }
        }
    })?;
    Ok(grid
        .iter()
        .zip(values)
        .map(|(&n, value)| SubadditiveRecord {
            n,
            value,
            state: z.clone(),
            path_seed: path.seed(),
            path_offset: path.shift_offset(),
        })
        .collect())
}

/// The period map `Ĥ`: one step of the wrapped system is a full turn `t₁` of
/// the inner system, driven by `θ̂ = θ_{t₁}`.
pub struct PeriodMap<'a> {
    inner: &'a dyn CocycleSystem,
}

/// Reduces a continuous-time system to its return map over one period.
pub fn discrete_reduction(sys: &dyn CocycleSystem) -> PeriodMap<'_> {
    PeriodMap { inner: sys }
}

impl PeriodMap<'_> {
    fn inner_jac_len(&self) -> usize {
        let d = self.inner.dim();
        3 * d * d
    }
}

impl CocycleSystem for PeriodMap<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }

    fn slots_per_step(&self) -> i64 {
        self.inner.slots_per_step() * self.inner.steps_per_period() as i64
    }

    fn steps_per_period(&self) -> u64 {
        1
    }

    fn escape_radius(&self) -> f64 {
        self.inner.escape_radius()
    }

    fn local_error(&self) -> f64 {
        self.inner.local_error() * self.inner.steps_per_period() as f64
    }

    fn scratch_len(&self) -> usize {
        self.inner.scratch_len() + self.inner_jac_len()
    }

    fn step(&self, s: f64, x: &mut [f64], dw: &[f64], jac: Option<&mut [f64]>, scratch: &mut [f64]) -> Result<()> {
        let d = self.inner.dim();
        let n = self.inner.steps_per_period();
        let chunk = self.inner.step_noise_len();
        let (inner_scratch, jbuf) = scratch.split_at_mut(self.inner.scratch_len());
        let (one, rest) = jbuf.split_at_mut(d * d);
        let (acc, tmp) = rest.split_at_mut(d * d);
        let want_jac = jac.is_some();
        if want_jac {
            linalg::identity_into(acc, d);
        }
        for k in 0..n {
            let sk = phase_after(s, k as i64, n);
            let noise = &dw[k as usize * chunk..(k as usize + 1) * chunk];
            let j = if want_jac { Some(&mut *one) } else { None };
            self.inner.step(sk, x, noise, j, inner_scratch)?;
            if want_jac {
                linalg::left_mul_assign(one, acc, tmp, d);
            }
        }
        if let Some(out) = jac {
            out.copy_from_slice(acc);
        }
        Ok(())
    }
}

/// Autonomous linear map `x ↦ A x` applied once per step, with the circle
/// turning once per step. Used for analytic checks.
#[derive(Clone, Debug)]
pub struct LinearMapSystem {
    d: usize,
    matrix: Vec<f64>,
    steps_per_period: u64,
}

impl LinearMapSystem {
    /// `matrix` is row-major `d×d`.
    pub fn new(d: usize, matrix: Vec<f64>) -> Self {
        assert_eq!(matrix.len(), d * d, "matrix must be d×d");
        Self {
            d,
            matrix,
            steps_per_period: 1,
        }
    }

    pub fn scalar(a: f64) -> Self {
        Self::new(1, vec![a])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = vec![0.0; d * d];
        for (i, v) in diag.iter().enumerate() {
            m[i * d + i] = *v;
        }
        Self::new(d, m)
    }

    pub fn with_steps_per_period(mut self, n: u64) -> Self {
        self.steps_per_period = n.max(1);
        self
    }
}

impl CocycleSystem for LinearMapSystem {
    fn dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        0
    }

    fn steps_per_period(&self) -> u64 {
        self.steps_per_period
    }

    fn escape_radius(&self) -> f64 {
        f64::INFINITY
    }

    fn local_error(&self) -> f64 {
        f64::EPSILON
    }

    fn scratch_len(&self) -> usize {
        self.d
    }

    fn step(&self, _s: f64, x: &mut [f64], _dw: &[f64], jac: Option<&mut [f64]>, scratch: &mut [f64]) -> Result<()> {
        let d = self.d;
        for (i, out) in scratch[..d].iter_mut().enumerate() {
            *out = (0..d).map(|k| self.matrix[i * d + k] * x[k]).sum();
        }
        x.copy_from_slice(&scratch[..d]);
        if let Some(j) = jac {
            j.copy_from_slice(&self.matrix);
        }
        Ok(())
    }
}

/// Records `(t, s, x)` every `every` steps, starting with the initial state.
pub fn trajectory(
    sys: &dyn CocycleSystem,
    n: u64,
    path: &NoisePath,
    z: &CylinderState,
    every: u64,
) -> Result<Vec<(f64, CylinderState)>> {
    let every = every.max(1);
    let spp = sys.steps_per_period();
    let dt = sys.step_duration();
    let mut out = vec![(0.0, z.clone())];
    drive(sys, n, path, z, false, |k, x, _| {
        if k % every == 0 {
            out.push((
                k as f64 * dt,
                CylinderState::new(phase_after(z.s, k as i64, spp), x.to_vec()),
            ));
        }
    })?;
    Ok(out)
}

/// Writes a trajectory as CSV with columns `t, s, x1..xd`.
pub fn write_trajectory_csv<W: Write>(out: W, rows: &[(f64, CylinderState)]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let d = rows.first().map_or(0, |r| r.1.dim());
    let mut header = vec!["t".to_string(), "s".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (t, z) in rows {
        let mut rec = vec![format!("{t:.17e}"), format!("{:.17e}", z.s)];
        rec.extend(z.x.iter().map(|v| format!("{v:.17e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
