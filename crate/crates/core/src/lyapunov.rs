//! Lyapunov spectra by QR re-orthonormalization, the extremal exponent over
//! a sampled invariant set, the semiuniform growth bound
//! `Φ_n ≤ C(ω) + nλ'`, and the exponential contraction certificate near `K`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::attractor::FibreCloud;
use crate::base::NoisePath;
use crate::cocycle::{self, discrete_reduction, CocycleSystem, CylinderState, SubadditiveRecord};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovEstimate {
    /// Exponents per unit time, non-increasing.
    pub exponents: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_steps: u64,
    pub per_path: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl LyapunovEstimate {
    pub fn top(&self) -> f64 {
        self.exponents[0]
    }

    fn check_degenerate(&mut self) {
        if self.exponents.len() >= 2 {
            let gap = self.exponents[0] - self.exponents[1];
            let se = (self.std_err[0].powi(2) + self.std_err[1].powi(2)).sqrt();
            if gap <= 2.0 * se {
                self.warnings.push(format!(
                    "top two exponents differ by {gap:.3e}, within 2 standard errors ({se:.3e}): splitting may be degenerate"
                ));
            }
        }
    }
}

const BATCHES: usize = 10;

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Forward Lyapunov spectrum along one orbit. `n_steps` counts integration
/// steps; the standard error comes from batch means over ten equal windows.
pub fn estimate_spectrum(
    sys: &dyn CocycleSystem,
    path: &NoisePath,
    z: &CylinderState,
    n_steps: u64,
    qr_stride: u64,
) -> Result<LyapunovEstimate> {
    if qr_stride == 0 || n_steps < 100 * qr_stride {
        return Err(Error::InvalidArgument(format!(
            "need n_steps >= 100 * qr_stride (got {n_steps} steps, stride {qr_stride})"
        )));
    }
    let d = sys.dim();
    let dt = sys.step_duration();
    let batch_len = n_steps / BATCHES as u64;
    let mut marks: Vec<(u64, Vec<f64>)> = vec![(0, vec![0.0; d])];
    let (_, qr) = cocycle::accumulate_qr(sys, n_steps, path, z, qr_stride, |k, acc| {
        let next_mark = marks.len() as u64 * batch_len;
        if k >= next_mark && marks.len() < BATCHES {
            marks.push((k, acc.log_diag().to_vec()));
        }
    })?;
    marks.push((n_steps, qr.log_diag().to_vec()));
    let total_time = n_steps as f64 * dt;
    let exponents: Vec<f64> = qr.log_diag().iter().map(|v| v / total_time).collect();
    let mut std_err = vec![0.0; d];
    for (i, se) in std_err.iter_mut().enumerate() {
        let rates: Vec<f64> = marks
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| (w[1].1[i] - w[0].1[i]) / ((w[1].0 - w[0].0) as f64 * dt))
            .collect();
        *se = stats::std_err(&rates);
    }
    // QR orders exponents along the orbit; sort with errors attached.
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| exponents[b].total_cmp(&exponents[a]));
    let exponents: Vec<f64> = idx.iter().map(|&i| exponents[i]).collect();
    let std_err: Vec<f64> = idx.iter().map(|&i| std_err[i]).collect();
    let mut est = LyapunovEstimate {
        per_path: vec![exponents.clone()],
        exponents,
        std_err,
        n_steps,
        warnings: Vec::new(),
    };
    est.check_degenerate();
    Ok(est)
}

/// Spectrum averaged over independent paths; the standard error is the
/// spread of per-path estimates.
pub fn estimate_spectrum_ensemble(
    sys: &dyn CocycleSystem,
    paths: &[NoisePath],
    z: &CylinderState,
    n_steps: u64,
    qr_stride: u64,
) -> Result<LyapunovEstimate> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("no paths given".into()));
    }
    let per: Result<Vec<LyapunovEstimate>> = paths
        .par_iter()
        .map(|p| estimate_spectrum(sys, p, z, n_steps, qr_stride))
        .collect();
    let per = per?;
    if per.len() == 1 {
        return Ok(per.into_iter().next().unwrap());
    }
    let d = sys.dim();
    let per_path: Vec<Vec<f64>> = per.iter().map(|e| e.exponents.clone()).collect();
    let column = |i: usize| per_path.iter().map(|v| v[i]).collect::<Vec<f64>>();
    let mut est = LyapunovEstimate {
        exponents: sorted_desc((0..d).map(|i| stats::mean(&column(i))).collect()),
        std_err: (0..d).map(|i| stats::std_err(&column(i))).collect(),
        n_steps,
        per_path,
        warnings: Vec::new(),
    };
    est.check_degenerate();
    Ok(est)
}

/// Geometric grid `2^lo, …, 2^hi`.
pub fn geometric_grid(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|e| 1u64 << e).collect()
}

/// Default grid of period counts for subadditive estimates.
pub fn default_n_grid() -> Vec<u64> {
    geometric_grid(4, 10)
}

/// Evenly spaced subsample of at most `count` cloud points.
pub fn sample_cloud_points(cloud: &FibreCloud, count: usize) -> Vec<CylinderState> {
    let all = cloud.states();
    if all.len() <= count {
        return all;
    }
    (0..count).map(|i| all[i * all.len() / count].clone()).collect()
}

/// `Φ_n` of the period map at each point, for every `n` in `n_grid` (periods).
pub fn subadditive_records(
    sys: &dyn CocycleSystem,
    path: &NoisePath,
    points: &[CylinderState],
    n_grid: &[u64],
) -> Result<Vec<SubadditiveRecord>> {
    let hat = discrete_reduction(sys);
    let per: Result<Vec<Vec<SubadditiveRecord>>> = points
        .par_iter()
        .map(|z| cocycle::phi_on_grid(&hat, n_grid, path, z))
        .collect();
    Ok(per?.into_iter().flatten().collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtremalReport {
    /// `min_n (1/n) · mean_paths max_points Φ_n`.
    pub value: f64,
    pub n_grid: Vec<u64>,
    pub per_n: Vec<f64>,
    pub per_n_std_err: Vec<f64>,
    pub flags: Vec<String>,
    #[serde(skip)]
    pub records: Vec<Vec<SubadditiveRecord>>,
}

/// Empirical extremal exponent `inf_n (1/n) E max_{x∈K(ω)} Φ_n(ω, x)`, one
/// cloud per sampled path.
pub fn extremal_exponent(
    sys: &dyn CocycleSystem,
    clouds: &[FibreCloud],
    n_grid: &[u64],
    points_per_path: usize,
) -> Result<ExtremalReport> {
    if clouds.is_empty() || n_grid.is_empty() {
        return Err(Error::InvalidArgument("need at least one cloud and one n".into()));
    }
    for c in clouds {
        if c.bins.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("cloud has an empty fibre".into()));
        }
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let records: Result<Vec<Vec<SubadditiveRecord>>> = clouds
        .iter()
        .map(|c| subadditive_records(sys, &c.path, &sample_cloud_points(c, points_per_path), &grid))
        .collect();
    let records = records?;
    let mut per_n = Vec::with_capacity(grid.len());
    let mut per_n_std_err = Vec::with_capacity(grid.len());
    for &n in &grid {
        let maxima: Vec<f64> = records
            .iter()
            .map(|recs| {
                recs.iter()
                    .filter(|r| r.n == n)
                    .map(|r| r.value)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        per_n.push(stats::mean(&maxima) / n as f64);
        per_n_std_err.push(stats::std_err(&maxima) / n as f64);
    }
    let mut flags = Vec::new();
    for i in 1..grid.len() {
        let allowance = 2.0 * (per_n_std_err[i].powi(2) + per_n_std_err[i - 1].powi(2)).sqrt() + 1e-9;
        if per_n[i] > per_n[i - 1] + allowance {
            flags.push(format!(
                "(1/n)EΦ_n rises from {:.4e} at n={} to {:.4e} at n={}: grid may be too short",
                per_n[i - 1],
                grid[i - 1],
                per_n[i],
                grid[i]
            ));
        }
    }
    let value = per_n.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ExtremalReport {
        value,
        n_grid: grid,
        per_n,
        per_n_std_err,
        flags,
        records,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub path: String,
    pub state: CylinderState,
    pub n: u64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SemiuniformReport {
    pub lambda: Option<f64>,
    pub lambda_prime: f64,
    /// Largest `n` used to fit `C`; records beyond it validate the bound.
    pub fit_up_to: u64,
    pub c_estimates: BTreeMap<String, f64>,
    pub n_estimates: BTreeMap<String, Option<u64>>,
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
}

impl SemiuniformReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn path_id(r: &SubadditiveRecord) -> String {
    format!("{}@{}", r.path_seed, r.path_offset)
}

const BOUND_SLACK: f64 = 1e-8;

/// Fits `C(ω) = max(0, max (Φ_n − nλ'))` over records with `n` in the lower
/// half of the grid, then checks `Φ_n ≤ C(ω) + nλ'` on every record.
///
/// A `λ'` below the true growth rate makes `Φ_n − nλ'` grow with `n`, so the
/// held-out records expose it as violations.
pub fn fit_adjusted_variable(records: &[Vec<SubadditiveRecord>], lambda_prime: f64) -> Result<SemiuniformReport> {
    let mut ns: Vec<u64> = records.iter().flatten().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() {
        return Err(Error::InvalidArgument("no subadditive records".into()));
    }
    let fit_up_to = ns[(ns.len() - 1) / 2];
    let mut c_estimates = BTreeMap::new();
    let mut violations = Vec::new();
    for recs in records {
        let Some(first) = recs.first() else { continue };
        let id = path_id(first);
        let c = recs
            .iter()
            .filter(|r| r.n <= fit_up_to)
            .map(|r| r.value - r.n as f64 * lambda_prime)
            .fold(0.0, f64::max);
        for r in recs {
            let bound = c + r.n as f64 * lambda_prime;
            if r.value > bound + BOUND_SLACK {
                violations.push(Violation {
                    path: id.clone(),
                    state: r.state.clone(),
                    n: r.n,
                    value: r.value,
                    bound,
                });
            }
        }
        c_estimates.insert(id, c);
    }
    let mut notes = Vec::new();
    if lambda_prime >= 0.0 && records.iter().flatten().all(|r| r.value <= BOUND_SLACK) {
        notes.push(format!(
            "λ' = {lambda_prime} is non-negative on a contracting sample: the bound holds vacuously"
        ));
    }
    notes.push("bound checked on orbit samples only; invariant measures outside the sample are not seen".into());
    Ok(SemiuniformReport {
        lambda: None,
        lambda_prime,
        fit_up_to,
        c_estimates,
        n_estimates: BTreeMap::new(),
        violations,
        notes,
    })
}

/// For `δ = (λ − λ')/2`, the smallest tested `N` such that
/// `(1/n) Φ_n ≤ λ − δ` for all tested `n ≥ N` on that path.
pub fn eventual_rate_bound(
    records: &[Vec<SubadditiveRecord>],
    lambda: f64,
    lambda_prime: f64,
) -> BTreeMap<String, Option<u64>> {
    let delta = (lambda - lambda_prime) / 2.0;
    let mut out = BTreeMap::new();
    for recs in records {
        let Some(first) = recs.first() else { continue };
        let mut ns: Vec<u64> = recs.iter().map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        let ok = |n: u64| {
            recs.iter()
                .filter(|r| r.n == n)
                .all(|r| r.value / n as f64 <= lambda - delta)
        };
        let mut found = None;
        for (i, &n) in ns.iter().enumerate() {
            if ns[i..].iter().all(|&m| ok(m)) {
                found = Some(n);
                break;
            }
        }
        out.insert(path_id(first), found);
    }
    out
}

impl SemiuniformReport {
    pub fn with_rate_bound(mut self, records: &[Vec<SubadditiveRecord>], lambda: f64) -> Self {
        self.n_estimates = eventual_rate_bound(records, lambda, self.lambda_prime);
        self.lambda = Some(lambda);
        self
    }
}

/// Regression of `C(θ^k ω)` on the shift `k`: `C` is adjusted when the
/// slope is statistically indistinguishable from zero.
pub fn adjustedness_test(c_by_shift: &[(f64, f64)]) -> stats::SlopeFit {
    let xs: Vec<f64> = c_by_shift.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = c_by_shift.iter().map(|p| p.1).collect();
    stats::linear_fit(&xs, &ys)
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateConfig {
    pub radius: f64,
    pub c: f64,
    pub delta: f64,
    pub k_max: u64,
    pub samples_per_bin: usize,
    /// Test every `bin_stride`-th bin.
    pub bin_stride: usize,
    pub seed: u64,
}

impl CertificateConfig {
    pub fn new(radius: f64, c: f64, delta: f64) -> Self {
        Self {
            radius,
            c,
            delta,
            k_max: 1 << 10,
            samples_per_bin: 50,
            bin_stride: 1,
            seed: 0,
        }
    }

    pub fn k_grid(&self) -> Vec<u64> {
        let mut k = 1u64;
        let mut out = Vec::new();
        while k <= self.k_max {
            out.push(k);
            k *= 2;
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateReport {
    pub pass: bool,
    /// `min (ln c − δk − Φ_k)` over samples and `k`.
    pub worst_margin: f64,
    pub worst_k: u64,
    pub worst_bin: usize,
    /// Smallest `k` at which some sample breaks the envelope.
    pub first_failure_k: Option<u64>,
    pub tested_points: usize,
    pub k_grid: Vec<u64>,
}

/// Tests `‖D_x φ(k, ω, s, x)‖ ≤ c e^{−δk}` at points drawn uniformly from
/// radius-`r` balls around the cloud.
pub fn contraction_certificate(
    sys: &dyn CocycleSystem,
    cloud: &FibreCloud,
    cfg: &CertificateConfig,
) -> Result<CertificateReport> {
    if !(cfg.radius > 0.0) || !(cfg.c > 0.0) {
        return Err(Error::InvalidArgument("radius and c must be positive".into()));
    }
    let grid = cfg.k_grid();
    let d = cloud.dim;
    let log_c = cfg.c.ln();
    let bins: Vec<usize> = (0..cloud.bin_count())
        .step_by(cfg.bin_stride.max(1))
        .filter(|&b| !cloud.bins[b].is_empty())
        .collect();
    type BinResult = (f64, u64, usize, Option<u64>, usize);
    let per_bin: Result<Vec<BinResult>> = bins
        .par_iter()
        .map(|&b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let pts = &cloud.bins[b];
            let s = cloud.bin_phase(b);
            let samples: Vec<CylinderState> = (0..cfg.samples_per_bin)
                .map(|_| {
                    let centre = &pts[rng.random_range(0..pts.len())];
                    let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = dir
                        .iter()
                        .map(|v: &f64| v * v)
                        .sum::<f64>()
                        .sqrt()
                        .max(f64::MIN_POSITIVE);
                    let rad = cfg.radius * rng.random::<f64>().powf(1.0 / d as f64);
                    let x = centre.iter().zip(&dir).map(|(c, u)| c + rad * u / norm).collect();
                    CylinderState::new(s, x)
                })
                .collect();
            let recs = subadditive_records(sys, &cloud.path, &samples, &grid)?;
            let mut worst = (f64::INFINITY, 0u64);
            let mut first_fail: Option<u64> = None;
            for r in &recs {
                let margin = log_c - cfg.delta * r.n as f64 - r.value;
                if margin < worst.0 {
                    worst = (margin, r.n);
                }
                if margin < 0.0 {
                    first_fail = Some(first_fail.map_or(r.n, |f| f.min(r.n)));
                }
            }
            Ok((worst.0, worst.1, b, first_fail, samples.len()))
        })
        .collect();
    let per_bin = per_bin?;
    let worst = per_bin
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .copied()
        .unwrap_or((f64::INFINITY, 0, 0, None, 0));
    let first_failure_k = per_bin.iter().filter_map(|r| r.3).min();
    Ok(CertificateReport {
        pass: first_failure_k.is_none(),
        worst_margin: worst.0,
        worst_k: worst.1,
        worst_bin: worst.2,
        first_failure_k,
        tested_points: per_bin.iter().map(|r| r.4).sum(),
        k_grid: grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::LinearMapSystem;

    fn p0() -> NoisePath {
        NoisePath::new(0, 1.0, 0)
    }

    #[test]
    fn halving_map_exponent() {
        let sys = LinearMapSystem::scalar(0.5);
        let est = estimate_spectrum(&sys, &p0(), &CylinderState::new(0.0, vec![1.0]), 1000, 10).unwrap();
        assert!((est.top() - 0.5f64.ln()).abs() < 1e-12);
        assert!(est.std_err[0] < 1e-12);
    }

    #[test]
    fn diagonal_map_spectrum_and_volume() {
        let e = std::f64::consts::E;
        let sys = LinearMapSystem::diagonal(&[1.0 / e, e]);
        let est = estimate_spectrum(&sys, &p0(), &CylinderState::new(0.0, vec![1.0, 1.0]), 200, 2).unwrap();
        assert!((est.exponents[0] - 1.0).abs() < 1e-12);
        assert!((est.exponents[1] + 1.0).abs() < 1e-12);
        assert!(est.exponents.iter().sum::<f64>().abs() < 1e-12);
        assert!(est.warnings.is_empty());
    }

    #[test]
    fn degenerate_splitting_warns() {
        let sys = LinearMapSystem::diagonal(&[0.5, 0.5]);
        let est = estimate_spectrum(&sys, &p0(), &CylinderState::new(0.0, vec![1.0, 1.0]), 1000, 10).unwrap();
        assert_eq!(est.warnings.len(), 1);
    }

    #[test]
    fn too_short_run_rejected() {
        let sys = LinearMapSystem::scalar(0.5);
        assert!(estimate_spectrum(&sys, &p0(), &CylinderState::new(0.0, vec![1.0]), 99, 1).is_err());
    }

    fn halving_cloud() -> FibreCloud {
        FibreCloud::from_fn(p0(), 8, 1e-3, |_| vec![vec![0.0], vec![0.3]])
    }

    #[test]
    fn extremal_exponent_of_uniform_contraction() {
        let sys = LinearMapSystem::scalar(0.5);
        let rep = extremal_exponent(&sys, &[halving_cloud()], &[1, 2, 4, 8], 10).unwrap();
        for v in &rep.per_n {
            assert!((v - 0.5f64.ln()).abs() < 1e-12);
        }
        assert!(rep.flags.is_empty());
    }

    #[test]
    fn semiuniform_exact_rate_gives_zero_c() {
        let sys = LinearMapSystem::scalar(0.5);
        let rep = extremal_exponent(&sys, &[halving_cloud()], &[1, 2, 4, 8, 16], 10).unwrap();
        let fit = fit_adjusted_variable(&rep.records, 0.5f64.ln()).unwrap();
        assert!(fit.passed());
        for c in fit.c_estimates.values() {
            assert!(c.abs() < 1e-10);
        }
        let tight = fit_adjusted_variable(&rep.records, 0.5f64.ln() - 0.2).unwrap();
        assert!(!tight.passed());
    }

    #[test]
    fn eventual_bound_found_for_contraction() {
        let sys = LinearMapSystem::scalar(0.5);
        let rep = extremal_exponent(&sys, &[halving_cloud()], &[1, 2, 4, 8], 4).unwrap();
        let n = eventual_rate_bound(&rep.records, -0.1, -0.3);
        assert!(n.values().all(|v| *v == Some(1)));
        let none = eventual_rate_bound(&rep.records, -1.0, -1.2);
        assert!(none.values().all(|v| v.is_none()));
    }

    #[test]
    fn certificate_pass_and_fail() {
        let cloud = halving_cloud();
        let mut cfg = CertificateConfig::new(0.1, 1.0, 2f64.ln());
        cfg.k_max = 16;
        cfg.samples_per_bin = 5;
        let ok = contraction_certificate(&LinearMapSystem::scalar(0.5), &cloud, &cfg).unwrap();
        assert!(ok.pass, "{ok:?}");
        assert!(ok.tested_points >= 40);
        let bad = contraction_certificate(&LinearMapSystem::scalar(2.0), &cloud, &cfg).unwrap();
        assert!(!bad.pass);
        assert_eq!(bad.first_failure_k, Some(1));
    }

    #[test]
    fn adjustedness_of_constant_c() {
        let fit = adjustedness_test(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (5.0, 1.0)]);
        assert!(!fit.significant());
        let grow = adjustedness_test(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (5.0, 5.0)]);
        assert!(grow.significant());
    }
}
