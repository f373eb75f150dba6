//! Random invariant compact sets `K(ω)` approximated by pullback, organized
//! into fibre sections `K(ω, s)` over a uniform grid of circle phases.

use rayon::prelude::*;
use serde::Serialize;

use crate::base::NoisePath;
use crate::cluster::{self, Cluster};
use crate::cocycle::{self, advance_path, discrete_reduction, phase_after, CocycleSystem, CylinderState};
use crate::error::{Error, Result};
use crate::linalg::{self, dist};
use crate::stats;

/// Sampled fibre sections of `K(ω)`: bin `b` holds points of the fibre over
/// `s = b / bins`.
#[derive(Clone, Debug)]
pub struct FibreCloud {
    pub path: NoisePath,
    pub dim: usize,
    pub bins: Vec<Vec<Vec<f64>>>,
    /// Pullback horizon in periods.
    pub horizon: u64,
    /// Hausdorff distance between the clouds pulled back over `horizon` and
    /// `horizon / 2`, maximized over bins.
    pub convergence_gap: f64,
    pub tol_k: f64,
    pub accepted: bool,
}

impl FibreCloud {
    /// A cloud assembled from given sections, treated as exact.
    pub fn from_sections(path: NoisePath, bins: Vec<Vec<Vec<f64>>>, tol_k: f64) -> Self {
        let dim = bins.iter().flatten().next().map_or(0, |p| p.len());
        Self {
            path,
            dim,
            bins,
            horizon: 0,
            convergence_gap: 0.0,
            tol_k,
            accepted: true,
        }
    }

    /// Samples `bins` sections of a set given as `s ↦ points`.
    pub fn from_fn<F>(path: NoisePath, bins: usize, tol_k: f64, f: F) -> Self
    where
        F: Fn(f64) -> Vec<Vec<f64>>,
    {
        let sections = (0..bins).map(|b| f(b as f64 / bins as f64)).collect();
        Self::from_sections(path, sections, tol_k)
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.bins.len() as f64
    }

    pub fn bin_phase(&self, b: usize) -> f64 {
        b as f64 / self.bins.len() as f64
    }

    pub fn len(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every stored point as a cylinder state, bin by bin.
    pub fn states(&self) -> Vec<CylinderState> {
        self.bins
            .iter()
            .enumerate()
            .flat_map(|(b, pts)| {
                let s = self.bin_phase(b);
                pts.iter().map(move |x| CylinderState::new(s, x.clone()))
            })
            .collect()
    }

    /// Resolution below which points of a section cannot be told apart.
    pub fn noise_floor(&self) -> f64 {
        self.convergence_gap
    }

    /// Box diameter scale used for the default acceptance tolerance.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<&Vec<f64>> = self.bins.iter().flatten().collect();
        let mut best: f64 = 0.0;
        for k in 0..self.dim {
            let lo = pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
            best += (hi - lo).powi(2);
        }
        best.sqrt()
    }
}

/// Hausdorff distance between finite point sets; infinite if exactly one is empty.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let directed = |p: &[Vec<f64>], q: &[Vec<f64>]| {
        p.iter()
            .map(|x| q.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Per-bin Hausdorff distance between two clouds on the same bin grid, maximized.
pub fn cloud_distance(a: &FibreCloud, b: &FibreCloud) -> Result<f64> {
    if a.bin_count() != b.bin_count() {
        return Err(Error::InvalidArgument(format!(
            "bin grids differ: {} vs {}",
            a.bin_count(),
            b.bin_count()
        )));
    }
    Ok(a.bins
        .iter()
        .zip(&b.bins)
        .map(|(p, q)| hausdorff(p, q))
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize)]
pub struct PullbackConfig {
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub grid_per_axis: usize,
    /// Horizon `T` in periods.
    pub horizon: u64,
    pub bins: usize,
    /// Acceptance threshold on the `T` vs `T/2` gap; defaults to `10⁻³ ·` box diameter.
    pub tol_k: Option<f64>,
}

impl PullbackConfig {
    pub fn new(box_lo: Vec<f64>, box_hi: Vec<f64>) -> Self {
        Self {
            box_lo,
            box_hi,
            grid_per_axis: 8,
            horizon: 50,
            bins: 256,
            tol_k: None,
        }
    }

    pub fn tol_k(&self) -> f64 {
        self.tol_k.unwrap_or_else(|| {
            let diam: f64 = self
                .box_lo
                .iter()
                .zip(&self.box_hi)
                .map(|(l, h)| (h - l) * (h - l))
                .sum::<f64>()
                .sqrt();
            1e-3 * diam
        })
    }

    /// Cell-centred grid over the seed box.
    pub fn seed_points(&self) -> Vec<Vec<f64>> {
        let d = self.box_lo.len();
        let g = self.grid_per_axis.max(1);
        let total = g.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|k| {
                        let i = idx % g;
                        idx /= g;
                        let lo = self.box_lo[k];
                        lo + (i as f64 + 0.5) / g as f64 * (self.box_hi[k] - lo)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Runs `n` steps of `sys` from phase `s0`, reading step noise from a
/// pre-drawn window starting at step `from`.
fn run_on_window(
    sys: &dyn CocycleSystem,
    s0: f64,
    x: &mut [f64],
    window: &[f64],
    from: usize,
    n: usize,
    scratch: &mut [f64],
) -> Result<()> {
    let len = sys.step_noise_len();
    let spp = sys.steps_per_period();
    for k in 0..n {
        let s = phase_after(s0, k as i64, spp);
        let dw = &window[(from + k) * len..(from + k + 1) * len];
        sys.step(s, x, dw, None, scratch)?;
        let norm = linalg::vec_norm(x);
        if !norm.is_finite() || norm > sys.escape_radius() {
            return Err(Error::Blowup {
                step: k as u64 + 1,
                norm,
                radius: sys.escape_radius(),
            });
        }
    }
    Ok(())
}

/// Pulls the seed grid back from `θ_{-T} ω` to `ω` for every bin phase and
/// checks convergence against horizon `T/2`.
pub fn pullback_attractor(sys: &dyn CocycleSystem, path: &NoisePath, cfg: &PullbackConfig) -> Result<FibreCloud> {
    let d = sys.dim();
    if cfg.box_lo.len() != d || cfg.box_hi.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: cfg.box_lo.len(),
            context: "seed box dimension",
        });
    }
    if cfg.horizon < 2 {
        return Err(Error::InvalidArgument(
            "pullback horizon must be at least 2 periods".into(),
        ));
    }
    if cfg.bins == 0 {
        return Err(Error::InvalidArgument("bin count must be positive".into()));
    }
    let spp = sys.steps_per_period() as usize;
    let full = cfg.horizon as usize * spp;
    let half = (cfg.horizon / 2) as usize * spp;
    let start = advance_path(sys, path, -(full as i64));
    let len = sys.step_noise_len();
    let mut window = vec![0.0; full * len];
    if len > 0 {
        for (k, chunk) in window.chunks_mut(len).enumerate() {
            sys.fill_step_noise(&start, k as i64, chunk);
        }
    }
    let seeds = cfg.seed_points();
    let results: Result<Vec<(Vec<Vec<f64>>, f64)>> = (0..cfg.bins)
        .into_par_iter()
        .map(|b| {
            let s = b as f64 / cfg.bins as f64;
            let mut scratch = vec![0.0; sys.scratch_len()];
            let mut long = Vec::with_capacity(seeds.len());
            let mut short = Vec::with_capacity(seeds.len());
            for x0 in &seeds {
                let mut x = x0.clone();
                run_on_window(sys, s, &mut x, &window, 0, full, &mut scratch)?;
                long.push(x);
                let mut y = x0.clone();
                run_on_window(sys, s, &mut y, &window, full - half, half, &mut scratch)?;
                short.push(y);
            }
            let gap = hausdorff(&long, &short);
            Ok((long, gap))
        })
        .collect();
    let results = results?;
    let convergence_gap = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let tol_k = cfg.tol_k();
    Ok(FibreCloud {
        path: path.clone(),
        dim: d,
        bins: results.into_iter().map(|r| r.0).collect(),
        horizon: cfg.horizon,
        convergence_gap,
        tol_k,
        accepted: convergence_gap <= tol_k,
    })
}

/// Hausdorff distance between `φ(t₁, θ_{-t₁}ω)` applied to the earlier cloud
/// and the cloud at `ω`, maximized over bins.
pub fn invariance_residual(sys: &dyn CocycleSystem, earlier: &FibreCloud, now: &FibreCloud) -> Result<f64> {
    let moved = push_forward(sys, earlier, 1)?;
    cloud_distance(&moved, now)
}

/// Applies `k` turns of the period map to every point of a cloud.
pub fn push_forward(sys: &dyn CocycleSystem, cloud: &FibreCloud, k: u64) -> Result<FibreCloud> {
    let hat = discrete_reduction(sys);
    let bins: Result<Vec<Vec<Vec<f64>>>> = cloud
        .bins
        .par_iter()
        .enumerate()
        .map(|(b, pts)| {
            let s = cloud.bin_phase(b);
            let states: Vec<CylinderState> = pts.iter().map(|x| CylinderState::new(s, x.clone())).collect();
            let out = cocycle::evolve_ensemble_steps(&hat, k, &cloud.path, &states)?;
            Ok(out.into_iter().map(|z| z.x).collect())
        })
        .collect();
    Ok(FibreCloud {
        path: advance_path(&hat, &cloud.path, k as i64),
        bins: bins?,
        ..cloud.clone()
    })
}

/// Greedy covering counts per bin, bracketing the minimal cover size:
/// `lower[b] ≤ N_ε(ω, s_b) ≤ upper[b]`.
#[derive(Clone, Debug, Serialize)]
pub struct CoveringProfile {
    pub eps: f64,
    pub upper: Vec<Option<usize>>,
    pub lower: Vec<Option<usize>>,
    pub max_upper: usize,
    /// Most common upper count over non-empty bins.
    pub candidate_n: usize,
    pub warnings: Vec<String>,
}

pub fn covering_number(cloud: &FibreCloud, eps: f64) -> Result<CoveringProfile> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "covering radius must be positive, got {eps}"
        )));
    }
    if !cloud.accepted {
        return Err(Error::InvalidArgument("covering numbers need an accepted cloud".into()));
    }
    let mut warnings = Vec::new();
    let mut upper = Vec::with_capacity(cloud.bin_count());
    let mut lower = Vec::with_capacity(cloud.bin_count());
    for (b, pts) in cloud.bins.iter().enumerate() {
        if pts.is_empty() {
            warnings.push(format!("bin {b} is empty and was excluded"));
            upper.push(None);
            lower.push(None);
            continue;
        }
        upper.push(Some(cluster::greedy_cover(pts, eps)));
        lower.push(Some(cluster::greedy_cover(pts, 2.0 * eps)));
    }
    let present: Vec<usize> = upper.iter().flatten().copied().collect();
    Ok(CoveringProfile {
        eps,
        max_upper: present.iter().copied().max().unwrap_or(0),
        candidate_n: stats::mode(&present).unwrap_or(0),
        upper,
        lower,
        warnings,
    })
}

/// Fraction of bins where the later profile's count does not exceed the
/// earlier one's by more than `slack`.
pub fn pushforward_fraction(earlier: &CoveringProfile, later: &CoveringProfile, slack: usize) -> f64 {
    let pairs: Vec<(usize, usize)> = earlier
        .upper
        .iter()
        .zip(&later.upper)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect();
    if pairs.is_empty() {
        return 1.0;
    }
    pairs.iter().filter(|(a, b)| *b <= *a + slack).count() as f64 / pairs.len() as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct FibreCardinality {
    /// Modal number of clusters per section.
    pub n: usize,
    /// Smallest distance between distinct clusters over bins with `n` clusters.
    pub separation: Option<f64>,
    pub per_bin: Vec<usize>,
    /// Bins whose cluster count differs from `n`.
    pub flagged: Vec<usize>,
}

/// Clusters of each bin at the given gap cut.
pub fn bin_clusters(cloud: &FibreCloud, gap_threshold: f64) -> Vec<Vec<Cluster>> {
    cloud
        .bins
        .par_iter()
        .map(|pts| cluster::single_linkage(pts, gap_threshold))
        .collect()
}

pub fn fibre_cardinality(cloud: &FibreCloud, gap_threshold: f64) -> Result<FibreCardinality> {
    if !cloud.accepted {
        return Err(Error::InvalidArgument(
            "fibre cardinality needs an accepted cloud".into(),
        ));
    }
    if !(gap_threshold > cloud.noise_floor()) {
        return Err(Error::IllPosedClustering {
            threshold: gap_threshold,
            noise_floor: cloud.noise_floor(),
        });
    }
    let clusters = bin_clusters(cloud, gap_threshold);
    let per_bin: Vec<usize> = clusters.iter().map(Vec::len).collect();
    let n = stats::mode(&per_bin).unwrap_or(0);
    let flagged = per_bin
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != n)
        .map(|(b, _)| b)
        .collect();
    let separation = clusters
        .iter()
        .zip(&cloud.bins)
        .filter(|(c, _)| c.len() == n)
        .filter_map(|(c, pts)| cluster::min_separation(pts, c))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    Ok(FibreCardinality {
        n,
        separation,
        per_bin,
        flagged,
    })
}

/// Cesàro average of pushforwards of an initial sample along the period map.
#[derive(Clone, Debug)]
pub struct EmpiricalRandomMeasure {
    pub horizon: u64,
    pub per_path: Vec<PathMeasure>,
}

#[derive(Clone, Debug)]
pub struct PathMeasure {
    pub path_seed: u64,
    pub path_offset: i64,
    pub samples: Vec<CylinderState>,
    pub weights: Vec<f64>,
}

impl EmpiricalRandomMeasure {
    /// Weighted mean of `f` over all samples, averaged over paths.
    pub fn mean_of<F: Fn(&CylinderState) -> f64>(&self, f: F) -> f64 {
        let per: Vec<f64> = self
            .per_path
            .iter()
            .map(|m| m.samples.iter().zip(&m.weights).map(|(z, w)| w * f(z)).sum())
            .collect();
        stats::mean(&per)
    }
}

/// `μ_N = (1/N) Σ_{n<N} Ĥ^n_* ν₀` for each path.
pub fn krylov_bogolyubov(
    sys: &dyn CocycleSystem,
    paths: &[NoisePath],
    initial: &[CylinderState],
    horizon: u64,
) -> Result<EmpiricalRandomMeasure> {
    if horizon == 0 {
        return Err(Error::InvalidArgument(
            "Krylov-Bogolyubov horizon must be at least 1".into(),
        ));
    }
    if initial.is_empty() {
        return Err(Error::InvalidArgument("initial sample set is empty".into()));
    }
    let hat = discrete_reduction(sys);
    let per_path: Result<Vec<PathMeasure>> = paths
        .par_iter()
        .map(|path| {
            let mut samples = Vec::with_capacity(initial.len() * horizon as usize);
            for z in initial {
                samples.push(z.clone());
                cocycle::drive(&hat, horizon - 1, path, z, false, |_, x, _| {
                    samples.push(CylinderState::new(z.s, x.to_vec()));
                })?;
            }
            let w = 1.0 / samples.len() as f64;
            Ok(PathMeasure {
                path_seed: path.seed(),
                path_offset: path.shift_offset(),
                weights: vec![w; samples.len()],
                samples,
            })
        })
        .collect();
    Ok(EmpiricalRandomMeasure {
        horizon,
        per_path: per_path?,
    })
}
