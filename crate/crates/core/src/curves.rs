//! Invariant curves read off an accepted cloud: branches are chained bin by
//! bin inside overlapping strips of the circle, strips are stitched on their
//! overlaps, and the label permutation after one turn gives the curves and
//! their winding periods.

use std::io::Write;

use itertools::Itertools;
use rayon::prelude::*;
use serde::Serialize;

use crate::attractor::{bin_clusters, hausdorff, FibreCloud};
use crate::base::NoisePath;
use crate::cluster::Cluster;
use crate::cocycle::{self, advance_path, discrete_reduction, CocycleSystem, CylinderState};
use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::permutation::{decompose_periods, Permutation};

/// Largest branch count handled by exhaustive assignment.
pub const MAX_BRANCHES: usize = 8;

#[derive(Clone, Debug, Serialize)]
pub struct ExtractionConfig {
    pub strips: usize,
    /// Single-linkage cut inside a fibre section.
    pub gap_threshold: f64,
    /// Largest admissible move of a branch between adjacent bins.
    pub jump_threshold: Option<f64>,
    /// Largest sup distance for two strips' branches to count as the same on an overlap.
    pub tol_match: Option<f64>,
    /// Assignments whose costs differ by less than this are ambiguous.
    pub ambiguity_margin: Option<f64>,
}

impl ExtractionConfig {
    pub fn new(strips: usize, gap_threshold: f64) -> Self {
        Self {
            strips,
            gap_threshold,
            jump_threshold: None,
            tol_match: None,
            ambiguity_margin: None,
        }
    }
}

/// Thresholds after defaults have been filled in from the cloud.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResolvedThresholds {
    pub gap_threshold: f64,
    pub jump_threshold: f64,
    pub tol_match: f64,
    pub ambiguity_margin: f64,
}

/// Branches of one strip over absolute bins `lo ..= hi`; bin `j` sits at
/// phase `j / bins` and may lie outside `[0, 1)`.
#[derive(Clone, Debug, Serialize)]
pub struct StripGraphs {
    pub strip: usize,
    pub lo: i64,
    pub hi: i64,
    /// `branches[label][j - lo]`.
    pub branches: Vec<Vec<Vec<f64>>>,
    /// Largest adjacent-bin jump per branch.
    pub continuity: Vec<f64>,
}

impl StripGraphs {
    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn at(&self, label: usize, j: i64) -> &[f64] {
        &self.branches[label][(j - self.lo) as usize]
    }
}

fn strip_edge(m: i64, bins: usize, strips: usize) -> i64 {
    (m * bins as i64).div_euclid(strips as i64)
}

fn wrap_bin(j: i64, bins: usize) -> usize {
    j.rem_euclid(bins as i64) as usize
}

/// Defaults: the jump threshold is ten times the larger of the typical
/// adjacent-bin step, the cluster spread and `tol_K`.
pub fn resolve_thresholds(cloud: &FibreCloud, cfg: &ExtractionConfig) -> ResolvedThresholds {
    let clusters = bin_clusters(cloud, cfg.gap_threshold);
    let jump = cfg.jump_threshold.unwrap_or_else(|| {
        let b = clusters.len();
        let mut steps: Vec<f64> = (0..b)
            .flat_map(|i| {
                let next = &clusters[(i + 1) % b];
                clusters[i]
                    .iter()
                    .map(|c| {
                        next.iter()
                            .map(|n| dist(&c.centroid, &n.centroid))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .filter(|v| v.is_finite())
                    .collect::<Vec<_>>()
            })
            .collect();
        steps.sort_by(f64::total_cmp);
        let median = steps.get(steps.len() / 2).copied().unwrap_or(0.0);
        let spread = clusters.iter().flatten().map(|c| c.spread).fold(0.0, f64::max);
        10.0 * median.max(spread).max(cloud.tol_k)
    });
    ResolvedThresholds {
        gap_threshold: cfg.gap_threshold,
        jump_threshold: jump,
        tol_match: cfg.tol_match.unwrap_or(cfg.gap_threshold),
        ambiguity_margin: cfg.ambiguity_margin.unwrap_or(cloud.tol_k.max(cloud.noise_floor())),
    }
}

struct History {
    /// Last two bins where the branch had a cluster of its own.
    resolved: Vec<(i64, Vec<f64>)>,
}

impl History {
    fn predict(&self, j: i64) -> Vec<f64> {
        match self.resolved.as_slice() {
            [.., (j0, p0), (j1, p1)] => {
                let t = (j - j1) as f64 / (j1 - j0) as f64;
                p1.iter().zip(p0).map(|(a, b)| a + t * (a - b)).collect()
            }
            [(_, p)] => p.clone(),
            [] => unreachable!("history starts resolved"),
        }
    }

    fn push(&mut self, j: i64, p: Vec<f64>) {
        self.resolved.push((j, p));
        if self.resolved.len() > 2 {
            self.resolved.remove(0);
        }
    }
}

fn nearest_member<'a>(cluster: &Cluster, pts: &'a [Vec<f64>], target: &[f64]) -> &'a Vec<f64> {
    cluster
        .members
        .iter()
        .map(|&m| &pts[m])
        .min_by(|a, b| dist(a, target).total_cmp(&dist(b, target)))
        .expect("clusters are non-empty")
}

/// Walks from `start` in direction `step` (±1) until `end`, filling `out`.
#[allow(clippy::too_many_arguments)]
fn walk(
    cloud: &FibreCloud,
    clusters: &[Vec<Cluster>],
    strip: usize,
    lo: i64,
    start: i64,
    end: i64,
    step: i64,
    th: &ResolvedThresholds,
    out: &mut [Vec<Vec<f64>>],
) -> Result<()> {
    let d = out.len();
    let bins = cloud.bin_count();
    let mut hist: Vec<History> = (0..d)
        .map(|i| History {
            resolved: vec![(start, out[i][(start - lo) as usize].clone())],
        })
        .collect();
    let mut j = start;
    while j != end {
        let prev = j;
        j += step;
        let b = wrap_bin(j, bins);
        let cl = &clusters[b];
        let pts = &cloud.bins[b];
        let k = cl.len();
        if k > d {
            return Err(Error::BranchCountMismatch {
                strip,
                expected: d,
                got: k,
            });
        }
        if k == 0 {
            return Err(Error::InvalidArgument(format!("empty fibre section at bin {b}")));
        }
        let preds: Vec<Vec<f64>> = hist.iter().map(|h| h.predict(j)).collect();
        let cost_to: Vec<Vec<f64>> = preds
            .iter()
            .map(|p| cl.iter().map(|c| dist(nearest_member(c, pts, p), p)).collect())
            .collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut second: Option<(f64, Vec<usize>)> = None;
        for map in std::iter::repeat_n(0..k, d).multi_cartesian_product() {
            let mut used = vec![false; k];
            for &c in &map {
                used[c] = true;
            }
            if !used.iter().all(|u| *u) {
                continue;
            }
            let cost: f64 = map.iter().enumerate().map(|(i, &c)| cost_to[i][c]).sum();
            if best.as_ref().is_none_or(|b| cost < b.0) {
                second = best.take();
                best = Some((cost, map));
            } else if second.as_ref().is_none_or(|s| cost < s.0) {
                second = Some((cost, map));
            }
        }
        let (best_cost, map) = best.expect("a surjective map exists when k <= d");
        let mut shared = vec![0usize; k];
        for &c in &map {
            shared[c] += 1;
        }
        let chosen: Vec<Vec<f64>> = map
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if shared[c] == 1 {
                    cl[c].centroid.clone()
                } else {
                    nearest_member(&cl[c], pts, &preds[i]).clone()
                }
            })
            .collect();
        if let Some((second_cost, alt)) = &second {
            let alt_jump = alt
                .iter()
                .enumerate()
                .map(|(i, &c)| dist(&out[i][(prev - lo) as usize], &cl[c].centroid))
                .fold(0.0, f64::max);
            if second_cost - best_cost <= th.ambiguity_margin && alt_jump <= th.jump_threshold {
                return Err(Error::AmbiguousContinuation { strip, bin: b });
            }
        }
        for i in 0..d {
            let jump = dist(&out[i][(prev - lo) as usize], &chosen[i]);
            if jump > th.jump_threshold {
                return Err(Error::ContinuityViolation {
                    strip,
                    bin: b,
                    jump,
                    threshold: th.jump_threshold,
                });
            }
            if shared[map[i]] == 1 {
                hist[i].push(j, chosen[i].clone());
            }
            out[i][(j - lo) as usize] = chosen[i].clone();
        }
    }
    Ok(())
}

fn extract_one(
    cloud: &FibreCloud,
    clusters: &[Vec<Cluster>],
    m: usize,
    strips: usize,
    th: &ResolvedThresholds,
) -> Result<StripGraphs> {
    let bins = cloud.bin_count();
    let lo = strip_edge(m as i64 - 1, bins, strips);
    let hi = strip_edge(m as i64 + 1, bins, strips);
    let count = |j: i64| clusters[wrap_bin(j, bins)].len();
    let d = (lo..=hi).map(count).max().unwrap_or(0);
    if d == 0 {
        return Err(Error::InvalidArgument(format!("strip {m} has no points")));
    }
    if d > MAX_BRANCHES {
        return Err(Error::InvalidArgument(format!(
            "strip {m} has {d} branches; at most {MAX_BRANCHES} are supported"
        )));
    }
    // Start where the branches are best separated.
    let separation = |j: i64| {
        let cl = &clusters[wrap_bin(j, bins)];
        let mut best = f64::INFINITY;
        for (a, b) in cl.iter().tuple_combinations() {
            best = best.min(dist(&a.centroid, &b.centroid));
        }
        best
    };
    let start = (lo..=hi)
        .filter(|&j| count(j) == d)
        .max_by(|&a, &b| separation(a).total_cmp(&separation(b)))
        .expect("some bin attains the maximum");
    let width = (hi - lo + 1) as usize;
    let mut branches = vec![vec![Vec::new(); width]; d];
    for (i, c) in clusters[wrap_bin(start, bins)].iter().enumerate() {
        branches[i][(start - lo) as usize] = c.centroid.clone();
    }
    walk(cloud, clusters, m, lo, start, hi, 1, th, &mut branches)?;
    walk(cloud, clusters, m, lo, start, lo, -1, th, &mut branches)?;
    let continuity = branches
        .iter()
        .map(|br| br.windows(2).map(|w| dist(&w[0], &w[1])).fold(0.0, f64::max))
        .collect();
    Ok(StripGraphs {
        strip: m,
        lo,
        hi,
        branches,
        continuity,
    })
}

/// Chains fibre clusters into labelled branches on each of `M` strips
/// `[s_{m-1}, s_{m+1}]`, `s_m = m / M`, and checks that every strip has the
/// same branch count.
pub fn extract_strip_graphs(
    cloud: &FibreCloud,
    cfg: &ExtractionConfig,
) -> Result<(Vec<StripGraphs>, ResolvedThresholds)> {
    if !cloud.accepted {
        return Err(Error::InvalidArgument(
            "curve extraction needs an accepted cloud".into(),
        ));
    }
    if cfg.strips < 3 {
        return Err(Error::InvalidArgument("need at least 3 strips".into()));
    }
    if cloud.bin_count() < 2 * cfg.strips {
        return Err(Error::InvalidArgument(format!(
            "{} bins cannot give {} strips of at least two bins",
            cloud.bin_count(),
            cfg.strips
        )));
    }
    if !(cfg.gap_threshold > cloud.noise_floor()) {
        return Err(Error::IllPosedClustering {
            threshold: cfg.gap_threshold,
            noise_floor: cloud.noise_floor(),
        });
    }
    let th = resolve_thresholds(cloud, cfg);
    let clusters = bin_clusters(cloud, cfg.gap_threshold);
    let strips: Result<Vec<StripGraphs>> = (0..cfg.strips)
        .into_par_iter()
        .map(|m| extract_one(cloud, &clusters, m, cfg.strips, &th))
        .collect();
    let strips = strips?;
    let d = strips[0].branch_count();
    for s in &strips {
        if s.branch_count() != d {
            return Err(Error::BranchCountMismatch {
                strip: s.strip,
                expected: d,
                got: s.branch_count(),
            });
        }
    }
    Ok((strips, th))
}

/// Sup distance between branch `i` of `a` and branch `j` of `b` over the
/// absolute bins `from ..= to` of `a`; `b` is read `shift` bins later.
fn overlap_cost(a: &StripGraphs, i: usize, b: &StripGraphs, j: usize, from: i64, to: i64, shift: i64) -> f64 {
    (from..=to)
        .map(|k| dist(a.at(i, k), b.at(j, k + shift)))
        .fold(0.0, f64::max)
}

/// The unique bijection with sup cost within `tol`, as `images[i]`.
fn unique_match(cost: &[Vec<f64>], tol: f64, from: usize, to: usize) -> Result<Vec<usize>> {
    let d = cost.len();
    let mut ranked: Vec<(f64, Vec<usize>)> = (0..d)
        .permutations(d)
        .map(|p| {
            let c = p.iter().enumerate().map(|(i, &j)| cost[i][j]).fold(0.0, f64::max);
            (c, p)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let best = ranked[0].0;
    let unique = ranked.get(1).is_none_or(|r| r.0 > tol);
    if best > tol || !unique {
        return Err(Error::StitchFailure { from, to, best });
    }
    Ok(ranked.swap_remove(0).1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Composes overlap matches around the circle. Forward gives `π` (label at
/// `s` to label at `s + 1`); backward matches each strip against its
/// predecessor and gives `π⁻¹`. Also returns the forward per-strip matches.
pub fn stitch(
    strips: &[StripGraphs],
    bins: usize,
    tol_match: f64,
    dir: Direction,
) -> Result<(Permutation, Vec<Vec<usize>>)> {
    let m_count = strips.len();
    let d = strips[0].branch_count();
    let mut matches = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let next = (m + 1) % m_count;
        let shift = if next == 0 { -(bins as i64) } else { 0 };
        let from = strip_edge(m as i64, bins, m_count);
        let to = strip_edge(m as i64 + 1, bins, m_count);
        let (a, b) = (&strips[m], &strips[next]);
        let images = match dir {
            Direction::Forward => {
                let cost: Vec<Vec<f64>> = (0..d)
                    .map(|i| (0..d).map(|j| overlap_cost(a, i, b, j, from, to, shift)).collect())
                    .collect();
                unique_match(&cost, tol_match, m, next)?
            }
            Direction::Backward => {
                let cost: Vec<Vec<f64>> = (0..d)
                    .map(|j| {
                        (0..d)
                            .map(|i| overlap_cost(b, j, a, i, from + shift, to + shift, -shift))
                            .collect()
                    })
                    .collect();
                unique_match(&cost, tol_match, next, m)?
            }
        };
        matches.push(images);
    }
    let mut perm = Permutation::identity(d);
    match dir {
        Direction::Forward => {
            for images in &matches {
                perm = Permutation::from_images(images.clone())?.after(&perm);
            }
        }
        Direction::Backward => {
            for images in matches.iter().rev() {
                perm = Permutation::from_images(images.clone())?.after(&perm);
            }
        }
    }
    Ok((perm, matches))
}

/// One invariant curve sampled on its lift `[0, τ)`.
#[derive(Clone, Debug, Serialize)]
pub struct PeriodicCurve {
    pub cycle: Vec<usize>,
    pub period: u32,
    pub s_lift: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Largest adjacent-sample jump along the lift.
    pub continuity: f64,
    /// Jump from the last sample back to the first after `τ` turns.
    pub closure_jump: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicCurveSet {
    pub path: NoisePath,
    pub bins: usize,
    pub dim: usize,
    pub labels: usize,
    pub permutation: Permutation,
    pub curves: Vec<PeriodicCurve>,
    pub thresholds: ResolvedThresholds,
    pub tol_k: f64,
}

impl PeriodicCurveSet {
    pub fn n(&self) -> usize {
        self.curves.len()
    }

    pub fn periods(&self) -> Vec<u32> {
        self.curves.iter().map(|c| c.period).collect()
    }

    /// Point of curve `c` at lap `r` over bin `b`.
    pub fn point(&self, c: usize, lap: usize, b: usize) -> &[f64] {
        &self.curves[c].points[lap * self.bins + b]
    }

    /// Every curve point over bin `b`, all laps.
    pub fn section(&self, b: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (c, curve) in self.curves.iter().enumerate() {
            for lap in 0..curve.period as usize {
                out.push(self.point(c, lap, b).to_vec());
            }
        }
        out
    }

    /// Per-bin Hausdorff distance between the curve graphs and the cloud, maximized.
    pub fn reconstruction_residual(&self, cloud: &FibreCloud) -> f64 {
        (0..self.bins)
            .map(|b| hausdorff(&self.section(b), &cloud.bins[b]))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        let mut head = vec!["curve_id".to_string(), "s_lift".to_string()];
        head.extend((1..=self.dim).map(|k| format!("x{k}")));
        csv.write_record(&head).map_err(|e| Error::Io(e.to_string()))?;
        for (c, curve) in self.curves.iter().enumerate() {
            for (s, p) in curve.s_lift.iter().zip(&curve.points) {
                let mut row = vec![c.to_string(), format!("{s:?}")];
                row.extend(p.iter().map(|v| format!("{v:?}")));
                csv.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
            }
        }
        csv.flush()?;
        Ok(())
    }
}

/// Lifts strip branches to the universal cover and groups labels into
/// curves by the cycles of `π`.
pub fn stitch_and_lift(
    cloud: &FibreCloud,
    strips: &[StripGraphs],
    th: &ResolvedThresholds,
) -> Result<PeriodicCurveSet> {
    let bins = cloud.bin_count();
    let m_count = strips.len();
    let d = strips[0].branch_count();
    let (perm, matches) = stitch(strips, bins, th.tol_match, Direction::Forward)?;
    let mut curves = Vec::new();
    for cp in decompose_periods(&perm) {
        let mut s_lift = Vec::with_capacity(cp.period as usize * bins);
        let mut points = Vec::with_capacity(cp.period as usize * bins);
        let mut label = cp.cycle[0];
        for lap in 0..cp.period as usize {
            for (m, strip) in strips.iter().enumerate() {
                for j in strip_edge(m as i64, bins, m_count)..strip_edge(m as i64 + 1, bins, m_count) {
                    s_lift.push(lap as f64 + j as f64 / bins as f64);
                    points.push(strip.at(label, j).to_vec());
                }
                label = matches[m][label];
            }
        }
        let continuity = points.windows(2).map(|w| dist(&w[0], &w[1])).fold(0.0, f64::max);
        let closure_jump = dist(points.last().expect("bins > 0"), &points[0]);
        curves.push(PeriodicCurve {
            cycle: cp.cycle,
            period: cp.period,
            s_lift,
            points,
            continuity,
            closure_jump,
        });
    }
    Ok(PeriodicCurveSet {
        path: cloud.path.clone(),
        bins,
        dim: cloud.dim,
        labels: d,
        permutation: perm,
        curves,
        thresholds: *th,
        tol_k: cloud.tol_k,
    })
}

/// Strip extraction followed by stitching.
pub fn extract_curves(cloud: &FibreCloud, cfg: &ExtractionConfig) -> Result<PeriodicCurveSet> {
    let (strips, th) = extract_strip_graphs(cloud, cfg)?;
    stitch_and_lift(cloud, &strips, &th)
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicityReport {
    pub n: usize,
    pub periods: Vec<u32>,
    pub residuals: Vec<f64>,
    /// `assignment[i]`: curve at `ω` matched to curve `i` at `θ_{-k}ω`.
    pub assignment: Vec<usize>,
    pub s_return_error: f64,
    pub k: u64,
    pub tol_period: f64,
    pub pass: bool,
}

/// Pushes each curve at `θ_{-k}ω` forward `k` periods and compares with the
/// matched curve at `ω`, bin by bin and lap by lap.
pub fn verify_random_periodicity(
    sys: &dyn CocycleSystem,
    now: &PeriodicCurveSet,
    prev: &PeriodicCurveSet,
    k: u64,
    tol_period: Option<f64>,
) -> Result<PeriodicityReport> {
    if now.n() != prev.n() {
        return Err(Error::CurveCountMismatch {
            now: now.n(),
            previous: prev.n(),
        });
    }
    if now.bins != prev.bins {
        return Err(Error::Incompatible(format!(
            "bin grids differ: {} vs {}",
            now.bins, prev.bins
        )));
    }
    let hat = discrete_reduction(sys);
    if advance_path(&hat, &prev.path, k as i64) != now.path {
        return Err(Error::Incompatible(format!(
            "earlier curves are not {k} periods before the current ones"
        )));
    }
    let tol_period = tol_period.unwrap_or(5.0 * now.tol_k);
    let n = now.n();
    let bins = now.bins;
    let moved: Result<Vec<Vec<CylinderState>>> = prev
        .curves
        .par_iter()
        .map(|c| {
            let states: Vec<CylinderState> = c
                .s_lift
                .iter()
                .zip(&c.points)
                .map(|(s, x)| CylinderState::new(*s, x.clone()))
                .collect();
            cocycle::evolve_ensemble_steps(&hat, k, &prev.path, &states)
        })
        .collect();
    let moved = moved?;
    let mut s_return_error: f64 = 0.0;
    for (c, out) in prev.curves.iter().zip(&moved) {
        for (s, z) in c.s_lift.iter().zip(out) {
            let e = (z.s - cocycle::wrap_phase(*s)).abs();
            s_return_error = s_return_error.max(e.min(1.0 - e));
        }
    }
    // cost[i][j]: sup over samples of curve i's image to the nearest lap of curve j.
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    moved[i]
                        .iter()
                        .enumerate()
                        .map(|(idx, z)| {
                            let b = idx % bins;
                            (0..now.curves[j].period as usize)
                                .map(|lap| dist(&z.x, now.point(j, lap, b)))
                                .fold(f64::INFINITY, f64::min)
                        })
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect();
    let assignment = (0..n)
        .permutations(n)
        .min_by(|a, b| {
            let ca: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            let cb: f64 = b.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            ca.total_cmp(&cb)
        })
        .unwrap_or_default();
    let residuals: Vec<f64> = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).collect();
    let pass = s_return_error <= 1e-12 && residuals.iter().all(|r| *r <= tol_period);
    Ok(PeriodicityReport {
        n,
        periods: now.periods(),
        residuals,
        assignment,
        s_return_error,
        k,
        tol_period,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ShiftInvarianceReport {
    pub equal: bool,
    pub periods_now: Vec<u32>,
    pub periods_shifted: Vec<u32>,
    pub diff: Option<String>,
}

/// Compares the multisets of winding periods of two extractions.
pub fn verify_period_shift_invariance(now: &PeriodicCurveSet, shifted: &PeriodicCurveSet) -> ShiftInvarianceReport {
    let mut a = now.periods();
    let mut b = shifted.periods();
    a.sort_unstable();
    b.sort_unstable();
    let equal = a == b;
    let diff = (!equal).then(|| format!("periods {a:?} vs {b:?}"));
    ShiftInvarianceReport {
        equal,
        periods_now: a,
        periods_shifted: b,
        diff,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p0() -> NoisePath {
        NoisePath::new(0, 1.0, 0)
    }

    fn sin_pair(bins: usize) -> FibreCloud {
        FibreCloud::from_fn(p0(), bins, 1e-3, |s| {
            let v = (PI * s).sin();
            vec![vec![v], vec![-v]]
        })
    }

    #[test]
    fn crossing_pair_is_one_curve_of_period_two() {
        let cloud = sin_pair(256);
        let set = extract_curves(&cloud, &ExtractionConfig::new(8, 0.05)).unwrap();
        assert_eq!(set.labels, 2);
        assert_eq!(set.permutation.to_string(), "(1 2)");
        assert_eq!(set.periods(), vec![2]);
        assert!(set.reconstruction_residual(&cloud) < 1e-12);
        // The lift follows sin(π s) over two turns, up to sign.
        let c = &set.curves[0];
        let sign = c.points[64][0].signum();
        for (s, p) in c.s_lift.iter().zip(&c.points) {
            assert!((p[0] - sign * (PI * s).sin()).abs() < 1e-12, "s = {s}");
        }
    }

    #[test]
    fn parallel_lines_keep_their_labels() {
        let cloud = FibreCloud::from_fn(p0(), 64, 1e-3, |_| vec![vec![1.0], vec![-1.0]]);
        let (strips, th) = extract_strip_graphs(&cloud, &ExtractionConfig::new(4, 0.1)).unwrap();
        for s in &strips {
            assert_eq!(s.branch_count(), 2);
            assert!(s.continuity.iter().all(|c| *c == 0.0));
        }
        let set = stitch_and_lift(&cloud, &strips, &th).unwrap();
        assert!(set.permutation.is_identity());
        assert_eq!(set.periods(), vec![1, 1]);
    }

    #[test]
    fn backward_stitch_inverts_forward() {
        let cloud = sin_pair(128);
        let (strips, th) = extract_strip_graphs(&cloud, &ExtractionConfig::new(4, 0.08)).unwrap();
        let (f, _) = stitch(&strips, 128, th.tol_match, Direction::Forward).unwrap();
        let (b, _) = stitch(&strips, 128, th.tol_match, Direction::Backward).unwrap();
        assert!(b.after(&f).is_identity());
    }

    #[test]
    fn three_sheeted_curve() {
        // cos(2π(s + j)/3), j = 0, 1, 2: a single curve winding three times.
        let cloud = FibreCloud::from_fn(p0(), 192, 1e-3, |s| {
            (0..3)
                .map(|j| {
                    let a = 2.0 * PI * (s + j as f64) / 3.0;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        });
        let set = extract_curves(&cloud, &ExtractionConfig::new(6, 0.1)).unwrap();
        assert_eq!(set.periods(), vec![3]);
        assert_eq!(set.labels, 3);
        assert!(set.curves[0].closure_jump < 0.05);
    }

    #[test]
    fn unequal_branch_counts_fail() {
        let cloud = FibreCloud::from_fn(p0(), 64, 1e-3, |s| {
            if s < 0.5 {
                vec![vec![1.0], vec![-1.0]]
            } else {
                vec![vec![1.0]]
            }
        });
        let err = extract_curves(&cloud, &ExtractionConfig::new(8, 0.1)).unwrap_err();
        assert!(
            matches!(
                err,
                Error::BranchCountMismatch { .. } | Error::ContinuityViolation { .. }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn jumps_are_rejected() {
        let cloud = FibreCloud::from_fn(p0(), 64, 1e-3, |s| vec![vec![if s < 0.5 { 0.0 } else { 1.0 }]]);
        let mut cfg = ExtractionConfig::new(4, 0.1);
        cfg.jump_threshold = Some(0.1);
        assert!(matches!(
            extract_curves(&cloud, &cfg),
            Err(Error::ContinuityViolation { .. })
        ));
    }

    #[test]
    fn symmetric_crossing_without_slope_is_ambiguous() {
        // Two branches meet at one bin then leave on a symmetric fan: the
        // only information is the slope, which is zero on both sides.
        let cloud = FibreCloud::from_fn(p0(), 64, 1e-3, |s| {
            let u = (s - 0.5).abs();
            let v = if u < 0.1 { 0.0 } else { 1.0 };
            if s < 0.5 {
                vec![vec![v], vec![-v]]
            } else {
                vec![vec![0.5 * v], vec![-0.5 * v]]
            }
        });
        let mut cfg = ExtractionConfig::new(4, 0.05);
        cfg.jump_threshold = Some(2.0);
        let err = extract_curves(&cloud, &cfg).unwrap_err();
        assert!(matches!(err, Error::AmbiguousContinuation { .. }), "{err:?}");
    }

    #[test]
    fn shift_invariance_report() {
        let cloud = sin_pair(128);
        let a = extract_curves(&cloud, &ExtractionConfig::new(4, 0.08)).unwrap();
        let mut b = a.clone();
        assert!(verify_period_shift_invariance(&a, &b).equal);
        b.curves[0].period = 1;
        let r = verify_period_shift_invariance(&a, &b);
        assert!(!r.equal && r.diff.is_some());
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let one = FibreCloud::from_fn(p0(), 64, 1e-3, |_| vec![vec![1.0]]);
        let two = FibreCloud::from_fn(p0(), 64, 1e-3, |_| vec![vec![1.0], vec![-1.0]]);
        let cfg = ExtractionConfig::new(4, 0.1);
        let a = extract_curves(&one, &cfg).unwrap();
        let b = extract_curves(&two, &cfg).unwrap();
        let sys = crate::cocycle::LinearMapSystem::scalar(1.0);
        assert!(matches!(
            verify_random_periodicity(&sys, &a, &b, 1, None),
            Err(Error::CurveCountMismatch { now: 1, previous: 2 })
        ));
    }
}
