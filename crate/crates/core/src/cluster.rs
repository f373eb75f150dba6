//! Single-linkage clustering with a gap cut and greedy ball coverings, for
//! small point sets in `ℝ^d`.

use petgraph::unionfind::UnionFind;

use crate::linalg::dist;

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub centroid: Vec<f64>,
    /// Largest distance from a member to the centroid.
    pub spread: f64,
}

/// Connected components of the graph joining points closer than `gap`.
/// Clusters are ordered lexicographically by centroid.
pub fn single_linkage(points: &[Vec<f64>], gap: f64) -> Vec<Cluster> {
    let n = points.len();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if dist(&points[i], &points[j]) < gap {
                uf.union(i, j);
            }
        }
    }
    let labels = uf.into_labeling();
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, root) in labels.into_iter().enumerate() {
        groups.entry(root).or_default().push(i);
    }
    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .map(|members| {
            let d = points[members[0]].len();
            let mut centroid = vec![0.0; d];
            for &m in &members {
                for (c, v) in centroid.iter_mut().zip(&points[m]) {
                    *c += v;
                }
            }
            for c in centroid.iter_mut() {
                *c /= members.len() as f64;
            }
            let spread = members.iter().map(|&m| dist(&points[m], &centroid)).fold(0.0, f64::max);
            Cluster {
                members,
                centroid,
                spread,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        a.centroid
            .iter()
            .zip(&b.centroid)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    clusters
}

/// Smallest distance between points of different clusters; `None` for fewer
/// than two clusters.
pub fn min_separation(points: &[Vec<f64>], clusters: &[Cluster]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (a, ca) in clusters.iter().enumerate() {
        for cb in &clusters[a + 1..] {
            for &i in &ca.members {
                for &j in &cb.members {
                    let d = dist(&points[i], &points[j]);
                    best = Some(best.map_or(d, |b| b.min(d)));
                }
            }
        }
    }
    best
}

/// Greedy cover by open balls of radius `eps` centred at points: take the
/// first uncovered point, cover its ball, repeat. Returns the ball count.
///
/// The centres are pairwise at least `eps` apart, so `greedy_cover(2ε)` never
/// exceeds the minimal number of `ε`-balls, while `greedy_cover(ε)` is itself
/// a cover.
pub fn greedy_cover(points: &[Vec<f64>], eps: f64) -> usize {
    let mut covered = vec![false; points.len()];
    let mut count = 0;
    for i in 0..points.len() {
        if covered[i] {
            continue;
        }
        count += 1;
        for j in i..points.len() {
            if !covered[j] && dist(&points[i], &points[j]) < eps {
                covered[j] = true;
            }
        }
    }
    count
}
