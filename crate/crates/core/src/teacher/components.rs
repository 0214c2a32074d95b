//! Post-processing of a clustering: connected-component merging, pruning
//! of the extreme clusters and density-based target selection.

use crate::error::{Error, Result};
use crate::teacher::dbscan::{ClusterLabeling, Grid, NOISE};
use crate::types::{dist_sq, Vec3};

/// Floor on the bounding-box volume used in the density measure, in m³.
pub const MIN_CLUSTER_VOLUME: f64 = 1e-6;

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Keeps the smaller index as root.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Merges clusters whose closest points are within `distance_threshold`
/// (transitively), then drops merged components smaller than
/// `min_component_size`. Surviving components are numbered by their lowest
/// original cluster id.
pub fn merge_components(
    points: &[Vec3],
    labeling: &ClusterLabeling,
    distance_threshold: f64,
    min_component_size: usize,
) -> ClusterLabeling {
    assert_eq!(points.len(), labeling.len(), "labeling must match points");
    let k = labeling.n_clusters();
    if k == 0 {
        return labeling.clone();
    }
    let mut uf = UnionFind::new(k);

    // Only clustered points take part; noise never bridges clusters.
    let clustered: Vec<usize> = (0..points.len())
        .filter(|&i| labeling.labels[i] >= 0)
        .collect();
    let sub: Vec<Vec3> = clustered.iter().map(|&i| points[i]).collect();
    let grid = Grid::new(&sub, distance_threshold.max(1e-3));
    let r2 = distance_threshold * distance_threshold;

    // Per cell, group member points by cluster so that same-cluster pairs are
    // never compared.
    let mut by_cell: Vec<([i64; 3], Vec<(usize, Vec<usize>)>)> = grid
        .cells()
        .map(|(key, members)| {
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            for &s in members {
                let c = labeling.labels[clustered[s]] as usize;
                match groups.iter_mut().find(|(id, _)| *id == c) {
                    Some((_, g)) => g.push(s),
                    None => groups.push((c, vec![s])),
                }
            }
            (*key, groups)
        })
        .collect();
    by_cell.sort_by_key(|(key, _)| *key);
    let lookup: std::collections::HashMap<[i64; 3], usize> = by_cell
        .iter()
        .enumerate()
        .map(|(i, (key, _))| (*key, i))
        .collect();

    for (key, groups) in &by_cell {
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let nkey = [key[0] + dx, key[1] + dy, key[2] + dz];
                    if nkey < *key {
                        continue;
                    }
                    let Some(&ni) = lookup.get(&nkey) else {
                        continue;
                    };
                    let other = &by_cell[ni].1;
                    for (ca, pa) in groups {
                        for (cb, pb) in other {
                            if ca == cb || uf.find(*ca) == uf.find(*cb) {
                                continue;
                            }
                            let close = pa.iter().any(|&a| {
                                pb.iter().any(|&b| dist_sq(&sub[a], &sub[b]) <= r2)
                            });
                            if close {
                                uf.union(*ca, *cb);
                            }
                        }
                    }
                }
            }
        }
    }

    let sizes = labeling.cluster_sizes();
    let mut comp_size = vec![0usize; k];
    for c in 0..k {
        let r = uf.find(c);
        comp_size[r] += sizes[c];
    }
    let labels = labeling
        .labels
        .iter()
        .map(|&l| {
            if l < 0 {
                return NOISE;
            }
            let r = uf.find(l as usize);
            if comp_size[r] < min_component_size {
                NOISE
            } else {
                r as i32
            }
        })
        .collect();
    ClusterLabeling::new(labels).compacted()
}

/// Drops the most and the least populated clusters (lowest id wins ties).
/// A lone cluster is kept; of two, only the larger is dropped.
pub fn prune_extreme_clusters(labeling: &ClusterLabeling) -> ClusterLabeling {
    let sizes = labeling.cluster_sizes();
    let live: Vec<usize> = (0..sizes.len()).filter(|&c| sizes[c] > 0).collect();
    if live.len() <= 1 {
        return labeling.compacted();
    }
    let largest = live
        .iter()
        .copied()
        .fold(live[0], |best, c| if sizes[c] > sizes[best] { c } else { best });
    let rest: Vec<usize> = live.iter().copied().filter(|&c| c != largest).collect();
    let smallest = rest
        .iter()
        .copied()
        .fold(rest[0], |best, c| if sizes[c] < sizes[best] { c } else { best });
    let drop_smallest = rest.len() > 1;
    let labels = labeling
        .labels
        .iter()
        .map(|&l| {
            if l == largest as i32 || (drop_smallest && l == smallest as i32) {
                NOISE
            } else {
                l
            }
        })
        .collect();
    ClusterLabeling::new(labels).compacted()
}

/// Points per cubic meter of axis-aligned bounding box, with the volume
/// floored at [`MIN_CLUSTER_VOLUME`].
pub fn cluster_density(points: &[Vec3], members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in members {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let volume = (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
    members.len() as f64 / volume.max(MIN_CLUSTER_VOLUME)
}

/// Id of the densest cluster (lowest id wins ties).
pub fn densest_cluster(points: &[Vec3], labeling: &ClusterLabeling) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for c in 0..labeling.n_clusters() {
        let members = labeling.members(c);
        if members.is_empty() {
            continue;
        }
        let d = cluster_density(points, &members);
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((c, d));
        }
    }
    best.map(|(c, _)| c)
        .ok_or(Error::NoCluster("density selection"))
}

/// Member points of the densest cluster.
pub fn select_uav_cluster(points: &[Vec3], labeling: &ClusterLabeling) -> Result<Vec<Vec3>> {
    let c = densest_cluster(points, labeling)?;
    Ok(labeling.members(c).into_iter().map(|i| points[i]).collect())
}
