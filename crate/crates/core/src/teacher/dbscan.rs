//! Density-based clustering over 3D points.

use std::collections::{HashMap, VecDeque};

use crate::types::{dist_sq, Vec3};

/// Label value for points that belong to no cluster.
pub const NOISE: i32 = -1;

/// Cluster assignment parallel to a point sequence: `-1` is noise,
/// `0..K` are cluster ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub labels: Vec<i32>,
}

impl ClusterLabeling {
    pub fn new(labels: Vec<i32>) -> Self {
        Self { labels }
    }

    pub fn all_noise(n: usize) -> Self {
        Self {
            labels: vec![NOISE; n],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of clusters, i.e. one past the largest id.
    pub fn n_clusters(&self) -> usize {
        self.labels
            .iter()
            .copied()
            .max()
            .map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Indices of the points carrying label `id`.
    pub fn members(&self, id: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == id as i32)
            .map(|(i, _)| i)
            .collect()
    }

    /// Renumbers surviving ids to `0..K'`, preserving their relative order.
    pub fn compacted(&self) -> Self {
        let mut map = vec![NOISE; self.n_clusters()];
        let mut present = vec![false; self.n_clusters()];
        for &l in &self.labels {
            if l >= 0 {
                present[l as usize] = true;
            }
        }
        let mut next = 0;
        for (id, p) in present.iter().enumerate() {
            if *p {
                map[id] = next;
                next += 1;
            }
        }
        Self {
            labels: self
                .labels
                .iter()
                .map(|&l| if l >= 0 { map[l as usize] } else { NOISE })
                .collect(),
        }
    }

    /// Clusters as sorted member lists, sorted by first member. Two labelings
    /// describe the same partition iff their `partition()`s are equal.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); self.n_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                groups[l as usize].push(i);
            }
        }
        groups.retain(|g| !g.is_empty());
        groups.sort();
        groups
    }
}

/// Uniform voxel hash for fixed-radius neighbor queries.
pub(crate) struct Grid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl Grid {
    pub(crate) fn new(points: &[Vec3], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key_for(p, cell)).or_default().push(i);
        }
        Self { cell, cells }
    }

    fn key_for(p: &Vec3, cell: f64) -> [i64; 3] {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    }

    pub(crate) fn key(&self, p: &Vec3) -> [i64; 3] {
        Self::key_for(p, self.cell)
    }

    pub(crate) fn cells(&self) -> impl Iterator<Item = (&[i64; 3], &Vec<usize>)> {
        self.cells.iter()
    }

    /// All points within `radius` of `points[i]` (itself included), in
    /// ascending index order. `radius` must not exceed the cell size.
    pub(crate) fn within(&self, points: &[Vec3], i: usize, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let k = self.key(&points[i]);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        out.extend(
                            bucket
                                .iter()
                                .copied()
                                .filter(|&j| dist_sq(&points[i], &points[j]) <= r2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Standard DBSCAN with Euclidean distance.
///
/// A point is core when at least `min_samples` points (itself included) lie
/// within `eps`. Points are visited in index order, so cluster ids follow the
/// lowest-index core point of each cluster, and a border point reachable from
/// several clusters joins the one with the lowest id.
pub fn dbscan(points: &[Vec3], eps: f64, min_samples: usize) -> ClusterLabeling {
    const UNVISITED: i32 = -2;
    let n = points.len();
    if n == 0 {
        return ClusterLabeling::new(Vec::new());
    }
    let grid = Grid::new(points, eps);
    let mut labels = vec![UNVISITED; n];
    let mut next_id = 0;
    let mut queue = VecDeque::new();

    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        let nb = grid.within(points, i, eps);
        if nb.len() < min_samples {
            labels[i] = NOISE;
            continue;
        }
        let id = next_id;
        next_id += 1;
        labels[i] = id;
        queue.extend(nb);
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = id;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = id;
            let nbj = grid.within(points, j, eps);
            if nbj.len() >= min_samples {
                queue.extend(nbj);
            }
        }
    }
    ClusterLabeling::new(labels)
}
