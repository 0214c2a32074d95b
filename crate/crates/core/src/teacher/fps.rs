//! Farthest point sampling.

use crate::types::{centroid, dist_sq, Vec3};

/// Indices chosen by greedy farthest point sampling, in selection order.
///
/// Seeds with the point nearest the centroid, then repeatedly takes the point
/// whose distance to the selected set is largest. Ties go to the lowest index.
/// With `points.len() <= k` every index is returned in input order.
pub fn farthest_point_indices(points: &[Vec3], k: usize) -> Vec<usize> {
    let n = points.len();
    if n <= k {
        return (0..n).collect();
    }
    if k == 0 {
        return Vec::new();
    }
    let c = centroid(points).expect("non-empty");
    let mut seed = 0;
    let mut seed_d = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = dist_sq(p, &c);
        if d < seed_d {
            seed = i;
            seed_d = d;
        }
    }

    let mut selected = Vec::with_capacity(k);
    let mut min_d: Vec<f64> = points.iter().map(|p| dist_sq(p, &points[seed])).collect();
    selected.push(seed);
    while selected.len() < k {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d.iter().enumerate() {
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        selected.push(best);
        let b = points[best];
        for (i, d) in min_d.iter_mut().enumerate() {
            *d = d.min(dist_sq(&points[i], &b));
        }
    }
    selected
}

/// Downsamples to at most `k` points, preserving spatial spread.
pub fn farthest_point_sampling(points: &[Vec3], k: usize) -> Vec<Vec3> {
    farthest_point_indices(points, k)
        .into_iter()
        .map(|i| points[i])
        .collect()
}
