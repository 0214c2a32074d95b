#![allow(dead_code)]

use audiotrack::teacher::ClusterLabeling;
use audiotrack::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn d2(a: &Vec3, b: &Vec3) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// O(n²) DBSCAN: core points are joined into components through the
/// pairwise eps-graph, components are numbered by their lowest core index,
/// and a border point takes the lowest-numbered component of any core
/// point within eps.
pub fn brute_dbscan(points: &[Vec3], eps: f64, min_samples: usize) -> ClusterLabeling {
    let n = points.len();
    let e2 = eps * eps;
    let near = |i: usize, j: usize| d2(&points[i], &points[j]) <= e2;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_samples)
        .collect();
    let mut comp = vec![usize::MAX; n];
    let mut n_comp = 0;
    for i in 0..n {
        if !core[i] || comp[i] != usize::MAX {
            continue;
        }
        let mut stack = vec![i];
        comp[i] = n_comp;
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if core[b] && comp[b] == usize::MAX && near(a, b) {
                    comp[b] = n_comp;
                    stack.push(b);
                }
            }
        }
        n_comp += 1;
    }
    let labels = (0..n)
        .map(|i| {
            if core[i] {
                comp[i] as i32
            } else {
                (0..n)
                    .filter(|&j| core[j] && near(i, j))
                    .map(|j| comp[j] as i32)
                    .min()
                    .unwrap_or(-1)
            }
        })
        .collect();
    ClusterLabeling::new(labels)
}

/// Random clustered point cloud: a few Gaussian blobs plus uniform noise.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    let n_blobs = rng.random_range(1..5);
    let centers: Vec<Vec3> = (0..n_blobs)
        .map(|_| std::array::from_fn(|_| rng.random_range(-10.0..10.0)))
        .collect();
    (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                std::array::from_fn(|_| rng.random_range(-12.0..12.0))
            } else {
                let c = centers[rng.random_range(0..n_blobs)];
                let s = rng.random_range(0.2..1.5);
                std::array::from_fn(|k| c[k] + s * (rng.random::<f64>() - 0.5) * 2.0)
            }
        })
        .collect()
}

/// Power spectrum of one frame by direct DFT summation.
pub fn naive_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, x) in frame.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Reflect-padded, periodic-Hann windowed frames.
pub fn frames(x: &[f64], n_fft: usize, hop: usize) -> Vec<Vec<f64>> {
    let pad = n_fft / 2;
    let n = x.len() as isize;
    let at = |j: isize| -> f64 {
        let k = if j < 0 { -j } else if j >= n { 2 * (n - 1) - j } else { j };
        x[k as usize]
    };
    let n_frames = x.len() / hop + 1;
    (0..n_frames)
        .map(|f| {
            (0..n_fft)
                .map(|i| {
                    let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n_fft as f64).cos();
                    w * at((f * hop + i) as isize - pad as isize)
                })
                .collect()
        })
        .collect()
}
