//! Unsupervised LiDAR teacher.
//!
//! Turns raw scans from a panoramic and a conical sensor into a smooth
//! pseudo-label trajectory:
//!
//! 1. panoramic scans are pooled into chunks of consecutive scans;
//! 2. each chunk is clustered, nearby clusters merged, the largest and
//!    smallest clusters pruned, and the densest survivor kept as the moving
//!    target;
//! 3. conical points are thinned by farthest point sampling and fused with
//!    the per-chunk selections, then a final clustering pass keeps only the
//!    largest cluster;
//! 4. fused points sharing a scan stamp are averaged and a cubic B-spline in
//!    time is fitted through them.

pub mod bspline;
pub mod components;
pub mod dbscan;
pub mod fps;

use rayon::prelude::*;

pub use bspline::{fit_bspline, BSplineTrajectory};
pub use components::{merge_components, prune_extreme_clusters, select_uav_cluster};
pub use dbscan::{dbscan, ClusterLabeling, NOISE};
pub use fps::farthest_point_sampling;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::types::{centroid, ScanCloud, Sensor, TimedPoint3, Trajectory, Vec3};

/// Spline degree used for pseudo-labels.
pub const SPLINE_DEGREE: usize = 3;

/// Points pooled from `chunk_size` consecutive scans, each tagged with the
/// stamp of its source scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkCloud {
    pub points: Vec<Vec3>,
    pub stamps: Vec<f64>,
}

impl ChunkCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Clustering parameters for the per-chunk and fusion passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub eps: f64,
    pub min_samples: usize,
    pub distance_threshold: f64,
    pub min_component_size: usize,
}

impl From<&PipelineConfig> for ClusterParams {
    fn from(cfg: &PipelineConfig) -> Self {
        Self {
            eps: cfg.dbscan_eps,
            min_samples: cfg.dbscan_min_samples,
            distance_threshold: cfg.cc_distance_threshold,
            min_component_size: cfg.cc_min_component_size,
        }
    }
}

/// Pools consecutive scans into chunks; a trailing partial chunk is dropped.
pub fn chunk_scans(scans: &[ScanCloud], chunk_size: usize) -> Vec<ChunkCloud> {
    assert!(chunk_size >= 1, "chunk_size must be >= 1");
    scans
        .chunks_exact(chunk_size)
        .map(|group| {
            let mut points = Vec::new();
            let mut stamps = Vec::new();
            for scan in group {
                points.extend_from_slice(&scan.points);
                stamps.extend(std::iter::repeat_n(scan.stamp, scan.points.len()));
            }
            ChunkCloud { points, stamps }
        })
        .collect()
}

/// The moving-target points of one chunk.
pub fn select_in_chunk(chunk: &ChunkCloud, params: &ClusterParams) -> Result<Vec<TimedPoint3>> {
    let labels = dbscan(&chunk.points, params.eps, params.min_samples);
    let merged = merge_components(
        &chunk.points,
        &labels,
        params.distance_threshold,
        params.min_component_size,
    );
    let pruned = prune_extreme_clusters(&merged);
    let id = components::densest_cluster(&chunk.points, &pruned)?;
    Ok(pruned
        .members(id)
        .into_iter()
        .map(|i| TimedPoint3::new(chunk.stamps[i], chunk.points[i]))
        .collect())
}

/// Union of the per-chunk target selections. Chunks where no cluster
/// survives are skipped; it is an error only when every chunk fails.
pub fn extract_dynamic(chunks: &[ChunkCloud], params: &ClusterParams) -> Result<Vec<TimedPoint3>> {
    if chunks.is_empty() {
        return Err(Error::Empty("no chunks to extract from"));
    }
    let per_chunk: Vec<Result<Vec<TimedPoint3>>> = chunks
        .par_iter()
        .map(|c| select_in_chunk(c, params))
        .collect();
    let mut out = Vec::new();
    let mut last_err = None;
    let mut any_ok = false;
    for r in per_chunk {
        match r {
            Ok(points) => {
                any_ok = true;
                out.extend(points);
            }
            Err(e) => last_err = Some(e),
        }
    }
    if any_ok {
        Ok(out)
    } else {
        Err(last_err.unwrap_or(Error::NoCluster("dynamic extraction")))
    }
}

/// Fuses panoramic target points with farthest-point-sampled conical points
/// and keeps the largest cluster of the union.
pub fn fuse_clouds(
    dynamic_panoramic: &[TimedPoint3],
    conical: &[TimedPoint3],
    fps_target: usize,
    eps: f64,
    min_samples: usize,
) -> Result<Vec<TimedPoint3>> {
    let conical_pos: Vec<Vec3> = conical.iter().map(|p| p.p).collect();
    let mut fused: Vec<TimedPoint3> = dynamic_panoramic.to_vec();
    fused.extend(
        fps::farthest_point_indices(&conical_pos, fps_target)
            .into_iter()
            .map(|i| conical[i]),
    );
    let positions: Vec<Vec3> = fused.iter().map(|p| p.p).collect();
    let labels = dbscan(&positions, eps, min_samples);
    let sizes = labels.cluster_sizes();
    let largest = (0..sizes.len())
        .fold(None, |best: Option<usize>, c| match best {
            Some(b) if sizes[b] >= sizes[c] => Some(b),
            _ => Some(c),
        })
        .ok_or(Error::NoCluster("fusion"))?;
    Ok(labels.members(largest).into_iter().map(|i| fused[i]).collect())
}

/// Collapses points sharing a stamp to their centroid, giving one strictly
/// time-ordered sample per scan stamp.
pub fn associate_timestamps(points: &[TimedPoint3]) -> Vec<TimedPoint3> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    sorted
        .chunk_by(|a, b| a.t == b.t)
        .map(|group| {
            let pos: Vec<Vec3> = group.iter().map(|p| p.p).collect();
            TimedPoint3::new(group[0].t, centroid(&pos).expect("non-empty group"))
        })
        .collect()
}

/// Result of the teacher before sampling: the smooth curve and the samples
/// it was fitted to.
#[derive(Debug, Clone)]
pub struct TeacherFit {
    pub curve: BSplineTrajectory,
    pub samples: Vec<TimedPoint3>,
    /// Stamp range of the input panoramic scans.
    pub scan_range: (f64, f64),
}

impl TeacherFit {
    pub fn sample(&self, query_times: &[f64]) -> Result<Trajectory> {
        let (lo, hi) = self.scan_range;
        for (i, &t) in query_times.iter().enumerate() {
            if !(lo..=hi).contains(&t) {
                return Err(Error::OutOfRange { t, min: lo, max: hi });
            }
            if i > 0 && t <= query_times[i - 1] {
                return Err(Error::NonMonotonic { index: i });
            }
        }
        self.curve.sample(query_times)
    }
}

/// Splits a mixed scan list by sensor, each side ordered by stamp.
pub fn split_by_sensor(scans: &[ScanCloud]) -> (Vec<ScanCloud>, Vec<ScanCloud>) {
    let (mut panoramic, mut conical): (Vec<ScanCloud>, Vec<ScanCloud>) = scans
        .iter()
        .cloned()
        .partition(|s| s.sensor == Sensor::Panoramic);
    panoramic.sort_by(|a, b| a.stamp.total_cmp(&b.stamp));
    conical.sort_by(|a, b| a.stamp.total_cmp(&b.stamp));
    (panoramic, conical)
}

/// Runs the whole teacher up to the spline fit.
pub fn fit_teacher(
    panoramic: &[ScanCloud],
    conical: &[ScanCloud],
    cfg: &PipelineConfig,
) -> Result<TeacherFit> {
    let conical: Vec<TimedPoint3> = conical
        .iter()
        .flat_map(|scan| scan.points.iter().map(|&p| TimedPoint3::new(scan.stamp, p)))
        .collect();
    let mut panoramic = panoramic.to_vec();
    panoramic.sort_by(|a, b| a.stamp.total_cmp(&b.stamp));
    let chunks = chunk_scans(&panoramic, cfg.chunk_size);
    if chunks.is_empty() {
        return Err(Error::Empty("not enough panoramic scans for one chunk").in_stage("chunking"));
    }
    let scan_range = (
        panoramic[0].stamp,
        panoramic[panoramic.len() - 1].stamp,
    );
    let params = ClusterParams::from(cfg);
    let dynamic = extract_dynamic(&chunks, &params).map_err(|e| e.in_stage("dynamic extraction"))?;
    let fused = fuse_clouds(
        &dynamic,
        &conical,
        cfg.fps_target,
        cfg.dbscan_eps,
        cfg.dbscan_min_samples,
    )
    .map_err(|e| e.in_stage("fusion"))?;
    let samples = associate_timestamps(&fused);
    let curve = fit_bspline(&samples, SPLINE_DEGREE).map_err(|e| e.in_stage("spline fit"))?;
    Ok(TeacherFit {
        curve,
        samples,
        scan_range,
    })
}

/// Full teacher pipeline sampled at `query_times`: the pseudo-label
/// trajectory used to supervise the audio network.
pub fn generate_pseudo_labels(
    panoramic: &[ScanCloud],
    conical: &[ScanCloud],
    cfg: &PipelineConfig,
    query_times: &[f64],
) -> Result<Trajectory> {
    fit_teacher(panoramic, conical, cfg)?
        .sample(query_times)
        .map_err(|e| e.in_stage("sampling"))
}
