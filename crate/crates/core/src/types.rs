//! Shared domain types: timestamped points, trajectories and LiDAR scans.
//!
//! Units are fixed across the crate: meters for positions, seconds for
//! timestamps, Hz for frequencies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3-vector in meters.
pub type Vec3 = [f64; 3];

/// Absolute tolerance on timestamps when comparing trajectories.
pub const TIME_TOLERANCE: f64 = 1e-9;
/// Absolute per-coordinate tolerance on positions when comparing trajectories.
pub const POSITION_TOLERANCE: f64 = 1e-6;

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn dist_sq(a: &Vec3, b: &Vec3) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

#[inline]
pub fn dist(a: &Vec3, b: &Vec3) -> f64 {
    dist_sq(a, b).sqrt()
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Arithmetic mean of a non-empty point set.
pub fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let mut c = [0.0; 3];
    for p in points {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    let n = points.len() as f64;
    Some([c[0] / n, c[1] / n, c[2] / n])
}

fn is_finite3(p: &Vec3) -> bool {
    p.iter().all(|v| v.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPoint3 {
    pub t: f64,
    pub p: Vec3,
}

impl TimedPoint3 {
    pub fn new(t: f64, p: Vec3) -> Self {
        Self { t, p }
    }
}

/// Time-ordered sequence of positions. Construction enforces finite values
/// and strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    points: Vec<TimedPoint3>,
}

impl Trajectory {
    pub fn new(points: Vec<TimedPoint3>) -> Result<Self> {
        for (i, pt) in points.iter().enumerate() {
            if !pt.t.is_finite() || !is_finite3(&pt.p) {
                return Err(Error::NonFinite("trajectory point"));
            }
            if i > 0 && pt.t <= points[i - 1].t {
                return Err(Error::NonMonotonic { index: i });
            }
        }
        Ok(Self { points })
    }

    pub fn from_parts(times: &[f64], positions: &[Vec3]) -> Result<Self> {
        if times.len() != positions.len() {
            return Err(Error::Shape(format!(
                "{} timestamps vs {} positions",
                times.len(),
                positions.len()
            )));
        }
        Self::new(
            times
                .iter()
                .zip(positions)
                .map(|(&t, &p)| TimedPoint3 { t, p })
                .collect(),
        )
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[TimedPoint3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<TimedPoint3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.p).collect()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.points.first().map(|p| p.t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.points.last().map(|p| p.t)
    }

    /// Piecewise-linear position at `t`, or `None` outside the covered span.
    pub fn interpolate(&self, t: f64) -> Option<Vec3> {
        let first = self.points.first()?;
        let last = self.points.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        let hi = self.points.partition_point(|p| p.t < t);
        if hi == 0 {
            return Some(first.p);
        }
        let (a, b) = (&self.points[hi - 1], &self.points[hi]);
        let w = (t - a.t) / (b.t - a.t);
        Some([
            a.p[0] + w * (b.p[0] - a.p[0]),
            a.p[1] + w * (b.p[1] - a.p[1]),
            a.p[2] + w * (b.p[2] - a.p[2]),
        ])
    }

    /// Same timestamps, every position shifted by `offset`.
    pub fn translated(&self, offset: &Vec3) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| TimedPoint3::new(p.t, add(&p.p, offset)))
                .collect(),
        }
    }

    /// Element-wise comparison with [`TIME_TOLERANCE`] and [`POSITION_TOLERANCE`].
    pub fn approx_eq(&self, other: &Trajectory) -> bool {
        self.len() == other.len()
            && self.points.iter().zip(&other.points).all(|(a, b)| {
                (a.t - b.t).abs() <= TIME_TOLERANCE
                    && (0..3).all(|k| (a.p[k] - b.p[k]).abs() <= POSITION_TOLERANCE)
            })
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            points: Vec<TimedPoint3>,
        }
        let raw = Raw::deserialize(d)?;
        Trajectory::new(raw.points).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    /// 360° spinning unit that also sees the static background.
    Panoramic,
    /// Upward-facing unit with a narrow cone of view.
    Conical,
}

impl Sensor {
    pub fn as_str(self) -> &'static str {
        match self {
            Sensor::Panoramic => "panoramic",
            Sensor::Conical => "conical",
        }
    }
}

impl std::str::FromStr for Sensor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "panoramic" => Ok(Sensor::Panoramic),
            "conical" => Ok(Sensor::Conical),
            other => Err(Error::Format {
                what: "sensor tag",
                reason: format!("expected `panoramic` or `conical`, got `{other}`"),
            }),
        }
    }
}

/// One LiDAR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCloud {
    pub sensor: Sensor,
    pub stamp: f64,
    pub points: Vec<Vec3>,
}

impl ScanCloud {
    pub fn new(sensor: Sensor, stamp: f64, points: Vec<Vec3>) -> Result<Self> {
        if !stamp.is_finite() || !points.iter().all(is_finite3) {
            return Err(Error::NonFinite("scan cloud"));
        }
        Ok(Self {
            sensor,
            stamp,
            points,
        })
    }
}
