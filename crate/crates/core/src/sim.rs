//! Deterministic scene simulator: a ground-truth flight path, the 4-channel
//! audio it would produce at a microphone array, and the scans a panoramic
//! and an upward-looking conical LiDAR would return.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::N_MICS;
use crate::error::{Error, Result};
use crate::io::Waveform;
use crate::types::{dist, ScanCloud, Sensor, TimedPoint3, Trajectory, Vec3};

/// Default flight region, `10 m × 30 m × 25 m`.
pub const REGION_MIN: Vec3 = [-5.0, -15.0, 0.0];
pub const REGION_MAX: Vec3 = [5.0, 15.0, 25.0];

// RNG stream tags, so each random quantity is independent of the others.
const TAG_PHASE: u64 = 1;
const TAG_SOURCE: u64 = 2;
const TAG_MIC: u64 = 3;
const TAG_PANORAMIC: u64 = 4;
const TAG_CONICAL: u64 = 5;

// Source sample indices may be negative (emission before the stream
// starts); they are shifted by this before addressing the noise stream.
const INDEX_OFFSET: i64 = 1 << 40;

/// Drone acoustic signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSpec {
    pub base_hz: f64,
    pub partials: usize,
    /// Peak amplitude of each partial at 1 m.
    pub amplitude: f64,
    /// Standard deviation of broadband noise emitted by the source.
    pub broadband: f64,
    /// Standard deviation of independent sensor noise on each channel.
    pub noise_level: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            base_hz: 180.0,
            partials: 6,
            amplitude: 0.05,
            broadband: 0.02,
            noise_level: 1e-4,
        }
    }
}

/// Static axis-aligned box sampled uniformly in every panoramic scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundBox {
    pub min: Vec3,
    pub max: Vec3,
    pub points_per_scan: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSpec {
    pub scan_rate: f64,
    pub point_noise_sigma: f64,
    /// Points returned from the UAV per scan and sensor.
    pub blob_points: usize,
    pub background: Vec<BackgroundBox>,
    /// Mean number of uniform clutter points per scan.
    pub clutter_rate: f64,
    pub clutter_min: Vec3,
    pub clutter_max: Vec3,
    pub conical_origin: Vec3,
    /// Half of the conical sensor's full opening angle.
    pub cone_half_angle_deg: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            scan_rate: 10.0,
            point_noise_sigma: 0.05,
            blob_points: 30,
            background: vec![
                // Ground.
                BackgroundBox {
                    min: [-10.0, -20.0, -0.2],
                    max: [10.0, 20.0, 0.0],
                    points_per_scan: 800,
                },
                // Sparse tree canopy outside the flight region.
                BackgroundBox {
                    min: [8.0, 18.0, 4.0],
                    max: [10.0, 20.0, 6.0],
                    points_per_scan: 3,
                },
            ],
            clutter_rate: 5.0,
            clutter_min: [-20.0, -30.0, 0.0],
            clutter_max: [20.0, 30.0, 25.0],
            conical_origin: [0.0, 0.0, 0.0],
            cone_half_angle_deg: 35.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScene {
    /// Timed waypoints the flight path interpolates.
    pub waypoints: Vec<TimedPoint3>,
    /// Ground-truth sampling rate in Hz.
    pub trajectory_rate: f64,
    pub mic_positions: [Vec3; N_MICS],
    pub sample_rate: u32,
    pub source: SourceSpec,
    pub lidar: LidarSpec,
    pub sound_speed: f64,
    pub seed: u64,
}

impl Default for SimScene {
    fn default() -> Self {
        Self {
            waypoints: vec![
                TimedPoint3::new(0.0, [-3.0, -10.0, 6.0]),
                TimedPoint3::new(8.0, [2.0, -4.0, 10.0]),
                TimedPoint3::new(16.0, [-1.0, 3.0, 14.0]),
                TimedPoint3::new(24.0, [3.0, 10.0, 8.0]),
                TimedPoint3::new(32.0, [-2.0, 4.0, 5.0]),
            ],
            trajectory_rate: 10.0,
            mic_positions: [
                [-6.0, -16.0, 0.5],
                [6.0, -16.0, 0.5],
                [0.0, 16.0, 0.5],
                [0.0, 0.0, 20.0],
            ],
            sample_rate: 48_000,
            source: SourceSpec::default(),
            lidar: LidarSpec::default(),
            sound_speed: 343.0,
            seed: 0,
        }
    }
}

/// Parses JSON, naming the offending key on failure.
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &'static str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Format {
            what,
            reason: if path == "." {
                inner.to_string()
            } else {
                format!("at `{path}`: {inner}")
            },
        }
    })
}

impl SimScene {
    pub fn validate(self) -> Result<Self> {
        let bad = |field, reason: &str| Error::InvalidConfig {
            field,
            reason: reason.into(),
        };
        if self.waypoints.len() < 2 {
            return Err(Error::TooFewPoints {
                need: 2,
                got: self.waypoints.len(),
            });
        }
        Trajectory::new(self.waypoints.clone())?;
        for i in 0..N_MICS {
            if self.mic_positions[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("mic position"));
            }
            for j in 0..i {
                if self.mic_positions[i] == self.mic_positions[j] {
                    return Err(bad("mic_positions", "positions must be distinct"));
                }
            }
        }
        if !(self.trajectory_rate > 0.0 && self.trajectory_rate.is_finite()) {
            return Err(bad("trajectory_rate", "must be positive"));
        }
        if self.sample_rate == 0 {
            return Err(bad("sample_rate", "must be positive"));
        }
        if !(self.sound_speed > 0.0 && self.sound_speed.is_finite()) {
            return Err(bad("sound_speed", "must be positive"));
        }
        let s = &self.source;
        if !(s.base_hz > 0.0 && s.amplitude >= 0.0 && s.broadband >= 0.0 && s.noise_level >= 0.0) {
            return Err(bad("source", "frequencies must be positive and levels non-negative"));
        }
        let l = &self.lidar;
        if !(l.scan_rate > 0.0 && l.scan_rate.is_finite()) {
            return Err(bad("lidar.scan_rate", "must be positive"));
        }
        if !(l.point_noise_sigma >= 0.0 && l.clutter_rate >= 0.0) {
            return Err(bad("lidar", "noise sigma and clutter rate must be non-negative"));
        }
        if !(0.0..=90.0).contains(&l.cone_half_angle_deg) {
            return Err(bad("lidar.cone_half_angle_deg", "must lie in [0, 90]"));
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse_json::<SimScene>(text, "scene")?.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        Self::from_json(&text).map_err(|e| e.at_path(path))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].t
    }

    pub fn path(&self) -> Result<FlightPath> {
        FlightPath::new(&self.waypoints)
    }

    /// Ground truth sampled at `trajectory_rate`.
    pub fn trajectory(&self) -> Result<Trajectory> {
        gen_trajectory(&self.waypoints, self.trajectory_rate)
    }

    /// Stamps of the LiDAR scans.
    pub fn scan_times(&self) -> Vec<f64> {
        grid_times(self.start_time(), self.end_time(), self.lidar.scan_rate)
    }

    /// Number of audio samples in the full stream.
    pub fn n_samples(&self) -> usize {
        ((self.end_time() - self.start_time()) * self.sample_rate as f64 + 1e-9).floor() as usize
    }
}

fn grid_times(start: f64, end: f64, rate: f64) -> Vec<f64> {
    let n = ((end - start) * rate + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 / rate).collect()
}

/// Natural cubic spline through scalar samples.
#[derive(Debug, Clone)]
struct Cubic {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl Cubic {
    fn new(t: &[f64], y: &[f64]) -> Self {
        let n = t.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = t[i + 1] - t[i];
                let h1 = t[i + 2] - t[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = t[i + 1] - t[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self {
            t: t.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        if x <= self.t[0] {
            return self.y[0];
        }
        if x >= self.t[n - 1] {
            return self.y[n - 1];
        }
        let i = self.t.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// C²-smooth path through timed waypoints; held constant outside them.
#[derive(Debug, Clone)]
pub struct FlightPath {
    axes: [Cubic; 3],
}

impl FlightPath {
    pub fn new(waypoints: &[TimedPoint3]) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::TooFewPoints {
                need: 2,
                got: waypoints.len(),
            });
        }
        Trajectory::new(waypoints.to_vec())?;
        let t: Vec<f64> = waypoints.iter().map(|w| w.t).collect();
        let axes = std::array::from_fn(|a| {
            let y: Vec<f64> = waypoints.iter().map(|w| w.p[a]).collect();
            Cubic::new(&t, &y)
        });
        Ok(Self { axes })
    }

    pub fn position(&self, t: f64) -> Vec3 {
        std::array::from_fn(|a| self.axes[a].eval(t))
    }
}

/// Path through `waypoints` sampled every `1/rate` seconds from the first
/// waypoint time up to the last.
pub fn gen_trajectory(waypoints: &[TimedPoint3], rate: f64) -> Result<Trajectory> {
    let path = FlightPath::new(waypoints)?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidConfig {
            field: "trajectory_rate",
            reason: "must be positive".into(),
        });
    }
    let start = waypoints[0].t;
    let end = waypoints[waypoints.len() - 1].t;
    Trajectory::new(
        grid_times(start, end, rate)
            .into_iter()
            .map(|t| TimedPoint3::new(t, path.position(t)))
            .collect(),
    )
}

/// `n` waypoints evenly spaced over `duration` seconds, drawn uniformly in
/// the box `[min, max]`.
pub fn random_waypoints(n: usize, duration: f64, min: Vec3, max: Vec3, seed: u64) -> Vec<TimedPoint3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = if n > 1 { duration / (n - 1) as f64 } else { 0.0 };
    (0..n)
        .map(|i| {
            let p = std::array::from_fn(|a| rng.random_range(min[a]..=max[a]));
            TimedPoint3::new(i as f64 * step, p)
        })
        .collect()
}

fn tagged_rng(seed: u64, tag: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// Standard normal deviates for indices `first..first+n` of an addressable
/// stream: index `i` always maps to the same value.
fn addressable_normals(rng: &mut ChaCha8Rng, first: u64, n: usize) -> Vec<f64> {
    // Each deviate consumes exactly two u64 draws, i.e. four 32-bit words.
    rng.set_word_pos(4 * first as u128);
    (0..n)
        .map(|_| {
            let u1 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect()
}

/// Emission time of the wavefront reaching `mic` at `t`.
fn emission_time(path: &FlightPath, mic: &Vec3, t: f64, c: f64) -> (f64, f64) {
    let mut te = t;
    let mut r = 0.0;
    for _ in 0..4 {
        r = dist(&path.position(te), mic);
        te = t - r / c;
    }
    (te, r)
}

/// Samples `first..first+n` of every channel of the scene's audio stream.
/// Sample `k` is taken at `start_time + k / sample_rate`.
pub fn synth_audio_range(scene: &SimScene, first: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    let path = scene.path()?;
    let sr = scene.sample_rate as f64;
    let t0 = scene.start_time();
    let src = &scene.source;
    let mut phase_rng = tagged_rng(scene.seed, TAG_PHASE, 0);
    let phases: Vec<f64> = (0..src.partials)
        .map(|_| phase_rng.random_range(0.0..std::f64::consts::TAU))
        .collect();

    const BLOCK: usize = 1 << 14;
    const DELAY_STEP: usize = 32;
    let channels = scene
        .mic_positions
        .par_iter()
        .enumerate()
        .map(|(m, mic)| {
            let blocks: Vec<Vec<f64>> = (0..n.div_ceil(BLOCK))
                .into_par_iter()
                .map(|b| {
                    let lo = first + b * BLOCK;
                    let len = BLOCK.min(first + n - lo);
                    // Delay and range vary slowly, so they are solved on an
                    // absolute grid of anchors and interpolated in between.
                    let anchor = |k: usize| {
                        let t = t0 + (k * DELAY_STEP) as f64 / sr;
                        let (te, r) = emission_time(&path, mic, t, scene.sound_speed);
                        (t - te, r)
                    };
                    let first_anchor = lo / DELAY_STEP;
                    let anchors: Vec<(f64, f64)> = (first_anchor..=(lo + len) / DELAY_STEP + 1)
                        .map(anchor)
                        .collect();
                    let emit: Vec<(f64, f64)> = (0..len)
                        .map(|i| {
                            let k = lo + i;
                            let a = k / DELAY_STEP - first_anchor;
                            let w = (k % DELAY_STEP) as f64 / DELAY_STEP as f64;
                            let (d0, r0) = anchors[a];
                            let (d1, r1) = anchors[a + 1];
                            let delay = d0 + w * (d1 - d0);
                            (k as f64 - delay * sr, r0 + w * (r1 - r0))
                        })
                        .collect();
                    let j_min = emit.iter().map(|e| e.0.floor()).fold(f64::INFINITY, f64::min) as i64;
                    let j_max = emit.iter().map(|e| e.0.floor()).fold(f64::NEG_INFINITY, f64::max) as i64 + 1;
                    let count = (j_max - j_min + 1) as usize;
                    let broadband = if src.broadband > 0.0 {
                        let mut rng = tagged_rng(scene.seed, TAG_SOURCE, 0);
                        addressable_normals(&mut rng, (j_min + INDEX_OFFSET) as u64, count)
                    } else {
                        vec![0.0; count]
                    };
                    let source: Vec<f64> = (0..count)
                        .map(|k| {
                            let tau = (j_min + k as i64) as f64 / sr;
                            let harmonic: f64 = phases
                                .iter()
                                .enumerate()
                                .map(|(p, ph)| {
                                    (std::f64::consts::TAU * (p + 1) as f64 * src.base_hz * tau + ph).sin()
                                })
                                .sum();
                            src.amplitude * harmonic + src.broadband * broadband[k]
                        })
                        .collect();
                    let noise = if src.noise_level > 0.0 {
                        let mut rng = tagged_rng(scene.seed, TAG_MIC, m as u64);
                        addressable_normals(&mut rng, lo as u64, len)
                    } else {
                        vec![0.0; len]
                    };
                    emit.iter()
                        .zip(&noise)
                        .map(|(&(pos, r), nz)| {
                            let j = pos.floor();
                            let frac = pos - j;
                            let k = (j as i64 - j_min) as usize;
                            let s = source[k] * (1.0 - frac) + source[k + 1] * frac;
                            s / r.max(1.0) + src.noise_level * nz
                        })
                        .collect()
                })
                .collect();
            blocks.concat()
        })
        .collect();
    Ok(channels)
}

/// The scene's full 4-channel stream; it starts at the first waypoint time.
pub fn synth_audio(scene: &SimScene) -> Result<Waveform> {
    Ok(Waveform {
        sample_rate: scene.sample_rate,
        channels: synth_audio_range(scene, 0, scene.n_samples())?,
    })
}

fn uniform_in(rng: &mut ChaCha8Rng, min: &Vec3, max: &Vec3) -> Vec3 {
    std::array::from_fn(|a| {
        if max[a] > min[a] {
            rng.random_range(min[a]..max[a])
        } else {
            min[a]
        }
    })
}

fn blob(rng: &mut ChaCha8Rng, center: &Vec3, n: usize, sigma: f64) -> Vec<Vec3> {
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("valid sigma");
    (0..n)
        .map(|_| std::array::from_fn(|a| center[a] + normal.sample(rng)))
        .collect()
}

fn clutter(rng: &mut ChaCha8Rng, l: &LidarSpec) -> Vec<Vec3> {
    let count = if l.clutter_rate > 0.0 {
        Poisson::new(l.clutter_rate).expect("positive rate").sample(rng) as usize
    } else {
        0
    };
    (0..count)
        .map(|_| uniform_in(rng, &l.clutter_min, &l.clutter_max))
        .collect()
}

/// Whether `p` lies inside the conical sensor's upward field of view.
pub fn in_cone(l: &LidarSpec, p: &Vec3) -> bool {
    let v = [
        p[0] - l.conical_origin[0],
        p[1] - l.conical_origin[1],
        p[2] - l.conical_origin[2],
    ];
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    r > 0.0 && v[2] >= r * l.cone_half_angle_deg.to_radians().cos()
}

/// Panoramic and conical scans, one of each per scan stamp.
pub fn synth_lidar(scene: &SimScene) -> Result<(Vec<ScanCloud>, Vec<ScanCloud>)> {
    let path = scene.path()?;
    let l = &scene.lidar;
    let scans: Vec<Result<(ScanCloud, ScanCloud)>> = scene
        .scan_times()
        .into_par_iter()
        .enumerate()
        .map(|(k, t)| {
            let truth = path.position(t);
            let mut rng = tagged_rng(scene.seed, TAG_PANORAMIC, k as u64);
            let mut pano = blob(&mut rng, &truth, l.blob_points, l.point_noise_sigma);
            for b in &l.background {
                pano.extend((0..b.points_per_scan).map(|_| uniform_in(&mut rng, &b.min, &b.max)));
            }
            pano.extend(clutter(&mut rng, l));

            let mut rng = tagged_rng(scene.seed, TAG_CONICAL, k as u64);
            let mut conical = blob(&mut rng, &truth, l.blob_points, l.point_noise_sigma);
            conical.extend(clutter(&mut rng, l));
            conical.retain(|p| in_cone(l, p));
            Ok((
                ScanCloud::new(Sensor::Panoramic, t, pano)?,
                ScanCloud::new(Sensor::Conical, t, conical)?,
            ))
        })
        .collect();
    let mut panoramic = Vec::with_capacity(scans.len());
    let mut conical = Vec::with_capacity(scans.len());
    for s in scans {
        let (p, c) = s?;
        panoramic.push(p);
        conical.push(c);
    }
    Ok((panoramic, conical))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_scene(pos: Vec3, mics: [Vec3; 4]) -> SimScene {
        SimScene {
            waypoints: vec![TimedPoint3::new(0.0, pos), TimedPoint3::new(0.5, pos)],
            mic_positions: mics,
            ..SimScene::default()
        }
    }

    #[test]
    fn default_scene_is_valid_and_in_region() {
        let s = SimScene::default().validate().unwrap();
        for p in s.trajectory().unwrap().positions() {
            for a in 0..3 {
                assert!(p[a] >= REGION_MIN[a] && p[a] <= REGION_MAX[a], "{p:?}");
            }
        }
    }

    #[test]
    fn straight_line_is_collinear() {
        let w = [
            TimedPoint3::new(0.0, [0.0, 0.0, 5.0]),
            TimedPoint3::new(3.0, [3.0, -6.0, 8.0]),
        ];
        let t = gen_trajectory(&w, 10.0).unwrap();
        assert_eq!(t.len(), 31);
        for p in t.points() {
            let s = p.t / 3.0;
            let expected = [3.0 * s, -6.0 * s, 5.0 + 3.0 * s];
            assert!(dist(&p.p, &expected) < 1e-9);
        }
    }

    #[test]
    fn spline_passes_through_waypoints() {
        let s = SimScene::default();
        let traj = s.trajectory().unwrap();
        for w in &s.waypoints {
            let i = traj.times().iter().position(|&t| (t - w.t).abs() < 1e-9).unwrap();
            assert!(dist(&traj.points()[i].p, &w.p) < 1e-6);
        }
    }

    #[test]
    fn too_few_waypoints() {
        assert!(matches!(
            gen_trajectory(&[TimedPoint3::new(0.0, [0.0; 3])], 10.0),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = SimScene::from_json(r#"{"lidar": {"scan_rte": 5}}"#).unwrap_err();
        assert!(err.to_string().contains("scan_rte"), "{err}");
        let err = SimScene::from_json(r#"{"lidar": {"scan_rate": "fast"}}"#).unwrap_err();
        assert!(err.to_string().contains("lidar.scan_rate"), "{err}");
    }

    #[test]
    fn scene_json_round_trip() {
        let s = SimScene {
            seed: 77,
            sound_speed: 340.123456789,
            ..SimScene::default()
        };
        let text = s.to_json();
        let back = SimScene::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn audio_range_matches_full_stream() {
        let mut s = SimScene::default();
        s.waypoints.truncate(2);
        s.waypoints[1].t = 1.0;
        let full = synth_audio(&s).unwrap();
        let part = synth_audio_range(&s, 20_000, 5_000).unwrap();
        for m in 0..4 {
            assert_eq!(&full.channels[m][20_000..25_000], part[m].as_slice());
        }
    }

    #[test]
    fn equidistant_mics_agree() {
        let mut s = static_scene(
            [0.0, 0.0, 5.0],
            [[3.0, 0.0, 0.0], [-3.0, 0.0, 0.0], [0.0, 8.0, 0.0], [0.0, -9.0, 0.0]],
        );
        s.source.noise_level = 0.0;
        let w = synth_audio(&s).unwrap();
        let max_diff = w.channels[0]
            .iter()
            .zip(&w.channels[1])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-12, "{max_diff}");
    }

    #[test]
    fn lidar_blob_only_scene() {
        let mut s = SimScene::default();
        s.lidar.background.clear();
        s.lidar.clutter_rate = 0.0;
        let path = s.path().unwrap();
        let (pano, _) = synth_lidar(&s).unwrap();
        let sigma = s.lidar.point_noise_sigma;
        for scan in &pano {
            assert_eq!(scan.points.len(), 30);
            let truth = path.position(scan.stamp);
            // Per-axis 3σ box, widened to its diagonal.
            assert!(scan.points.iter().all(|p| dist(p, &truth) <= 3.0 * sigma * 3f64.sqrt() * 1.5));
        }
    }

    #[test]
    fn uav_outside_cone_gives_clutter_only() {
        let mut s = static_scene([20.0, 0.0, 2.0], SimScene::default().mic_positions);
        s.lidar.clutter_rate = 0.0;
        let (_, conical) = synth_lidar(&s).unwrap();
        assert!(conical.iter().all(|c| c.points.is_empty()));
        let mut s = static_scene([0.0, 0.0, 10.0], SimScene::default().mic_positions);
        s.lidar.clutter_rate = 0.0;
        let (_, conical) = synth_lidar(&s).unwrap();
        assert!(conical.iter().all(|c| c.points.len() == 30));
    }

    #[test]
    fn deterministic_under_seed() {
        let mut s = SimScene::default();
        s.waypoints.truncate(2);
        assert_eq!(synth_lidar(&s).unwrap(), synth_lidar(&s).unwrap());
        let a = synth_audio_range(&s, 0, 4000).unwrap();
        assert_eq!(a, synth_audio_range(&s, 0, 4000).unwrap());
        s.seed = 1;
        assert_ne!(a, synth_audio_range(&s, 0, 4000).unwrap());
    }
}
