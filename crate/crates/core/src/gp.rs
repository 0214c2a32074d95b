//! Gaussian Process regression over time, one output per axis.
//!
//! [`GPModel`] is the plain zero-mean GP with an RBF kernel:
//!
//! ```text
//! μ* = k(t*, t) [K + σn² I]⁻¹ y
//! Σ* = k(t*, t*) - k(t*, t) [K + σn² I]⁻¹ k(t, t*)
//! ```
//!
//! The three axes share the kernel, hence one Cholesky factor and one
//! predictive variance. [`smooth`] wraps the model for trajectories: it
//! removes a per-axis linear trend, z-scores the residuals, fits, and maps
//! predictions back to meters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::types::{TimedPoint3, Trajectory, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPHyper {
    /// Seconds.
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl GPHyper {
    pub fn new(length_scale: f64, signal_var: f64, noise_var: f64) -> Result<Self> {
        let h = Self {
            length_scale,
            signal_var,
            noise_var,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return bad("gp_length_scale", "must be finite and > 0");
        }
        if !(self.signal_var.is_finite() && self.signal_var > 0.0) {
            return bad("gp_signal_var", "must be finite and > 0");
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return bad("gp_noise_var", "must be finite and >= 0");
        }
        Ok(())
    }
}

impl From<&PipelineConfig> for GPHyper {
    fn from(cfg: &PipelineConfig) -> Self {
        Self {
            length_scale: cfg.gp_length_scale,
            signal_var: cfg.gp_signal_var,
            noise_var: cfg.gp_noise_var,
        }
    }
}

/// Squared-exponential covariance `σf² exp(-(t - t')² / 2l²)`.
#[inline]
pub fn rbf(t: f64, t_prime: f64, hyper: &GPHyper) -> f64 {
    let d = t - t_prime;
    hyper.signal_var * (-(d * d) / (2.0 * hyper.length_scale * hyper.length_scale)).exp()
}

/// A fitted zero-mean GP.
#[derive(Debug, Clone)]
pub struct GPModel {
    train_t: Vec<f64>,
    train_y: [DVector<f64>; 3],
    hyper: GPHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: [DVector<f64>; 3],
}

impl GPModel {
    /// Fits on a trajectory (strictly increasing times).
    pub fn fit(points: &Trajectory, hyper: GPHyper) -> Result<Self> {
        Self::fit_samples(&points.times(), &points.positions(), hyper)
    }

    /// Fits on raw samples. Times need not be distinct; a singular system
    /// (repeated times without observation noise) is a degenerate-input error.
    pub fn fit_samples(times: &[f64], targets: &[Vec3], hyper: GPHyper) -> Result<Self> {
        hyper.validate()?;
        let n = times.len();
        if n == 0 {
            return Err(Error::Empty("GP training set"));
        }
        if targets.len() != n {
            return Err(Error::Shape(format!("{n} times vs {} targets", targets.len())));
        }
        if times.iter().any(|t| !t.is_finite())
            || targets.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("GP training set"));
        }
        let gram = DMatrix::from_fn(n, n, |i, j| {
            rbf(times[i], times[j], &hyper) + if i == j { hyper.noise_var } else { 0.0 }
        });
        let chol = Cholesky::new(gram).ok_or_else(|| {
            Error::Degenerate(
                "Gram matrix is not positive definite (repeated times with zero noise?)".into(),
            )
        })?;
        let train_y: [DVector<f64>; 3] =
            std::array::from_fn(|a| DVector::from_iterator(n, targets.iter().map(|y| y[a])));
        let alpha = std::array::from_fn(|a| chol.solve(&train_y[a]));
        Ok(Self {
            train_t: times.to_vec(),
            train_y,
            hyper,
            chol,
            alpha,
        })
    }

    pub fn hyper(&self) -> &GPHyper {
        &self.hyper
    }

    pub fn train_times(&self) -> &[f64] {
        &self.train_t
    }

    pub fn train_targets(&self, axis: usize) -> &DVector<f64> {
        &self.train_y[axis]
    }

    /// Lower-triangular factor `L` with `L Lᵀ = K + σn² I`.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `(K + σn² I)⁻¹ y` for one axis.
    pub fn alpha(&self, axis: usize) -> &DVector<f64> {
        &self.alpha[axis]
    }

    fn cross(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.train_t.len(),
            self.train_t.iter().map(|&ti| rbf(t, ti, &self.hyper)),
        )
    }

    /// Predictive mean per axis and the shared predictive variance at `t`.
    /// The variance is clamped at 0.
    pub fn predict(&self, t: f64) -> (Vec3, f64) {
        let k = self.cross(t);
        let mean = std::array::from_fn(|a| k.dot(&self.alpha[a]));
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a non-zero diagonal");
        let var = (self.hyper.signal_var - v.dot(&v)).max(0.0);
        (mean, var)
    }
}

/// A smoothed trajectory with the per-point posterior variance.
#[derive(Debug, Clone)]
pub struct Smoothed {
    pub trajectory: Trajectory,
    /// Posterior variance in m², averaged over the three axes.
    pub variance: Vec<f64>,
}

/// Per-axis least-squares line `a + b (t - t_mean)`.
#[derive(Debug, Clone, Copy)]
struct Trend {
    t_mean: f64,
    intercept: Vec3,
    slope: Vec3,
}

impl Trend {
    fn fit(times: &[f64], ys: &[Vec3]) -> Self {
        let n = times.len() as f64;
        let t_mean = times.iter().sum::<f64>() / n;
        let stt: f64 = times.iter().map(|t| (t - t_mean).powi(2)).sum();
        let mut intercept = [0.0; 3];
        let mut slope = [0.0; 3];
        for a in 0..3 {
            let y_mean = ys.iter().map(|y| y[a]).sum::<f64>() / n;
            intercept[a] = y_mean;
            if stt > 0.0 {
                let sty: f64 = times
                    .iter()
                    .zip(ys)
                    .map(|(t, y)| (t - t_mean) * (y[a] - y_mean))
                    .sum();
                slope[a] = sty / stt;
            }
        }
        Self {
            t_mean,
            intercept,
            slope,
        }
    }

    fn at(&self, t: f64) -> Vec3 {
        std::array::from_fn(|a| self.intercept[a] + self.slope[a] * (t - self.t_mean))
    }
}

/// Fits the GP on `traj` and predicts at `query_times` (default: the
/// trajectory's own timestamps).
pub fn smooth(traj: &Trajectory, hyper: GPHyper, query_times: Option<&[f64]>) -> Result<Smoothed> {
    if traj.is_empty() {
        return Err(Error::Empty("trajectory to smooth"));
    }
    let times = traj.times();
    let ys = traj.positions();
    let trend = Trend::fit(&times, &ys);
    let resid: Vec<Vec3> = times
        .iter()
        .zip(&ys)
        .map(|(&t, y)| {
            let m = trend.at(t);
            [y[0] - m[0], y[1] - m[1], y[2] - m[2]]
        })
        .collect();
    let n = resid.len() as f64;
    let scale: Vec3 = std::array::from_fn(|a| {
        let var = resid.iter().map(|r| r[a] * r[a]).sum::<f64>() / n;
        if var.sqrt() > 1e-12 {
            var.sqrt()
        } else {
            1.0
        }
    });
    let standardized: Vec<Vec3> = resid
        .iter()
        .map(|r| [r[0] / scale[0], r[1] / scale[1], r[2] / scale[2]])
        .collect();
    let model = GPModel::fit_samples(&times, &standardized, hyper)?;

    let query: Vec<f64> = query_times.map_or(times.clone(), <[f64]>::to_vec);
    let mean_scale_sq = (scale[0].powi(2) + scale[1].powi(2) + scale[2].powi(2)) / 3.0;
    let mut points = Vec::with_capacity(query.len());
    let mut variance = Vec::with_capacity(query.len());
    for &t in &query {
        let (mu, var) = model.predict(t);
        let m = trend.at(t);
        points.push(TimedPoint3::new(
            t,
            std::array::from_fn(|a| m[a] + scale[a] * mu[a]),
        ));
        variance.push(var * mean_scale_sq);
    }
    Ok(Smoothed {
        trajectory: Trajectory::new(points)?,
        variance,
    })
}
