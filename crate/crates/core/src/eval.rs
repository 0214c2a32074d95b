//! Trajectory error metrics.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::audio::MelInput;
use crate::error::{Error, Result};
use crate::net::NetParams;
use crate::types::{dist, Trajectory};

/// Maximum timestamp disagreement for two samples to count as aligned.
pub const ALIGN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    /// Average position error (RMSE of Euclidean errors).
    pub e: f64,
    pub err_mean: f64,
    pub err_std: f64,
    pub n_points: usize,
    pub mean_inference_seconds: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned two-column plain-text table.
    pub fn to_table(&self) -> String {
        let mut rows = vec![
            ("Dx [m]", format!("{:.4}", self.dx)),
            ("Dy [m]", format!("{:.4}", self.dy)),
            ("Dz [m]", format!("{:.4}", self.dz)),
            ("E (APE) [m]", format!("{:.4}", self.e)),
            ("error mean [m]", format!("{:.4}", self.err_mean)),
            ("error std [m]", format!("{:.4}", self.err_std)),
            ("points", self.n_points.to_string()),
        ];
        if let Some(s) = self.mean_inference_seconds {
            rows.push(("inference [s/clip]", format!("{s:.6}")));
        }
        let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let vw = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<w$}  {v:>vw$}\n"))
            .collect()
    }
}

/// Checks equal length and per-index timestamp agreement.
pub fn check_aligned(pred: &Trajectory, reference: &Trajectory) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(Error::Misaligned {
            index: pred.len().min(reference.len()),
            reason: format!("{} predicted vs {} reference points", pred.len(), reference.len()),
        });
    }
    for (i, (a, b)) in pred.points().iter().zip(reference.points()).enumerate() {
        if (a.t - b.t).abs() > ALIGN_TOLERANCE {
            return Err(Error::Misaligned {
                index: i,
                reason: format!("timestamp {} vs {}", a.t, b.t),
            });
        }
    }
    Ok(())
}

/// Per-axis mean absolute error `(Dx, Dy, Dz)`.
pub fn center_distance(pred: &Trajectory, reference: &Trajectory) -> Result<[f64; 3]> {
    check_aligned(pred, reference)?;
    let n = pred.len().max(1) as f64;
    let mut d = [0.0; 3];
    for (a, b) in pred.points().iter().zip(reference.points()) {
        for k in 0..3 {
            d[k] += (a.p[k] - b.p[k]).abs();
        }
    }
    Ok(d.map(|v| v / n))
}

fn euclidean_errors(pred: &Trajectory, reference: &Trajectory) -> Result<Vec<f64>> {
    check_aligned(pred, reference)?;
    Ok(pred
        .points()
        .iter()
        .zip(reference.points())
        .map(|(a, b)| dist(&a.p, &b.p))
        .collect())
}

/// Average position error: `sqrt(mean ‖p_i - g_i‖²)`.
pub fn ape(pred: &Trajectory, reference: &Trajectory) -> Result<f64> {
    let errs = euclidean_errors(pred, reference)?;
    if errs.is_empty() {
        return Ok(0.0);
    }
    Ok((errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt())
}

/// Population mean and standard deviation of the Euclidean errors.
pub fn error_stats(pred: &Trajectory, reference: &Trajectory) -> Result<(f64, f64)> {
    let errs = euclidean_errors(pred, reference)?;
    if errs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Per-point Euclidean errors, for histograms.
pub fn point_errors(pred: &Trajectory, reference: &Trajectory) -> Result<Vec<f64>> {
    euclidean_errors(pred, reference)
}

pub fn evaluate(pred: &Trajectory, reference: &Trajectory) -> Result<EvalReport> {
    let [dx, dy, dz] = center_distance(pred, reference)?;
    let e = ape(pred, reference)?;
    let (err_mean, err_std) = error_stats(pred, reference)?;
    Ok(EvalReport {
        dx,
        dy,
        dz,
        e,
        err_mean,
        err_std,
        n_points: pred.len(),
        mean_inference_seconds: None,
    })
}

/// Mean wall-clock seconds per clip for a forward pass, over `repetitions`
/// timed sweeps after one untimed warm-up sweep.
pub fn time_inference(params: &NetParams, clips: &[MelInput], repetitions: usize) -> Result<f64> {
    assert!(repetitions >= 1, "repetitions must be >= 1");
    if clips.is_empty() {
        return Ok(0.0);
    }
    for c in clips {
        std::hint::black_box(params.predict(c)?);
    }
    let start = Instant::now();
    for _ in 0..repetitions {
        for c in clips {
            std::hint::black_box(params.predict(c)?);
        }
    }
    Ok(start.elapsed().as_secs_f64() / (repetitions * clips.len()) as f64)
}
