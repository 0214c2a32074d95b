//! Pipeline configuration shared by every stage.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Every tunable of the teacher, front end, student and smoother.
///
/// Serialized as a flat JSON object; absent keys take their defaults and
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dbscan_eps: f64,
    pub dbscan_min_samples: usize,
    pub cc_distance_threshold: f64,
    pub cc_min_component_size: usize,
    pub chunk_size: usize,
    pub fps_target: usize,
    /// Seconds. Defaults to 300 clip intervals.
    pub gp_length_scale: f64,
    pub gp_noise_var: f64,
    pub gp_signal_var: f64,
    pub loss_alpha: f64,
    pub sample_rate: u32,
    pub clip_seconds: f64,
    pub n_fft: usize,
    pub hop: usize,
    pub mel_bins: usize,
    pub img_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let clip_seconds = 2.0;
        Self {
            dbscan_eps: 1.0,
            dbscan_min_samples: 10,
            cc_distance_threshold: 2.5,
            cc_min_component_size: 20,
            chunk_size: 20,
            fps_target: 256,
            gp_length_scale: 300.0 * clip_seconds,
            gp_noise_var: 2.0,
            gp_signal_var: 1.0,
            loss_alpha: 1.0,
            sample_rate: 48_000,
            clip_seconds,
            n_fft: 2048,
            hop: 1024,
            mel_bins: 64,
            img_size: 64,
            batch_size: 32,
            learning_rate: 1e-4,
            epochs: 100,
            seed: 0,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and >= 0, got {v}")))
    }
}

fn at_least_one(field: &'static str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(invalid(field, "must be >= 1"))
    }
}

impl PipelineConfig {
    /// Checks every invariant in field order and returns the config
    /// unchanged, or the first violation.
    pub fn validate(self) -> Result<Self> {
        positive("dbscan_eps", self.dbscan_eps)?;
        at_least_one("dbscan_min_samples", self.dbscan_min_samples)?;
        non_negative("cc_distance_threshold", self.cc_distance_threshold)?;
        at_least_one("cc_min_component_size", self.cc_min_component_size)?;
        at_least_one("chunk_size", self.chunk_size)?;
        at_least_one("fps_target", self.fps_target)?;
        positive("gp_length_scale", self.gp_length_scale)?;
        non_negative("gp_noise_var", self.gp_noise_var)?;
        positive("gp_signal_var", self.gp_signal_var)?;
        if !(0.0..=1.0).contains(&self.loss_alpha) {
            return Err(invalid(
                "loss_alpha",
                format!("must lie in [0, 1], got {}", self.loss_alpha),
            ));
        }
        if self.sample_rate == 0 {
            return Err(invalid("sample_rate", "must be >= 1"));
        }
        positive("clip_seconds", self.clip_seconds)?;
        let samples = self.sample_rate as f64 * self.clip_seconds;
        if (samples - samples.round()).abs() > 1e-9 {
            return Err(invalid(
                "clip_seconds",
                format!("sample_rate * clip_seconds = {samples} is not a whole sample count"),
            ));
        }
        at_least_one("n_fft", self.n_fft)?;
        if self.hop == 0 || self.hop >= self.n_fft {
            return Err(invalid(
                "hop",
                format!("must satisfy 0 < hop < n_fft ({}), got {}", self.n_fft, self.hop),
            ));
        }
        if self.n_fft / 2 >= self.clip_samples() {
            return Err(invalid(
                "n_fft",
                "half window must be shorter than a clip for reflect padding",
            ));
        }
        at_least_one("mel_bins", self.mel_bins)?;
        at_least_one("img_size", self.img_size)?;
        at_least_one("batch_size", self.batch_size)?;
        non_negative("learning_rate", self.learning_rate)?;
        at_least_one("epochs", self.epochs)?;
        Ok(self)
    }

    /// Samples per clip per channel.
    pub fn clip_samples(&self) -> usize {
        (self.sample_rate as f64 * self.clip_seconds).round() as usize
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = crate::sim::parse_json(text, "config")?;
        cfg.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        Self::from_json(&text).map_err(|e| e.at_path(path))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::from(e).at_path(path))
    }

    /// SHA-256 over the canonical serialization of the whole config.
    pub fn fingerprint(&self) -> String {
        hex_digest(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// SHA-256 over the settings that shape network inputs. Two configs with
    /// the same front-end fingerprint produce interchangeable `MelInput`s.
    pub fn frontend_fingerprint(&self) -> String {
        let key = serde_json::json!({
            "sample_rate": self.sample_rate,
            "clip_seconds": self.clip_seconds,
            "n_fft": self.n_fft,
            "hop": self.hop,
            "mel_bins": self.mel_bins,
            "img_size": self.img_size,
        });
        hex_digest(key.to_string().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
