//! Audio front end: 4-channel waveforms to stacked log-mel images.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::Waveform;

/// Number of microphones the network expects.
pub const N_MICS: usize = 4;
/// Power floor applied before the logarithm.
pub const POWER_FLOOR: f64 = 1e-10;

/// A fixed-length multichannel excerpt.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub start_time: f64,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// One network input: `N_MICS` log-mel planes of `img_size × img_size`,
/// rows are mel bands (low to high), columns are frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MelInput {
    pub planes: Vec<Plane>,
    pub start_time: f64,
}

impl MelInput {
    pub fn size(&self) -> (usize, usize) {
        self.planes
            .first()
            .map_or((0, 0), |p| (p.rows, p.cols))
    }
}

/// Splits a stream into consecutive non-overlapping clips of
/// `cfg.clip_seconds`; a trailing partial clip is dropped.
pub fn segment(wave: &Waveform, stream_start: f64, cfg: &PipelineConfig) -> Result<Vec<AudioClip>> {
    if wave.channels.len() != N_MICS {
        return Err(Error::Shape(format!(
            "expected {N_MICS} channels, got {}",
            wave.channels.len()
        )));
    }
    let len = wave.channels[0].len();
    if let Some((i, ch)) = wave
        .channels
        .iter()
        .enumerate()
        .find(|(_, c)| c.len() != len)
    {
        return Err(Error::Shape(format!(
            "channel {i} has {} samples, channel 0 has {len}",
            ch.len()
        )));
    }
    if wave.sample_rate != cfg.sample_rate {
        return Err(Error::Shape(format!(
            "stream sampled at {} Hz, config expects {} Hz",
            wave.sample_rate, cfg.sample_rate
        )));
    }
    let n = cfg.clip_samples();
    Ok((0..len / n)
        .map(|i| AudioClip {
            channels: wave
                .channels
                .iter()
                .map(|c| c[i * n..(i + 1) * n].to_vec())
                .collect(),
            sample_rate: wave.sample_rate,
            start_time: stream_start + i as f64 * cfg.clip_seconds,
        })
        .collect())
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// HTK-style triangular filters with unit peak, `n_mels × (n_fft/2 + 1)`,
/// spanning 0 Hz to Nyquist.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize) -> Plane {
    let n_bins = n_fft / 2 + 1;
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    Plane::from_fn(n_mels, n_bins, |m, k| {
        let f = k as f64 * sample_rate as f64 / n_fft as f64;
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let up = (f - lo) / (c - lo);
        let down = (hi - f) / (hi - c);
        up.min(down).max(0.0)
    })
}

/// Cached window, FFT plan and filterbank for one configuration.
pub struct MelFrontend {
    n_fft: usize,
    hop: usize,
    clip_samples: usize,
    img_size: usize,
    window: Vec<f64>,
    filters: Plane,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MelFrontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFrontend")
            .field("n_fft", &self.n_fft)
            .field("hop", &self.hop)
            .field("mel_bins", &self.filters.rows)
            .field("img_size", &self.img_size)
            .finish()
    }
}

impl MelFrontend {
    pub fn new(cfg: &PipelineConfig) -> Self {
        let n_fft = cfg.n_fft;
        // Periodic Hann.
        let window = (0..n_fft)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / n_fft as f64).cos())
            .collect();
        Self {
            n_fft,
            hop: cfg.hop,
            clip_samples: cfg.clip_samples(),
            img_size: cfg.img_size,
            window,
            filters: mel_filterbank(cfg.sample_rate, n_fft, cfg.mel_bins),
            fft: FftPlanner::new().plan_fft_forward(n_fft),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.clip_samples / self.hop + 1
    }

    /// Power spectrogram, `(n_fft/2 + 1) × n_frames`, of a reflect-padded
    /// Hann-windowed STFT.
    pub fn power_spectrogram(&self, channel: &[f64]) -> Result<Plane> {
        if channel.len() != self.clip_samples {
            return Err(Error::Shape(format!(
                "channel has {} samples, expected {}",
                channel.len(),
                self.clip_samples
            )));
        }
        let pad = self.n_fft / 2;
        let n = channel.len();
        let padded: Vec<f64> = (0..n + 2 * pad)
            .map(|i| {
                let j = i as isize - pad as isize;
                let k = if j < 0 {
                    -j
                } else if j >= n as isize {
                    2 * (n as isize - 1) - j
                } else {
                    j
                };
                channel[k as usize]
            })
            .collect();
        let n_frames = self.n_frames();
        let n_bins = self.n_fft / 2 + 1;
        let mut out = Plane::zeros(n_bins, n_frames);
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for f in 0..n_frames {
            let start = f * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(padded[start + i] * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for k in 0..n_bins {
                out.set(k, f, buf[k].norm_sqr());
            }
        }
        Ok(out)
    }

    /// Log10 mel power, `mel_bins × n_frames`, floored at [`POWER_FLOOR`].
    pub fn mel_spectrogram(&self, channel: &[f64]) -> Result<Plane> {
        let power = self.power_spectrogram(channel)?;
        let fb = &self.filters;
        Ok(Plane::from_fn(fb.rows, power.cols, |m, f| {
            let e: f64 = (0..fb.cols).map(|k| fb.get(m, k) * power.get(k, f)).sum();
            e.max(POWER_FLOOR).log10()
        }))
    }

    pub fn make_input(&self, clip: &AudioClip) -> Result<MelInput> {
        if clip.channels.len() != N_MICS {
            return Err(Error::Shape(format!(
                "expected {N_MICS} channels, got {}",
                clip.channels.len()
            )));
        }
        let planes = clip
            .channels
            .iter()
            .map(|c| Ok(resize_to_square(&self.mel_spectrogram(c)?, self.img_size)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MelInput {
            planes,
            start_time: clip.start_time,
        })
    }

    pub fn make_inputs(&self, clips: &[AudioClip]) -> Result<Vec<MelInput>> {
        clips.par_iter().map(|c| self.make_input(c)).collect()
    }
}

pub fn mel_spectrogram(channel: &[f64], cfg: &PipelineConfig) -> Result<Plane> {
    MelFrontend::new(cfg).mel_spectrogram(channel)
}

pub fn make_input(clip: &AudioClip, cfg: &PipelineConfig) -> Result<MelInput> {
    MelFrontend::new(cfg).make_input(clip)
}

fn sample_coord(i: usize, n_out: usize, n_in: usize) -> (usize, usize, f64) {
    if n_out <= 1 || n_in <= 1 {
        return (0, 0, 0.0);
    }
    let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
    let lo = (x.floor() as usize).min(n_in - 1);
    let hi = (lo + 1).min(n_in - 1);
    (lo, hi, x - lo as f64)
}

/// Bilinear resize to `size × size` with corner-aligned sampling, so an
/// input of the target size is returned unchanged.
pub fn resize_to_square(spec: &Plane, size: usize) -> Plane {
    assert!(spec.rows > 0 && spec.cols > 0, "cannot resize an empty plane");
    if spec.rows == size && spec.cols == size {
        return spec.clone();
    }
    let rows: Vec<_> = (0..size).map(|r| sample_coord(r, size, spec.rows)).collect();
    let cols: Vec<_> = (0..size).map(|c| sample_coord(c, size, spec.cols)).collect();
    Plane::from_fn(size, size, |r, c| {
        let (r0, r1, wr) = rows[r];
        let (c0, c1, wc) = cols[c];
        let top = spec.get(r0, c0) + wc * (spec.get(r0, c1) - spec.get(r0, c0));
        let bottom = spec.get(r1, c0) + wc * (spec.get(r1, c1) - spec.get(r1, c0));
        top + wr * (bottom - top)
    })
}
