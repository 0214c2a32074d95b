//! Audio perception network.
//!
//! Two convolution branches read the standardized mel planes: a bank of
//! `1×k` kernels sliding along time (inter-microphone timing) and a bank of
//! `k×1` kernels sliding along frequency (spectral intensity). Each branch is
//! ReLU'd and globally average-pooled to one value per output channel; the
//! two vectors are concatenated into the audio feature and passed through
//! two fully connected layers to a 3D position.
//!
//! All trainable weights live in one flat vector, see [`NetParams::layout`].

mod model_file;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use model_file::{read_model, save_model, load_model, write_model, ModelHeader};
pub use train::{
    gradients, loss, predict_trajectory, train, Adam, Dataset, TrainBatch, TrainOutcome,
};

use crate::audio::{MelInput, N_MICS};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::types::Vec3;

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    /// Output channels per convolution branch.
    pub channels: usize,
    pub kernel: usize,
    pub hidden: usize,
}

impl NetShape {
    /// 16 channels per branch, 7-tap kernels, 128 hidden units.
    pub fn standard(img_size: usize) -> Self {
        Self {
            planes: N_MICS,
            height: img_size,
            width: img_size,
            channels: 16,
            kernel: 7,
            hidden: 128,
        }
    }

    pub fn for_config(cfg: &PipelineConfig) -> Self {
        Self::standard(cfg.img_size)
    }

    /// Length of the concatenated audio feature.
    pub fn feature_len(&self) -> usize {
        2 * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.planes == 0
            || self.channels == 0
            || self.hidden == 0
            || self.kernel == 0
            || self.kernel > self.height
            || self.kernel > self.width
        {
            return Err(Error::Shape(format!("invalid network shape {self:?}")));
        }
        Ok(())
    }
}

/// One named trainable tensor inside the flat weight vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    time_w: usize,
    time_b: usize,
    freq_w: usize,
    freq_b: usize,
    fc1_w: usize,
    fc1_b: usize,
    fc2_w: usize,
    fc2_b: usize,
    total: usize,
}

impl Offsets {
    fn new(s: &NetShape) -> Self {
        let conv = s.channels * s.planes * s.kernel;
        let time_w = 0;
        let time_b = time_w + conv;
        let freq_w = time_b + s.channels;
        let freq_b = freq_w + conv;
        let fc1_w = freq_b + s.channels;
        let fc1_b = fc1_w + s.hidden * s.feature_len();
        let fc2_w = fc1_b + s.hidden;
        let fc2_b = fc2_w + 3 * s.hidden;
        Self {
            time_w,
            time_b,
            freq_w,
            freq_b,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
            total: fc2_b + 3,
        }
    }
}

/// Network weights plus the input and target standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub shape: NetShape,
    pub weights: Vec<f64>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec3,
    pub target_std: Vec3,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    z: Vec<f64>,
    time_pre: Vec<f64>,
    freq_pre: Vec<f64>,
    pub feature: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    /// Raw (standardized-target) network output.
    pub output: Vec3,
}

impl NetParams {
    /// Glorot-uniform weights, zero biases, identity standardization.
    pub fn init(shape: NetShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let o = Offsets::new(&shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![0.0; o.total];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut weights[range] {
                *w = rng.random_range(-limit..limit);
            }
        };
        let (c, p, k, h) = (shape.channels, shape.planes, shape.kernel, shape.hidden);
        fill(o.time_w..o.time_b, p * k, c * k);
        fill(o.freq_w..o.freq_b, p * k, c * k);
        fill(o.fc1_w..o.fc1_b, shape.feature_len(), h);
        fill(o.fc2_w..o.fc2_b, h, 3);
        Ok(Self {
            shape,
            weights,
            input_mean: vec![0.0; p],
            input_std: vec![1.0; p],
            target_mean: [0.0; 3],
            target_std: [1.0; 3],
        })
    }

    pub fn n_weights(&self) -> usize {
        self.weights.len()
    }

    /// Named tensors in storage order.
    pub fn layout(&self) -> Vec<TensorSpec> {
        let s = &self.shape;
        let o = Offsets::new(s);
        let spec = |name, shape: Vec<usize>, offset| {
            let len = shape.iter().product();
            TensorSpec {
                name,
                shape,
                offset,
                len,
            }
        };
        vec![
            spec("time_conv.weight", vec![s.channels, s.planes, 1, s.kernel], o.time_w),
            spec("time_conv.bias", vec![s.channels], o.time_b),
            spec("freq_conv.weight", vec![s.channels, s.planes, s.kernel, 1], o.freq_w),
            spec("freq_conv.bias", vec![s.channels], o.freq_b),
            spec("fc1.weight", vec![s.hidden, s.feature_len()], o.fc1_w),
            spec("fc1.bias", vec![s.hidden], o.fc1_b),
            spec("fc2.weight", vec![3, s.hidden], o.fc2_w),
            spec("fc2.bias", vec![3], o.fc2_b),
        ]
    }

    /// Slice of one named tensor.
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout()
            .into_iter()
            .find(|t| t.name == name)
            .map(|t| &self.weights[t.offset..t.offset + t.len])
    }

    fn check_input(&self, input: &MelInput) -> Result<()> {
        let s = &self.shape;
        if input.planes.len() != s.planes
            || input
                .planes
                .iter()
                .any(|p| p.rows != s.height || p.cols != s.width)
        {
            return Err(Error::Shape(format!(
                "input is {}×{:?}, network expects {}×({}, {})",
                input.planes.len(),
                input.size(),
                s.planes,
                s.height,
                s.width
            )));
        }
        Ok(())
    }

    /// Forward pass with everything needed for [`NetParams::backward`].
    pub fn forward_trace(&self, input: &MelInput) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let s = self.shape;
        let o = Offsets::new(&s);
        let (hh, ww, kk, cc, pp) = (s.height, s.width, s.kernel, s.channels, s.planes);
        let w = &self.weights;

        let mut z = Vec::with_capacity(pp * hh * ww);
        for (p, plane) in input.planes.iter().enumerate() {
            let std = self.input_std[p];
            let mean = self.input_mean[p];
            z.extend(plane.data.iter().map(|v| (v - mean) / std));
        }

        // Time branch: 1×k kernels along columns.
        let tw = ww - kk + 1;
        let mut time_pre = vec![0.0; cc * hh * tw];
        for c in 0..cc {
            let out = &mut time_pre[c * hh * tw..(c + 1) * hh * tw];
            out.fill(w[o.time_b + c]);
            for p in 0..pp {
                for k in 0..kk {
                    let wt = w[o.time_w + (c * pp + p) * kk + k];
                    for r in 0..hh {
                        let src = &z[(p * hh + r) * ww + k..(p * hh + r) * ww + k + tw];
                        let dst = &mut out[r * tw..(r + 1) * tw];
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d += wt * v;
                        }
                    }
                }
            }
        }

        // Frequency branch: k×1 kernels along rows.
        let fh = hh - kk + 1;
        let mut freq_pre = vec![0.0; cc * fh * ww];
        for c in 0..cc {
            let out = &mut freq_pre[c * fh * ww..(c + 1) * fh * ww];
            out.fill(w[o.freq_b + c]);
            for p in 0..pp {
                for k in 0..kk {
                    let wt = w[o.freq_w + (c * pp + p) * kk + k];
                    let src = &z[(p * hh + k) * ww..(p * hh + k + fh) * ww];
                    for (d, v) in out.iter_mut().zip(src) {
                        *d += wt * v;
                    }
                }
            }
        }

        let mut feature = vec![0.0; 2 * cc];
        for c in 0..cc {
            let t = &time_pre[c * hh * tw..(c + 1) * hh * tw];
            feature[c] = t.iter().map(|v| v.max(0.0)).sum::<f64>() / t.len() as f64;
            let f = &freq_pre[c * fh * ww..(c + 1) * fh * ww];
            feature[cc + c] = f.iter().map(|v| v.max(0.0)).sum::<f64>() / f.len() as f64;
        }

        let nf = feature.len();
        let hidden_pre: Vec<f64> = (0..s.hidden)
            .map(|j| {
                let row = &w[o.fc1_w + j * nf..o.fc1_w + (j + 1) * nf];
                w[o.fc1_b + j] + row.iter().zip(&feature).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
        let output = std::array::from_fn(|i| {
            let row = &w[o.fc2_w + i * s.hidden..o.fc2_w + (i + 1) * s.hidden];
            w[o.fc2_b + i] + row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>()
        });
        Ok(ForwardTrace {
            z,
            time_pre,
            freq_pre,
            feature,
            hidden_pre,
            hidden,
            output,
        })
    }

    /// Maps a raw network output to meters.
    pub fn destandardize(&self, output: &Vec3) -> Vec3 {
        std::array::from_fn(|a| output[a] * self.target_std[a] + self.target_mean[a])
    }

    /// Maps a position in meters to the network's output space.
    pub fn standardize_target(&self, p: &Vec3) -> Vec3 {
        std::array::from_fn(|a| (p[a] - self.target_mean[a]) / self.target_std[a])
    }

    /// Predicted position in meters and the concatenated audio feature.
    pub fn forward(&self, input: &MelInput) -> Result<(Vec3, Vec<f64>)> {
        let trace = self.forward_trace(input)?;
        Ok((self.destandardize(&trace.output), trace.feature))
    }

    /// Predicted position in meters.
    pub fn predict(&self, input: &MelInput) -> Result<Vec3> {
        Ok(self.forward(input)?.0)
    }

    /// Accumulates into `grad` the gradient of a scalar objective with
    /// respect to every weight, given `d_output` = ∂objective/∂output.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &Vec3, grad: &mut [f64]) {
        let s = self.shape;
        let o = Offsets::new(&s);
        let (hh, ww, kk, cc, pp) = (s.height, s.width, s.kernel, s.channels, s.planes);
        let w = &self.weights;
        let nf = trace.feature.len();

        let mut d_hidden = vec![0.0; s.hidden];
        for i in 0..3 {
            let g = d_output[i];
            grad[o.fc2_b + i] += g;
            for j in 0..s.hidden {
                grad[o.fc2_w + i * s.hidden + j] += g * trace.hidden[j];
                d_hidden[j] += g * w[o.fc2_w + i * s.hidden + j];
            }
        }

        let mut d_feature = vec![0.0; nf];
        for j in 0..s.hidden {
            if trace.hidden_pre[j] <= 0.0 {
                continue;
            }
            let g = d_hidden[j];
            grad[o.fc1_b + j] += g;
            for f in 0..nf {
                grad[o.fc1_w + j * nf + f] += g * trace.feature[f];
                d_feature[f] += g * w[o.fc1_w + j * nf + f];
            }
        }

        let tw = ww - kk + 1;
        let mut d_pre = vec![0.0; hh * tw];
        for c in 0..cc {
            let pre = &trace.time_pre[c * hh * tw..(c + 1) * hh * tw];
            let scale = d_feature[c] / pre.len() as f64;
            if scale == 0.0 {
                continue;
            }
            for (d, v) in d_pre.iter_mut().zip(pre) {
                *d = if *v > 0.0 { scale } else { 0.0 };
            }
            grad[o.time_b + c] += d_pre.iter().sum::<f64>();
            for p in 0..pp {
                for k in 0..kk {
                    let mut acc = 0.0;
                    for r in 0..hh {
                        let src = &trace.z[(p * hh + r) * ww + k..(p * hh + r) * ww + k + tw];
                        let dp = &d_pre[r * tw..(r + 1) * tw];
                        acc += dp.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grad[o.time_w + (c * pp + p) * kk + k] += acc;
                }
            }
        }

        let fh = hh - kk + 1;
        let mut d_pre = vec![0.0; fh * ww];
        for c in 0..cc {
            let pre = &trace.freq_pre[c * fh * ww..(c + 1) * fh * ww];
            let scale = d_feature[cc + c] / pre.len() as f64;
            if scale == 0.0 {
                continue;
            }
            for (d, v) in d_pre.iter_mut().zip(pre) {
                *d = if *v > 0.0 { scale } else { 0.0 };
            }
            grad[o.freq_b + c] += d_pre.iter().sum::<f64>();
            for p in 0..pp {
                for k in 0..kk {
                    let src = &trace.z[(p * hh + k) * ww..(p * hh + k + fh) * ww];
                    grad[o.freq_w + (c * pp + p) * kk + k] +=
                        d_pre.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
}

/// Deterministic initialization for the standard architecture.
pub fn init_params(cfg: &PipelineConfig, seed: u64) -> Result<NetParams> {
    NetParams::init(NetShape::for_config(cfg), seed)
}
