//! Blended loss, backpropagation over batches, and Adam training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{NetParams, NetShape};
use crate::audio::MelInput;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::types::{TimedPoint3, Trajectory, Vec3};

/// Floor for per-plane and per-axis standard deviations.
const MIN_STD: f64 = 1e-9;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig {
            field: "loss_alpha",
            reason: format!("{alpha} is outside [0, 1]"),
        });
    }
    Ok(())
}

/// `(1-α)·MSE(pred, truth) + α·MSE(pred, pseudo)`, averaged over all
/// elements. `truth` is not read when `α = 1`, `pseudo` not when `α = 0`.
pub fn loss(pred: &[Vec3], truth: Option<&[Vec3]>, pseudo: &[Vec3], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let n = pred.len();
    let mse = |target: &[Vec3]| -> Result<f64> {
        if target.len() != n {
            return Err(Error::Shape(format!(
                "{} targets for {} predictions",
                target.len(),
                n
            )));
        }
        if n == 0 {
            return Ok(0.0);
        }
        let s: f64 = pred
            .iter()
            .zip(target)
            .map(|(p, t)| (0..3).map(|a| (p[a] - t[a]).powi(2)).sum::<f64>())
            .sum();
        Ok(s / (3 * n) as f64)
    };
    let mut total = 0.0;
    if alpha < 1.0 {
        total += (1.0 - alpha) * mse(truth.ok_or(Error::MissingTruth)?)?;
    }
    if alpha > 0.0 {
        total += alpha * mse(pseudo)?;
    }
    Ok(total)
}

/// Clips with their regression targets.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub inputs: Vec<MelInput>,
    pub pseudo: Vec<Vec3>,
    pub truth: Option<Vec<Vec3>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn validate(&self, alpha: f64) -> Result<()> {
        check_alpha(alpha)?;
        if self.pseudo.len() != self.inputs.len() {
            return Err(Error::Shape(format!(
                "{} pseudo labels for {} inputs",
                self.pseudo.len(),
                self.inputs.len()
            )));
        }
        if alpha < 1.0 {
            let truth = self.truth.as_ref().ok_or(Error::MissingTruth)?;
            if truth.len() != self.inputs.len() {
                return Err(Error::Shape(format!(
                    "{} truth positions for {} inputs",
                    truth.len(),
                    self.inputs.len()
                )));
            }
        }
        Ok(())
    }

    fn batch(&self, idx: &[usize], alpha: f64) -> TrainBatch<'_> {
        TrainBatch {
            inputs: idx.iter().map(|&i| &self.inputs[i]).collect(),
            pseudo: idx.iter().map(|&i| self.pseudo[i]).collect(),
            truth: match (&self.truth, alpha < 1.0) {
                (Some(t), true) => Some(idx.iter().map(|&i| t[i]).collect()),
                _ => None,
            },
        }
    }
}

/// One mini-batch. Targets are in meters.
#[derive(Debug, Clone)]
pub struct TrainBatch<'a> {
    pub inputs: Vec<&'a MelInput>,
    pub pseudo: Vec<Vec3>,
    pub truth: Option<Vec<Vec3>>,
}

/// Batch loss in standardized-target units and its gradient with respect
/// to `params.weights`.
pub fn gradients(params: &NetParams, batch: &TrainBatch, alpha: f64) -> Result<(f64, Vec<f64>)> {
    check_alpha(alpha)?;
    let n = batch.inputs.len();
    if batch.pseudo.len() != n {
        return Err(Error::Shape(format!("{} pseudo labels for {n} inputs", batch.pseudo.len())));
    }
    let truth = if alpha < 1.0 {
        let t = batch.truth.as_ref().ok_or(Error::MissingTruth)?;
        if t.len() != n {
            return Err(Error::Shape(format!("{} truth positions for {n} inputs", t.len())));
        }
        Some(t)
    } else {
        None
    };
    let mut grad = vec![0.0; params.n_weights()];
    if n == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / (3 * n) as f64;

    let parts: Vec<Result<(f64, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let trace = params.forward_trace(batch.inputs[i])?;
            let o = trace.output;
            let mut l = 0.0;
            let mut d = [0.0; 3];
            if let Some(t) = truth {
                let t = params.standardize_target(&t[i]);
                for a in 0..3 {
                    let r = o[a] - t[a];
                    l += (1.0 - alpha) * r * r;
                    d[a] += (1.0 - alpha) * r;
                }
            }
            if alpha > 0.0 {
                let t = params.standardize_target(&batch.pseudo[i]);
                for a in 0..3 {
                    let r = o[a] - t[a];
                    l += alpha * r * r;
                    d[a] += alpha * r;
                }
            }
            let d = d.map(|v| 2.0 * scale * v);
            let mut g = vec![0.0; params.n_weights()];
            params.backward(&trace, &d, &mut g);
            Ok((l * scale, g))
        })
        .collect();

    let mut total = 0.0;
    for part in parts {
        let (l, g) = part?;
        total += l;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    Ok((total, grad))
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step(&mut self, weights: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..weights.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            weights[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    /// Mean mini-batch loss per epoch, in standardized-target units.
    pub loss_history: Vec<f64>,
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for v in values {
        n += 1;
        sum += v;
        sq += v * v;
    }
    if n == 0 {
        return (0.0, 1.0);
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    let std = var.sqrt();
    (mean, if std < MIN_STD { 1.0 } else { std })
}

/// Fits standardization statistics to the dataset.
fn fit_standardization(params: &mut NetParams, data: &Dataset, alpha: f64) {
    for p in 0..params.shape.planes {
        let (m, s) = mean_std(
            data.inputs
                .iter()
                .flat_map(|x| x.planes[p].data.iter().copied()),
        );
        params.input_mean[p] = m;
        params.input_std[p] = s;
    }
    // Targets are the per-sample loss minimizers, so ξ is only read when it
    // carries weight.
    let target = |i: usize| -> Vec3 {
        match (&data.truth, alpha < 1.0) {
            (Some(t), true) if alpha > 0.0 => {
                std::array::from_fn(|a| (1.0 - alpha) * t[i][a] + alpha * data.pseudo[i][a])
            }
            (Some(t), true) => t[i],
            _ => data.pseudo[i],
        }
    };
    for a in 0..3 {
        let (m, s) = mean_std((0..data.len()).map(|i| target(i)[a]));
        params.target_mean[a] = m;
        params.target_std[a] = s;
    }
}

/// Trains the standard architecture.
pub fn train(data: &Dataset, cfg: &PipelineConfig, alpha: f64) -> Result<TrainOutcome> {
    let shape = match data.inputs.first() {
        Some(x) => {
            let (h, w) = x.size();
            NetShape {
                height: h,
                width: w,
                ..NetShape::for_config(cfg)
            }
        }
        None => NetShape::for_config(cfg),
    };
    train_with_shape(data, cfg, alpha, shape)
}

/// Trains a network of the given shape with Adam over shuffled mini-batches.
pub fn train_with_shape(
    data: &Dataset,
    cfg: &PipelineConfig,
    alpha: f64,
    shape: NetShape,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    data.validate(alpha)?;
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig {
            field: "batch_size",
            reason: "must be positive".into(),
        });
    }
    let mut params = NetParams::init(shape, cfg.seed)?;
    fit_standardization(&mut params, data, alpha);

    let mut adam = Adam::new(params.n_weights(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = data.batch(idx, alpha);
            let (l, g) = gradients(&params, &batch, alpha)?;
            epoch_loss += l * idx.len() as f64;
            adam.step(&mut params.weights, &g);
        }
        history.push(epoch_loss / data.len() as f64);
    }
    if params.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("trained weights"));
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

/// One prediction per clip, stamped at the clip center.
pub fn predict_trajectory(
    params: &NetParams,
    clips: &[MelInput],
    clip_seconds: f64,
) -> Result<Trajectory> {
    let preds: Vec<Result<Vec3>> = clips.par_iter().map(|c| params.predict(c)).collect();
    let mut points = Vec::with_capacity(clips.len());
    for (c, p) in clips.iter().zip(preds) {
        points.push(TimedPoint3::new(c.start_time + clip_seconds / 2.0, p?));
    }
    Trajectory::new(points)
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_input;
    use super::*;

    fn small_shape() -> NetShape {
        NetShape {
            planes: 4,
            height: 8,
            width: 8,
            channels: 3,
            kernel: 3,
            hidden: 6,
        }
    }

    fn small_data(n: usize, seed: u64) -> Dataset {
        let s = small_shape();
        let inputs: Vec<MelInput> = (0..n)
            .map(|i| {
                let mut x = random_input(&s, seed * 1000 + i as u64);
                x.start_time = i as f64;
                x
            })
            .collect();
        let pseudo = inputs
            .iter()
            .map(|x| {
                let m = |p: usize| x.planes[p].data.iter().sum::<f64>() / 64.0;
                [m(0) - m(1), m(2), 0.5 * m(3)]
            })
            .collect();
        let truth = (0..n).map(|i| [i as f64, 1.0, -2.0]).collect();
        Dataset {
            inputs,
            pseudo,
            truth: Some(truth),
        }
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&[[1.0; 3]], Some(&[[1.0; 3]]), &[[1.0; 3]], 0.5).unwrap(), 0.0);
        let l = loss(&[[1.0; 3]], Some(&[[0.0; 3]]), &[[2.0; 3]], 0.5).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        assert_eq!(loss(&[[1.0; 3]], None, &[[3.0; 3]], 1.0).unwrap(), 4.0);
        assert!(matches!(
            loss(&[[1.0; 3]], None, &[[3.0; 3]], 0.5),
            Err(Error::MissingTruth)
        ));
    }

    #[test]
    fn loss_swap_symmetry() {
        let p = [[0.3, -1.0, 2.0], [1.0, 1.0, 1.0]];
        let a = [[0.0, 0.5, 1.0], [2.0, -1.0, 0.0]];
        let b = [[1.5, 0.0, 0.0], [0.0, 0.0, 4.0]];
        for alpha in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let l1 = loss(&p, Some(&a), &b, alpha).unwrap();
            let l2 = loss(&p, Some(&b), &a, 1.0 - alpha).unwrap();
            assert!((l1 - l2).abs() < 1e-12);
        }
    }

    #[test]
    fn fc2_bias_gradient_closed_form() {
        let data = small_data(5, 1);
        let params = NetParams::init(small_shape(), 2).unwrap();
        let idx: Vec<usize> = (0..5).collect();
        let batch = data.batch(&idx, 1.0);
        let (_, g) = gradients(&params, &batch, 1.0).unwrap();
        let off = params.layout().last().unwrap().offset;
        for a in 0..3 {
            let mean_r: f64 = (0..5)
                .map(|i| params.forward_trace(&data.inputs[i]).unwrap().output[a] - data.pseudo[i][a])
                .sum::<f64>()
                / 5.0;
            let expected = 2.0 * mean_r / 3.0;
            assert!((g[off + a] - expected).abs() < 1e-12, "{} vs {}", g[off + a], expected);
        }
    }

    #[test]
    fn zero_residual_zero_gradient() {
        let data = small_data(3, 4);
        let params = NetParams::init(small_shape(), 5).unwrap();
        let pseudo = data
            .inputs
            .iter()
            .map(|x| params.predict(x).unwrap())
            .collect();
        let batch = TrainBatch {
            inputs: data.inputs.iter().collect(),
            pseudo,
            truth: None,
        };
        let (l, g) = gradients(&params, &batch, 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn alpha_one_ignores_poisoned_truth() {
        let mut data = small_data(6, 2);
        let mut cfg = PipelineConfig::default();
        cfg.epochs = 3;
        cfg.batch_size = 4;
        let clean = train_with_shape(&data, &cfg, 1.0, small_shape()).unwrap();
        data.truth = Some(vec![[f64::NAN; 3]; 6]);
        let poisoned = train_with_shape(&data, &cfg, 1.0, small_shape()).unwrap();
        assert_eq!(clean.params, poisoned.params);
        assert_eq!(clean.loss_history, poisoned.loss_history);
    }

    #[test]
    fn training_is_deterministic() {
        let data = small_data(10, 3);
        let mut cfg = PipelineConfig::default();
        cfg.epochs = 4;
        cfg.batch_size = 3;
        cfg.learning_rate = 1e-2;
        let a = train_with_shape(&data, &cfg, 0.5, small_shape()).unwrap();
        let b = train_with_shape(&data, &cfg, 0.5, small_shape()).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_history.len(), 4);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let data = small_data(7, 6);
        let mut cfg = PipelineConfig::default();
        cfg.epochs = 3;
        cfg.batch_size = 2;
        cfg.learning_rate = 0.0;
        let out = train_with_shape(&data, &cfg, 1.0, small_shape()).unwrap();
        let init = NetParams::init(small_shape(), cfg.seed).unwrap();
        assert_eq!(out.params.weights, init.weights);
        let h = &out.loss_history;
        assert!(h.iter().all(|v| (v - h[0]).abs() <= 1e-12 * h[0].abs().max(1.0)));
    }

    #[test]
    fn empty_dataset_rejected() {
        let cfg = PipelineConfig::default();
        assert!(matches!(
            train(&Dataset::default(), &cfg, 1.0),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn missing_truth_rejected() {
        let mut data = small_data(3, 1);
        data.truth = None;
        let cfg = PipelineConfig::default();
        assert!(matches!(
            train_with_shape(&data, &cfg, 0.5, small_shape()),
            Err(Error::MissingTruth)
        ));
    }

    #[test]
    fn predict_trajectory_stamps_clip_centers() {
        let data = small_data(4, 9);
        let params = NetParams::init(small_shape(), 1).unwrap();
        let t = predict_trajectory(&params, &data.inputs, 2.0).unwrap();
        assert_eq!(t.times(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(predict_trajectory(&params, &[], 2.0).unwrap().is_empty());
    }
}
