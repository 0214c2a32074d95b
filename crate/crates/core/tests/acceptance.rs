//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to
//! see the report; the test fails if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use audiotrack::audio::{AudioClip, MelFrontend, MelInput, Plane};
use audiotrack::eval::{ape, center_distance, error_stats};
use audiotrack::gp::{smooth, GPHyper, GPModel};
use audiotrack::io::{read_scans, read_trajectory, write_scans, write_trajectory};
use audiotrack::net::{gradients, loss, predict_trajectory, read_model, train, write_model, Dataset, NetParams, NetShape, TrainBatch};
use audiotrack::sim::{random_waypoints, synth_audio_range, synth_lidar, SimScene};
use audiotrack::teacher::{dbscan, fit_teacher, generate_pseudo_labels};
use audiotrack::types::centroid;
use audiotrack::{PipelineConfig, ScanCloud, Sensor, TimedPoint3, Trajectory, Vec3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

// Tolerances and limits, one block per criterion.
const DBSCAN_INSTANCES: usize = 120;
const DBSCAN_MAX_N: usize = 300;
const DBSCAN_SECONDS: f64 = 30.0;

const GRAD_H: f64 = 1e-4;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_SECONDS: f64 = 60.0;

const GP_INTERP_TOL: f64 = 1e-8;
const GP_VAR_SLACK: f64 = 1e-9;
const GP_CLOSED_FORM_TOL: f64 = 1e-10;
const GP_SHIFT_TOL: f64 = 1e-9;

const SMOOTH_NOISE_SIGMA: f64 = 0.5;
const SMOOTH_POINTS: usize = 200;
const SMOOTH_MIN_REDUCTION: f64 = 0.30;

const TEACHER_NOISY_MAX: f64 = 0.5;
const TEACHER_CLEAN_MAX: f64 = 0.1;
const TEACHER_SECONDS: f64 = 120.0;

const E2E_TRAIN_CLIPS: usize = 200;
const E2E_TEST_CLIPS: usize = 50;
const E2E_EPOCHS: usize = 30;
const E2E_LEARNING_RATE: f64 = 3e-3;
const E2E_BATCH: usize = 16;
const E2E_GP_LENGTH_SCALE: f64 = 8.0;
const E2E_GP_NOISE_VAR: f64 = 0.02;
const E2E_MIN_BASELINE_RATIO: f64 = 2.0;
const E2E_MAX_SMOOTH_INCREASE: f64 = 0.05;
const E2E_SECONDS: f64 = 600.0;

const LOSS_LINEAR_TOL: f64 = 1e-12;

const METRIC_TOL: f64 = 1e-9;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: f64) -> std::result::Result<(), String> {
    check(
        elapsed.as_secs_f64() < limit,
        format!("took {:.1} s, limit {limit} s", elapsed.as_secs_f64()),
    )
}

fn dbscan_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut r = common::rng(1);
    for case in 0..DBSCAN_INSTANCES {
        let n = r.random_range(1..=DBSCAN_MAX_N);
        let pts = common::random_cloud(&mut r, n);
        let eps = r.random_range(0.2..2.5);
        let min_samples = r.random_range(1..=12);
        if dbscan(&pts, eps, min_samples) != common::brute_dbscan(&pts, eps, min_samples) {
            return Err(format!("instance {case} (n={n}, eps={eps:.3}, min_samples={min_samples}) differs"));
        }
    }
    within(t0.elapsed(), DBSCAN_SECONDS)?;
    Ok(format!("{DBSCAN_INSTANCES} instances match the brute-force oracle"))
}

fn small_net(seed: u64) -> NetParams {
    let shape = NetShape {
        planes: 4,
        height: 8,
        width: 8,
        channels: 3,
        kernel: 3,
        hidden: 6,
    };
    let mut p = NetParams::init(shape, seed).unwrap();
    let mut r = common::rng(seed + 1);
    for w in p.weights.iter_mut() {
        *w += r.random_range(-0.05..0.05);
    }
    p.target_mean = [0.5, -1.0, 2.0];
    p.target_std = [1.5, 0.8, 2.0];
    p
}

fn random_input(shape: &NetShape, r: &mut impl Rng) -> MelInput {
    MelInput {
        planes: (0..shape.planes)
            .map(|_| {
                let mut p = Plane::zeros(shape.height, shape.width);
                p.data.iter_mut().for_each(|v| *v = r.random_range(-2.0..2.0));
                p
            })
            .collect(),
        start_time: 0.0,
    }
}

fn random_vecs(r: &mut impl Rng, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| std::array::from_fn(|_| r.random_range(-3.0..3.0)))
        .collect()
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let p = small_net(5);
    let mut r = common::rng(6);
    let inputs: Vec<MelInput> = (0..3).map(|_| random_input(&p.shape, &mut r)).collect();
    let mut worst: f64 = 0.0;
    for alpha in [1.0, 0.0, 0.4] {
        let batch = TrainBatch {
            inputs: inputs.iter().collect(),
            pseudo: random_vecs(&mut r, 3),
            truth: Some(random_vecs(&mut r, 3)),
        };
        let (_, g) = gradients(&p, &batch, alpha).unwrap();
        for i in 0..p.n_weights() {
            let mut q = p.clone();
            q.weights[i] = p.weights[i] + GRAD_H;
            let lp = gradients(&q, &batch, alpha).unwrap().0;
            q.weights[i] = p.weights[i] - GRAD_H;
            let lm = gradients(&q, &batch, alpha).unwrap().0;
            let num = (lp - lm) / (2.0 * GRAD_H);
            worst = worst.max((g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-6));
        }
    }
    within(t0.elapsed(), GRAD_SECONDS)?;
    check(worst <= GRAD_REL_TOL, format!("worst relative error {worst:.2e}"))?;
    Ok(format!("{} weights x 3 alphas, worst relative error {worst:.2e}", p.n_weights()))
}

fn gp_identities() -> Outcome {
    let mut r = common::rng(3);
    let (mut interp, mut var_excess, mut closed, mut shift) = (0.0f64, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for _ in 0..40 {
        let n = r.random_range(2..20);
        let mut t = 0.0;
        let times: Vec<f64> = (0..n)
            .map(|_| {
                t += r.random_range(0.3..2.0);
                t
            })
            .collect();
        let ys = random_vecs(&mut r, n);
        let sf: f64 = r.random_range(0.2..3.0);
        let l: f64 = r.random_range(0.3..3.0);

        let exact = GPModel::fit_samples(&times, &ys, GPHyper::new(l.min(0.8), sf, 0.0).unwrap()).unwrap();
        for (ti, yi) in times.iter().zip(&ys) {
            let (m, _) = exact.predict(*ti);
            interp = interp.max((0..3).map(|a| (m[a] - yi[a]).abs()).fold(0.0, f64::max));
        }

        let h = GPHyper::new(l, sf, r.random_range(0.01..1.0)).unwrap();
        let m = GPModel::fit_samples(&times, &ys, h).unwrap();
        let off = r.random_range(-100.0..100.0);
        let shifted: Vec<f64> = times.iter().map(|t| t + off).collect();
        let ms = GPModel::fit_samples(&shifted, &ys, h).unwrap();
        for _ in 0..10 {
            let q = r.random_range(-5.0..t + 5.0);
            let (mu, v) = m.predict(q);
            var_excess = var_excess.max(v - h.signal_var);
            let (mu2, v2) = ms.predict(q + off);
            shift = shift.max((v - v2).abs());
            for a in 0..3 {
                shift = shift.max((mu[a] - mu2[a]).abs());
            }
        }

        // Two-point model against the hand-inverted 2x2 system.
        let k = |a: f64, b: f64| sf * (-(a - b).powi(2) / (2.0 * l * l)).exp();
        let (t1, t2) = (times[0], times[1]);
        let (y1, y2) = (ys[0][0], ys[1][0]);
        let two = GPModel::fit_samples(&[t1, t2], &[ys[0], ys[1]], h).unwrap();
        let (a, b, d) = (k(t1, t1) + h.noise_var, k(t1, t2), k(t2, t2) + h.noise_var);
        let det = a * d - b * b;
        for _ in 0..5 {
            let q = r.random_range(t1 - 3.0..t2 + 3.0);
            let (k1, k2) = (k(q, t1), k(q, t2));
            let w1 = (k1 * d - k2 * b) / det;
            let w2 = (k2 * a - k1 * b) / det;
            let (mu, v) = two.predict(q);
            closed = closed.max((mu[0] - (w1 * y1 + w2 * y2)).abs());
            closed = closed.max((v - (sf - w1 * k1 - w2 * k2).max(0.0)).abs());
        }
    }
    check(interp <= GP_INTERP_TOL, format!("(a) interpolation error {interp:.2e}"))?;
    check(var_excess <= GP_VAR_SLACK, format!("(b) variance exceeds signal variance by {var_excess:.2e}"))?;
    check(closed <= GP_CLOSED_FORM_TOL, format!("(c) closed-form error {closed:.2e}"))?;
    check(shift <= GP_SHIFT_TOL, format!("(d) time-shift error {shift:.2e}"))?;
    Ok(format!(
        "interp {interp:.1e}, var excess {var_excess:.1e}, closed form {closed:.1e}, shift {shift:.1e}"
    ))
}

fn gp_smoothing_benefit() -> Outcome {
    let hyper = GPHyper::from(&PipelineConfig::default());
    let mut r = common::rng(4);
    let noise = Normal::new(0.0, SMOOTH_NOISE_SIGMA).unwrap();
    let times: Vec<f64> = (0..SMOOTH_POINTS).map(|i| i as f64 * 2.0).collect();
    let clean: Vec<Vec3> = times.iter().map(|t| [-4.0 + 0.02 * t, 10.0 - 0.05 * t, 5.0 + 0.01 * t]).collect();
    let noisy: Vec<Vec3> = clean
        .iter()
        .map(|p| std::array::from_fn(|a| p[a] + noise.sample(&mut r)))
        .collect();
    let clean_t = Trajectory::from_parts(&times, &clean).unwrap();
    let noisy_t = Trajectory::from_parts(&times, &noisy).unwrap();
    let before = ape(&noisy_t, &clean_t).unwrap();
    let sm = smooth(&noisy_t, hyper, None).unwrap();
    let after = ape(&sm.trajectory, &clean_t).unwrap();
    let reduction = 1.0 - after / before;
    check(
        reduction >= SMOOTH_MIN_REDUCTION,
        format!("RMSE {before:.3} -> {after:.3} m, reduction {:.1}%", 100.0 * reduction),
    )?;
    Ok(format!(
        "RMSE {before:.3} -> {after:.3} m ({:.1}% lower; l={} s, noise var {})",
        100.0 * reduction,
        hyper.length_scale,
        hyper.noise_var
    ))
}

fn teacher_ape(scene: &SimScene) -> f64 {
    let (pano, con) = synth_lidar(scene).unwrap();
    let times: Vec<f64> = pano.iter().map(|s| s.stamp).collect();
    let labels = generate_pseudo_labels(&pano, &con, &PipelineConfig::default(), &times).unwrap();
    let path = scene.path().unwrap();
    let truth = Trajectory::from_parts(&times, &times.iter().map(|&t| path.position(t)).collect::<Vec<_>>()).unwrap();
    ape(&labels, &truth).unwrap()
}

fn teacher_quality() -> Outcome {
    let t0 = Instant::now();
    let noisy = SimScene {
        seed: 5,
        ..SimScene::default()
    };
    let mut clean = noisy.clone();
    clean.lidar.background.clear();
    clean.lidar.clutter_rate = 0.0;
    clean.lidar.point_noise_sigma = 0.0;
    let e_noisy = teacher_ape(&noisy);
    let e_clean = teacher_ape(&clean);
    within(t0.elapsed(), TEACHER_SECONDS)?;
    check(e_noisy <= TEACHER_NOISY_MAX, format!("noisy APE {e_noisy:.4} m"))?;
    check(e_clean <= TEACHER_CLEAN_MAX, format!("noiseless APE {e_clean:.4} m"))?;
    Ok(format!("APE {e_noisy:.4} m (sigma 0.05, background + clutter), {e_clean:.5} m noiseless"))
}

fn e2e_scene(seed: u64, clips: usize, cfg: &PipelineConfig) -> SimScene {
    let duration = clips as f64 * cfg.clip_seconds;
    let n = (duration / 10.0) as usize + 1;
    SimScene {
        waypoints: random_waypoints(n, duration, [-4.0, -13.0, 4.0], [4.0, 13.0, 20.0], seed),
        seed,
        ..SimScene::default()
    }
}

fn e2e_inputs(scene: &SimScene, cfg: &PipelineConfig, clips: usize) -> Vec<MelInput> {
    let fe = MelFrontend::new(cfg);
    let n = cfg.clip_samples();
    (0..clips)
        .into_par_iter()
        .map(|i| {
            let channels = synth_audio_range(scene, i * n, n).unwrap();
            let clip = AudioClip {
                channels,
                sample_rate: cfg.sample_rate,
                start_time: scene.start_time() + i as f64 * cfg.clip_seconds,
            };
            fe.make_input(&clip).unwrap()
        })
        .collect()
}

fn self_supervised_end_to_end() -> Outcome {
    let t0 = Instant::now();
    let cfg = PipelineConfig {
        epochs: E2E_EPOCHS,
        learning_rate: E2E_LEARNING_RATE,
        batch_size: E2E_BATCH,
        gp_length_scale: E2E_GP_LENGTH_SCALE,
        gp_noise_var: E2E_GP_NOISE_VAR,
        loss_alpha: 1.0,
        ..PipelineConfig::default()
    };
    let train_scene = e2e_scene(1, E2E_TRAIN_CLIPS, &cfg);
    let (pano, con) = synth_lidar(&train_scene).unwrap();
    let teacher = fit_teacher(&pano, &con, &cfg).unwrap();
    let inputs = e2e_inputs(&train_scene, &cfg, E2E_TRAIN_CLIPS);
    let centers: Vec<f64> = inputs.iter().map(|x| x.start_time + cfg.clip_seconds / 2.0).collect();
    let pseudo = teacher.sample(&centers).unwrap().positions();
    let data = Dataset {
        inputs,
        pseudo,
        truth: None,
    };
    let out = train(&data, &cfg, 1.0).unwrap();

    let test_scene = e2e_scene(2, E2E_TEST_CLIPS, &cfg);
    let test_inputs = e2e_inputs(&test_scene, &cfg, E2E_TEST_CLIPS);
    let pred = predict_trajectory(&out.params, &test_inputs, cfg.clip_seconds).unwrap();
    let path = test_scene.path().unwrap();
    let times = pred.times();
    let truth = Trajectory::new(times.iter().map(|&t| TimedPoint3::new(t, path.position(t))).collect()).unwrap();
    let mean = centroid(&truth.positions()).unwrap();
    let baseline = Trajectory::from_parts(&times, &vec![mean; times.len()]).unwrap();
    let e = ape(&pred, &truth).unwrap();
    let e_base = ape(&baseline, &truth).unwrap();
    let smoothed = smooth(&pred, GPHyper::from(&cfg), None).unwrap();
    let e_smooth = ape(&smoothed.trajectory, &truth).unwrap();
    let ratio = e_base / e;
    let first = out.loss_history.first().copied().unwrap_or(f64::NAN);
    let last = out.loss_history.last().copied().unwrap_or(f64::NAN);
    let summary = format!(
        "APE {e:.3} m vs baseline {e_base:.3} m (x{ratio:.2}); smoothed {e_smooth:.3} m; loss {first:.3} -> {last:.3}"
    );
    within(t0.elapsed(), E2E_SECONDS)?;
    check(ratio >= E2E_MIN_BASELINE_RATIO, summary.clone())?;
    check(e_smooth <= e * (1.0 + E2E_MAX_SMOOTH_INCREASE), summary.clone())?;
    Ok(summary)
}

fn loss_algebra() -> Outcome {
    let mut r = common::rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(1..20);
        let pred = random_vecs(&mut r, n);
        let truth = random_vecs(&mut r, n);
        let pseudo = random_vecs(&mut r, n);
        let poison = vec![[f64::NAN, f64::INFINITY, -1e308]; n];
        check(
            loss(&pred, Some(&poison), &pseudo, 1.0).unwrap() == loss(&pred, None, &pseudo, 1.0).unwrap(),
            "alpha = 1 reads the truth",
        )?;
        check(
            loss(&pred, Some(&truth), &poison, 0.0).unwrap() == loss(&pred, Some(&truth), &pseudo, 0.0).unwrap(),
            "alpha = 0 reads the pseudo-labels",
        )?;
        let l0 = loss(&pred, Some(&truth), &pseudo, 0.0).unwrap();
        let l1 = loss(&pred, Some(&truth), &pseudo, 1.0).unwrap();
        let a = r.random_range(0.0..1.0);
        let la = loss(&pred, Some(&truth), &pseudo, a).unwrap();
        worst = worst.max((la - ((1.0 - a) * l0 + a * l1)).abs());
    }
    check(worst <= LOSS_LINEAR_TOL, format!("collinearity error {worst:.2e}"))?;
    Ok(format!("poisoned inputs ignored; collinearity error {worst:.1e}"))
}

fn traj(points: &[Vec3]) -> Trajectory {
    let times: Vec<f64> = (0..points.len()).map(|i| i as f64).collect();
    Trajectory::from_parts(&times, points).unwrap()
}

fn metric_correctness() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= METRIC_TOL;
    let d = center_distance(&traj(&[[0.0; 3], [2.0, 0.0, 0.0]]), &traj(&[[1.0, 0.0, 0.0]; 2])).unwrap();
    check(close(d[0], 1.0) && close(d[1], 0.0) && close(d[2], 0.0), format!("center_distance {d:?}"))?;
    let r = traj(&[[1.0, 2.0, 3.0], [4.0, -1.0, 0.5]]);
    let shifted = r.translated(&[1.0, 0.0, 0.0]);
    check(center_distance(&r, &r).unwrap() == [0.0; 3], "center_distance of identical tracks")?;
    check(close(center_distance(&shifted, &r).unwrap()[0], 1.0), "center_distance of offset track")?;
    check(ape(&r, &r).unwrap() == 0.0 && close(ape(&shifted, &r).unwrap(), 1.0), "ape trivial cases")?;
    let two = traj(&[[1.0, 0.0, 0.0], [0.0, 3.0, 0.0]]);
    let zero = traj(&[[0.0; 3]; 2]);
    check(close(ape(&two, &zero).unwrap(), 5f64.sqrt()), "ape of norms 1 and 3")?;
    let (m, s) = error_stats(&two, &zero).unwrap();
    check(close(m, 2.0) && close(s, 1.0), format!("error_stats ({m}, {s})"))?;
    let (m, s) = error_stats(&r.translated(&[0.0, 0.0, 2.0]), &r).unwrap();
    check(close(m, 2.0) && close(s, 0.0), "error_stats of offset track")?;

    let mut rng = common::rng(8);
    for _ in 0..500 {
        let n = rng.random_range(1..50);
        let a = traj(&(0..n).map(|_| std::array::from_fn(|_| rng.random_range(-50.0..50.0))).collect::<Vec<_>>());
        let b = traj(&(0..n).map(|_| std::array::from_fn(|_| rng.random_range(-50.0..50.0))).collect::<Vec<_>>());
        let off: Vec3 = std::array::from_fn(|_| rng.random_range(-100.0..100.0));
        let e = ape(&a, &b).unwrap();
        check((e - ape(&b, &a).unwrap()).abs() <= 1e-12, "ape symmetry")?;
        check((e - ape(&a.translated(&off), &b.translated(&off)).unwrap()).abs() <= METRIC_TOL, "ape translation")?;
    }
    Ok("module examples exact to 1e-9; symmetry and translation hold on 500 fuzzed pairs".into())
}

fn format_round_trips() -> Outcome {
    let mut r = common::rng(9);
    let mut t = 0.0;
    let points: Vec<TimedPoint3> = (0..100)
        .map(|_| {
            t += r.random_range(0.01..1.0);
            TimedPoint3::new(t, std::array::from_fn(|_| r.random_range(-1e3..1e3)))
        })
        .collect();
    let traj = Trajectory::new(points).unwrap();
    let var: Vec<f64> = (0..100).map(|_| r.random_range(0.0..2.0)).collect();
    let mut a = Vec::new();
    write_trajectory(&mut a, &traj, Some(&var)).unwrap();
    let (back, back_var) = read_trajectory(a.as_slice()).unwrap();
    let mut b = Vec::new();
    write_trajectory(&mut b, &back, back_var.as_deref()).unwrap();
    check(back == traj && back_var.as_deref() == Some(&var[..]) && a == b, "trajectory CSV")?;

    let scans: Vec<ScanCloud> = (0..20)
        .map(|k| {
            let sensor = if k % 2 == 0 { Sensor::Panoramic } else { Sensor::Conical };
            let pts = (0..r.random_range(1..30))
                .map(|_| std::array::from_fn(|_| r.random_range(-30.0..30.0)))
                .collect();
            ScanCloud::new(sensor, (k / 2) as f64 * 0.1, pts).unwrap()
        })
        .collect();
    let mut a = Vec::new();
    write_scans(&mut a, &scans).unwrap();
    let back = read_scans(a.as_slice()).unwrap();
    let mut b = Vec::new();
    write_scans(&mut b, &back).unwrap();
    check(back == scans && a == b, "scan CSV")?;

    let scene = SimScene {
        seed: 77,
        ..SimScene::default()
    };
    let text = scene.to_json();
    let back = SimScene::from_json(&text).unwrap();
    check(back == scene && back.to_json() == text, "scene JSON")?;

    let mut p = small_net(10);
    for w in p.weights.iter_mut() {
        *w = *w as f32 as f64;
    }
    let mut a = Vec::new();
    write_model(&mut a, &p, "fp").unwrap();
    let (back, _) = read_model(a.as_slice(), Some("fp")).unwrap();
    let mut b = Vec::new();
    write_model(&mut b, &back, "fp").unwrap();
    let bits_equal = back.weights.iter().zip(&p.weights).all(|(x, y)| x.to_bits() == y.to_bits());
    check(bits_equal && a == b, "model binary")?;
    Ok("trajectory CSV, scan CSV, scene JSON and model binary reproduce byte for byte".into())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("DBSCAN oracle equivalence", dbscan_oracle),
        ("gradient correctness", gradient_check),
        ("GP identities", gp_identities),
        ("GP smoothing benefit", gp_smoothing_benefit),
        ("teacher quality", teacher_quality),
        ("self-supervised end-to-end", self_supervised_end_to_end),
        ("loss algebra", loss_algebra),
        ("metric correctness", metric_correctness),
        ("format round-trips", format_round_trips),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[{}] PASS {name}: {detail} ({secs:.1} s)", i + 1),
            Err(detail) => {
                println!("[{}] FAIL {name}: {detail} ({secs:.1} s)", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
