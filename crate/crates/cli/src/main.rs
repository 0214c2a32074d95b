mod manifest;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use audiotrack::audio::{segment, MelFrontend, MelInput};
use audiotrack::eval::{evaluate, point_errors};
use audiotrack::gp::{smooth, GPHyper};
use audiotrack::io::{load_scans, load_trajectory, load_wav, save_scans, save_trajectory, save_wav};
use audiotrack::net::{load_model, predict_trajectory, save_model, train, Dataset};
use audiotrack::sim::{synth_audio, synth_lidar, SimScene};
use audiotrack::teacher::{fit_teacher, split_by_sensor};
use audiotrack::{PipelineConfig, Trajectory, Vec3};

use manifest::{display, manifest_path, RunManifest};

#[derive(Parser)]
#[command(name = "audiotrack", version, about = "UAV trajectory estimation from microphone-array audio")]
struct Cli {
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path: a directory for `simulate`, a file otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene to audio, LiDAR scans, and ground truth.
    Simulate {
        /// Scene description (JSON). The built-in default scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Run the LiDAR teacher over a directory of scan CSVs.
    Pseudolabel {
        #[arg(long)]
        scans: PathBuf,
    },
    /// Train the audio network on labelled clips.
    Train {
        #[arg(long)]
        wav: PathBuf,
        /// Pseudo-label trajectory CSV.
        #[arg(long)]
        labels: PathBuf,
        /// Ground-truth trajectory CSV; required when loss_alpha < 1.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Time of the first audio sample, in the label time base.
        #[arg(long, default_value_t = 0.0)]
        start_time: f64,
    },
    /// Predict a trajectory from audio.
    Infer {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Smooth the prediction with the configured Gaussian Process and
        /// write its variance as a fifth column.
        #[arg(long)]
        smooth: bool,
        #[arg(long, default_value_t = 0.0)]
        start_time: f64,
    },
    /// Compare a predicted trajectory with a reference.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Also write an SVG figure.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Pseudolabel { .. } => "pseudolabel",
            Command::Train { .. } => "train",
            Command::Infer { .. } => "infer",
            Command::Eval { .. } => "eval",
        }
    }
}

struct Run {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: u64,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg.validate()?)
}

fn clips_from_wav(path: &Path, start: f64, cfg: &PipelineConfig) -> Result<Vec<MelInput>> {
    let wave = load_wav(path)?;
    let clips = segment(&wave, start, cfg).with_context(|| format!("{}", path.display()))?;
    Ok(MelFrontend::new(cfg).make_inputs(&clips)?)
}

/// For each clip center, the label nearest in time; labels further than
/// `half_window` away leave the clip uncovered.
fn associate(labels: &Trajectory, centers: &[f64], half_window: f64, what: &str) -> Result<Vec<Vec3>> {
    let pts = labels.points();
    let mut out = Vec::with_capacity(centers.len());
    let mut gaps = Vec::new();
    for (i, &c) in centers.iter().enumerate() {
        let k = pts.partition_point(|p| p.t < c);
        let best = [k.checked_sub(1), (k < pts.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (pts[a].t - c).abs().total_cmp(&(pts[b].t - c).abs()));
        match best {
            Some(j) if (pts[j].t - c).abs() <= half_window + 1e-9 => out.push(pts[j].p),
            _ => gaps.push(format!("#{i} (t={c})")),
        }
    }
    if !gaps.is_empty() {
        bail!(
            "{what} do not cover {} clip(s): {}",
            gaps.len(),
            gaps.join(", ")
        );
    }
    Ok(out)
}

fn require_out(cli: &Cli) -> Result<PathBuf> {
    cli.out.clone().ok_or_else(|| anyhow!("--out is required"))
}

fn cmd_simulate(cli: &Cli, scene_path: Option<&Path>) -> Result<Run> {
    let out = require_out(cli)?;
    let mut scene = match scene_path {
        Some(p) => SimScene::load(p)?,
        None => SimScene::default(),
    };
    if let Some(seed) = cli.seed {
        scene.seed = seed;
    }
    std::fs::create_dir_all(out.join("scans")).with_context(|| format!("creating {}", out.display()))?;
    let wav = out.join("audio.wav");
    let scans = out.join("scans").join("scans.csv");
    let truth = out.join("ground_truth.csv");
    let scene_copy = out.join("scene.json");

    save_wav(&wav, &synth_audio(&scene)?)?;
    let (panoramic, conical) = synth_lidar(&scene)?;
    let mut all = panoramic;
    all.extend(conical);
    save_scans(&scans, &all)?;
    save_trajectory(&truth, &scene.trajectory()?, None)?;
    scene.save(&scene_copy)?;
    Ok(Run {
        inputs: scene_path.map(Path::to_path_buf).into_iter().collect(),
        outputs: vec![wav, scans, truth, scene_copy],
        seed: scene.seed,
    })
}

fn cmd_pseudolabel(cli: &Cli, cfg: &PipelineConfig, dir: &Path) -> Result<Run> {
    let out = require_out(cli)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut scans = Vec::new();
    for f in &files {
        scans.extend(load_scans(f)?);
    }
    let (panoramic, conical) = split_by_sensor(&scans);
    let fit = fit_teacher(&panoramic, &conical, cfg)?;
    let mut stamps: Vec<f64> = panoramic.iter().map(|s| s.stamp).collect();
    stamps.sort_by(f64::total_cmp);
    stamps.dedup();
    let labels = fit.sample(&stamps).map_err(|e| e.in_stage("sampling"))?;
    save_trajectory(&out, &labels, None)?;
    Ok(Run {
        inputs: files,
        outputs: vec![out],
        seed: cfg.seed,
    })
}

fn cmd_train(
    cli: &Cli,
    cfg: &PipelineConfig,
    wav: &Path,
    labels: &Path,
    truth: Option<&Path>,
    start: f64,
) -> Result<Run> {
    let out = require_out(cli)?;
    let alpha = cfg.loss_alpha;
    if alpha < 1.0 && truth.is_none() {
        bail!("loss_alpha = {alpha} blends in ground truth, but no --truth file was given");
    }
    let inputs = clips_from_wav(wav, start, cfg)?;
    let centers: Vec<f64> = inputs
        .iter()
        .map(|c| c.start_time + cfg.clip_seconds / 2.0)
        .collect();
    let half = cfg.clip_seconds / 2.0;
    let (label_traj, _) = load_trajectory(labels)?;
    let pseudo = associate(&label_traj, &centers, half, "pseudo labels")?;
    let mut input_files = vec![wav.to_path_buf(), labels.to_path_buf()];
    // Ground truth is only opened when it carries weight in the loss.
    let truth_pos = match truth {
        Some(p) if alpha < 1.0 => {
            input_files.push(p.to_path_buf());
            let (t, _) = load_trajectory(p)?;
            Some(associate(&t, &centers, half, "ground truth")?)
        }
        _ => None,
    };
    let data = Dataset {
        inputs,
        pseudo,
        truth: truth_pos,
    };
    let outcome = train(&data, cfg, alpha)?;
    save_model(&out, &outcome.params, &cfg.frontend_fingerprint())?;
    let mut log_name = out.as_os_str().to_owned();
    log_name.push(".loss.csv");
    let log_path = PathBuf::from(log_name);
    let mut log = String::from("epoch,loss\n");
    for (i, l) in outcome.loss_history.iter().enumerate() {
        log.push_str(&format!("{},{}\n", i + 1, l));
    }
    std::fs::write(&log_path, log).with_context(|| format!("writing {}", log_path.display()))?;
    Ok(Run {
        inputs: input_files,
        outputs: vec![out, log_path],
        seed: cfg.seed,
    })
}

fn cmd_infer(cli: &Cli, cfg: &PipelineConfig, wav: &Path, model: &Path, do_smooth: bool, start: f64) -> Result<Run> {
    let out = require_out(cli)?;
    let (params, _) = load_model(model, Some(&cfg.frontend_fingerprint()))?;
    let inputs = clips_from_wav(wav, start, cfg)?;
    let pred = predict_trajectory(&params, &inputs, cfg.clip_seconds)?;
    if do_smooth {
        let hyper = GPHyper::from(cfg);
        hyper.validate()?;
        let s = smooth(&pred, hyper, None)?;
        save_trajectory(&out, &s.trajectory, Some(&s.variance))?;
    } else {
        save_trajectory(&out, &pred, None)?;
    }
    Ok(Run {
        inputs: vec![wav.to_path_buf(), model.to_path_buf()],
        outputs: vec![out],
        seed: cfg.seed,
    })
}

fn cmd_eval(cli: &Cli, cfg: &PipelineConfig, pred: &Path, reference: &Path, plot_path: Option<&Path>) -> Result<Run> {
    let out = require_out(cli)?;
    let (p, _) = load_trajectory(pred)?;
    let (r, _) = load_trajectory(reference)?;
    let report = evaluate(&p, &r)?;
    std::fs::write(&out, report.to_json() + "\n").with_context(|| format!("writing {}", out.display()))?;
    print!("{}", report.to_table());
    let mut outputs = vec![out];
    if let Some(svg_path) = plot_path {
        let svg = plot::render(&p, &r, &point_errors(&p, &r)?);
        std::fs::write(svg_path, svg).with_context(|| format!("writing {}", svg_path.display()))?;
        outputs.push(svg_path.to_path_buf());
    }
    Ok(Run {
        inputs: vec![pred.to_path_buf(), reference.to_path_buf()],
        outputs,
        seed: cfg.seed,
    })
}

fn run(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let cfg = load_config(cli)?;
    let name = cli.command.name();
    let result = match &cli.command {
        Command::Simulate { scene } => cmd_simulate(cli, scene.as_deref()),
        Command::Pseudolabel { scans } => cmd_pseudolabel(cli, &cfg, scans),
        Command::Train {
            wav,
            labels,
            truth,
            start_time,
        } => cmd_train(cli, &cfg, wav, labels, truth.as_deref(), *start_time),
        Command::Infer {
            wav,
            model,
            smooth,
            start_time,
        } => cmd_infer(cli, &cfg, wav, model, *smooth, *start_time),
        Command::Eval {
            pred,
            reference,
            plot,
        } => cmd_eval(cli, &cfg, pred, reference, plot.as_deref()),
    };
    let run = result.with_context(|| name.to_string())?;
    let out = require_out(cli)?;
    let mut inputs = run.inputs;
    if let Some(c) = &cli.config {
        inputs.insert(0, c.clone());
    }
    let manifest = RunManifest {
        command: name.into(),
        config_fingerprint: cfg.fingerprint(),
        inputs: display(&inputs),
        outputs: display(&run.outputs),
        seed: run.seed,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let path = manifest_path(&out, matches!(cli.command, Command::Simulate { .. }));
    manifest
        .save(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// The error chain on one line. Library errors already embed their
/// sources in their message, so a cause repeated verbatim is dropped.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if parts.last().is_some_and(|prev| prev.ends_with(&msg)) {
            continue;
        }
        parts.push(msg);
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
