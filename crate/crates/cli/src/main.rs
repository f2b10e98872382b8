use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use evdeblur_core::dataset::{dataset_stats, load_dataset, synth_dataset, Dataset, SynthConfig};
use evdeblur_core::edi::{edi_deblur, EdiRequest, DEFAULT_BINS};
use evdeblur_core::events::read_events;
use evdeblur_core::image::{read_image, write_image};
use evdeblur_core::trainer::{
    checkpoint_dir, evaluate, load_checkpoint, mean_pose_error, Checkpoint, EvalReport, Trainer,
};
use evdeblur_core::{render, Pose};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::Serialize;

mod config;

#[derive(Parser)]
#[command(name = "evdeblur", version, about = "Event-aided deblurring of Gaussian-splat scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Deblur one image with its events (event-based double integral).
    Edi(EdiArgs),
    /// Train a scene and trajectories on a dataset.
    Train(TrainArgs),
    /// Render a sharp view from a checkpoint.
    Render(RenderArgs),
    /// Score a checkpoint against the dataset's evaluation views.
    Eval(EvalArgs),
    /// Print dataset statistics.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    views: usize,
    #[arg(long, default_value_t = 4)]
    eval_views: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 200)]
    gaussians: usize,
    /// Rotation swept per exposure, degrees.
    #[arg(long)]
    shake_deg: Option<f64>,
    /// Translation swept per exposure, fraction of the scene extent.
    #[arg(long)]
    shake_translation: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Also store every dense frame under gt/frames_####.
    #[arg(long)]
    keep_frames: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EdiArgs {
    /// Blurred image (.pfm or .png).
    #[arg(long)]
    blur: PathBuf,
    /// Event file (.evt binary or .csv).
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    t_start: f64,
    #[arg(long)]
    t_end: f64,
    /// `mid` or a time in seconds.
    #[arg(long, default_value = "mid")]
    t_ref: String,
    #[arg(long, default_value_t = 0.2)]
    theta: f64,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Overrides `iterations` from the config file.
    #[arg(long)]
    iters: Option<usize>,
    /// Overrides `seed` from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat TOML file with TrainConfig / EventConfig keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoints and `train_log.jsonl` are written here.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Checkpoint directory, or a training output directory (latest checkpoint is used).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset supplying the camera intrinsics and named poses.
    #[arg(long)]
    data: PathBuf,
    /// World-to-camera pose `qw,qx,qy,qz,tx,ty,tz`.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["eval_view", "view"])]
    pose: Option<String>,
    /// Index of a dataset evaluation view.
    #[arg(long, conflicts_with = "view")]
    eval_view: Option<usize>,
    /// Index of a training view; renders the mid-exposure pose of its refined trajectory.
    #[arg(long)]
    view: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Write the JSON report here (`-` for stdout).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    data: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Edi(a) => edi(a),
        Command::Train(a) => train(a),
        Command::Render(a) => render_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig {
        seed: a.seed,
        views: a.views,
        eval_views: a.eval_views,
        width: a.width,
        height: a.height,
        gaussians: a.gaussians,
        keep_frames: a.keep_frames,
        ..Default::default()
    };
    if let Some(v) = a.shake_deg {
        cfg.shake_rotation_deg = v;
    }
    if let Some(v) = a.shake_translation {
        cfg.shake_translation = v;
    }
    if let Some(v) = a.theta {
        cfg.theta = v;
    }
    let manifest = synth_dataset(&cfg, &a.out)?;
    println!(
        "wrote {} views and {} eval views to {}",
        manifest.observations.len(),
        manifest.eval_views.len(),
        a.out.display()
    );
    Ok(())
}

fn edi(a: EdiArgs) -> Result<()> {
    let blurred = read_image(&a.blur)?;
    let events = read_events(&a.events)?;
    let t_ref = match a.t_ref.as_str() {
        "mid" => 0.5 * (a.t_start + a.t_end),
        s => s.parse().map_err(|_| anyhow!("--t-ref must be `mid` or a number, got `{s}`"))?,
    };
    let out = edi_deblur(&EdiRequest {
        blurred: &blurred,
        events: &events,
        t_start: a.t_start,
        t_end: a.t_end,
        t_ref,
        theta: a.theta,
        bins: a.bins,
    })?;
    write_image(&a.out, &out)?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let file = match &a.config {
        Some(p) => config::load(p)?,
        None => config::FileConfig::default(),
    };
    let mut cfg = file.train.clone();
    if !file.sets("n_latent") {
        cfg.n_latent = ds.manifest.n_latent;
    }
    if let Some(n) = a.iters {
        cfg.iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let events = file.events_over(ds.manifest.events);
    let scene = ds.initial_scene()?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let log_path = a.out.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let mut trainer = Trainer::new(scene, ds.observations.clone(), cfg, events)?;
    trainer.run(&mut log, Some(&a.out))?;
    log.flush()?;
    let last = checkpoint_dir(&a.out, trainer.iteration);
    if !last.exists() {
        trainer.save_checkpoint(&last)?;
    }
    println!("checkpoint {}", last.display());
    if !ds.eval_views.is_empty() {
        let report = evaluate(&trainer.scene, &ds.eval_views, ds.intrinsics())?;
        println!("mean eval PSNR {:.3} dB, SSIM {:.4}", report.mean_psnr, report.mean_ssim);
    }
    Ok(())
}

/// Accepts a checkpoint directory or a directory of `iter_######` checkpoints.
fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    if path.join("scene.json").exists() {
        return Ok(path.to_path_buf());
    }
    let entries = fs::read_dir(path).with_context(|| format!("reading {}", path.display()))?;
    let mut best: Option<(usize, PathBuf)> = None;
    for e in entries {
        let e = e?;
        let name = e.file_name();
        let Some(n) = name.to_str().and_then(|s| s.strip_prefix("iter_")).and_then(|s| s.parse().ok()) else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| n > *b) {
            best = Some((n, e.path()));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| anyhow!("{} holds no checkpoint", path.display()))
}

fn load_for(checkpoint: &Path, ds: &Dataset) -> Result<Checkpoint> {
    let dir = resolve_checkpoint(checkpoint)?;
    let ck = load_checkpoint(&dir)?;
    if ck.trajectories.len() != ds.observations.len() {
        bail!(
            "{} has {} trajectories but the dataset has {} observations",
            dir.display(),
            ck.trajectories.len(),
            ds.observations.len()
        );
    }
    Ok(ck)
}

fn parse_pose(s: &str) -> Result<Pose> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow!("--pose expects seven comma-separated numbers"))?;
    let [qw, qx, qy, qz, tx, ty, tz] = v[..] else {
        bail!("--pose expects seven numbers qw,qx,qy,qz,tx,ty,tz, got {}", v.len());
    };
    let q = Quaternion::new(qw, qx, qy, qz);
    if !(q.norm() > 0.0) || v.iter().any(|x| !x.is_finite()) {
        bail!("--pose must be finite with a nonzero quaternion");
    }
    Ok(Pose::new(UnitQuaternion::from_quaternion(q), Vector3::new(tx, ty, tz)))
}

fn render_cmd(a: RenderArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let ck = load_for(&a.checkpoint, &ds)?;
    let pose = if let Some(s) = &a.pose {
        parse_pose(s)?
    } else if let Some(i) = a.eval_view {
        ds.eval_views
            .get(i)
            .ok_or_else(|| anyhow!("eval view {i} out of range (dataset has {})", ds.eval_views.len()))?
            .0
    } else if let Some(i) = a.view {
        let t = ck
            .trajectories
            .get(i)
            .ok_or_else(|| anyhow!("view {i} out of range (dataset has {})", ck.trajectories.len()))?;
        t.interpolate_pose(t.mid_time())?
    } else {
        bail!("one of --pose, --eval-view or --view is required");
    };
    write_image(&a.out, &render(&ck.scene, &pose, ds.intrinsics()))?;
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    checkpoint: PathBuf,
    iteration: usize,
    #[serde(flatten)]
    report: EvalReport,
    /// Mean rotation (degrees) and translation error against the true trajectories.
    pose_error: Option<(f64, f64)>,
}

fn eval(a: EvalArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let dir = resolve_checkpoint(&a.checkpoint)?;
    let ck = load_for(&dir, &ds)?;
    if ds.eval_views.is_empty() {
        bail!("{} has no evaluation views", a.data.display());
    }
    let report = evaluate(&ck.scene, &ds.eval_views, ds.intrinsics())?;
    let pose_error = ds.gt_trajectories.as_ref().map(|gt| mean_pose_error(&ck.trajectories, gt));

    println!("view      PSNR [dB]    SSIM");
    for (i, v) in report.views.iter().enumerate() {
        println!("{i:>4}  {:>12.4}  {:>7.4}", v.psnr, v.ssim);
    }
    println!("mean  {:>12.4}  {:>7.4}", report.mean_psnr, report.mean_ssim);
    if let Some((r, t)) = pose_error {
        println!("pose error: {r:.4} deg, {t:.6} translation");
    }

    let out = EvalOutput {
        checkpoint: dir,
        iteration: ck.iteration,
        report,
        pose_error,
    };
    let text = serde_json::to_string_pretty(&out)?;
    match a.json.as_deref() {
        Some(p) if p == Path::new("-") => println!("{text}"),
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => {}
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let stats = dataset_stats(&ds);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
        return Ok(());
    }
    println!(
        "{}x{}, {} views, {} eval views, {} events",
        stats.width,
        stats.height,
        stats.views.len(),
        stats.eval_views,
        stats.total_events
    );
    println!("view    events       +       -   blur |B-S|   rot [deg]   transl");
    for (i, v) in stats.views.iter().enumerate() {
        let blur = v.blur_magnitude.map_or("-".to_string(), |b| format!("{b:.5}"));
        println!(
            "{i:>4}  {:>8}  {:>6}  {:>6}  {blur:>11}  {:>10.4}  {:>7.5}",
            v.events, v.positive, v.negative, v.trajectory_rotation_deg, v.trajectory_translation
        );
    }
    Ok(())
}
