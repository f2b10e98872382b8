//! Synthetic datasets on disk.
//!
//! Layout under the dataset root:
//!
//! ```text
//! manifest.json
//! init_points.json
//! views/blur_0000.pfm   views/blur_0000.png
//! events/view_0000.evt
//! gt/scene.json  gt/trajectories.json  gt/sharp_0000.pfm  gt/eval_0000.pfm
//! gt/frames_0000/frame_0000.pfm        (only with keep_frames)
//! ```

mod synth;

pub use synth::{random_gt_scene, synthesize, training_quadrature_blur, SynthConfig, SynthData, SynthView};

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::edi::edi_mid_exposure;
use crate::error::{Error, Result};
use crate::events::{read_events, write_events_binary, EventConfig};
use crate::geometry::{ExposureTrajectory, Pose};
use crate::image::{read_pfm, write_pfm, write_png, RadianceImage};
use crate::scene::{init_scene, CameraIntrinsics, InitConfig, InitSource, Scene};
use crate::trainer::Observation;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationEntry {
    pub blurred: String,
    pub events: String,
    pub t_start: f64,
    pub t_end: f64,
    pub init_pose_start: Pose,
    pub init_pose_end: Pose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub pose: Pose,
    pub image: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scene: String,
    pub trajectories: String,
    pub sharp: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub intrinsics: CameraIntrinsics,
    pub events: EventConfig,
    pub background: [f64; 3],
    pub sh_degree: usize,
    pub n_latent: usize,
    pub observations: Vec<ObservationEntry>,
    pub eval_views: Vec<EvalEntry>,
    pub init_points: String,
    pub ground_truth: Option<GroundTruth>,
    pub generator: Option<SynthConfig>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `data` under `root` and returns the manifest.
pub fn write_dataset(data: &SynthData, root: &Path) -> Result<DatasetManifest> {
    for sub in ["views", "events", "gt"] {
        mkdir(&root.join(sub))?;
    }
    let mut observations = Vec::new();
    let mut sharp = Vec::new();
    for (i, v) in data.views.iter().enumerate() {
        let blurred = format!("views/blur_{i:04}.pfm");
        write_pfm(&root.join(&blurred), &v.blurred)?;
        write_png(&root.join(format!("views/blur_{i:04}.png")), &v.blurred)?;
        let events = format!("events/view_{i:04}.evt");
        write_events_binary(&root.join(&events), &v.events)?;
        let s = format!("gt/sharp_{i:04}.pfm");
        write_pfm(&root.join(&s), &v.sharp_mid)?;
        sharp.push(s);
        if let Some(frames) = &v.frames {
            let dir = root.join(format!("gt/frames_{i:04}"));
            mkdir(&dir)?;
            for (j, f) in frames.iter().enumerate() {
                write_pfm(&dir.join(format!("frame_{j:04}.pfm")), f)?;
            }
        }
        observations.push(ObservationEntry {
            blurred,
            events,
            t_start: v.init_trajectory.t_start,
            t_end: v.init_trajectory.t_end,
            init_pose_start: v.init_trajectory.pose_start,
            init_pose_end: v.init_trajectory.pose_end,
        });
    }
    let mut eval_views = Vec::new();
    for (i, (pose, img)) in data.eval_views.iter().enumerate() {
        let image = format!("gt/eval_{i:04}.pfm");
        write_pfm(&root.join(&image), img)?;
        eval_views.push(EvalEntry { pose: *pose, image });
    }
    write_json(&root.join("gt/scene.json"), &data.scene)?;
    let gt_traj: Vec<ExposureTrajectory> = data.views.iter().map(|v| v.gt_trajectory).collect();
    write_json(&root.join("gt/trajectories.json"), &gt_traj)?;
    write_json(&root.join("init_points.json"), &data.init_points)?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        intrinsics: data.intrinsics,
        events: data.config.event_config(),
        background: data.scene.background,
        sh_degree: data.scene.sh_degree,
        n_latent: data.config.n_latent,
        observations,
        eval_views,
        init_points: "init_points.json".into(),
        ground_truth: Some(GroundTruth {
            scene: "gt/scene.json".into(),
            trajectories: "gt/trajectories.json".into(),
            sharp,
        }),
        generator: Some(data.config.clone()),
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Synthesizes with `cfg` and writes the result under `root`.
pub fn synth_dataset(cfg: &SynthConfig, root: &Path) -> Result<DatasetManifest> {
    let data = synthesize(cfg)?;
    write_dataset(&data, root)
}

/// A validated dataset with cached EDI targets.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub observations: Vec<Observation>,
    pub eval_views: Vec<(Pose, RadianceImage)>,
    pub init_points: Vec<[f64; 3]>,
    pub gt_scene: Option<Scene>,
    pub gt_trajectories: Option<Vec<ExposureTrajectory>>,
    pub gt_sharp: Option<Vec<RadianceImage>>,
}

impl Dataset {
    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.manifest.intrinsics
    }

    pub fn init_trajectories(&self) -> Vec<ExposureTrajectory> {
        self.observations.iter().map(|o| o.trajectory).collect()
    }

    /// Scene seeded from the dataset's initial points: gray, low opacity,
    /// scales from nearest-neighbour spacing.
    pub fn initial_scene(&self) -> Result<Scene> {
        init_scene(
            &InitSource::Points {
                points: self.init_points.clone(),
                colors: None,
            },
            &InitConfig {
                background: self.manifest.background,
                sh_degree: self.manifest.sh_degree,
                ..Default::default()
            },
        )
    }
}

fn field_error(path: &Path, field: impl std::fmt::Display, msg: impl std::fmt::Display) -> Error {
    Error::format(path, format!("{field}: {msg}"))
}

fn check_image(path: &Path, img: &RadianceImage, k: &CameraIntrinsics) -> Result<()> {
    if img.width != k.width || img.height != k.height || img.channels != 3 {
        return Err(Error::format(
            path,
            format!(
                "image is {}x{}x{}, intrinsics say {}x{}x3",
                img.width, img.height, img.channels, k.width, k.height
            ),
        ));
    }
    if !img.is_finite() {
        return Err(Error::format(path, "image contains non-finite values"));
    }
    Ok(())
}

/// Loads and validates the dataset at `root`, computing each observation's
/// EDI target with the manifest threshold.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let mpath = root.join("manifest.json");
    let manifest: DatasetManifest = read_json(&mpath)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(field_error(&mpath, "version", format!("unsupported version {}", manifest.version)));
    }
    let k = manifest.intrinsics;
    k.validate().map_err(|e| field_error(&mpath, "intrinsics", e))?;
    manifest.events.validate().map_err(|e| field_error(&mpath, "events", e))?;
    if manifest.n_latent % 2 == 0 {
        return Err(field_error(&mpath, "n_latent", "must be odd"));
    }
    if manifest.observations.is_empty() {
        return Err(field_error(&mpath, "observations", "empty"));
    }

    let mut observations = Vec::with_capacity(manifest.observations.len());
    for (i, entry) in manifest.observations.iter().enumerate() {
        let trajectory = ExposureTrajectory::new(entry.init_pose_start, entry.init_pose_end, entry.t_start, entry.t_end)
            .map_err(|e| field_error(&mpath, format!("observations[{i}].t_start/t_end"), e))?;
        let bpath = root.join(&entry.blurred);
        let blurred = read_pfm(&bpath)?;
        check_image(&bpath, &blurred, &k)?;
        let epath = root.join(&entry.events);
        let events = read_events(&epath)?;
        if events.width() != k.width || events.height() != k.height {
            return Err(Error::format(
                &epath,
                format!("sensor is {}x{}, intrinsics say {}x{}", events.width(), events.height(), k.width, k.height),
            ));
        }
        let edi_target = edi_mid_exposure(&blurred, &events, &trajectory, manifest.events.theta)
            .map_err(|e| Error::format(&epath, format!("EDI target: {e}")))?;
        observations.push(Observation {
            blurred,
            events,
            trajectory,
            intrinsics: k,
            edi_target,
        });
    }

    let mut eval_views = Vec::with_capacity(manifest.eval_views.len());
    for (i, entry) in manifest.eval_views.iter().enumerate() {
        let ipath = root.join(&entry.image);
        let img = read_pfm(&ipath)?;
        check_image(&ipath, &img, &k)?;
        let clash = observations.iter().any(|o| {
            let t = &o.trajectory;
            t.pose_start == entry.pose || t.pose_end == entry.pose
        });
        if clash {
            return Err(field_error(&mpath, format!("eval_views[{i}].pose"), "coincides with a training pose"));
        }
        eval_views.push((entry.pose, img));
    }

    let init_points: Vec<[f64; 3]> = read_json(&root.join(&manifest.init_points))?;
    if init_points.is_empty() {
        return Err(field_error(&root.join(&manifest.init_points), "points", "empty"));
    }

    let (gt_scene, gt_trajectories, gt_sharp) = match &manifest.ground_truth {
        None => (None, None, None),
        Some(gt) => {
            let spath = root.join(&gt.scene);
            let scene: Scene = read_json(&spath)?;
            scene.validate().map_err(|e| Error::format(&spath, e.to_string()))?;
            let tpath = root.join(&gt.trajectories);
            let trajs: Vec<ExposureTrajectory> = read_json(&tpath)?;
            if trajs.len() != observations.len() {
                return Err(Error::format(
                    &tpath,
                    format!("{} trajectories for {} observations", trajs.len(), observations.len()),
                ));
            }
            let mut sharp = Vec::with_capacity(gt.sharp.len());
            for s in &gt.sharp {
                let p = root.join(s);
                let img = read_pfm(&p)?;
                check_image(&p, &img, &k)?;
                sharp.push(img);
            }
            (Some(scene), Some(trajs), Some(sharp))
        }
    };

    Ok(Dataset {
        root: root.to_path_buf(),
        manifest,
        observations,
        eval_views,
        init_points,
        gt_scene,
        gt_trajectories,
        gt_sharp,
    })
}

/// Per-view statistics reported by `inspect`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewStats {
    pub events: usize,
    pub positive: usize,
    pub negative: usize,
    /// Mean absolute difference between the blurred image and the sharp
    /// mid-exposure ground truth, when available.
    pub blur_magnitude: Option<f64>,
    /// Rotation (degrees) and camera-centre travel between the endpoints of
    /// the initial trajectory.
    pub trajectory_rotation_deg: f64,
    pub trajectory_translation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub width: usize,
    pub height: usize,
    pub views: Vec<ViewStats>,
    pub eval_views: usize,
    pub total_events: usize,
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let views: Vec<ViewStats> = ds
        .observations
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let positive = o.events.events().iter().filter(|e| e.p > 0).count();
            let blur_magnitude = ds.gt_sharp.as_ref().and_then(|s| s.get(i)).map(|sharp| {
                o.blurred
                    .data
                    .iter()
                    .zip(&sharp.data)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / sharp.len() as f64
            });
            let t = &o.trajectory;
            ViewStats {
                events: o.events.len(),
                positive,
                negative: o.events.len() - positive,
                blur_magnitude,
                trajectory_rotation_deg: t.pose_start.rotation_angle_to(&t.pose_end).to_degrees(),
                trajectory_translation: (t.pose_start.center() - t.pose_end.center()).norm(),
            }
        })
        .collect();
    DatasetStats {
        width: ds.manifest.intrinsics.width,
        height: ds.manifest.intrinsics.height,
        total_events: views.iter().map(|v| v.events).sum(),
        eval_views: ds.eval_views.len(),
        views,
    }
}
