use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{log_luminance, simulate_events, EventConfig, EventStream};
use crate::geometry::{se3_exp, ExposureTrajectory, Pose, Twist};
use crate::image::RadianceImage;
use crate::render::{render, render_blurred};
use crate::scene::{CameraIntrinsics, GaussianPrimitive, Scene};

/// Parameters of a synthetic dataset. Distances are in scene units; the
/// scene extent is the diameter `2 · scene_radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Focal length as a multiple of the image width.
    pub focal_factor: f64,
    pub gaussians: usize,
    pub sh_degree: usize,
    pub scene_radius: f64,
    pub camera_distance: f64,
    pub background: [f64; 3],
    pub views: usize,
    pub eval_views: usize,
    /// Sharp frames rendered per exposure (odd, at least 51).
    pub dense_frames: usize,
    pub exposure: f64,
    /// Upper bound on the rotation swept during one exposure.
    pub shake_rotation_deg: f64,
    /// Upper bound on the translation swept during one exposure, as a fraction of the extent.
    pub shake_translation: f64,
    pub init_rotation_deg: f64,
    pub init_translation: f64,
    /// Standard deviation of the seed-point jitter, as a fraction of the extent.
    pub init_point_jitter: f64,
    pub theta: f64,
    pub log_eps: f64,
    /// Latent renders per exposure used for training.
    pub n_latent: usize,
    pub keep_frames: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let ev = EventConfig::default();
        SynthConfig {
            seed: 7,
            width: 64,
            height: 64,
            focal_factor: 1.1,
            gaussians: 200,
            sh_degree: 1,
            scene_radius: 1.0,
            camera_distance: 3.5,
            background: [0.1, 0.1, 0.1],
            views: 10,
            eval_views: 4,
            dense_frames: 51,
            exposure: 0.05,
            shake_rotation_deg: 2.0,
            shake_translation: 0.02,
            init_rotation_deg: 1.0,
            init_translation: 0.01,
            init_point_jitter: 0.01,
            theta: ev.theta,
            log_eps: ev.log_eps,
            n_latent: 5,
            keep_frames: false,
        }
    }
}

impl SynthConfig {
    pub fn extent(&self) -> f64 {
        2.0 * self.scene_radius
    }

    pub fn event_config(&self) -> EventConfig {
        EventConfig {
            theta: self.theta,
            log_eps: self.log_eps,
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::centered(self.focal_factor * self.width as f64, self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.event_config().validate()?;
        self.intrinsics()?;
        if self.dense_frames < 51 || self.dense_frames % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "dense_frames must be odd and at least 51, got {}",
                self.dense_frames
            )));
        }
        if self.n_latent % 2 == 0 || self.n_latent >= self.dense_frames {
            return Err(Error::InvalidArgument(format!(
                "n_latent must be odd and below dense_frames, got {}",
                self.n_latent
            )));
        }
        if self.views == 0 || self.gaussians == 0 {
            return Err(Error::InvalidArgument("need at least one view and one gaussian".into()));
        }
        if !(self.exposure > 0.0) {
            return Err(Error::InvalidArgument(format!("exposure must be positive, got {}", self.exposure)));
        }
        if self.camera_distance <= self.scene_radius {
            return Err(Error::InvalidArgument("cameras must sit outside the scene".into()));
        }
        let amplitudes = [
            self.shake_rotation_deg,
            self.shake_translation,
            self.init_rotation_deg,
            self.init_translation,
            self.init_point_jitter,
        ];
        if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidArgument("amplitudes must be non-negative".into()));
        }
        Ok(())
    }
}

/// One synthesized exposure.
#[derive(Clone, Debug)]
pub struct SynthView {
    pub blurred: RadianceImage,
    pub events: EventStream,
    pub gt_trajectory: ExposureTrajectory,
    pub init_trajectory: ExposureTrajectory,
    pub sharp_mid: RadianceImage,
    pub frames: Option<Vec<RadianceImage>>,
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub config: SynthConfig,
    pub intrinsics: CameraIntrinsics,
    pub scene: Scene,
    pub views: Vec<SynthView>,
    pub eval_views: Vec<(Pose, RadianceImage)>,
    pub init_points: Vec<[f64; 3]>,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n: f64 = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_gt_scene(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Scene {
    let gaussians = (0..cfg.gaussians)
        .map(|_| {
            let pos = loop {
                let p = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if p.norm() <= 1.0 {
                    break p * cfg.scene_radius;
                }
            };
            let color = [
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
            ];
            let opacity = rng.random_range(0.5..0.95);
            let mut g = GaussianPrimitive::new(pos, 0.1, color, opacity, cfg.sh_degree);
            for s in g.log_scale.iter_mut() {
                *s = (rng.random_range(0.04..0.12) * cfg.scene_radius).ln();
            }
            for q in g.rotation.iter_mut() {
                *q = rng.random_range(-1.0..1.0);
            }
            g.normalize_rotation();
            for c in 0..3 {
                for coeff in g.sh[c].iter_mut().skip(1) {
                    *coeff = rng.random_range(-0.15..0.15);
                }
            }
            g
        })
        .collect();
    Scene {
        sh_degree: cfg.sh_degree,
        background: cfg.background,
        gaussians,
    }
}

/// Camera on a sphere around the origin looking at it.
fn orbit_pose(distance: f64, azimuth: f64, elevation: f64) -> Result<Pose> {
    let eye = Vector3::new(
        distance * elevation.cos() * azimuth.cos(),
        -distance * elevation.sin(),
        distance * elevation.cos() * azimuth.sin(),
    );
    Pose::look_at(eye, Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0))
}

fn twist_of(rotation: Vector3<f64>, translation: Vector3<f64>) -> Twist {
    Twist(Vector6::new(
        rotation.x,
        rotation.y,
        rotation.z,
        translation.x,
        translation.y,
        translation.z,
    ))
}

/// Generates the whole dataset in memory. Every stored image is rounded to
/// `f32` so the files written later reproduce it exactly.
pub fn synthesize(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let k = cfg.intrinsics()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scene = random_gt_scene(cfg, &mut rng);
    let ev_cfg = cfg.event_config();
    let extent = cfg.extent();

    let mut views = Vec::with_capacity(cfg.views);
    for v in 0..cfg.views {
        let azimuth = std::f64::consts::TAU * v as f64 / cfg.views as f64;
        let elevation = 0.35 * (2.0 * std::f64::consts::PI * v as f64 / cfg.views as f64 * 2.0).sin();
        let center = orbit_pose(cfg.camera_distance, azimuth, elevation)?;
        let shake = twist_of(
            unit_vector(&mut rng) * cfg.shake_rotation_deg.to_radians() * rng.random_range(0.5..1.0),
            unit_vector(&mut rng) * cfg.shake_translation * extent * rng.random_range(0.5..1.0),
        );
        let t_start = v as f64;
        let t_end = t_start + cfg.exposure;
        let start = se3_exp(&shake.scaled(-0.5)).compose(&center);
        let end = se3_exp(&shake.scaled(0.5)).compose(&center);
        let gt = ExposureTrajectory::new(start, end, t_start, t_end)?;

        let times = gt.latent_timestamps(cfg.dense_frames)?;
        let mut frames = Vec::with_capacity(times.len());
        for &t in &times {
            frames.push(render(&scene, &gt.interpolate_pose(t)?, &k));
        }
        let mut blurred = RadianceImage::mean_of(&frames)?;
        blurred.quantize_f32();
        let logs: Vec<(f64, RadianceImage)> = times
            .iter()
            .zip(&frames)
            .map(|(t, f)| (*t, log_luminance(f, &ev_cfg)))
            .collect();
        let events = simulate_events(&logs, &ev_cfg)?;
        let mut sharp_mid = frames[times.len() / 2].clone();
        sharp_mid.quantize_f32();

        let offset = twist_of(
            unit_vector(&mut rng) * cfg.init_rotation_deg.to_radians(),
            unit_vector(&mut rng) * cfg.init_translation * extent,
        );
        let perturb = se3_exp(&offset);
        let init = ExposureTrajectory::new(perturb.compose(&start), perturb.compose(&end), t_start, t_end)?;

        let frames = cfg.keep_frames.then(|| {
            frames
                .into_iter()
                .map(|mut f| {
                    f.quantize_f32();
                    f
                })
                .collect()
        });
        views.push(SynthView {
            blurred,
            events,
            gt_trajectory: gt,
            init_trajectory: init,
            sharp_mid,
            frames,
        });
    }

    let mut eval_views = Vec::with_capacity(cfg.eval_views);
    for e in 0..cfg.eval_views {
        let azimuth = std::f64::consts::TAU * (e as f64 + 0.5) / cfg.eval_views as f64 + 0.3;
        let elevation = 0.2 * if e % 2 == 0 { 1.0 } else { -1.0 };
        let pose = orbit_pose(cfg.camera_distance, azimuth, elevation)?;
        let mut img = render(&scene, &pose, &k);
        img.quantize_f32();
        eval_views.push((pose, img));
    }

    let jitter = Normal::new(0.0, (cfg.init_point_jitter * extent).max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let init_points = scene
        .gaussians
        .iter()
        .map(|g| {
            let mut p = g.position;
            if cfg.init_point_jitter > 0.0 {
                p.iter_mut().for_each(|x| *x += jitter.sample(&mut rng));
            }
            p
        })
        .collect();

    Ok(SynthData {
        config: cfg.clone(),
        intrinsics: k,
        scene,
        views,
        eval_views,
        init_points,
    })
}

/// Blurred render of the ground truth with the training quadrature, for
/// comparing against the dense observation.
pub fn training_quadrature_blur(data: &SynthData, view: usize) -> Result<RadianceImage> {
    let v = &data.views[view];
    Ok(render_blurred(&data.scene, &v.gt_trajectory, data.config.n_latent, &data.intrinsics)?.blurred)
}

impl SynthData {
    /// Training observations built in memory, starting from the perturbed
    /// trajectories or, with `ground_truth`, from the true ones.
    pub fn observations(&self, ground_truth: bool) -> Result<Vec<crate::trainer::Observation>> {
        self.views
            .iter()
            .map(|v| {
                let trajectory = if ground_truth { v.gt_trajectory } else { v.init_trajectory };
                let edi_target =
                    crate::edi::edi_mid_exposure(&v.blurred, &v.events, &trajectory, self.config.theta)?;
                Ok(crate::trainer::Observation {
                    blurred: v.blurred.clone(),
                    events: v.events.clone(),
                    trajectory,
                    intrinsics: self.intrinsics,
                    edi_target,
                })
            })
            .collect()
    }
}
