//! Joint optimization of Gaussian parameters and per-exposure trajectory
//! endpoints with Adam.
//!
//! Each step takes one observation (round-robin, order reshuffled every
//! epoch), renders its latent images, evaluates the blur, event and EDI terms,
//! and backpropagates the combined adjoint into the scene and the
//! observation's two endpoint poses. Pose steps are applied on the left,
//! `P ← exp(δ) ∘ P`.

mod adam;
mod checkpoint;
mod metrics;

pub use adam::{AdamState, Moments};
pub use checkpoint::{load_checkpoint, Checkpoint};
pub use metrics::{evaluate, mean_pose_error, pose_error, EvalReport, ViewMetrics};

use std::io::Write;
use std::path::Path;

use nalgebra::Vector6;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use adam::AdamStep;

use crate::error::{Error, Result};
use crate::events::{EventConfig, EventStream};
use crate::geometry::{se3_exp, ExposureTrajectory, Twist};
use crate::image::RadianceImage;
use crate::losses::{
    blur_loss, edi_loss, event_loss, sample_window_starts, total_loss, EventWindows, LossReport, LossWeights,
};
use crate::render::{backward_blurred, render_blurred, GradientBuffer};
use crate::scene::{sh_coeff_count, CameraIntrinsics, Scene};

/// One blurred exposure with its events and current trajectory estimate.
#[derive(Clone, Debug)]
pub struct Observation {
    pub blurred: RadianceImage,
    pub events: EventStream,
    pub trajectory: ExposureTrajectory,
    pub intrinsics: CameraIntrinsics,
    /// EDI estimate of the mid-exposure frame, computed once.
    pub edi_target: RadianceImage,
}

impl Observation {
    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        self.intrinsics.validate()?;
        let k = &self.intrinsics;
        for (what, img) in [("blurred image", &self.blurred), ("EDI target", &self.edi_target)] {
            if img.width != k.width || img.height != k.height || img.channels != 3 {
                return Err(Error::ShapeMismatch(format!(
                    "{what} is {}x{}x{}, camera is {}x{}x3",
                    img.width, img.height, img.channels, k.width, k.height
                )));
            }
        }
        if self.events.width() != k.width || self.events.height() != k.height {
            return Err(Error::ShapeMismatch(format!(
                "events are {}x{}, camera is {}x{}",
                self.events.width(),
                self.events.height(),
                k.width,
                k.height
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_latent: usize,
    pub iterations: usize,
    pub seed: u64,
    pub lr_position: f64,
    pub lr_position_final: f64,
    pub lr_log_scale: f64,
    pub lr_rotation: f64,
    pub lr_opacity: f64,
    pub lr_sh: f64,
    pub lr_pose: f64,
    pub lr_pose_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Iterations before pose optimization starts.
    pub pose_warmup: usize,
    pub lambda_blur: f64,
    pub lambda_ev: f64,
    pub lambda_edi: f64,
    pub lambda_ssim: f64,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        TrainConfig {
            n_latent: 5,
            iterations: 20_000,
            seed: 0,
            lr_position: 1.6e-4,
            lr_position_final: 1.6e-6,
            lr_log_scale: 5e-3,
            lr_rotation: 1e-3,
            lr_opacity: 5e-2,
            lr_sh: 2.5e-3,
            lr_pose: 1e-3,
            lr_pose_final: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            pose_warmup: 0,
            lambda_blur: w.lambda_blur,
            lambda_ev: w.lambda_ev,
            lambda_edi: w.lambda_edi,
            lambda_ssim: w.lambda_ssim,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_latent % 2 == 0 {
            return Err(Error::InvalidArgument(format!("n_latent must be odd, got {}", self.n_latent)));
        }
        let rates = [
            ("lr_position", self.lr_position),
            ("lr_position_final", self.lr_position_final),
            ("lr_log_scale", self.lr_log_scale),
            ("lr_rotation", self.lr_rotation),
            ("lr_opacity", self.lr_opacity),
            ("lr_sh", self.lr_sh),
            ("lr_pose", self.lr_pose),
            ("lr_pose_final", self.lr_pose_final),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("invalid Adam hyper-parameters".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidArgument("checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    pub fn weights(&self, theta: f64) -> LossWeights {
        LossWeights {
            lambda_blur: self.lambda_blur,
            lambda_ev: self.lambda_ev,
            lambda_edi: self.lambda_edi,
            lambda_ssim: self.lambda_ssim,
            theta,
        }
    }
}

/// `init → final` geometric interpolation over the run; constant when either
/// end is zero.
fn decayed(init: f64, fin: f64, iteration: usize, total: usize) -> f64 {
    if init <= 0.0 || fin <= 0.0 || total == 0 {
        return init;
    }
    let r = (iteration as f64 / total as f64).min(1.0);
    init * (fin / init).powf(r)
}

/// One line of the JSON-lines training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub iter: usize,
    pub total: f64,
    pub blur: f64,
    pub event: f64,
    pub edi: f64,
}

impl LogLine {
    fn new(iter: usize, r: &LossReport) -> Self {
        LogLine {
            iter,
            total: r.total,
            blur: r.blur,
            event: r.event,
            edi: r.edi,
        }
    }
}

pub struct Trainer {
    pub scene: Scene,
    pub observations: Vec<Observation>,
    pub config: TrainConfig,
    pub event_config: EventConfig,
    pub adam: AdamState,
    pub iteration: usize,
    rng: ChaCha8Rng,
    windows: Vec<EventWindows>,
    order: Vec<usize>,
    cursor: usize,
}

impl Trainer {
    pub fn new(
        scene: Scene,
        observations: Vec<Observation>,
        config: TrainConfig,
        event_config: EventConfig,
    ) -> Result<Self> {
        config.validate()?;
        event_config.validate()?;
        scene.validate()?;
        if observations.is_empty() {
            return Err(Error::InvalidArgument("training needs at least one observation".into()));
        }
        for (i, o) in observations.iter().enumerate() {
            o.validate()
                .map_err(|e| Error::InvalidArgument(format!("observation {i}: {e}")))?;
        }
        let windows = observations
            .iter()
            .map(|o| EventWindows::new(&o.events, &o.trajectory.latent_timestamps(config.n_latent)?))
            .collect::<Result<Vec<_>>>()?;
        let adam = AdamState::new(scene.len(), sh_coeff_count(scene.sh_degree), observations.len());
        Ok(Trainer {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            scene,
            observations,
            config,
            event_config,
            adam,
            iteration: 0,
            windows,
            order: Vec::new(),
            cursor: 0,
        })
    }

    pub fn trajectories(&self) -> Vec<ExposureTrajectory> {
        self.observations.iter().map(|o| o.trajectory).collect()
    }

    fn next_observation(&mut self) -> usize {
        if self.cursor >= self.order.len() {
            self.order = (0..self.observations.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    /// Loss and gradients for observation `idx` with the given event window
    /// starts, at the current parameters. Nothing is updated.
    pub fn loss_and_grad(&self, idx: usize, starts: &[usize]) -> Result<(LossReport, GradientBuffer)> {
        let obs = &self.observations[idx];
        let n = self.config.n_latent;
        let w = self.config.weights(self.event_config.theta);
        let rendered = render_blurred(&self.scene, &obs.trajectory, n, &obs.intrinsics)?;
        let latents = rendered.latent_images();
        let mid = rendered.mid_index();
        let blur = blur_loss(&rendered.blurred, &obs.blurred, &w)?;
        let ev = event_loss(&latents, &self.windows[idx], starts, &self.event_config)?;
        let edi = edi_loss(latents[mid], &obs.edi_target, &w)?;
        let report = total_loss(blur.value, ev.value, edi.value, &w);
        if !report.total.is_finite() {
            return Err(Error::Diverged {
                iteration: self.iteration,
                detail: format!("non-finite loss {report:?} on observation {idx}"),
            });
        }
        let blur_scale = w.lambda_blur / n as f64;
        let adjoints: Vec<RadianceImage> = (0..n)
            .map(|i| {
                let mut a = ev.adjoints[i].clone();
                for (j, v) in a.data.iter_mut().enumerate() {
                    *v = w.lambda_ev * *v + blur_scale * blur.adjoint.data[j];
                    if i == mid {
                        *v += w.lambda_edi * edi.adjoint.data[j];
                    }
                }
                a
            })
            .collect();
        let grads = backward_blurred(&self.scene, &obs.trajectory, &obs.intrinsics, &rendered, &adjoints)?;
        if !grads.is_finite() {
            return Err(Error::Diverged {
                iteration: self.iteration,
                detail: format!("non-finite gradient on observation {idx}"),
            });
        }
        Ok((report, grads))
    }

    /// One optimization step on the next observation.
    pub fn step(&mut self) -> Result<LossReport> {
        let idx = self.next_observation();
        let starts = sample_window_starts(self.config.n_latent, &mut self.rng);
        let (report, grads) = self.loss_and_grad(idx, &starts)?;
        self.apply(idx, &grads);
        self.iteration += 1;
        Ok(report)
    }

    fn apply(&mut self, idx: usize, grads: &GradientBuffer) {
        let c = &self.config;
        let (it, total) = (self.iteration, c.iterations);
        let (b1, b2, eps) = (c.beta1, c.beta2, c.eps);
        let adam = &mut self.adam;
        let s_pos = AdamStep::begin(&mut adam.position, decayed(c.lr_position, c.lr_position_final, it, total), b1, b2, eps);
        let s_scale = AdamStep::begin(&mut adam.log_scale, c.lr_log_scale, b1, b2, eps);
        let s_rot = AdamStep::begin(&mut adam.rotation, c.lr_rotation, b1, b2, eps);
        let s_op = AdamStep::begin(&mut adam.opacity, c.lr_opacity, b1, b2, eps);
        let s_sh = AdamStep::begin(&mut adam.sh, c.lr_sh, b1, b2, eps);
        let ncoef = sh_coeff_count(self.scene.sh_degree);
        for (gi, (g, gr)) in self.scene.gaussians.iter_mut().zip(&grads.gaussians).enumerate() {
            for d in 0..3 {
                g.position[d] += s_pos.delta(&mut adam.position, 3 * gi + d, gr.position[d]);
                g.log_scale[d] += s_scale.delta(&mut adam.log_scale, 3 * gi + d, gr.log_scale[d]);
            }
            for d in 0..4 {
                g.rotation[d] += s_rot.delta(&mut adam.rotation, 4 * gi + d, gr.rotation[d]);
            }
            g.opacity_logit += s_op.delta(&mut adam.opacity, gi, gr.opacity_logit);
            for ch in 0..3 {
                for j in 0..ncoef {
                    g.sh[ch][j] += s_sh.delta(&mut adam.sh, (gi * 3 + ch) * ncoef + j, gr.sh[ch][j]);
                }
            }
            g.normalize_rotation();
        }

        if it < c.pose_warmup {
            return;
        }
        let moments = &mut adam.poses[idx];
        let s_pose = AdamStep::begin(moments, decayed(c.lr_pose, c.lr_pose_final, it, total), b1, b2, eps);
        let mut delta = [Vector6::zeros(), Vector6::zeros()];
        for (e, g) in [&grads.twist_start, &grads.twist_end].iter().enumerate() {
            for j in 0..6 {
                delta[e][j] = s_pose.delta(moments, 6 * e + j, g.0[j]);
            }
        }
        let traj = &mut self.observations[idx].trajectory;
        if delta[0] != Vector6::zeros() {
            traj.pose_start = se3_exp(&Twist(delta[0])).compose(&traj.pose_start);
        }
        if delta[1] != Vector6::zeros() {
            traj.pose_end = se3_exp(&Twist(delta[1])).compose(&traj.pose_end);
        }
    }

    /// Runs until `config.iterations`, writing one JSON line per step to `log`
    /// and a checkpoint under `checkpoint_root` every `checkpoint_every` steps
    /// and at the end.
    pub fn run(&mut self, log: &mut dyn Write, checkpoint_root: Option<&Path>) -> Result<Vec<LossReport>> {
        self.run_until(self.config.iterations, log, checkpoint_root)
    }

    /// Like [`Trainer::run`] but stops once `stop` iterations are done. The
    /// learning-rate schedule still follows `config.iterations`.
    pub fn run_until(
        &mut self,
        stop: usize,
        log: &mut dyn Write,
        checkpoint_root: Option<&Path>,
    ) -> Result<Vec<LossReport>> {
        let stop = stop.min(self.config.iterations);
        let mut reports = Vec::with_capacity(stop.saturating_sub(self.iteration));
        while self.iteration < stop {
            let it = self.iteration;
            let report = match self.step() {
                Ok(r) => r,
                Err(e) => {
                    if let (Error::Diverged { .. }, Some(root)) = (&e, checkpoint_root) {
                        // best effort: the divergence itself is the error reported
                        let _ = self.save_checkpoint(&root.join(format!("diverged_iter_{it:06}")));
                    }
                    return Err(e);
                }
            };
            let line = serde_json::to_string(&LogLine::new(it, &report)).expect("log line serializes");
            writeln!(log, "{line}").map_err(|e| Error::io("training log", e))?;
            reports.push(report);
            if let Some(root) = checkpoint_root {
                if self.iteration % self.config.checkpoint_every == 0 || self.iteration == self.config.iterations {
                    self.save_checkpoint(&checkpoint_dir(root, self.iteration))?;
                }
            }
        }
        log.flush().map_err(|e| Error::io("training log", e))?;
        Ok(reports)
    }
}

/// Directory of the checkpoint written after `iteration` steps.
pub fn checkpoint_dir(root: &Path, iteration: usize) -> std::path::PathBuf {
    root.join(format!("iter_{iteration:06}"))
}

/// Output of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub scene: Scene,
    pub trajectories: Vec<ExposureTrajectory>,
    pub log: Vec<LossReport>,
}

/// Trains `scene` on `observations` for `config.iterations` steps.
pub fn train(
    scene: Scene,
    observations: Vec<Observation>,
    config: TrainConfig,
    event_config: EventConfig,
    log: &mut dyn Write,
    checkpoint_root: Option<&Path>,
) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(scene, observations, config, event_config)?;
    let log = trainer.run(log, checkpoint_root)?;
    Ok(TrainOutput {
        trajectories: trainer.trajectories(),
        scene: trainer.scene,
        log,
    })
}

#[cfg(test)]
mod tests;
