//! Differentiable Gaussian splatting: projection, front-to-back compositing,
//! blur synthesis along an exposure trajectory, and reverse-mode gradients
//! for every Gaussian parameter and both trajectory endpoints.
//!
//! Views are rendered with one global depth sort per pose. The sort order is
//! treated as locally constant when differentiating.

mod grad;
mod project;
mod raster;

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use nalgebra::Vector6;

pub use grad::{GaussianGrad, GradientBuffer};
pub use project::{project_backward, project_gaussian, Projected2D, ScreenGrad};

use crate::error::{Error, Result};
use crate::geometry::{ExposureTrajectory, Pose, Twist};
use crate::image::RadianceImage;
use crate::scene::{CameraIntrinsics, Scene};

/// Splats closer than this (camera z, metres) are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Per-pixel opacity ceiling.
pub const ALPHA_CAP: f64 = 0.99;
/// Per-pixel contributions below this opacity are skipped.
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Added to both diagonal entries of every screen covariance (pixels²).
pub const LOW_PASS: f64 = 0.3;

/// A rendered view plus what the reverse pass needs.
#[derive(Clone, Debug)]
pub struct ViewRender {
    pub image: RadianceImage,
    /// Visible splats as `(gaussian index, footprint)`, front to back.
    pub splats: Vec<(usize, Projected2D)>,
    pub final_transmittance: Vec<f64>,
}

fn sorted_splats(scene: &Scene, pose: &Pose, k: &CameraIntrinsics) -> Vec<(usize, Projected2D)> {
    let mut splats: Vec<(usize, Projected2D)> = scene
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_gaussian(g, pose, k).map(|p| (i, p)))
        .collect();
    // stable: equal depths keep scene order
    splats.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth));
    splats
}

pub fn render_view(scene: &Scene, pose: &Pose, k: &CameraIntrinsics) -> ViewRender {
    let splats = sorted_splats(scene, pose, k);
    let (image, final_transmittance) = raster::composite(&splats, k.width, k.height, &scene.background);
    ViewRender {
        image,
        splats,
        final_transmittance,
    }
}

/// Sharp render of `scene` from `pose`.
pub fn render(scene: &Scene, pose: &Pose, k: &CameraIntrinsics) -> RadianceImage {
    render_view(scene, pose, k).image
}

fn check_adjoint(adjoint: &RadianceImage, k: &CameraIntrinsics) -> Result<()> {
    if adjoint.width != k.width || adjoint.height != k.height || adjoint.channels != 3 {
        return Err(Error::ShapeMismatch(format!(
            "adjoint is {}x{}x{}, camera is {}x{}x3",
            adjoint.width, adjoint.height, adjoint.channels, k.width, k.height
        )));
    }
    if !adjoint.is_finite() {
        return Err(Error::NonFinite("adjoint image".into()));
    }
    Ok(())
}

/// Accumulates the gradient of `Σ adjoint · image` into `grads` and returns the
/// gradient with respect to a left perturbation of `pose`.
pub fn render_view_backward(
    scene: &Scene,
    pose: &Pose,
    k: &CameraIntrinsics,
    view: &ViewRender,
    adjoint: &RadianceImage,
    grads: &mut [GaussianGrad],
) -> Result<Vector6<f64>> {
    check_adjoint(adjoint, k)?;
    if grads.len() != scene.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient slots for {} gaussians",
            grads.len(),
            scene.len()
        )));
    }
    let screen = raster::composite_backward(
        &view.splats,
        &view.final_transmittance,
        k.width,
        &scene.background,
        adjoint,
    );
    let mut pose_grad = Vector6::zeros();
    for ((idx, proj), sg) in view.splats.iter().zip(&screen) {
        project_backward(&scene.gaussians[*idx], pose, k, proj, sg, &mut grads[*idx], &mut pose_grad);
    }
    Ok(pose_grad)
}

/// Hash of every discrete rasterization decision for one view. Finite
/// differences are only meaningful while it stays constant.
pub fn contribution_signature(scene: &Scene, pose: &Pose, k: &CameraIntrinsics) -> u64 {
    let mut h = DefaultHasher::new();
    raster::decision_signature(&sorted_splats(scene, pose, k), &mut h);
    h.finish()
}

/// Latent renders along an exposure and their average.
#[derive(Clone, Debug)]
pub struct BlurredRender {
    pub blurred: RadianceImage,
    pub times: Vec<f64>,
    pub poses: Vec<Pose>,
    pub latents: Vec<ViewRender>,
}

impl BlurredRender {
    pub fn latent_images(&self) -> Vec<&RadianceImage> {
        self.latents.iter().map(|v| &v.image).collect()
    }

    pub fn mid_index(&self) -> usize {
        (self.latents.len() - 1) / 2
    }
}

/// Renders `n` latent views uniformly over the exposure and averages them.
pub fn render_blurred(
    scene: &Scene,
    traj: &ExposureTrajectory,
    n: usize,
    k: &CameraIntrinsics,
) -> Result<BlurredRender> {
    let times = traj.latent_timestamps(n)?;
    let poses = times
        .iter()
        .map(|&t| traj.interpolate_pose(t))
        .collect::<Result<Vec<_>>>()?;
    let latents: Vec<ViewRender> = poses.iter().map(|p| render_view(scene, p, k)).collect();
    let images: Vec<RadianceImage> = latents.iter().map(|v| v.image.clone()).collect();
    let blurred = RadianceImage::mean_of(&images)?;
    Ok(BlurredRender {
        blurred,
        times,
        poses,
        latents,
    })
}

/// Gradient of `Σ_i Σ_u adjoint_i(u) · C_{t_i}(u)` over the latent renders of
/// `rendered`, with pose partials chained onto the two endpoint twists.
pub fn backward_blurred(
    scene: &Scene,
    traj: &ExposureTrajectory,
    k: &CameraIntrinsics,
    rendered: &BlurredRender,
    latent_adjoints: &[RadianceImage],
) -> Result<GradientBuffer> {
    if latent_adjoints.len() != rendered.latents.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} adjoints for {} latent renders",
            latent_adjoints.len(),
            rendered.latents.len()
        )));
    }
    let mut buf = GradientBuffer::zeros_like(scene);
    let mut g_start = Vector6::zeros();
    let mut g_end = Vector6::zeros();
    let mut weighted = 0.0;
    for (((view, pose), &t), adj) in rendered
        .latents
        .iter()
        .zip(&rendered.poses)
        .zip(&rendered.times)
        .zip(latent_adjoints)
    {
        let g_pose = render_view_backward(scene, pose, k, view, adj, &mut buf.gaussians)?;
        let (a_start, a_end) = traj.interpolation_jacobians(t)?;
        g_start += a_start.transpose() * g_pose;
        g_end += a_end.transpose() * g_pose;
        weighted += view.image.data.iter().zip(&adj.data).map(|(a, b)| a * b).sum::<f64>();
    }
    buf.twist_start = Twist(g_start);
    buf.twist_end = Twist(g_end);
    buf.loss = weighted;
    Ok(buf)
}

/// Renders the `n` latent views of `traj` and returns the gradient of the
/// adjoint-weighted pixel sum over them. `latent_adjoints[i]` weights the
/// render at the i-th latent timestamp.
pub fn render_with_grad(
    scene: &Scene,
    traj: &ExposureTrajectory,
    n: usize,
    k: &CameraIntrinsics,
    latent_adjoints: &[RadianceImage],
) -> Result<GradientBuffer> {
    for adj in latent_adjoints {
        check_adjoint(adj, k)?;
    }
    let rendered = render_blurred(scene, traj, n, k)?;
    backward_blurred(scene, traj, k, &rendered, latent_adjoints)
}

/// Gradient of `Σ_u adjoint(u) · B̂(u)` for the blurred render `B̂`.
pub fn render_blurred_with_grad(
    scene: &Scene,
    traj: &ExposureTrajectory,
    n: usize,
    k: &CameraIntrinsics,
    adjoint: &RadianceImage,
) -> Result<GradientBuffer> {
    check_adjoint(adjoint, k)?;
    let mut per_latent = adjoint.clone();
    let inv = 1.0 / n as f64;
    per_latent.data.iter_mut().for_each(|v| *v *= inv);
    render_with_grad(scene, traj, n, k, &vec![per_latent; n])
}
