//! Finite-difference harness and fixtures for the acceptance suite.

use evdeblur_core::events::{log_luminance, simulate_events, EventConfig};
use evdeblur_core::fixtures::{random_scene, random_twist, shake_trajectory, small_camera};
use evdeblur_core::losses::EventWindows;
use evdeblur_core::render::contribution_signature;
use evdeblur_core::trainer::{Observation, TrainConfig, Trainer};
use evdeblur_core::edi::edi_mid_exposure;
use evdeblur_core::{render, render_blurred, se3_exp, ExposureTrajectory, GaussianPrimitive, RadianceImage, Scene};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Relative error with an absolute floor: differences below `floor` count as
/// agreement.
pub fn agrees(analytic: f64, fd: f64, rel: f64, floor: f64) -> bool {
    let d = (analytic - fd).abs();
    d <= floor || d <= rel * analytic.abs().max(fd.abs())
}

pub fn central_difference(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

/// Mutable access to a Gaussian parameter, in `GaussianGrad::values` order.
pub fn param_mut(g: &mut GaussianPrimitive, slot: usize) -> &mut f64 {
    let n = g.sh[0].len();
    match slot {
        0..=2 => &mut g.position[slot],
        3..=5 => &mut g.log_scale[slot - 3],
        6..=9 => &mut g.rotation[slot - 6],
        10 => &mut g.opacity_logit,
        s => &mut g.sh[(s - 11) / n][(s - 11) % n],
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Every discrete decision the training loss depends on: which splats touch
/// which pixels (per latent pose) and the sign of every L1 residual. Central
/// differences are only meaningful when this is unchanged across the probe.
pub fn loss_structure(trainer: &Trainer, idx: usize, starts: &[usize]) -> (Vec<u64>, Vec<i8>) {
    let obs = &trainer.observations[idx];
    let n = trainer.config.n_latent;
    let k = &obs.intrinsics;
    let traj = &obs.trajectory;
    let times = traj.latent_timestamps(n).unwrap();
    let sig: Vec<u64> = times
        .iter()
        .map(|&t| contribution_signature(&trainer.scene, &traj.interpolate_pose(t).unwrap(), k))
        .collect();

    let r = render_blurred(&trainer.scene, traj, n, k).unwrap();
    let latents = r.latent_images();
    let mut signs: Vec<i8> = r.blurred.data.iter().zip(&obs.blurred.data).map(|(a, b)| sign(a - b)).collect();
    signs.extend(latents[r.mid_index()].data.iter().zip(&obs.edi_target.data).map(|(a, b)| sign(a - b)));
    let windows = EventWindows::new(&obs.events, &times).unwrap();
    let logs: Vec<RadianceImage> = latents.iter().map(|l| log_luminance(l, &trainer.event_config)).collect();
    let theta = trainer.event_config.theta;
    for (i, &s) in starts.iter().enumerate() {
        for pix in 0..logs[0].data.len() {
            let predicted = (logs[i + 1].data[pix] - logs[s].data[pix]) / theta;
            signs.push(sign(windows.observed(s, i + 1, pix) as f64 - predicted));
        }
    }
    (sig, signs)
}

/// A 16×16 training problem with three Gaussians: the observation (blurred
/// image, events, EDI target) comes from a perturbed copy of the scene along
/// a different trajectory, so every residual is generic.
pub fn gradient_fixture(rng: &mut ChaCha8Rng) -> Trainer {
    let k = small_camera();
    let scene = random_scene(rng, 3, 1, &k);
    let center = se3_exp(&random_twist(rng, 0.02, 0.05));
    let traj = shake_trajectory(&center, &random_twist(rng, 0.03, 0.03), 0.0, 0.01);

    let mut truth = scene.clone();
    for g in &mut truth.gaussians {
        for d in 0..3 {
            g.position[d] += rng.random_range(-0.03..0.03);
            g.sh[d][0] += rng.random_range(-0.2..0.2);
        }
    }
    let true_traj = shake_trajectory(&center, &random_twist(rng, 0.15, 0.05), 0.0, 0.01);
    let events_cfg = EventConfig {
        theta: 0.05,
        log_eps: 1e-3,
    };
    let times = true_traj.latent_timestamps(41).unwrap();
    let images: Vec<RadianceImage> = times
        .iter()
        .map(|&t| render(&truth, &true_traj.interpolate_pose(t).unwrap(), &k))
        .collect();
    let logs: Vec<(f64, RadianceImage)> =
        times.iter().zip(&images).map(|(&t, f)| (t, log_luminance(f, &events_cfg))).collect();
    let events = simulate_events(&logs, &events_cfg).unwrap();
    let blurred = RadianceImage::mean_of(&images).unwrap();
    let edi_target = edi_mid_exposure(&blurred, &events, &traj, events_cfg.theta).unwrap();
    let obs = Observation {
        blurred,
        events,
        trajectory: traj,
        intrinsics: k,
        edi_target,
    };
    let config = TrainConfig {
        n_latent: 5,
        lambda_ev: 0.5,
        ..Default::default()
    };
    Trainer::new(scene, vec![obs], config, events_cfg).unwrap()
}

/// Perturbs one endpoint of `traj` on the left along twist axis `axis`.
pub fn perturb_endpoint(traj: &ExposureTrajectory, endpoint: usize, axis: usize, h: f64) -> ExposureTrajectory {
    let mut tw = evdeblur_core::Twist::zero();
    tw.0[axis] = h;
    let mut t = *traj;
    if endpoint == 0 {
        t.pose_start = t.pose_start.perturbed(&tw);
    } else {
        t.pose_end = t.pose_end.perturbed(&tw);
    }
    t
}

/// Rec.709 log luminance computed directly, independent of the library.
pub fn log_luma(px: &[f64], eps: f64) -> f64 {
    (0.2126 * px[0] + 0.7152 * px[1] + 0.0722 * px[2] + eps).ln()
}

pub fn scene_with_white_splats(scene: &Scene) -> Scene {
    let mut s = scene.clone();
    s.background = [0.0; 3];
    for g in &mut s.gaussians {
        for c in &mut g.sh {
            c.iter_mut().for_each(|v| *v = 0.0);
            c[0] = 0.5 / 0.282_094_791_773_878_14;
        }
    }
    s
}
