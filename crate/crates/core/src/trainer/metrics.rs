use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{ExposureTrajectory, Pose};
use crate::image::RadianceImage;
use crate::losses::{psnr, ssim};
use crate::render::render;
use crate::scene::{CameraIntrinsics, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Sharp renders at each evaluation pose scored against ground truth.
pub fn evaluate(scene: &Scene, views: &[(Pose, RadianceImage)], k: &CameraIntrinsics) -> Result<EvalReport> {
    let mut out = Vec::with_capacity(views.len());
    for (pose, truth) in views {
        let img = render(scene, pose, k);
        out.push(ViewMetrics {
            psnr: psnr(&img, truth)?,
            ssim: ssim(&img, truth)?,
        });
    }
    let n = out.len().max(1) as f64;
    Ok(EvalReport {
        mean_psnr: out.iter().map(|v| v.psnr).sum::<f64>() / n,
        mean_ssim: out.iter().map(|v| v.ssim).sum::<f64>() / n,
        views: out,
    })
}

/// Rotation error (degrees) and camera-centre distance (metres), averaged over
/// the two endpoints.
pub fn pose_error(est: &ExposureTrajectory, gt: &ExposureTrajectory) -> (f64, f64) {
    let one = |a: &Pose, b: &Pose| (a.rotation_angle_to(b).to_degrees(), (a.center() - b.center()).norm());
    let (r0, t0) = one(&est.pose_start, &gt.pose_start);
    let (r1, t1) = one(&est.pose_end, &gt.pose_end);
    (0.5 * (r0 + r1), 0.5 * (t0 + t1))
}

/// Mean [`pose_error`] over paired trajectories.
pub fn mean_pose_error(est: &[ExposureTrajectory], gt: &[ExposureTrajectory]) -> (f64, f64) {
    let n = est.len().min(gt.len()).max(1) as f64;
    let (r, t) = est
        .iter()
        .zip(gt)
        .map(|(a, b)| pose_error(a, b))
        .fold((0.0, 0.0), |acc, e| (acc.0 + e.0, acc.1 + e.1));
    (r / n, t / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_scene, random_twist, small_camera};
    use crate::geometry::{se3_exp, Twist};
    use nalgebra::{Matrix3, Vector3, Vector6};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn traj(a: Pose, b: Pose) -> ExposureTrajectory {
        ExposureTrajectory::new(a, b, 0.0, 1.0).unwrap()
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = se3_exp(&random_twist(&mut rng, 0.3, 0.5));
        let q = se3_exp(&random_twist(&mut rng, 0.3, 0.5));
        assert_eq!(pose_error(&traj(p, q), &traj(p, q)), (0.0, 0.0));
    }

    #[test]
    fn rotation_about_z_is_reported_in_degrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = se3_exp(&random_twist(&mut rng, 0.3, 0.5));
        let q = se3_exp(&random_twist(&mut rng, 0.3, 0.5));
        let rz = se3_exp(&Twist(Vector6::new(0.0, 0.0, 5f64.to_radians(), 0.0, 0.0, 0.0)));
        let (r, t) = pose_error(&traj(rz.compose(&p), rz.compose(&q)), &traj(p, q));
        assert!((r - 5.0).abs() < 1e-9, "{r}");
        assert!(t < 1e-12);
    }

    /// Angle from the matrix logarithm of `R_aᵀ R_b`.
    fn log_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        let r = a.transpose() * b;
        let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        (0.5 * skew.norm()).atan2(0.5 * (r.trace() - 1.0))
    }

    #[test]
    fn matches_matrix_log_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = se3_exp(&random_twist(&mut rng, 1.0, 1.0));
            let b = se3_exp(&random_twist(&mut rng, 0.2, 0.1)).compose(&a);
            let c = se3_exp(&random_twist(&mut rng, 1.0, 1.0));
            let d = se3_exp(&random_twist(&mut rng, 0.4, 0.1)).compose(&c);
            let (r, t) = pose_error(&traj(a, c), &traj(b, d));
            let expected_r = 0.5
                * (log_angle(&a.rotation_matrix(), &b.rotation_matrix())
                    + log_angle(&c.rotation_matrix(), &d.rotation_matrix()))
                .to_degrees();
            let centre = |p: &Pose| -(p.rotation_matrix().transpose() * p.translation);
            let expected_t = 0.5 * ((centre(&a) - centre(&b)).norm() + (centre(&c) - centre(&d)).norm());
            assert!((r - expected_r).abs() < 1e-9);
            assert!((t - expected_t).abs() < 1e-9);
        }
    }

    #[test]
    fn evaluation_against_own_renders() {
        let k = small_camera();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scene = random_scene(&mut rng, 6, 1, &k);
        let poses: Vec<Pose> = (0..3)
            .map(|_| se3_exp(&random_twist(&mut rng, 0.05, 0.05)))
            .collect();
        let views: Vec<(Pose, RadianceImage)> = poses.iter().map(|p| (*p, render(&scene, p, &k))).collect();
        let rep = evaluate(&scene, &views, &k).unwrap();
        assert!(rep.views.iter().all(|v| v.psnr == f64::INFINITY && (v.ssim - 1.0).abs() < 1e-12));

        let mut faded = scene.clone();
        faded.gaussians.iter_mut().for_each(|g| g.opacity_logit = -30.0);
        let worse = evaluate(&faded, &views, &k).unwrap();
        assert!(worse.mean_psnr < rep.mean_psnr);
        let mean = worse.views.iter().map(|v| v.psnr).sum::<f64>() / 3.0;
        assert!((worse.mean_psnr - mean).abs() < 1e-12);
    }
}
