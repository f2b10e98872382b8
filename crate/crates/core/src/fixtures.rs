//! Small seeded scenes and trajectories shared by tests and benchmarks.

use nalgebra::{Vector3, Vector6};
use rand::Rng;

use crate::geometry::{se3_exp, ExposureTrajectory, Pose, Twist};
use crate::scene::{CameraIntrinsics, GaussianPrimitive, Scene};

/// 16×16 camera with a centred principal point.
pub fn small_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(20.0, 20.0, 8.0, 8.0, 16, 16).expect("valid intrinsics")
}

/// Random Gaussians in front of an identity camera, all projecting inside
/// the image of `k`.
pub fn random_scene(rng: &mut impl Rng, count: usize, sh_degree: usize, k: &CameraIntrinsics) -> Scene {
    let gaussians = (0..count)
        .map(|_| {
            let z = rng.random_range(1.5..3.0);
            let u = rng.random_range(0.25..0.75) * k.width as f64;
            let v = rng.random_range(0.25..0.75) * k.height as f64;
            let pos = Vector3::new((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
            let color = [
                rng.random_range(0.2..0.9),
                rng.random_range(0.2..0.9),
                rng.random_range(0.2..0.9),
            ];
            let mut g = GaussianPrimitive::new(pos, 0.1, color, 0.5, sh_degree);
            for s in g.log_scale.iter_mut() {
                *s = rng.random_range(0.05f64..0.2).ln();
            }
            for q in g.rotation.iter_mut() {
                *q = rng.random_range(-1.0..1.0);
            }
            g.normalize_rotation();
            g.opacity_logit = rng.random_range(-1.0..2.0);
            for c in 0..3 {
                for coeff in g.sh[c].iter_mut().skip(1) {
                    *coeff = rng.random_range(-0.1..0.1);
                }
            }
            g
        })
        .collect();
    Scene {
        sh_degree,
        background: [0.1, 0.2, 0.3],
        gaussians,
    }
}

/// Random twist with rotation angle `rot` (radians) and translation length `trans`.
pub fn random_twist(rng: &mut impl Rng, rot: f64, trans: f64) -> Twist {
    let mut unit = || {
        loop {
            let v: Vector3<f64> = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v / n;
            }
        }
    };
    let w = unit() * rot;
    let t = unit() * trans;
    Twist(Vector6::new(w.x, w.y, w.z, t.x, t.y, t.z))
}

/// Short camera shake around `center`: endpoints sit at `exp(∓ξ/2) ∘ center`.
pub fn shake_trajectory(center: &Pose, shake: &Twist, t_start: f64, t_end: f64) -> ExposureTrajectory {
    let start = se3_exp(&shake.scaled(-0.5)).compose(center);
    let end = se3_exp(&shake.scaled(0.5)).compose(center);
    ExposureTrajectory::new(start, end, t_start, t_end).expect("valid exposure window")
}
