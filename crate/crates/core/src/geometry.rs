//! Rigid-body poses on SE(3), the se(3) tangent space, and intra-exposure
//! trajectory interpolation.
//!
//! Conventions used throughout the crate:
//! - quaternions are scalar-first `(w, x, y, z)` and rotate world into camera;
//! - a [`Pose`] maps world points to camera points, `x_c = R x_w + t`;
//! - a [`Twist`] is ordered `(ω, ρ)`, rotation first;
//! - pose perturbations are applied on the left, `exp(δ) ∘ P`.

use nalgebra::{Matrix3, Matrix6, Quaternion, Unit, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this rotation angle the exponential/logarithm use their Taylor branches.
pub const SMALL_ANGLE: f64 = 1e-6;

/// The third- and fourth-order coefficients of the SE(3) Jacobian lose all
/// precision to cancellation well above [`SMALL_ANGLE`], so they switch to a
/// series earlier.
const JACOBIAN_SERIES_ANGLE: f64 = 1e-2;

/// Skew-symmetric cross-product matrix, `hat(a) b = a × b`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// An se(3) tangent vector, rotation part first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Twist(Vector6::new(
            rotation.x,
            rotation.y,
            rotation.z,
            translation.x,
            translation.y,
            translation.z,
        ))
    }

    pub fn zero() -> Self {
        Twist(Vector6::zeros())
    }

    pub fn rotation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Twist(self.0 * s)
    }
}

/// World-to-camera rigid transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    q: [f64; 4],
    t: [f64; 3],
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseRepr {
            q: [q.w, q.i, q.j, q.k],
            t: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl TryFrom<PoseRepr> for Pose {
    type Error = String;

    fn try_from(r: PoseRepr) -> std::result::Result<Self, String> {
        let q = Quaternion::new(r.q[0], r.q[1], r.q[2], r.q[3]);
        Ok(Pose {
            rotation: unit_quaternion(q).ok_or_else(|| format!("invalid quaternion {:?}", r.q))?,
            translation: Vector3::from(r.t),
        })
    }
}

/// Normalizes `q`, keeping it bit-identical when it is already unit length.
pub(crate) fn unit_quaternion(q: Quaternion<f64>) -> Option<UnitQuaternion<f64>> {
    let norm = q.norm();
    if !norm.is_finite() || norm < 1e-12 {
        return None;
    }
    if (norm - 1.0).abs() < 1e-12 {
        Some(Unit::new_unchecked(q))
    } else {
        Some(Unit::new_unchecked(q / norm))
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    /// Camera at `eye` looking at `target`; camera +z points forward and +y
    /// points down the image.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::Degenerate("eye coincides with target".into()));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-12 {
            return Err(Error::Degenerate("up vector parallel to view direction".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        // Rows are the camera axes expressed in world coordinates.
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let rotation = UnitQuaternion::from_matrix(&r);
        Ok(Pose {
            rotation,
            translation: -(r * eye),
        })
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let q = self.rotation.quaternion() * other.rotation.quaternion();
        Pose {
            rotation: Unit::new_normalize(q),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }

    /// Applies a left perturbation `exp(delta) ∘ self`.
    pub fn perturbed(&self, delta: &Twist) -> Pose {
        se3_exp(delta).compose(self)
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        if self.rotation == other.rotation {
            return 0.0;
        }
        self.rotation.angle_to(&other.rotation)
    }

    /// The 6×6 adjoint in `(ω, ρ)` ordering: `P exp(η) P⁻¹ = exp(Ad_P η)`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation_matrix();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(hat(&self.translation) * r));
        ad
    }
}

/// `(1 − cos θ)/θ²` and `(θ − sin θ)/θ³`.
fn so3_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let half = (0.5 * theta).sin();
        (
            2.0 * half * half / (theta * theta),
            (theta - theta.sin()) / (theta * theta * theta),
        )
    }
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let (b, c) = so3_coefficients(omega.norm());
    let w = hat(omega);
    Matrix3::identity() + w * b + w * w * c
}

/// Exponential map, rotation via the half-angle quaternion and translation via
/// the V matrix.
pub fn se3_exp(xi: &Twist) -> Pose {
    let omega = xi.rotation();
    let rho = xi.translation();
    let theta = omega.norm();
    let (w, k) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 8.0, 0.5 - t2 / 48.0)
    } else {
        ((0.5 * theta).cos(), (0.5 * theta).sin() / theta)
    };
    let q = Quaternion::new(w, k * omega.x, k * omega.y, k * omega.z);
    Pose {
        rotation: Unit::new_normalize(q),
        translation: so3_left_jacobian(&omega) * rho,
    }
}

/// Logarithm map; rejects rotations at (or numerically at) angle π.
pub fn se3_log(p: &Pose) -> Result<Twist> {
    let mut q = *p.rotation.quaternion();
    if q.w < 0.0 {
        q = -q;
    }
    let v = Vector3::new(q.i, q.j, q.k);
    let n = v.norm();
    let theta = 2.0 * n.atan2(q.w);
    if theta > std::f64::consts::PI - 1e-9 {
        return Err(Error::Degenerate(format!(
            "rotation angle {theta} is at π; the logarithm is not unique"
        )));
    }
    let omega = if theta < SMALL_ANGLE {
        v * (2.0 / q.w) * (1.0 - n * n / (3.0 * q.w * q.w))
    } else {
        v * (theta / n)
    };
    let w = hat(&omega);
    let d = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        (1.0 - theta / (2.0 * (0.5 * theta).tan())) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - w * 0.5 + w * w * d;
    Ok(Twist::new(omega, v_inv * p.translation))
}

/// Left Jacobian of SE(3) in `(ω, ρ)` ordering:
/// `exp(ξ + δ) ≈ exp(J_l(ξ) δ) exp(ξ)`.
pub fn se3_left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let phi = xi.rotation();
    let rho = xi.translation();
    let theta = phi.norm();
    let jl = so3_left_jacobian(&phi);

    let (c2, c3, c4) = if theta < JACOBIAN_SERIES_ANGLE {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
            1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0,
            1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (
            (theta - s) / (t2 * theta),
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta),
        )
    };
    let p = hat(&phi);
    let r = hat(&rho);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    let pp = p * p;
    let q = r * 0.5
        + (pr + rp + prp) * c2
        + (pp * r + rp * p - prp * 3.0) * c3
        + (prp * p + pp * r * p) * c4;

    let mut j = Matrix6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl);
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl);
    j.fixed_view_mut::<3, 3>(3, 0).copy_from(&q);
    j
}

/// Right Jacobian of SE(3): `exp(ξ + δ) ≈ exp(ξ) exp(J_r(ξ) δ)`.
pub fn se3_right_jacobian(xi: &Twist) -> Matrix6<f64> {
    se3_left_jacobian(&xi.scaled(-1.0))
}

/// Inverse of the right Jacobian, using its block-triangular structure.
pub fn se3_right_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    let jr = se3_right_jacobian(xi);
    let a = jr.fixed_view::<3, 3>(0, 0).into_owned();
    let q = jr.fixed_view::<3, 3>(3, 0).into_owned();
    // SO(3) Jacobians are invertible for angles below 2π.
    let a_inv = a.try_inverse().unwrap_or_else(Matrix3::identity);
    let mut inv = Matrix6::zeros();
    inv.fixed_view_mut::<3, 3>(0, 0).copy_from(&a_inv);
    inv.fixed_view_mut::<3, 3>(3, 3).copy_from(&a_inv);
    inv.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(-(a_inv * q * a_inv)));
    inv
}

/// Camera motion over one exposure: linear interpolation in se(3) between
/// two endpoint poses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExposureTrajectory {
    pub pose_start: Pose,
    pub pose_end: Pose,
    pub t_start: f64,
    pub t_end: f64,
}

impl ExposureTrajectory {
    pub fn new(pose_start: Pose, pose_end: Pose, t_start: f64, t_end: f64) -> Result<Self> {
        let traj = ExposureTrajectory {
            pose_start,
            pose_end,
            t_start,
            t_end,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn stationary(pose: Pose, t_start: f64, t_end: f64) -> Result<Self> {
        Self::new(pose, pose, t_start, t_end)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite()) {
            return Err(Error::NonFinite("exposure window".into()));
        }
        if self.t_end <= self.t_start {
            return Err(Error::InvalidArgument(format!(
                "exposure window [{}, {}] is empty",
                self.t_start, self.t_end
            )));
        }
        Ok(())
    }

    /// Exposure duration τ.
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Mid-exposure time f.
    pub fn mid_time(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }

    fn fraction(&self, t: f64) -> Result<f64> {
        if !(self.t_start..=self.t_end).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside exposure window [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        Ok((t - self.t_start) / self.duration())
    }

    /// Relative motion `log(P_s⁻¹ ∘ P_e)`.
    pub fn relative_twist(&self) -> Result<Twist> {
        se3_log(&self.pose_start.inverse().compose(&self.pose_end))
    }

    /// `P(t) = P_s ∘ exp(s · log(P_s⁻¹ ∘ P_e))` with `s = (t − t_s)/τ`.
    pub fn interpolate_pose(&self, t: f64) -> Result<Pose> {
        let s = self.fraction(t)?;
        if s == 0.0 || self.pose_start == self.pose_end {
            return Ok(self.pose_start);
        }
        let xi = self.relative_twist()?;
        Ok(self.pose_start.compose(&se3_exp(&xi.scaled(s))))
    }

    /// Jacobians `(A_s, A_e)` of the interpolated pose with respect to left
    /// perturbations of the two endpoints, so that the left perturbation of
    /// `P(t)` is `A_s δ_s + A_e δ_e` to first order.
    pub fn interpolation_jacobians(&self, t: f64) -> Result<(Matrix6<f64>, Matrix6<f64>)> {
        let s = self.fraction(t)?;
        let xi = self.relative_twist()?;
        let pose = self.pose_start.compose(&se3_exp(&xi.scaled(s)));
        let m = pose.adjoint()
            * se3_right_jacobian(&xi.scaled(s))
            * se3_right_jacobian_inv(&xi)
            * self.pose_end.inverse().adjoint()
            * s;
        Ok((Matrix6::identity() - m, m))
    }

    /// `n` uniformly spaced times covering the window, endpoints included.
    /// `n` must be odd so that the middle sample is exactly the mid-exposure
    /// time; for `n = 1` the only sample is that midpoint.
    pub fn latent_timestamps(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 || n % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "latent sample count must be a positive odd integer, got {n}"
            )));
        }
        if n == 1 {
            return Ok(vec![self.mid_time()]);
        }
        let last = (n - 1) as f64;
        let mut times: Vec<f64> = (0..n)
            .map(|i| self.t_start + self.duration() * (i as f64 / last))
            .collect();
        times[n - 1] = self.t_end;
        times[(n - 1) / 2] = self.mid_time();
        Ok(times)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn hat4(xi: &Twist) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&xi.rotation()));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.translation());
        m
    }

    /// Truncated power series of the 4×4 matrix exponential.
    fn expm_series(xi: &Twist, terms: usize) -> Matrix4<f64> {
        let a = hat4(xi);
        let mut sum = Matrix4::identity();
        let mut term = Matrix4::identity();
        for k in 1..terms {
            term = term * a / k as f64;
            sum += term;
        }
        sum
    }

    fn pose_matrix(p: &Pose) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&p.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.translation);
        m
    }

    fn assert_pose_close(a: &Pose, b: &Pose, tol: f64) {
        let d = (pose_matrix(a) - pose_matrix(b)).abs().max();
        assert!(d < tol, "poses differ by {d}: {a:?} vs {b:?}");
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(se3_exp(&Twist::zero()), Pose::identity());
    }

    #[test]
    fn exp_of_pure_translation() {
        let p = se3_exp(&Twist::new(Vector3::zeros(), Vector3::new(1.0, 2.0, 3.0)));
        assert_eq!(p.rotation, UnitQuaternion::identity());
        assert_eq!(p.translation, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn quarter_turn_about_z_matches_series() {
        let xi = Twist::new(Vector3::new(0.0, 0.0, PI / 2.0), Vector3::zeros());
        let p = se3_exp(&xi);
        let mapped = p.transform_point(&Vector3::x());
        assert!((mapped - Vector3::y()).norm() < 1e-12);
        let oracle = expm_series(&xi, 20);
        assert!((pose_matrix(&p) - oracle).abs().max() < 1e-10);
    }

    #[test]
    fn exp_matches_series_for_general_twists() {
        let xi = Twist(Vector6::new(0.3, -0.7, 1.1, 0.5, -2.0, 0.25));
        let oracle = expm_series(&xi, 40);
        assert!((pose_matrix(&se3_exp(&xi)) - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn log_of_identity_and_translation() {
        assert_eq!(se3_log(&Pose::identity()).unwrap(), Twist::zero());
        let p = Pose::new(UnitQuaternion::identity(), Vector3::new(0.5, -1.0, 2.0));
        let xi = se3_log(&p).unwrap();
        assert_eq!(xi.rotation(), Vector3::zeros());
        assert!((xi.translation() - p.translation).norm() < 1e-15);
    }

    #[test]
    fn log_rejects_half_turn() {
        let p = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI),
            Vector3::zeros(),
        );
        assert!(matches!(se3_log(&p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = se3_exp(&Twist(Vector6::new(0.4, 0.1, -0.9, 3.0, -1.0, 0.2)));
        assert_pose_close(&p.compose(&p.inverse()), &Pose::identity(), 1e-12);
        assert!((p.compose(&p.inverse()).rotation.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_json_is_scalar_first() {
        let p = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.5),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let v: serde_json::Value = serde_json::to_value(p).unwrap();
        let q = v["q"].as_array().unwrap();
        assert!((q[0].as_f64().unwrap() - 0.25f64.cos()).abs() < 1e-15);
        assert!((q[3].as_f64().unwrap() - 0.25f64.sin()).abs() < 1e-15);
        let back: Pose = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn look_at_points_camera_at_target() {
        let p = Pose::look_at(
            Vector3::new(0.0, 0.0, -3.0),
            Vector3::zeros(),
            Vector3::new(0.0, -1.0, 0.0),
        )
        .unwrap();
        let c = p.transform_point(&Vector3::zeros());
        assert!((c - Vector3::new(0.0, 0.0, 3.0)).norm() < 1e-12);
        assert!((p.center() - Vector3::new(0.0, 0.0, -3.0)).norm() < 1e-12);
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        let xi = Twist(Vector6::new(0.3, -0.2, 0.5, 1.0, 0.4, -0.7));
        let jl = se3_left_jacobian(&xi);
        let base = se3_exp(&xi);
        let h = 1e-6;
        for k in 0..6 {
            let mut d = Vector6::zeros();
            d[k] = h;
            let plus = se3_exp(&Twist(xi.0 + d));
            let minus = se3_exp(&Twist(xi.0 - d));
            // left increments relative to exp(xi)
            let lp = se3_log(&plus.compose(&base.inverse())).unwrap();
            let lm = se3_log(&minus.compose(&base.inverse())).unwrap();
            let col = (lp.0 - lm.0) / (2.0 * h);
            assert!(
                (col - jl.column(k)).abs().max() < 1e-7,
                "column {k}: {col:?} vs {:?}",
                jl.column(k)
            );
        }
    }

    #[test]
    fn jacobian_series_branch_is_continuous() {
        let rho = Vector3::new(0.3, -1.2, 0.8);
        let axis = Vector3::new(0.2, 0.5, -0.4).normalize();
        let below = se3_left_jacobian(&Twist::new(axis * (JACOBIAN_SERIES_ANGLE * 0.999), rho));
        let above = se3_left_jacobian(&Twist::new(axis * (JACOBIAN_SERIES_ANGLE * 1.001), rho));
        assert!((below - above).abs().max() < 1e-4);
        let tiny = se3_left_jacobian(&Twist::new(axis * 1e-9, rho));
        let zero = se3_left_jacobian(&Twist::new(Vector3::zeros(), rho));
        assert!((tiny - zero).abs().max() < 1e-9);
    }

    #[test]
    fn right_jacobian_inverse() {
        let xi = Twist(Vector6::new(0.6, -0.1, 0.2, 0.3, 0.9, -2.0));
        let prod = se3_right_jacobian(&xi) * se3_right_jacobian_inv(&xi);
        assert!((prod - Matrix6::identity()).abs().max() < 1e-12);
    }

    fn sample_trajectory() -> ExposureTrajectory {
        let a = se3_exp(&Twist(Vector6::new(0.1, 0.2, -0.1, 0.5, 0.0, 3.0)));
        let b = se3_exp(&Twist(Vector6::new(0.15, 0.1, -0.05, 0.45, 0.1, 3.1)));
        ExposureTrajectory::new(a, b, 0.2, 0.3).unwrap()
    }

    #[test]
    fn interpolation_endpoints() {
        let traj = sample_trajectory();
        assert_eq!(traj.interpolate_pose(0.2).unwrap(), traj.pose_start);
        assert_pose_close(&traj.interpolate_pose(0.3).unwrap(), &traj.pose_end, 1e-9);
        assert!(traj.interpolate_pose(0.31).is_err());
        assert!(traj.interpolate_pose(0.19).is_err());
    }

    #[test]
    fn interpolation_of_translations_is_linear() {
        let a = Pose::new(UnitQuaternion::identity(), Vector3::new(0.0, 1.0, 2.0));
        let b = Pose::new(UnitQuaternion::identity(), Vector3::new(2.0, -1.0, 4.0));
        let traj = ExposureTrajectory::new(a, b, 0.0, 1.0).unwrap();
        let mid = traj.interpolate_pose(0.5).unwrap();
        assert!((mid.translation - Vector3::new(1.0, 0.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn exposure_window_must_be_nonempty() {
        assert!(ExposureTrajectory::stationary(Pose::identity(), 1.0, 1.0).is_err());
        assert!(ExposureTrajectory::stationary(Pose::identity(), 1.0, 0.5).is_err());
    }

    #[test]
    fn latent_timestamp_layouts() {
        let traj = ExposureTrajectory::stationary(Pose::identity(), 0.0, 1.0).unwrap();
        assert_eq!(
            traj.latent_timestamps(5).unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        let traj = ExposureTrajectory::stationary(Pose::identity(), 0.0, 2.0).unwrap();
        assert_eq!(traj.latent_timestamps(1).unwrap(), vec![1.0]);
        let traj = ExposureTrajectory::stationary(Pose::identity(), 0.1, 0.8).unwrap();
        let ts = traj.latent_timestamps(7).unwrap();
        assert_eq!(ts.len(), 7);
        assert_eq!(ts[3], traj.mid_time());
        assert!((ts[3] - 0.45).abs() < 1e-15);
        assert!(traj.latent_timestamps(4).is_err());
        assert!(traj.latent_timestamps(0).is_err());
    }

    #[test]
    fn interpolation_jacobians_match_finite_differences() {
        let traj = sample_trajectory();
        let t = 0.2 + 0.1 * 0.35;
        let (js, je) = traj.interpolation_jacobians(t).unwrap();
        let base = traj.interpolate_pose(t).unwrap();
        let h = 1e-6;
        for (which, jac) in [(0, js), (1, je)] {
            for k in 0..6 {
                let mut d = Vector6::zeros();
                d[k] = h;
                let eval = |delta: Vector6<f64>| {
                    let mut tr = traj;
                    if which == 0 {
                        tr.pose_start = tr.pose_start.perturbed(&Twist(delta));
                    } else {
                        tr.pose_end = tr.pose_end.perturbed(&Twist(delta));
                    }
                    let p = tr.interpolate_pose(t).unwrap();
                    se3_log(&p.compose(&base.inverse())).unwrap().0
                };
                let col = (eval(d) - eval(-d)) / (2.0 * h);
                assert!(
                    (col - jac.column(k)).abs().max() < 1e-7,
                    "endpoint {which} column {k}"
                );
            }
        }
    }

    fn twist_strategy(max_angle: f64) -> impl Strategy<Value = Twist> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            0.0..max_angle,
            prop::array::uniform3(-5.0f64..5.0),
        )
            .prop_filter("axis must be nonzero", |(a, _, _)| {
                Vector3::from(*a).norm() > 1e-3
            })
            .prop_map(|(axis, angle, t)| {
                Twist::new(Vector3::from(axis).normalize() * angle, Vector3::from(t))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn log_inverts_exp(xi in twist_strategy(3.0)) {
            let back = se3_log(&se3_exp(&xi)).unwrap();
            prop_assert!((back.0 - xi.0).abs().max() < 1e-7, "{:?} vs {:?}", back, xi);
        }
    }

    proptest! {
        #[test]
        fn exp_keeps_unit_quaternion(xi in twist_strategy(3.1)) {
            let p = se3_exp(&xi);
            prop_assert!((p.rotation.norm() - 1.0).abs() < 1e-9);
            let id = p.compose(&p.inverse());
            prop_assert!((pose_matrix(&id) - Matrix4::identity()).abs().max() < 1e-9);
        }

        #[test]
        fn midpoint_sample_is_geodesic_midpoint(
            a in twist_strategy(1.0), b in twist_strategy(1.0), n in 0usize..4
        ) {
            let n = 2 * n + 1;
            let traj = ExposureTrajectory::new(se3_exp(&a), se3_exp(&b), 0.0, 0.04).unwrap();
            prop_assume!(traj.relative_twist().is_ok());
            let ts = traj.latent_timestamps(n).unwrap();
            let mid = traj.interpolate_pose(ts[(n - 1) / 2]).unwrap();
            let xi = traj.relative_twist().unwrap();
            let oracle = traj.pose_start.compose(&se3_exp(&xi.scaled(0.5)));
            prop_assert!((pose_matrix(&mid) - pose_matrix(&oracle)).abs().max() < 1e-12);
        }

        #[test]
        fn interpolation_is_shift_invariant(
            a in twist_strategy(1.0), b in twist_strategy(1.0), frac in 0.0f64..1.0
        ) {
            let traj = ExposureTrajectory::new(se3_exp(&a), se3_exp(&b), 0.0, 0.5).unwrap();
            prop_assume!(traj.relative_twist().is_ok());
            let shifted = ExposureTrajectory::new(traj.pose_start, traj.pose_end, 10.0, 10.5).unwrap();
            let t = 0.5 * frac;
            let p = traj.interpolate_pose(t).unwrap();
            let q = shifted.interpolate_pose((10.0 + t).min(10.5)).unwrap();
            prop_assert!((pose_matrix(&p) - pose_matrix(&q)).abs().max() < 1e-9);
        }
    }
}
