//! Perspective projection of 3D Gaussians and its adjoint.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3, Vector6};

use super::{ALPHA_MIN, LOW_PASS, NEAR_PLANE};
use crate::geometry::Pose;
use crate::scene::{rotation_from_quaternion, sh_basis, sh_basis_gradient, sigmoid, CameraIntrinsics, GaussianPrimitive};

use super::grad::GaussianGrad;

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Projected2D {
    pub mean2d: Vector2<f64>,
    /// Covariance in pixels², low-pass floor included.
    pub cov2d: Matrix2<f64>,
    /// Upper triangle `(a, b, c)` of the inverse covariance.
    pub conic: [f64; 3],
    pub depth: f64,
    pub color: [f64; 3],
    /// Channels whose SH value fell below zero and were clamped.
    pub color_clamped: [bool; 3],
    pub alpha: f64,
    /// Inclusive pixel bounds `[x0, x1] × [y0, y1]`, already clipped to the image.
    pub bbox: (usize, usize, usize, usize),
}

/// Per-pixel support radius in units of the major standard deviation:
/// beyond it `α·G < 1/255` and the pixel would be skipped anyway.
fn support_sigmas(alpha: f64) -> Option<f64> {
    let ratio = alpha / ALPHA_MIN;
    if ratio < 1.0 {
        None
    } else {
        Some((2.0 * ratio.ln()).sqrt())
    }
}

/// Projects one Gaussian; `None` when it lies behind the near plane or its
/// footprint misses the image.
pub fn project_gaussian(g: &GaussianPrimitive, pose: &Pose, k: &CameraIntrinsics) -> Option<Projected2D> {
    let rw = pose.rotation_matrix();
    let mu = g.position();
    let xc = rw * mu + pose.translation;
    if xc.z <= NEAR_PLANE {
        return None;
    }
    let sigma = world_covariance(g);
    let t = perspective_jacobian(&xc, k) * rw;
    let cov2d = t * sigma * t.transpose() + Matrix2::identity() * LOW_PASS;
    let det = cov2d[(0, 0)] * cov2d[(1, 1)] - cov2d[(0, 1)] * cov2d[(1, 0)];
    if !(det > 0.0) {
        return None;
    }
    let conic = [cov2d[(1, 1)] / det, -cov2d[(0, 1)] / det, cov2d[(0, 0)] / det];
    let mean2d = Vector2::new(k.fx * xc.x / xc.z + k.cx, k.fy * xc.y / xc.z + k.cy);

    let alpha = sigmoid(g.opacity_logit);
    let sigmas = support_sigmas(alpha)?;
    let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = sigmas * lambda_max.sqrt();
    let x0 = (mean2d.x - radius).ceil().max(0.0);
    let x1 = (mean2d.x + radius).floor().min(k.width as f64 - 1.0);
    let y0 = (mean2d.y - radius).ceil().max(0.0);
    let y1 = (mean2d.y + radius).floor().min(k.height as f64 - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }

    let (color, color_clamped) = view_color(g, &(mu - pose.center()));
    Some(Projected2D {
        mean2d,
        cov2d,
        conic,
        depth: xc.z,
        color,
        color_clamped,
        alpha,
        bbox: (x0 as usize, x1 as usize, y0 as usize, y1 as usize),
    })
}

fn world_covariance(g: &GaussianPrimitive) -> Matrix3<f64> {
    let m = rotation_from_quaternion(&g.rotation) * Matrix3::from_diagonal(&g.scale());
    m * m.transpose()
}

fn perspective_jacobian(xc: &Vector3<f64>, k: &CameraIntrinsics) -> Matrix2x3<f64> {
    let iz = 1.0 / xc.z;
    Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * xc.x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * xc.y * iz * iz,
    )
}

fn view_color(g: &GaussianPrimitive, d: &Vector3<f64>) -> ([f64; 3], [bool; 3]) {
    let dir = d.normalize();
    let basis = sh_basis(g.sh_degree(), &dir);
    let mut color = [0.0; 3];
    let mut clamped = [false; 3];
    for c in 0..3 {
        let v: f64 = g.sh[c].iter().zip(&basis).map(|(a, b)| a * b).sum::<f64>() + 0.5;
        clamped[c] = v < 0.0;
        color[c] = v.max(0.0);
    }
    (color, clamped)
}

/// Screen-space partials of one Gaussian, as accumulated by the rasterizer.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScreenGrad {
    pub mean2d: Vector2<f64>,
    /// With respect to the conic entries `(a, b, c)`; `b` is the shared
    /// off-diagonal parameter.
    pub conic: [f64; 3],
    pub color: [f64; 3],
    pub alpha: f64,
}

/// Pulls screen-space partials back onto the Gaussian parameters and the
/// left-perturbation twist `(ω, ρ)` of the camera pose.
pub fn project_backward(
    g: &GaussianPrimitive,
    pose: &Pose,
    k: &CameraIntrinsics,
    proj: &Projected2D,
    sg: &ScreenGrad,
    out: &mut GaussianGrad,
    pose_grad: &mut Vector6<f64>,
) {
    let rw = pose.rotation_matrix();
    let mu = g.position();
    let xc = rw * mu + pose.translation;
    let (x, y, z) = (xc.x, xc.y, xc.z);
    let iz = 1.0 / z;
    let iz2 = iz * iz;

    let q_raw = g.rotation;
    let qn = q_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rg = rotation_from_quaternion(&q_raw);
    let s = g.scale();
    let m = rg * Matrix3::from_diagonal(&s);
    let sigma = m * m.transpose();
    let jac = perspective_jacobian(&xc, k);
    let t = jac * rw;

    // conic = cov2d⁻¹
    let conic = Matrix2::new(proj.conic[0], proj.conic[1], proj.conic[1], proj.conic[2]);
    let g_conic = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
    let g_cov2d = -(conic * g_conic * conic);

    let g_t = g_cov2d * t * sigma * 2.0;
    let g_sigma = t.transpose() * g_cov2d * t;
    let g_jac = g_t * rw.transpose();
    let g_rw = jac.transpose() * g_t;

    let mut g_x = Vector3::zeros();
    g_x.x += g_jac[(0, 2)] * (-k.fx * iz2);
    g_x.y += g_jac[(1, 2)] * (-k.fy * iz2);
    g_x.z += g_jac[(0, 0)] * (-k.fx * iz2)
        + g_jac[(0, 2)] * (2.0 * k.fx * x * iz2 * iz)
        + g_jac[(1, 1)] * (-k.fy * iz2)
        + g_jac[(1, 2)] * (2.0 * k.fy * y * iz2 * iz);

    g_x.x += sg.mean2d.x * k.fx * iz;
    g_x.y += sg.mean2d.y * k.fy * iz;
    g_x.z -= (sg.mean2d.x * k.fx * x + sg.mean2d.y * k.fy * y) * iz2;

    let mut g_mu = rw.transpose() * g_x;
    let g_omega = xc.cross(&g_x);
    let mut g_rho = g_x;

    // rotation of the view inside T = J R_w
    let a = g_rw * rw.transpose();
    let g_omega = g_omega + Vector3::new(a[(2, 1)] - a[(1, 2)], a[(0, 2)] - a[(2, 0)], a[(1, 0)] - a[(0, 1)]);

    // Σ = M Mᵀ, M = R S
    let g_m = g_sigma * m * 2.0;
    let mut g_rg = Matrix3::zeros();
    for col in 0..3 {
        let dot: f64 = (0..3).map(|row| g_m[(row, col)] * rg[(row, col)]).sum();
        out.log_scale[col] += dot * s[col];
        for row in 0..3 {
            g_rg[(row, col)] = g_m[(row, col)] * s[col];
        }
    }

    let (w, qx, qy, qz) = (q_raw[0] / qn, q_raw[1] / qn, q_raw[2] / qn, q_raw[3] / qn);
    let gr = |r: usize, c: usize| g_rg[(r, c)];
    let g_qhat = [
        2.0 * (-qz * gr(0, 1) + qy * gr(0, 2) + qz * gr(1, 0) - qx * gr(1, 2) - qy * gr(2, 0) + qx * gr(2, 1)),
        2.0 * (qy * gr(0, 1) + qz * gr(0, 2) + qy * gr(1, 0) - 2.0 * qx * gr(1, 1) - w * gr(1, 2)
            + qz * gr(2, 0)
            + w * gr(2, 1)
            - 2.0 * qx * gr(2, 2)),
        2.0 * (-2.0 * qy * gr(0, 0) + qx * gr(0, 1) + w * gr(0, 2) + qx * gr(1, 0) + qz * gr(1, 2)
            - w * gr(2, 0)
            + qz * gr(2, 1)
            - 2.0 * qy * gr(2, 2)),
        2.0 * (-2.0 * qz * gr(0, 0) - w * gr(0, 1) + qx * gr(0, 2) + w * gr(1, 0) - 2.0 * qz * gr(1, 1)
            + qy * gr(1, 2)
            + qx * gr(2, 0)
            + qy * gr(2, 1)),
    ];
    let qhat = [w, qx, qy, qz];
    let proj_dot: f64 = qhat.iter().zip(&g_qhat).map(|(a, b)| a * b).sum();
    for i in 0..4 {
        out.rotation[i] += (g_qhat[i] - qhat[i] * proj_dot) / qn;
    }

    // view-dependent colour
    let degree = g.sh_degree();
    let d = mu - pose.center();
    let dn = d.norm();
    let dir = d / dn;
    let basis = sh_basis(degree, &dir);
    let basis_grad = if degree > 0 { sh_basis_gradient(degree, &dir) } else { Vec::new() };
    let mut g_dir = Vector3::zeros();
    for c in 0..3 {
        if proj.color_clamped[c] {
            continue;
        }
        let gc = sg.color[c];
        for (kk, b) in basis.iter().enumerate() {
            out.sh[c][kk] += gc * b;
        }
        if degree > 0 {
            for (kk, bg) in basis_grad.iter().enumerate().skip(1) {
                g_dir += bg * (gc * g.sh[c][kk]);
            }
        }
    }
    if degree > 0 {
        let g_d = (g_dir - dir * dir.dot(&g_dir)) / dn;
        g_mu += g_d;
        g_rho += rw * g_d;
    }

    let alpha = proj.alpha;
    out.opacity_logit += sg.alpha * alpha * (1.0 - alpha);
    for i in 0..3 {
        out.position[i] += g_mu[i];
    }
    for i in 0..3 {
        pose_grad[i] += g_omega[i];
        pose_grad[3 + i] += g_rho[i];
    }
}
