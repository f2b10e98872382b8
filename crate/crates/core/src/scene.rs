//! Explicit Gaussian scene representation.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: usize = 3;

pub fn sh_coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One anisotropic 3D Gaussian. Scale is stored in log space and opacity as a
/// logit so that unconstrained updates keep the primitive valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrimitive {
    #[serde(rename = "pos")]
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    /// Scalar-first quaternion. Normalized on use, so it may drift off the
    /// unit sphere between optimizer steps.
    #[serde(rename = "q")]
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    /// `sh[channel][basis]`.
    pub sh: [Vec<f64>; 3],
}

impl GaussianPrimitive {
    pub fn new(position: Vector3<f64>, scale: f64, color: [f64; 3], opacity: f64, degree: usize) -> Self {
        let mut sh: [Vec<f64>; 3] = Default::default();
        for (c, coeffs) in sh.iter_mut().enumerate() {
            *coeffs = vec![0.0; sh_coeff_count(degree)];
            coeffs[0] = (color[c] - 0.5) / SH_C0;
        }
        GaussianPrimitive {
            position: position.into(),
            log_scale: [scale.ln(); 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(opacity),
            sh,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn scale(&self) -> Vector3<f64> {
        Vector3::from(self.log_scale).map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rotation_from_quaternion(&self.rotation)
    }

    pub fn sh_degree(&self) -> usize {
        let n = self.sh[0].len();
        (0..=MAX_SH_DEGREE)
            .find(|&d| sh_coeff_count(d) == n)
            .unwrap_or(MAX_SH_DEGREE)
    }

    pub fn normalize_rotation(&mut self) {
        let n = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 1.0 {
            return;
        }
        if n > 0.0 && n.is_finite() {
            self.rotation.iter_mut().for_each(|v| *v /= n);
        } else {
            self.rotation = [1.0, 0.0, 0.0, 0.0];
        }
    }
}

/// Rotation matrix of the normalized scalar-first quaternion `q`.
pub fn rotation_from_quaternion(q: &[f64; 4]) -> Matrix3<f64> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// World-space covariance `R S² Rᵀ`.
pub fn covariance_of(g: &GaussianPrimitive) -> Matrix3<f64> {
    let m = g.rotation_matrix() * Matrix3::from_diagonal(&g.scale());
    m * m.transpose()
}

/// Real SH basis values along `dir` (unit), in the usual splatting order.
pub fn sh_basis(degree: usize, dir: &Vector3<f64>) -> Vec<f64> {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut b = Vec::with_capacity(sh_coeff_count(degree));
    b.push(SH_C0);
    if degree >= 1 {
        b.extend([-SH_C1 * y, SH_C1 * z, -SH_C1 * x]);
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b.extend([
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * x * z,
            SH_C2[4] * (xx - yy),
        ]);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b.extend([
            SH_C3[0] * y * (3.0 * xx - yy),
            SH_C3[1] * x * y * z,
            SH_C3[2] * y * (4.0 * zz - xx - yy),
            SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            SH_C3[4] * x * (4.0 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3.0 * yy),
        ]);
    }
    b
}

/// Partial derivatives of each basis function with respect to the direction
/// components, treating them as independent.
pub fn sh_basis_gradient(degree: usize, dir: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut g = Vec::with_capacity(sh_coeff_count(degree));
    g.push(Vector3::zeros());
    if degree >= 1 {
        g.extend([
            Vector3::new(0.0, -SH_C1, 0.0),
            Vector3::new(0.0, 0.0, SH_C1),
            Vector3::new(-SH_C1, 0.0, 0.0),
        ]);
    }
    if degree >= 2 {
        g.extend([
            Vector3::new(y, x, 0.0) * SH_C2[0],
            Vector3::new(0.0, z, y) * SH_C2[1],
            Vector3::new(-2.0 * x, -2.0 * y, 4.0 * z) * SH_C2[2],
            Vector3::new(z, 0.0, x) * SH_C2[3],
            Vector3::new(2.0 * x, -2.0 * y, 0.0) * SH_C2[4],
        ]);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        g.extend([
            Vector3::new(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0) * SH_C3[0],
            Vector3::new(y * z, x * z, x * y) * SH_C3[1],
            Vector3::new(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z) * SH_C3[2],
            Vector3::new(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy) * SH_C3[3],
            Vector3::new(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z) * SH_C3[4],
            Vector3::new(2.0 * x * z, -2.0 * y * z, xx - yy) * SH_C3[5],
            Vector3::new(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0) * SH_C3[6],
        ]);
    }
    g
}

/// View-dependent colour: SH evaluation plus the 0.5 offset, clamped at zero.
pub fn sh_to_color(g: &GaussianPrimitive, view_dir: &Vector3<f64>) -> [f64; 3] {
    let basis = sh_basis(g.sh_degree(), view_dir);
    let mut out = [0.0; 3];
    for (c, coeffs) in g.sh.iter().enumerate() {
        let v: f64 = coeffs.iter().zip(&basis).map(|(k, b)| k * b).sum::<f64>() + 0.5;
        out[c] = v.max(0.0);
    }
    out
}

/// Pinhole camera. Pixel `(i, j)` sits at image coordinate `(i, j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Centred principal point with the given focal length.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidArgument(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub sh_degree: usize,
    #[serde(rename = "background")]
    pub background: [f64; 3],
    pub gaussians: Vec<GaussianPrimitive>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.sh_degree > MAX_SH_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "sh_degree {} exceeds {MAX_SH_DEGREE}",
                self.sh_degree
            )));
        }
        let n = sh_coeff_count(self.sh_degree);
        for (i, g) in self.gaussians.iter().enumerate() {
            if g.sh.iter().any(|c| c.len() != n) {
                return Err(Error::InvalidArgument(format!(
                    "gaussian {i} does not carry degree-{} coefficients",
                    self.sh_degree
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Where the initial Gaussians come from.
#[derive(Clone, Debug)]
pub enum InitSource {
    /// Seed points, optionally with linear RGB colours.
    Points {
        points: Vec<[f64; 3]>,
        colors: Option<Vec<[f64; 3]>>,
    },
    /// Uniform random points inside the bounds.
    Random { count: usize },
}

#[derive(Clone, Debug)]
pub struct InitConfig {
    pub seed: u64,
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    /// Initial scale = this factor times the mean nearest-neighbour distance.
    pub scale_factor: f64,
    pub neighbors: usize,
    /// Scale used when a point has no neighbours.
    pub fallback_scale: f64,
    pub opacity: f64,
    pub sh_degree: usize,
    pub background: [f64; 3],
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            seed: 0,
            bounds_min: [-1.0; 3],
            bounds_max: [1.0; 3],
            scale_factor: 0.5,
            neighbors: 3,
            fallback_scale: 0.05,
            opacity: 0.1,
            sh_degree: 1,
            background: [0.0; 3],
        }
    }
}

/// Mean distance from each point to its `k` nearest neighbours (brute force).
pub fn mean_neighbor_distances(points: &[Vector3<f64>], k: usize) -> Vec<Option<f64>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| (p - q).norm())
                .collect();
            if d.is_empty() || k == 0 {
                return None;
            }
            d.sort_by(f64::total_cmp);
            let k = k.min(d.len());
            Some(d[..k].iter().sum::<f64>() / k as f64)
        })
        .collect()
}

pub fn init_scene(source: &InitSource, cfg: &InitConfig) -> Result<Scene> {
    let (points, colors): (Vec<Vector3<f64>>, Option<&Vec<[f64; 3]>>) = match source {
        InitSource::Points { points, colors } => {
            if let Some(c) = colors {
                if c.len() != points.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} seed points but {} colours",
                        points.len(),
                        c.len()
                    )));
                }
            }
            (points.iter().map(|p| Vector3::from(*p)).collect(), colors.as_ref())
        }
        InitSource::Random { count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let pts = (0..*count)
                .map(|_| {
                    Vector3::from_fn(|i, _| rng.random_range(cfg.bounds_min[i]..=cfg.bounds_max[i]))
                })
                .collect();
            (pts, None)
        }
    };
    if points.is_empty() {
        return Err(Error::InvalidArgument("scene initialization needs at least one point".into()));
    }
    if cfg.sh_degree > MAX_SH_DEGREE {
        return Err(Error::InvalidArgument(format!("sh_degree {} unsupported", cfg.sh_degree)));
    }
    let dists = mean_neighbor_distances(&points, cfg.neighbors);
    let gaussians = points
        .iter()
        .zip(dists)
        .enumerate()
        .map(|(i, (p, d))| {
            let scale = d.map_or(cfg.fallback_scale, |d| (cfg.scale_factor * d).max(1e-6));
            let color = colors.map_or([0.5; 3], |c| c[i]);
            GaussianPrimitive::new(*p, scale, color, cfg.opacity, cfg.sh_degree)
        })
        .collect();
    Ok(Scene {
        sh_degree: cfg.sh_degree,
        background: cfg.background,
        gaussians,
    })
}
