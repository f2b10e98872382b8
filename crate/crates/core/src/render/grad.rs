use serde::{Deserialize, Serialize};

use crate::geometry::Twist;
use crate::scene::{sh_coeff_count, Scene};

/// Partials of a scalar with respect to one Gaussian's raw parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GaussianGrad {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub sh: [Vec<f64>; 3],
}

impl GaussianGrad {
    pub fn zeros(sh_degree: usize) -> Self {
        let n = sh_coeff_count(sh_degree);
        GaussianGrad {
            sh: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            ..Default::default()
        }
    }

    pub fn add_assign(&mut self, other: &GaussianGrad) {
        for i in 0..3 {
            self.position[i] += other.position[i];
            self.log_scale[i] += other.log_scale[i];
        }
        for i in 0..4 {
            self.rotation[i] += other.rotation[i];
        }
        self.opacity_logit += other.opacity_logit;
        for c in 0..3 {
            for (a, b) in self.sh[c].iter_mut().zip(&other.sh[c]) {
                *a += b;
            }
        }
    }

    /// Flattened in storage order: position, log_scale, rotation, opacity, sh.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(11 + 3 * self.sh[0].len());
        v.extend_from_slice(&self.position);
        v.extend_from_slice(&self.log_scale);
        v.extend_from_slice(&self.rotation);
        v.push(self.opacity_logit);
        for c in &self.sh {
            v.extend_from_slice(c);
        }
        v
    }
}

/// Gradient of a scalar objective with respect to a scene and one exposure
/// trajectory's endpoint twists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientBuffer {
    pub gaussians: Vec<GaussianGrad>,
    pub twist_start: Twist,
    pub twist_end: Twist,
    pub loss: f64,
}

impl GradientBuffer {
    pub fn zeros_like(scene: &Scene) -> Self {
        GradientBuffer {
            gaussians: vec![GaussianGrad::zeros(scene.sh_degree); scene.len()],
            twist_start: Twist::zero(),
            twist_end: Twist::zero(),
            loss: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite()
            && self.twist_start.0.iter().all(|v| v.is_finite())
            && self.twist_end.0.iter().all(|v| v.is_finite())
            && self.gaussians.iter().all(|g| g.values().iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.gaussians
            .iter()
            .flat_map(|g| g.values())
            .chain(self.twist_start.0.iter().copied())
            .chain(self.twist_end.0.iter().copied())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}
