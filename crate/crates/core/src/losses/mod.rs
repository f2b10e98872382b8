//! Supervision terms and image metrics.
//!
//! Each term returns its value together with the gradient ("adjoint") with
//! respect to the rendered images it was computed from, ready to feed
//! [`crate::render::backward_blurred`].

mod ssim;

pub use ssim::{ssim, ssim_with_grad};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{cumulative_counts, log_luminance, EventConfig, EventCountMap, EventStream, LUMA_WEIGHTS};
use crate::image::RadianceImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_blur: f64,
    pub lambda_ev: f64,
    pub lambda_edi: f64,
    pub lambda_ssim: f64,
    /// Contrast threshold used to convert log-luminance change to event counts.
    pub theta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_blur: 1.0,
            lambda_ev: 0.1,
            lambda_edi: 1.0,
            lambda_ssim: 0.2,
            theta: EventConfig::default().theta,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_blur, self.lambda_ev, self.lambda_edi, self.lambda_ssim];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("loss weights must be non-negative: {all:?}")));
        }
        if self.lambda_ssim > 1.0 {
            return Err(Error::InvalidArgument(format!("lambda_ssim {} exceeds 1", self.lambda_ssim)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidArgument(format!("theta must be positive, got {}", self.theta)));
        }
        Ok(())
    }
}

/// Weighted loss for one observation. `total` is always the weighted sum of
/// the three terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub blur: f64,
    pub event: f64,
    pub edi: f64,
}

/// A loss term and its gradient with respect to one image.
#[derive(Clone, Debug)]
pub struct ImageTerm {
    pub value: f64,
    pub adjoint: RadianceImage,
}

/// A loss term and its gradients with respect to each latent render.
#[derive(Clone, Debug)]
pub struct LatentTerm {
    pub value: f64,
    pub adjoints: Vec<RadianceImage>,
}

/// Mean absolute difference over all pixels and channels.
pub fn l1(a: &RadianceImage, b: &RadianceImage) -> Result<f64> {
    a.check_same_shape(b)?;
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.len() as f64)
}

fn l1_with_grad(a: &RadianceImage, b: &RadianceImage) -> Result<ImageTerm> {
    a.check_same_shape(b)?;
    let n = a.len() as f64;
    let mut adjoint = RadianceImage::new(a.width, a.height, a.channels);
    let mut sum = 0.0;
    for ((g, x), y) in adjoint.data.iter_mut().zip(&a.data).zip(&b.data) {
        let r = x - y;
        sum += r.abs();
        *g = if r > 0.0 {
            1.0 / n
        } else if r < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok(ImageTerm {
        value: sum / n,
        adjoint,
    })
}

/// `(1 − λ_SSIM)·l1 + λ_SSIM·(1 − ssim)` with its gradient in `rendered`.
pub fn photometric_loss(rendered: &RadianceImage, target: &RadianceImage, lambda_ssim: f64) -> Result<ImageTerm> {
    let mut term = l1_with_grad(rendered, target)?;
    term.value *= 1.0 - lambda_ssim;
    term.adjoint.data.iter_mut().for_each(|g| *g *= 1.0 - lambda_ssim);
    if lambda_ssim > 0.0 {
        let (s, gs) = ssim_with_grad(rendered, target)?;
        term.value += lambda_ssim * (1.0 - s);
        term.adjoint
            .data
            .iter_mut()
            .zip(&gs.data)
            .for_each(|(g, d)| *g -= lambda_ssim * d);
    }
    Ok(term)
}

/// Blur reconstruction loss between the synthesized and the observed blurred image.
pub fn blur_loss(rendered_blur: &RadianceImage, observed_blur: &RadianceImage, w: &LossWeights) -> Result<ImageTerm> {
    photometric_loss(rendered_blur, observed_blur, w.lambda_ssim)
}

/// EDI prior between the mid-exposure latent render and the fixed EDI target.
pub fn edi_loss(latent_mid: &RadianceImage, edi_image: &RadianceImage, w: &LossWeights) -> Result<ImageTerm> {
    photometric_loss(latent_mid, edi_image, w.lambda_ssim)
}

/// Running event counts at every latent timestamp of one exposure, so each
/// window's observed count is a difference of two cached maps.
#[derive(Clone, Debug)]
pub struct EventWindows {
    pub times: Vec<f64>,
    cumulative: Vec<EventCountMap>,
}

impl EventWindows {
    pub fn new(stream: &EventStream, latent_times: &[f64]) -> Result<Self> {
        if latent_times.len() < 2 {
            return Err(Error::InvalidArgument(
                "event loss needs at least two latent timestamps".into(),
            ));
        }
        Ok(EventWindows {
            times: latent_times.to_vec(),
            cumulative: cumulative_counts(stream, latent_times)?,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Observed signed count over `(t_from, t_to]` at pixel `pix`.
    pub fn observed(&self, from: usize, to: usize, pix: usize) -> i32 {
        self.cumulative[to].data[pix] - self.cumulative[from].data[pix]
    }
}

/// One start index per window: window `i` spans `(t_s, t_{i+1}]` with `s`
/// drawn uniformly from `{0..i}`.
pub fn sample_window_starts(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n.saturating_sub(1)).map(|i| rng.random_range(0..=i)).collect()
}

/// Event consistency between observed counts and log-luminance differences of
/// the latent renders. Adjoints are with respect to the log-luminance images.
pub fn event_loss_log(
    latent_log_images: &[RadianceImage],
    windows: &EventWindows,
    starts: &[usize],
    theta: f64,
) -> Result<LatentTerm> {
    let n = latent_log_images.len();
    if n < 2 {
        return Err(Error::InvalidArgument("event loss needs at least two latent images".into()));
    }
    if windows.len() != n || starts.len() != n - 1 {
        return Err(Error::ShapeMismatch(format!(
            "{n} latent images, {} cached timestamps, {} window starts",
            windows.len(),
            starts.len()
        )));
    }
    let first = &latent_log_images[0];
    for img in latent_log_images {
        first.check_same_shape(img)?;
    }
    if first.channels != 1 {
        return Err(Error::ShapeMismatch("event loss expects log-luminance images".into()));
    }
    let pixels = first.pixel_count();
    if windows.cumulative[0].data.len() != pixels {
        return Err(Error::ShapeMismatch("event stream and renders differ in size".into()));
    }
    let scale = 1.0 / (pixels as f64 * (n - 1) as f64);
    let mut adjoints = vec![RadianceImage::new(first.width, first.height, 1); n];
    let mut total = 0.0;
    for (i, &s) in starts.iter().enumerate() {
        let e = i + 1;
        if s > i {
            return Err(Error::InvalidArgument(format!("window {i} starts at {s}, after its lower edge {i}")));
        }
        for pix in 0..pixels {
            let observed = windows.observed(s, e, pix) as f64;
            let predicted = (latent_log_images[e].data[pix] - latent_log_images[s].data[pix]) / theta;
            let r = observed - predicted;
            total += r.abs();
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            // d|r|/dL_e = −sign/Θ, d|r|/dL_s = +sign/Θ
            adjoints[e].data[pix] -= sign * scale / theta;
            adjoints[s].data[pix] += sign * scale / theta;
        }
    }
    Ok(LatentTerm {
        value: total * scale,
        adjoints,
    })
}

/// Event loss on RGB latent renders: converts to log luminance, evaluates
/// [`event_loss_log`], and chains the adjoints back to RGB.
pub fn event_loss(
    latents: &[&RadianceImage],
    windows: &EventWindows,
    starts: &[usize],
    cfg: &EventConfig,
) -> Result<LatentTerm> {
    let logs: Vec<RadianceImage> = latents.iter().map(|img| log_luminance(img, cfg)).collect();
    let term = event_loss_log(&logs, windows, starts, cfg.theta)?;
    let adjoints = latents
        .iter()
        .zip(&term.adjoints)
        .map(|(img, adj)| {
            let mut out = RadianceImage::new(img.width, img.height, img.channels);
            for ((o, px), g) in out
                .data
                .chunks_exact_mut(img.channels)
                .zip(img.data.chunks_exact(img.channels))
                .zip(&adj.data)
            {
                let y = crate::events::luminance(px) + cfg.log_eps;
                if img.channels == 3 {
                    for c in 0..3 {
                        o[c] = g * LUMA_WEIGHTS[c] / y;
                    }
                } else {
                    o[0] = g / y;
                }
            }
            out
        })
        .collect();
    Ok(LatentTerm {
        value: term.value,
        adjoints,
    })
}

/// Weighted sum of the three terms.
pub fn total_loss(blur: f64, event: f64, edi: f64, w: &LossWeights) -> LossReport {
    LossReport {
        total: w.lambda_blur * blur + w.lambda_ev * event + w.lambda_edi * edi,
        blur,
        event,
        edi,
    }
}

/// Peak signal-to-noise ratio in dB for peak 1 after clamping both images to
/// `[0, 1]`; identical images give `+∞`.
pub fn psnr(a: &RadianceImage, b: &RadianceImage) -> Result<f64> {
    a.check_same_shape(b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x.clamp(0.0, 1.0) - y.clamp(0.0, 1.0);
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}
