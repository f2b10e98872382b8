//! Event-based double integral: recovers a sharp frame at a reference time
//! from one blurred image and the events of its exposure.
//!
//! With `E_k` the signed event count between `t_ref` and bin centre `t_k`,
//! the latent frame is `I = B · m / Σ_k exp(Θ · E_k)` (midpoint rule over
//! `m` uniform bins). Counts come from luminance, so the same factor scales
//! every colour channel.

use crate::error::{Error, Result};
use crate::events::{cumulative_counts, EventStream};
use crate::geometry::ExposureTrajectory;
use crate::image::RadianceImage;

pub const DEFAULT_BINS: usize = 32;

#[derive(Clone, Debug)]
pub struct EdiRequest<'a> {
    pub blurred: &'a RadianceImage,
    pub events: &'a EventStream,
    pub t_start: f64,
    pub t_end: f64,
    pub t_ref: f64,
    pub theta: f64,
    pub bins: usize,
}

impl EdiRequest<'_> {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_ref.is_finite()) {
            return Err(Error::NonFinite("EDI times".into()));
        }
        if self.t_start >= self.t_end {
            return Err(Error::InvalidArgument(format!(
                "exposure [{}, {}] is empty",
                self.t_start, self.t_end
            )));
        }
        if self.t_ref < self.t_start || self.t_ref > self.t_end {
            return Err(Error::InvalidArgument(format!(
                "t_ref {} outside exposure [{}, {}]",
                self.t_ref, self.t_start, self.t_end
            )));
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(Error::InvalidArgument(format!("theta must be non-negative, got {}", self.theta)));
        }
        if self.bins < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {}", self.bins)));
        }
        if !self.blurred.is_finite() {
            return Err(Error::NonFinite("blurred image".into()));
        }
        if self.blurred.width != self.events.width() || self.blurred.height != self.events.height() {
            return Err(Error::ShapeMismatch(format!(
                "image is {}x{} but events are {}x{}",
                self.blurred.width,
                self.blurred.height,
                self.events.width(),
                self.events.height()
            )));
        }
        Ok(())
    }
}

/// Per-pixel factor `m / Σ_k exp(Θ · E_k)`.
pub fn edi_gain(req: &EdiRequest) -> Result<Vec<f64>> {
    req.validate()?;
    let m = req.bins;
    let dt = (req.t_end - req.t_start) / m as f64;
    let centers: Vec<f64> = (0..m).map(|k| req.t_start + (k as f64 + 0.5) * dt).collect();
    let split = centers.partition_point(|&t| t < req.t_ref);
    let mut times = centers.clone();
    times.insert(split, req.t_ref);
    let cum = cumulative_counts(req.events, &times)?;
    let at_ref = &cum[split];
    let pixels = req.blurred.width * req.blurred.height;
    let mut denom = vec![0.0; pixels];
    for (i, c) in cum.iter().enumerate() {
        if i == split {
            continue;
        }
        for (d, (ck, cr)) in denom.iter_mut().zip(c.data.iter().zip(&at_ref.data)) {
            *d += (req.theta * (ck - cr) as f64).exp();
        }
    }
    Ok(denom.into_iter().map(|d| m as f64 / d).collect())
}

pub fn edi_deblur(req: &EdiRequest) -> Result<RadianceImage> {
    let gain = edi_gain(req)?;
    let mut out = req.blurred.clone();
    let ch = out.channels;
    for (px, g) in out.data.chunks_exact_mut(ch).zip(&gain) {
        for v in px {
            *v = (*v * g).max(0.0);
        }
    }
    Ok(out)
}

/// EDI at mid-exposure with [`DEFAULT_BINS`] bins.
pub fn edi_mid_exposure(
    blurred: &RadianceImage,
    events: &EventStream,
    traj: &ExposureTrajectory,
    theta: f64,
) -> Result<RadianceImage> {
    edi_deblur(&EdiRequest {
        blurred,
        events,
        t_start: traj.t_start,
        t_end: traj.t_end,
        t_ref: traj.mid_time(),
        theta,
        bins: DEFAULT_BINS,
    })
}
