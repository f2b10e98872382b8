//! Front-to-back compositing over depth-sorted splats, and its adjoint.
//!
//! Both passes walk Gaussians in order and touch only the pixels inside each
//! footprint, keeping per-pixel transmittance in a buffer. Per pixel this is
//! the same sequence of operations as a pixel-major loop over the sorted list.

use std::hash::{Hash, Hasher};

use super::project::{Projected2D, ScreenGrad};
use super::{ALPHA_CAP, ALPHA_MIN};
use crate::image::RadianceImage;

pub(crate) struct PixelAlpha {
    pub a: f64,
    pub gauss: f64,
    pub capped: bool,
    pub dx: f64,
    pub dy: f64,
}

#[inline]
pub(crate) fn pixel_alpha(p: &Projected2D, px: usize, py: usize) -> Option<PixelAlpha> {
    let dx = px as f64 - p.mean2d.x;
    let dy = py as f64 - p.mean2d.y;
    let power = -0.5 * (p.conic[0] * dx * dx + 2.0 * p.conic[1] * dx * dy + p.conic[2] * dy * dy);
    let gauss = power.exp();
    let raw = p.alpha * gauss;
    if raw < ALPHA_MIN {
        return None;
    }
    Some(PixelAlpha {
        a: raw.min(ALPHA_CAP),
        gauss,
        capped: raw > ALPHA_CAP,
        dx,
        dy,
    })
}

/// Composites `splats` (sorted front to back). Returns the image and the
/// final per-pixel transmittance.
pub(crate) fn composite(
    splats: &[(usize, Projected2D)],
    width: usize,
    height: usize,
    background: &[f64; 3],
) -> (RadianceImage, Vec<f64>) {
    let mut img = RadianceImage::new(width, height, 3);
    let mut trans = vec![1.0; width * height];
    for (_, p) in splats {
        let (x0, x1, y0, y1) = p.bbox;
        for py in y0..=y1 {
            for px in x0..=x1 {
                let Some(pa) = pixel_alpha(p, px, py) else { continue };
                let pix = py * width + px;
                let w = pa.a * trans[pix];
                let base = pix * 3;
                for c in 0..3 {
                    img.data[base + c] += p.color[c] * w;
                }
                trans[pix] *= 1.0 - pa.a;
            }
        }
    }
    for (pix, t) in trans.iter().enumerate() {
        for c in 0..3 {
            img.data[pix * 3 + c] += background[c] * t;
        }
    }
    (img, trans)
}

/// Reverse pass: screen-space partials of `Σ adjoint · C` for every splat,
/// in the same order as `splats`.
pub(crate) fn composite_backward(
    splats: &[(usize, Projected2D)],
    final_trans: &[f64],
    width: usize,
    background: &[f64; 3],
    adjoint: &RadianceImage,
) -> Vec<ScreenGrad> {
    let mut trans = final_trans.to_vec();
    // colour contributed by everything behind the current splat, background included
    let mut behind: Vec<f64> = final_trans
        .iter()
        .flat_map(|t| background.iter().map(move |b| b * t))
        .collect();
    let mut grads = vec![ScreenGrad::default(); splats.len()];
    for (slot, (_, p)) in splats.iter().enumerate().rev() {
        let sg = &mut grads[slot];
        let (x0, x1, y0, y1) = p.bbox;
        for py in y0..=y1 {
            for px in x0..=x1 {
                let Some(pa) = pixel_alpha(p, px, py) else { continue };
                let pix = py * width + px;
                let one_minus = 1.0 - pa.a;
                let t_before = trans[pix] / one_minus;
                let base = pix * 3;
                let mut g_a = 0.0;
                for c in 0..3 {
                    let adj = adjoint.data[base + c];
                    sg.color[c] += adj * pa.a * t_before;
                    g_a += adj * (t_before * p.color[c] - behind[base + c] / one_minus);
                    behind[base + c] += p.color[c] * pa.a * t_before;
                }
                trans[pix] = t_before;
                if pa.capped {
                    continue;
                }
                sg.alpha += g_a * pa.gauss;
                let g_power = g_a * p.alpha * pa.gauss;
                let (a, b, c) = (p.conic[0], p.conic[1], p.conic[2]);
                sg.mean2d.x += g_power * (a * pa.dx + b * pa.dy);
                sg.mean2d.y += g_power * (b * pa.dx + c * pa.dy);
                sg.conic[0] -= 0.5 * g_power * pa.dx * pa.dx;
                sg.conic[1] -= g_power * pa.dx * pa.dy;
                sg.conic[2] -= 0.5 * g_power * pa.dy * pa.dy;
            }
        }
    }
    grads
}

/// Hashes every discrete decision the compositor makes: draw order, which
/// pixels each splat reaches, where the opacity cap binds and which colour
/// channels are clamped.
pub(crate) fn decision_signature(splats: &[(usize, Projected2D)], state: &mut impl Hasher) {
    for (idx, p) in splats {
        idx.hash(state);
        p.bbox.hash(state);
        p.color_clamped.hash(state);
        let (x0, x1, y0, y1) = p.bbox;
        for py in y0..=y1 {
            for px in x0..=x1 {
                match pixel_alpha(p, px, py) {
                    None => 0u8,
                    Some(pa) if pa.capped => 2,
                    Some(_) => 1,
                }
                .hash(state);
            }
        }
    }
}
