//! SSIM over the valid region of an 11×11 Gaussian window (σ = 1.5), averaged
//! over channels, with its gradient with respect to the first image.

use crate::error::{Error, Result};
use crate::image::RadianceImage;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let r = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Valid-mode separable correlation of a `w×h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - WINDOW, h + 1 - WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|j| k[j] * rows[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Transpose of [`filter_valid`]: spreads an `ow×oh` map back onto `w×h`.
fn filter_valid_transpose(src: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - WINDOW, h + 1 - WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for j in 0..WINDOW {
                rows[(y + j) * ow + x] += k[j] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = rows[y * ow + x];
            for i in 0..WINDOW {
                out[y * w + x + i] += k[i] * v;
            }
        }
    }
    out
}

fn plane(img: &RadianceImage, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(img.channels).copied().collect()
}

fn check(a: &RadianceImage, b: &RadianceImage) -> Result<()> {
    a.check_same_shape(b)?;
    if a.width < WINDOW || a.height < WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs images of at least {WINDOW}x{WINDOW}, got {}x{}",
            a.width, a.height
        )));
    }
    Ok(())
}

/// Mean SSIM and, when `want_grad`, its gradient with respect to `a`.
pub(crate) fn ssim_impl(a: &RadianceImage, b: &RadianceImage, want_grad: bool) -> Result<(f64, Option<RadianceImage>)> {
    check(a, b)?;
    let k = kernel();
    let (w, h, ch) = (a.width, a.height, a.channels);
    let npos = ((w + 1 - WINDOW) * (h + 1 - WINDOW)) as f64;
    let norm = 1.0 / (npos * ch as f64);
    let mut total = 0.0;
    let mut grad = want_grad.then(|| RadianceImage::new(w, h, ch));
    for c in 0..ch {
        let pa = plane(a, c);
        let pb = plane(b, c);
        let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<f64>>();
        let mu_a = filter_valid(&pa, w, h, &k);
        let mu_b = filter_valid(&pb, w, h, &k);
        let e_aa = filter_valid(&sq(&pa, &pa), w, h, &k);
        let e_bb = filter_valid(&sq(&pb, &pb), w, h, &k);
        let e_ab = filter_valid(&sq(&pa, &pb), w, h, &k);
        let n = mu_a.len();
        let (mut g1, mut g2, mut g3) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let a1 = 2.0 * ma * mb + C1;
            let a2 = 2.0 * cov + C2;
            let b1 = ma * ma + mb * mb + C1;
            let b2 = va + vb + C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let d_mu = 2.0 * mb * a2 / (b1 * b2) - s * 2.0 * ma / b1;
                let d_va = -s / b2;
                let d_cov = 2.0 * a1 / (b1 * b2);
                g1[i] = d_mu - 2.0 * ma * d_va - mb * d_cov;
                g2[i] = d_va;
                g3[i] = d_cov;
            }
        }
        if let Some(g) = grad.as_mut() {
            let t1 = filter_valid_transpose(&g1, w, h, &k);
            let t2 = filter_valid_transpose(&g2, w, h, &k);
            let t3 = filter_valid_transpose(&g3, w, h, &k);
            for q in 0..w * h {
                g.data[q * ch + c] = norm * (t1[q] + 2.0 * pa[q] * t2[q] + pb[q] * t3[q]);
            }
        }
    }
    Ok((total * norm, grad))
}

pub fn ssim(a: &RadianceImage, b: &RadianceImage) -> Result<f64> {
    Ok(ssim_impl(a, b, false)?.0)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &RadianceImage, b: &RadianceImage) -> Result<(f64, RadianceImage)> {
    let (v, g) = ssim_impl(a, b, true)?;
    Ok((v, g.expect("gradient requested")))
}
