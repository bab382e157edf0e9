//! Quality metrics: PSNR, SSIM and anisotropic total variation.

use crate::error::{Error, Result};
use crate::image::{Image, Raster, Shape};

/// PSNR reported when two images are identical.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.shape().ensure_same(&b.shape())?;
    Ok(mean_sq_diff(a.data(), b.data()))
}

pub(crate) fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sum / a.len() as f64
}

/// Peak signal-to-noise ratio in decibels, MSE taken jointly over all channels.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::param(format!("psnr peak must be positive, got {peak}")));
    }
    let err = mse(a, b)?;
    Ok(psnr_from_mse(err, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dx = x as f64 - r;
            let dy = y as f64 - r;
            w.push((-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean SSIM over all fully-contained 11x11 Gaussian windows.
///
/// Colour images are reduced to grayscale by channel mean first.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.shape().ensure_same(&b.shape())?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            shape: a.shape(),
            window: SSIM_WINDOW,
        });
    }
    let ga = a.to_gray();
    let gb = b.to_gray();
    let (pa, pb) = (ga.data(), gb.data());
    let w = a.width();
    let window = ssim_window();
    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

    let out_w = a.width() - SSIM_WINDOW + 1;
    let out_h = a.height() - SSIM_WINDOW + 1;
    let mut total = 0.0;
    for oy in 0..out_h {
        for ox in 0..out_w {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ky in 0..SSIM_WINDOW {
                let row = (oy + ky) * w + ox;
                for kx in 0..SSIM_WINDOW {
                    let g = window[ky * SSIM_WINDOW + kx];
                    let va = pa[row + kx];
                    let vb = pb[row + kx];
                    ma += g * va;
                    mb += g * vb;
                    saa += g * va * va;
                    sbb += g * vb * vb;
                    sab += g * va * vb;
                }
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
    }
    Ok(total / (out_w * out_h) as f64)
}

/// Sum of absolute forward differences (horizontal and vertical, all channels)
/// divided by the pixel count `width * height`.
pub fn total_variation(a: &Image) -> f64 {
    tv_of(a.shape(), a.data())
}

pub fn total_variation_raster(a: &Raster) -> f64 {
    tv_of(a.shape(), a.data())
}

fn tv_of(shape: Shape, data: &[f64]) -> f64 {
    let (w, h) = (shape.width, shape.height);
    let mut sum = 0.0;
    for plane in data.chunks_exact(w * h) {
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for x in 0..w {
                if x + 1 < w {
                    sum += (row[x + 1] - row[x]).abs();
                }
                if y + 1 < h {
                    sum += (plane[(y + 1) * w + x] - row[x]).abs();
                }
            }
        }
    }
    sum / shape.pixels() as f64
}

/// Per-image and aggregate quality numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub per_image: Vec<ImageScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricReport {
    /// Aggregates are arithmetic means of the per-image values.
    pub fn from_scores(per_image: Vec<ImageScore>) -> Self {
        let n = per_image.len().max(1) as f64;
        let psnr = per_image.iter().map(|s| s.psnr).sum::<f64>() / n;
        let ssim = per_image.iter().map(|s| s.ssim).sum::<f64>() / n;
        MetricReport { psnr, ssim, per_image }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,psnr_db,ssim\n");
        for s in &self.per_image {
            out.push_str(&format!("{},{:.6},{:.6}\n", s.id, s.psnr, s.ssim));
        }
        out.push_str(&format!("mean,{:.6},{:.6}\n", self.psnr, self.ssim));
        out
    }
}
