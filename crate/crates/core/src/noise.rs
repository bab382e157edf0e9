//! Seeded noise synthesis.
//!
//! Generator: ChaCha8 keyed by `seed_from_u64(seed)`. Stream splitting: every
//! image row gets its own ChaCha stream, selected with `set_stream`, so the
//! draws for a pixel depend only on `(seed, row, column)` and never on how
//! many rows were processed before it.
//!
//! * Gaussian noise: stream id = `channel * height + y`; one standard-normal
//!   draw per sample, left to right.
//! * Impulse noise: stream id = `y`; two uniform draws per pixel, left to
//!   right. The first decides replacement (`u < density`), the second picks
//!   pepper (`u < 0.5`, value 0) or salt (value 1). Both are always drawn.
//!
//! Bump [`NOISE_RNG_VERSION`] if either rule changes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::Image;

pub const NOISE_RNG_VERSION: &str = "chacha8-rowstream-v1";

fn row_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma255 / 255`, then clamps.
pub fn add_gaussian_noise(img: &Image, sigma255: f64, seed: u64) -> Result<Image> {
    if !(sigma255 >= 0.0) || !sigma255.is_finite() {
        return Err(Error::param(format!("noise sigma must be >= 0, got {sigma255}")));
    }
    if sigma255 == 0.0 {
        return Ok(img.clone());
    }
    let sigma = sigma255 / 255.0;
    let (w, h) = (img.width(), img.height());
    let mut data = img.data().to_vec();
    for (r, row) in data.chunks_exact_mut(w).enumerate() {
        debug_assert!(r < h * img.channels());
        let mut rng = row_rng(seed, r as u64);
        for v in row {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    Image::new(w, h, img.channels(), data)
}

/// Salt-and-pepper noise: each pixel is replaced with probability `density`
/// by 0 or 1 (same extreme on every channel).
pub fn add_impulse_noise(img: &Image, density: f64, seed: u64) -> Result<Image> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::param(format!("impulse density must be in [0,1], got {density}")));
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let n = w * h;
    let mut data = img.data().to_vec();
    for y in 0..h {
        let mut rng = row_rng(seed, y as u64);
        for x in 0..w {
            let hit: f64 = rng.random();
            let salt: f64 = rng.random();
            if hit < density {
                let v = if salt < 0.5 { 0.0 } else { 1.0 };
                for c in 0..ch {
                    data[c * n + y * w + x] = v;
                }
            }
        }
    }
    Image::new(w, h, ch, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let img = Image::from_fn(8, 8, 3, |x, y, c| ((x * y + c) % 7) as f64 / 7.0).unwrap();
        assert_eq!(add_gaussian_noise(&img, 0.0, 3).unwrap(), img);
        assert_eq!(add_impulse_noise(&img, 0.0, 3).unwrap(), img);
    }

    #[test]
    fn gaussian_std_matches_sigma() {
        let img = Image::filled(256, 256, 1, 0.5).unwrap();
        let out = add_gaussian_noise(&img, 25.0, 11).unwrap();
        let diffs: Vec<f64> = out.data().iter().map(|v| v - 0.5).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64;
        let target = 25.0 / 255.0;
        assert!((var.sqrt() - target).abs() < 0.05 * target, "std {}", var.sqrt());
    }

    #[test]
    fn deterministic_per_seed() {
        let img = Image::filled(32, 16, 3, 0.4).unwrap();
        let a = add_gaussian_noise(&img, 25.0, 99).unwrap();
        let b = add_gaussian_noise(&img, 25.0, 99).unwrap();
        assert_eq!(a.data(), b.data());
        let c = add_gaussian_noise(&img, 25.0, 100).unwrap();
        assert_ne!(a.data(), c.data());
        let d = add_impulse_noise(&img, 0.3, 5).unwrap();
        assert_eq!(d, add_impulse_noise(&img, 0.3, 5).unwrap());
    }

    #[test]
    fn impulse_density_bounds() {
        let img = Image::filled(200, 200, 1, 0.5).unwrap();
        let out = add_impulse_noise(&img, 0.4, 1).unwrap();
        let hit = out.data().iter().filter(|v| **v != 0.5).count() as f64 / 40_000.0;
        assert!((hit - 0.4).abs() < 0.02, "fraction {hit}");

        let full = add_impulse_noise(&img, 1.0, 1).unwrap();
        assert!(full.data().iter().all(|v| *v == 0.0 || *v == 1.0));
        assert!(add_impulse_noise(&img, 1.5, 1).is_err());
    }

    #[test]
    fn impulse_hits_all_channels_together() {
        let img = Image::filled(20, 20, 3, 0.5).unwrap();
        let out = add_impulse_noise(&img, 0.5, 2).unwrap();
        for i in 0..400 {
            let px: Vec<f64> = (0..3).map(|c| out.data()[c * 400 + i]).collect();
            assert!(px.iter().all(|v| *v == px[0]));
        }
    }
}
