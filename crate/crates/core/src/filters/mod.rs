//! Classical filters used to build a filtered basis.
//!
//! All kernels use clamp-to-edge borders, preserve the input shape and are
//! deterministic: each output row is computed independently, so parallel and
//! serial execution give bitwise-identical results.

mod config;

pub use config::FilterConfig;

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::par;

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Radius of the truncated Gaussian: `ceil(3 * sigma)`.
pub fn gaussian_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

fn gaussian_taps(sigma: f64, radius: usize) -> Vec<f64> {
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Separable Gaussian blur, radius `ceil(3 sigma)`, normalized kernel.
pub fn gaussian_blur(img: &Image, sigma_spatial: f64) -> Result<Image> {
    FilterConfig::Gaussian { sigma_spatial }.validate()?;
    let shape = img.shape();
    let (w, h) = (shape.width, shape.height);
    let radius = gaussian_radius(sigma_spatial);
    let taps = gaussian_taps(sigma_spatial, radius);
    let r = radius as isize;
    let src = img.data();

    let mut horiz = vec![0.0; shape.len()];
    par::for_each_row(&mut horiz, w, |row_idx, out| {
        let row = &src[row_idx * w..(row_idx + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, tap) in taps.iter().enumerate() {
                acc += tap * row[clamp_index(x as isize + t as isize - r, w)];
            }
            *o = acc;
        }
    });

    let mut out = vec![0.0; shape.len()];
    par::for_each_row(&mut out, w, |row_idx, dst| {
        let (c, y) = (row_idx / h, row_idx % h);
        let plane = &horiz[c * w * h..(c + 1) * w * h];
        for (t, tap) in taps.iter().enumerate() {
            let sy = clamp_index(y as isize + t as isize - r, h);
            let srow = &plane[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += tap * s;
            }
        }
    });
    Ok(Image::from_raw(shape, out))
}

/// Bilateral filter over a `window x window` neighbourhood.
///
/// For colour input the range weight uses the Euclidean distance between
/// channel vectors, so every channel of a pixel shares one weight.
pub fn bilateral(img: &Image, sigma_spatial: f64, sigma_range: f64, window: usize) -> Result<Image> {
    joint_bilateral(img, img, sigma_spatial, sigma_range, window)
}

/// Bilateral filter of `img` whose range weights come from `guide`.
pub fn joint_bilateral(
    img: &Image,
    guide: &Image,
    sigma_spatial: f64,
    sigma_range: f64,
    window: usize,
) -> Result<Image> {
    FilterConfig::Bilateral {
        sigma_spatial,
        sigma_range,
        window,
    }
    .validate()?;
    img.shape().ensure_same(&guide.shape())?;
    let shape = img.shape();
    let (w, h, ch) = (shape.width, shape.height, shape.channels);
    let n = shape.pixels();
    let r = (window / 2) as isize;

    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_spatial * sigma_spatial)).exp())
        .collect();
    let inv_2sr2 = 1.0 / (2.0 * sigma_range * sigma_range);
    let src = img.data();
    let g = guide.data();

    // Rows of the first plane drive the loop; all channels of a row are
    // written together so the shared weight is computed once.
    let mut rows = vec![0.0; n * ch];
    par::for_each_row(&mut rows, w * ch, |y, out| {
        let mut acc = vec![0.0; ch];
        for x in 0..w {
            let p = y * w + x;
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut norm = 0.0;
            let mut k = 0;
            for dy in -r..=r {
                let sy = clamp_index(y as isize + dy, h);
                for dx in -r..=r {
                    let sx = clamp_index(x as isize + dx, w);
                    let q = sy * w + sx;
                    let mut d2 = 0.0;
                    for c in 0..ch {
                        let d = g[c * n + q] - g[c * n + p];
                        d2 += d * d;
                    }
                    let wgt = spatial[k] * (-d2 * inv_2sr2).exp();
                    k += 1;
                    norm += wgt;
                    for c in 0..ch {
                        acc[c] += wgt * src[c * n + q];
                    }
                }
            }
            for c in 0..ch {
                out[x * ch + c] = acc[c] / norm;
            }
        }
    });
    Ok(Image::from_raw(shape, deinterleave_rows(&rows, shape)))
}

fn deinterleave_rows(rows: &[f64], shape: Shape) -> Vec<f64> {
    let ch = shape.channels;
    if ch == 1 {
        return rows.to_vec();
    }
    let n = shape.pixels();
    let mut data = vec![0.0; n * ch];
    for p in 0..n {
        for c in 0..ch {
            data[c * n + p] = rows[p * ch + c];
        }
    }
    data
}

/// Exact per-channel median over a `k1` (rows) by `k2` (columns) window.
pub fn median(img: &Image, k1: usize, k2: usize) -> Result<Image> {
    FilterConfig::Median { k1, k2 }.validate()?;
    let shape = img.shape();
    let (w, h) = (shape.width, shape.height);
    let (ry, rx) = ((k1 / 2) as isize, (k2 / 2) as isize);
    let src = img.data();
    let mid = k1 * k2 / 2;

    let mut out = vec![0.0; shape.len()];
    par::for_each_row(&mut out, w, |row_idx, dst| {
        let (c, y) = (row_idx / h, row_idx % h);
        let plane = &src[c * w * h..(c + 1) * w * h];
        let mut buf = Vec::with_capacity(k1 * k2);
        for (x, d) in dst.iter_mut().enumerate() {
            buf.clear();
            for dy in -ry..=ry {
                let sy = clamp_index(y as isize + dy, h);
                for dx in -rx..=rx {
                    buf.push(plane[sy * w + clamp_index(x as isize + dx, w)]);
                }
            }
            let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
            *d = *m;
        }
    });
    Ok(Image::from_raw(shape, out))
}

/// Rolling guidance: Gaussian initialization followed by `iterations`
/// joint-bilateral steps that filter the input under the current guide.
pub fn rolling_guidance(
    img: &Image,
    sigma_range: f64,
    sigma_spatial: f64,
    window: usize,
    iterations: usize,
) -> Result<Image> {
    FilterConfig::RollingGuidance {
        sigma_range,
        sigma_spatial,
        window,
        iterations,
    }
    .validate()?;
    let mut guide = gaussian_blur(img, sigma_spatial)?;
    for _ in 0..iterations {
        guide = joint_bilateral(img, &guide, sigma_spatial, sigma_range, window)?;
    }
    Ok(guide)
}

/// Dispatches to the kernel named by `cfg`.
pub fn apply(img: &Image, cfg: &FilterConfig) -> Result<Image> {
    let res = match *cfg {
        FilterConfig::Bilateral {
            sigma_spatial,
            sigma_range,
            window,
        } => bilateral(img, sigma_spatial, sigma_range, window),
        FilterConfig::Median { k1, k2 } => median(img, k1, k2),
        FilterConfig::RollingGuidance {
            sigma_range,
            sigma_spatial,
            window,
            iterations,
        } => rolling_guidance(img, sigma_range, sigma_spatial, window, iterations),
        FilterConfig::Gaussian { sigma_spatial } => gaussian_blur(img, sigma_spatial),
    };
    res.map_err(|e| Error::Filter {
        config: cfg.to_string(),
        source: Box::new(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_image(w: usize, h: usize, ch: usize, seed: u64) -> Image {
        let mut s = seed;
        Image::from_fn(w, h, ch, |_, _, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .unwrap()
    }

    /// Direct 2-D convolution with the full (2r+1)^2 separable-product kernel.
    fn gaussian_2d_oracle(img: &Image, sigma: f64) -> Vec<f64> {
        let r = gaussian_radius(sigma) as isize;
        let (w, h) = (img.width(), img.height());
        let mut kernel = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                kernel.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
            }
        }
        let total: f64 = kernel.iter().sum();
        let mut out = Vec::new();
        for c in 0..img.channels() {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = 0.0;
                    let mut k = 0;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                            let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                            acc += kernel[k] * img.get(sx, sy, c);
                            k += 1;
                        }
                    }
                    out.push(acc / total);
                }
            }
        }
        out
    }

    #[test]
    fn gaussian_constant_and_impulse() {
        let c = Image::filled(9, 7, 3, 0.37).unwrap();
        let out = gaussian_blur(&c, 1.3).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-12));

        let imp = Image::from_fn(21, 21, 1, |x, y, _| if x == 10 && y == 10 { 1.0 } else { 0.0 }).unwrap();
        let out = gaussian_blur(&imp, 1.5).unwrap();
        let r = gaussian_radius(1.5) as isize;
        let norm: f64 = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .map(|(dx, dy)| (-((dx * dx + dy * dy) as f64) / 4.5).exp())
            .sum();
        for y in 0..21isize {
            for x in 0..21isize {
                let (dx, dy) = (x - 10, y - 10);
                let expected = if dx.abs() <= r && dy.abs() <= r {
                    (-((dx * dx + dy * dy) as f64) / 4.5).exp() / norm
                } else {
                    0.0
                };
                assert!((out.get(x as usize, y as usize, 0) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separable_matches_direct() {
        let img = lcg_image(9, 9, 1, 4);
        for sigma in [0.5, 1.0, 2.2] {
            let fast = gaussian_blur(&img, sigma).unwrap();
            let slow = gaussian_2d_oracle(&img, sigma);
            for (a, b) in fast.data().iter().zip(&slow) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bilateral_constant_and_huge_range() {
        let c = Image::filled(6, 5, 1, 0.8).unwrap();
        let out = bilateral(&c, 2.0, 0.05, 5).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.8).abs() < 1e-12));

        // range kernel ~ 1: a windowed Gaussian blur
        let img = lcg_image(8, 8, 1, 9);
        let window = 5;
        let sigma = 1.2;
        let out = bilateral(&img, sigma, 1e6, window).unwrap();
        let r = (window / 2) as isize;
        for y in 0..8isize {
            for x in 0..8isize {
                let (mut acc, mut norm) = (0.0, 0.0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let wgt = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                        let sx = (x + dx).clamp(0, 7) as usize;
                        let sy = (y + dy).clamp(0, 7) as usize;
                        acc += wgt * img.get(sx, sy, 0);
                        norm += wgt;
                    }
                }
                assert!((out.get(x as usize, y as usize, 0) - acc / norm).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn bilateral_rejects_even_window() {
        let img = Image::filled(4, 4, 1, 0.0).unwrap();
        assert!(bilateral(&img, 1.0, 0.1, 4).is_err());
        let other = Image::filled(4, 3, 1, 0.0).unwrap();
        assert!(matches!(
            joint_bilateral(&img, &other, 1.0, 0.1, 3),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn joint_bilateral_reductions() {
        let img = lcg_image(7, 6, 3, 1);
        assert_eq!(
            joint_bilateral(&img, &img, 1.5, 0.2, 5).unwrap(),
            bilateral(&img, 1.5, 0.2, 5).unwrap()
        );
        let flat = Image::filled(7, 6, 3, 0.5).unwrap();
        let guided = joint_bilateral(&img, &flat, 1.5, 0.2, 5).unwrap();
        let windowed = bilateral(&img, 1.5, 1e12, 5).unwrap();
        for (a, b) in guided.data().iter().zip(windowed.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn median_examples() {
        let img = Image::new(3, 3, 1, (1..=9).map(|v| v as f64 / 9.0).collect()).unwrap();
        let out = median(&img, 3, 3).unwrap();
        assert_eq!(out.get(1, 1, 0), img.get(1, 1, 0));
        assert_eq!(img.get(1, 1, 0), crate::image::snap(5.0 / 9.0));

        let salt = Image::from_fn(5, 5, 1, |x, y, _| if (x, y) == (2, 2) { 1.0 } else { 0.0 }).unwrap();
        assert!(median(&salt, 3, 3).unwrap().data().iter().all(|v| *v == 0.0));
        assert!(median(&salt, 2, 3).is_err());

        let c = Image::filled(5, 4, 3, 0.25).unwrap();
        assert_eq!(median(&c, 3, 5).unwrap(), c);
    }

    #[test]
    fn median_window_orientation() {
        // a single bright column survives a tall window but not a wide one
        let img = Image::from_fn(7, 7, 1, |x, _, _| if x == 3 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(median(&img, 5, 1).unwrap().get(3, 3, 0), 1.0);
        assert_eq!(median(&img, 1, 5).unwrap().get(3, 3, 0), 0.0);
    }

    #[test]
    fn rgf_zero_iterations_is_gaussian() {
        let img = lcg_image(9, 9, 1, 3);
        assert_eq!(
            rolling_guidance(&img, 0.2, 1.5, 5, 0).unwrap(),
            gaussian_blur(&img, 1.5).unwrap()
        );
        let c = Image::filled(9, 9, 1, 0.6).unwrap();
        let out = rolling_guidance(&c, 0.2, 3.0, 9, 4).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.6).abs() < 1e-12));
    }

    #[test]
    fn apply_dispatches() {
        let img = lcg_image(8, 8, 1, 5);
        assert_eq!(
            apply(&img, &FilterConfig::Median { k1: 3, k2: 3 }).unwrap(),
            median(&img, 3, 3).unwrap()
        );
        assert_eq!(
            apply(&img, &FilterConfig::Gaussian { sigma_spatial: 1.0 }).unwrap(),
            gaussian_blur(&img, 1.0).unwrap()
        );
        let bf = FilterConfig::Bilateral {
            sigma_spatial: 1.0,
            sigma_range: 0.3,
            window: 3,
        };
        assert_eq!(apply(&img, &bf).unwrap(), bilateral(&img, 1.0, 0.3, 3).unwrap());
        let bad = FilterConfig::Median { k1: 2, k2: 3 };
        match apply(&img, &bad) {
            Err(Error::Filter { config, .. }) => assert_eq!(config, "median:2x3"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
