//! Seeded synthetic test images: a shaded background plus overlapping flat,
//! graded and textured shapes. Used for calibration, tests and the demo when
//! no natural-image dataset is at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

enum Fill {
    Flat,
    Grating { fx: f64, fy: f64, amp: f64, phase: f64 },
    Ramp { gx: f64, gy: f64 },
}

struct Shape {
    ellipse: bool,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    color: [f64; 3],
    fill: Fill,
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = ((x - self.cx) / self.rx, (y - self.cy) / self.ry);
        if self.ellipse {
            dx * dx + dy * dy <= 1.0
        } else {
            dx.abs() <= 1.0 && dy.abs() <= 1.0
        }
    }

    fn value(&self, x: f64, y: f64, c: usize) -> f64 {
        let base = self.color[c];
        match self.fill {
            Fill::Flat => base,
            Fill::Grating { fx, fy, amp, phase } => base + amp * (fx * x + fy * y + phase).sin(),
            Fill::Ramp { gx, gy } => base + gx * (x - self.cx) + gy * (y - self.cy),
        }
    }
}

/// A piecewise-smooth image with edges and textures, deterministic in `seed`.
pub fn natural(width: usize, height: usize, channels: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a6e);
    let (w, h) = (width as f64, height as f64);
    let scale = w.max(h);

    let color = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> [f64; 3] {
        let g = rng.random_range(lo..hi);
        if channels == 1 {
            [g; 3]
        } else {
            [0, 1, 2].map(|_| (g + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0))
        }
    };

    let bg = color(&mut rng, 0.25, 0.75);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let slope = rng.random_range(0.1..0.35) / scale;
    let (bgx, bgy) = (angle.cos() * slope, angle.sin() * slope);

    let count = rng.random_range(5..10);
    let shapes: Vec<Shape> = (0..count)
        .map(|_| {
            let kind = rng.random_range(0..3);
            let fill = match kind {
                0 => Fill::Flat,
                1 => {
                    let f = rng.random_range(0.25..1.2);
                    let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
                    Fill::Grating {
                        fx: f * a.cos(),
                        fy: f * a.sin(),
                        amp: rng.random_range(0.05..0.2),
                        phase: rng.random_range(0.0..std::f64::consts::TAU),
                    }
                }
                _ => Fill::Ramp {
                    gx: rng.random_range(-0.6..0.6) / scale,
                    gy: rng.random_range(-0.6..0.6) / scale,
                },
            };
            Shape {
                ellipse: rng.random_bool(0.5),
                cx: rng.random_range(0.0..w),
                cy: rng.random_range(0.0..h),
                rx: rng.random_range(0.08..0.35) * w,
                ry: rng.random_range(0.08..0.35) * h,
                color: color(&mut rng, 0.05, 0.95),
                fill,
            }
        })
        .collect();

    Image::from_fn(width, height, channels, |x, y, c| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut v = bg[c] + bgx * (fx - w / 2.0) + bgy * (fy - h / 2.0);
        for s in &shapes {
            if s.contains(fx, fy) {
                v = s.value(fx, fy, c);
            }
        }
        v
    })
    .expect("synthetic dimensions are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_varied() {
        let a = natural(32, 24, 3, 1);
        assert_eq!(a, natural(32, 24, 3, 1));
        assert_ne!(a, natural(32, 24, 3, 2));
        let g = natural(32, 24, 1, 1);
        let lo = g.data().iter().cloned().fold(1.0, f64::min);
        let hi = g.data().iter().cloned().fold(0.0, f64::max);
        assert!(hi - lo > 0.2);
    }
}
