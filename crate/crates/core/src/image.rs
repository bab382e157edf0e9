//! Planar rasters.
//!
//! [`Image`] holds intensities clamped to `[0, 1]` and is the value type passed
//! between filters, metrics and file I/O. [`Raster`] has the same layout but is
//! signed and unclamped; it carries residual planes and intermediate model
//! outputs where clamping would break exact arithmetic identities.
//!
//! Layout is channel-major, then row-major within a plane:
//! `data[c * width * height + y * width + x]`.
//!
//! Image samples are snapped to multiples of [`SAMPLE_QUANTUM`] (2^-48). On
//! that lattice the difference of two samples and the sum of a sample and such
//! a difference are exact in `f64`, so `(source - plane) + plane == source`
//! holds bit for bit.

use std::fmt;

use crate::error::{Error, Result};

pub const SAMPLE_QUANTUM: f64 = 1.0 / (1u64 << 48) as f64;
const SAMPLE_SCALE: f64 = (1u64 << 48) as f64;

/// Clamps into `[0, 1]` and snaps onto the sample lattice.
#[inline]
pub fn snap(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * SAMPLE_SCALE).round() / SAMPLE_SCALE
}

/// Width, height and channel count of a raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Shape {
            width,
            height,
            channels,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidDimensions(format!(
                "{}x{} has a zero side",
                self.width, self.height
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidDimensions(format!(
                "{} channels (expected 1 or 3)",
                self.channels
            )));
        }
        Ok(())
    }

    pub(crate) fn ensure_same(&self, other: &Shape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                left: *self,
                right: *other,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

/// Unit-interval planar image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: Shape,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from planar data, clamping every sample into `[0, 1]`
    /// and snapping it to the sample lattice. Non-finite samples are rejected.
    pub fn new(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(width, height, channels);
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::InvalidDimensions(format!(
                "{shape} requires {} samples, got {}",
                shape.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("sample {i} is not finite")));
        }
        for v in &mut data {
            *v = snap(*v);
        }
        Ok(Image { shape, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image by evaluating `f(x, y, c)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, c));
                }
            }
        }
        Image::new(width, height, channels, data)
    }

    /// Internal constructor for kernels whose outputs are convex combinations
    /// of in-range inputs. Still clamps, to absorb rounding.
    pub(crate) fn from_raw(shape: Shape, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        for v in &mut data {
            *v = snap(*v);
        }
        Image { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.shape.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[c * self.shape.pixels() + y * self.shape.width + x]
    }

    /// Averages channels into a single grayscale plane.
    pub fn to_gray(&self) -> Image {
        if self.shape.channels == 1 {
            return self.clone();
        }
        let n = self.shape.pixels();
        let k = self.shape.channels as f64;
        let data = (0..n)
            .map(|i| (0..self.shape.channels).map(|c| self.data[c * n + i]).sum::<f64>() / k)
            .collect();
        Image::from_raw(Shape::new(self.shape.width, self.shape.height, 1), data)
    }

    pub fn to_raster(&self) -> Raster {
        Raster {
            shape: self.shape,
            data: self.data.clone(),
        }
    }
}

/// Signed, unclamped planar raster with the same layout as [`Image`].
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    shape: Shape,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::InvalidDimensions(format!(
                "{shape} requires {} samples, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Raster { shape, data })
    }

    pub fn filled(shape: Shape, value: f64) -> Result<Self> {
        Raster::new(shape, vec![value; shape.len()])
    }

    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        Raster { shape, data }
    }

    /// `a - b`, elementwise and unclamped.
    pub fn difference(a: &Image, b: &Image) -> Result<Raster> {
        a.shape().ensure_same(&b.shape())?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        Ok(Raster { shape: a.shape(), data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Clamps into `[0, 1]`, turning non-finite samples into 0.
    pub fn to_image(&self) -> Image {
        let data = self.data.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect();
        Image::from_raw(self.shape, data)
    }
}
