//! Dense `H×W×C` grids of `f64` stored row-major as `(y, x, channel)`.

use crate::error::{Error, Result};

/// Spatial size and channel count of a [`Tensor`]. All dimensions are non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    height: usize,
    width: usize,
    channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidShape(format!(
                "{height}x{width}x{channels} has a zero-sized dimension"
            )));
        }
        Ok(Shape {
            height,
            width,
            channels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of pixels, `height * width`.
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same spatial size with a different channel count.
    pub fn with_channels(&self, channels: usize) -> Result<Self> {
        Shape::new(self.height, self.width, channels)
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        debug_assert!(y < self.height && x < self.width && c < self.channels);
        (y * self.width + x) * self.channels + c
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// A tensor with every entry equal to `fill`.
    pub fn new(shape: Shape, fill: f64) -> Self {
        Tensor {
            shape,
            data: vec![fill; shape.len()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor::new(shape, 0.0)
    }

    /// Validates the dimensions and fills, see [`Shape::new`].
    pub fn filled(height: usize, width: usize, channels: usize, fill: f64) -> Result<Self> {
        Ok(Tensor::new(Shape::new(height, width, channels)?, fill))
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidShape(format!(
                "{} values supplied for shape {shape} ({} expected)",
                data.len(),
                shape.len()
            )));
        }
        Ok(Tensor { shape, data })
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

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.shape.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        let i = self.shape.index(y, x, c);
        self.data[i] = value;
    }

    /// The channel values of one pixel.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let start = self.shape.index(y, x, 0);
        &self.data[start..start + self.shape.channels]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Arithmetic mean of all entries. Summed as offsets from the first entry,
    /// so a constant tensor yields its constant exactly.
    pub fn mean(&self) -> f64 {
        let origin = self.data[0];
        origin + self.data.iter().map(|v| v - origin).sum::<f64>() / self.data.len() as f64
    }

    /// Per-channel mean over all pixels.
    pub fn channel_means(&self) -> Vec<f64> {
        let c = self.shape.channels;
        let origin = &self.data[..c];
        let mut sums = vec![0.0; c];
        for px in self.data.chunks_exact(c) {
            for ((s, v), o) in sums.iter_mut().zip(px).zip(origin) {
                *s += v - o;
            }
        }
        let n = self.shape.pixels() as f64;
        sums.iter().zip(origin).map(|(s, o)| o + s / n).collect()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sub-window of `height × width` pixels starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Tensor> {
        let shape = Shape::new(height, width, self.shape.channels)?;
        if top + height > self.shape.height || left + width > self.shape.width {
            return Err(Error::ContractViolation(format!(
                "crop {height}x{width} at ({top},{left}) exceeds {}",
                self.shape
            )));
        }
        let c = self.shape.channels;
        let mut data = Vec::with_capacity(shape.len());
        for y in top..top + height {
            let start = self.shape.index(y, left, 0);
            data.extend_from_slice(&self.data[start..start + width * c]);
        }
        Ok(Tensor { shape, data })
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        ensure_same_shape(self, other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

pub(crate) fn ensure_same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ContractViolation(format!(
            "shape mismatch: {} vs {}",
            a.shape, b.shape
        )));
    }
    Ok(())
}
