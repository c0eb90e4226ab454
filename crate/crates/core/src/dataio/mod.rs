//! Image IO, the synthetic corpus, and the Gaussian-blur ground truth.

mod dataset;
pub mod netpbm;
mod synth;

pub use dataset::{sample_seed, Dataset, DatasetSpec, Manifest, SampleRecord, Split};
pub use netpbm::{
    decode_netpbm, encode_netpbm, read_netpbm, write_netpbm, NetpbmFormat, NetpbmImage,
};
pub use synth::synth_image;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// One training pair: a crop of a larger source and the blur of that source
/// evaluated at the crop's pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurTaskSample {
    pub input: Tensor,
    pub target: Tensor,
}

/// A `size × size × 1` Gaussian, normalized to unit sum.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Tensor> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(Error::ContractViolation(format!(
            "Gaussian size must be odd and at least 3, got {size}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::ContractViolation(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let r = (size / 2) as isize;
    let mut values = Vec::with_capacity(size * size);
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            values.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= total);
    Tensor::from_vec(Shape::new(size, size, 1)?, values)
}

/// Splits a `(H + 2m) × (W + 2m)` source into its centered `H × W` crop and
/// the valid (unpadded) convolution of the source with `kernel`, where `m` is
/// the kernel radius. The target never depends on a boundary rule.
pub fn make_blur_sample(source: &Tensor, kernel: &Tensor) -> Result<BlurTaskSample> {
    let ks = kernel.shape();
    if ks.height() != ks.width() || ks.height().is_multiple_of(2) || ks.channels() != 1 {
        return Err(Error::ContractViolation(format!(
            "blur kernel must be square, odd and single-channel, got {ks}"
        )));
    }
    let size = ks.height();
    let m = size / 2;
    let s = source.shape();
    if s.height() <= 2 * m || s.width() <= 2 * m {
        return Err(Error::ContractViolation(format!(
            "source {s} is too small for a {size}x{size} kernel"
        )));
    }
    let (h, w, c) = (s.height() - 2 * m, s.width() - 2 * m, s.channels());
    let input = source.crop(m, m, h, w)?;
    let k = kernel.data();
    let mut target = Tensor::zeros(Shape::new(h, w, c)?);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for ky in 0..size {
                    for kx in 0..size {
                        acc += source.get(y + ky, x + kx, ch) * k[ky * size + kx];
                    }
                }
                target.set(y, x, ch, acc);
            }
        }
    }
    Ok(BlurTaskSample { input, target })
}
