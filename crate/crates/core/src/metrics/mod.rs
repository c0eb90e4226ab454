//! Image error measures, corpus error maps, and the crop-size formulas.

mod stats;

pub use stats::{ln_gamma, regularized_incomplete_beta, student_t_two_sided, welch_t_test, TTest};

use crate::dataio::netpbm::{encode_netpbm, NetpbmFormat};
use crate::error::{Error, Result};
use crate::tensor::{ensure_same_shape, Shape, Tensor};

/// SSIM window edge length; windows do not overlap.
pub const SSIM_WINDOW: usize = 8;

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    ensure_same_shape(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB, `+inf` for identical images.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    if peak <= 0.0 {
        return Err(Error::ContractViolation(format!(
            "peak must be positive, got {peak}"
        )));
    }
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Structural dissimilarity `(1 - SSIM) / 2`, with SSIM averaged over
/// non-overlapping 8×8 windows and channels.
pub fn dssim(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    ensure_same_shape(a, b)?;
    let shape = a.shape();
    let (wy, wx) = (shape.height() / SSIM_WINDOW, shape.width() / SSIM_WINDOW);
    if wy == 0 || wx == 0 {
        return Err(Error::ContractViolation(format!(
            "{shape} is smaller than one {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    for c in 0..shape.channels() {
        for by in 0..wy {
            for bx in 0..wx {
                let pixels = || {
                    (0..SSIM_WINDOW).flat_map(move |dy| {
                        (0..SSIM_WINDOW)
                            .map(move |dx| (by * SSIM_WINDOW + dy, bx * SSIM_WINDOW + dx))
                    })
                };
                let (mut ma, mut mb) = (0.0, 0.0);
                for (y, x) in pixels() {
                    ma += a.get(y, x, c);
                    mb += b.get(y, x, c);
                }
                ma /= n;
                mb /= n;
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for (y, x) in pixels() {
                    let (da, db) = (a.get(y, x, c) - ma, b.get(y, x, c) - mb);
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
                va /= n;
                vb /= n;
                cov /= n;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
    }
    let ssim = total / (wy * wx * shape.channels()) as f64;
    Ok((1.0 - ssim) / 2.0)
}

/// `100 * ours / other`, in percent.
pub fn loss_ratio(loss_ours: f64, loss_other: f64) -> Result<f64> {
    if !(loss_ours > 0.0 && loss_other > 0.0) {
        return Err(Error::ContractViolation(format!(
            "loss ratio needs positive losses, got {loss_ours} and {loss_other}"
        )));
    }
    Ok(100.0 * loss_ours / loss_other)
}

/// Crop `n_c` needed so no output pixel is touched by the boundary:
/// `depth * radius` for a single-resolution network, `radius^depth` when every
/// layer halves the resolution.
pub fn required_crop(depth: u32, radius: u64, multi_resolution: bool) -> Result<u64> {
    if depth == 0 || radius == 0 {
        return Err(Error::ContractViolation(
            "depth and radius must be at least 1".into(),
        ));
    }
    let crop = if multi_resolution {
        radius.checked_pow(depth)
    } else {
        radius.checked_mul(depth as u64)
    };
    crop.ok_or_else(|| Error::ContractViolation("crop size overflows u64".into()))
}

/// Per-pixel mean absolute error over a corpus, averaged across channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub map: Tensor,
    pub corpus_size: usize,
}

/// Collects per-image absolute-error maps. The final per-pixel average sums
/// each pixel's values in sorted order, so the result does not depend on the
/// order in which images were added.
#[derive(Debug, Clone, Default)]
pub struct ErrorMapAccumulator {
    shape: Option<Shape>,
    maps: Vec<Vec<f64>>,
}

impl ErrorMapAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, pred: &Tensor, target: &Tensor) -> Result<()> {
        ensure_same_shape(pred, target)?;
        let shape = pred.shape();
        match self.shape {
            Some(s) if s != shape => {
                return Err(Error::ContractViolation(format!(
                    "corpus mixes shapes {s} and {shape}"
                )))
            }
            _ => self.shape = Some(shape),
        }
        let c = shape.channels() as f64;
        let map = pred
            .data()
            .chunks_exact(shape.channels())
            .zip(target.data().chunks_exact(shape.channels()))
            .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / c)
            .collect();
        self.maps.push(map);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn finish(&self) -> Result<ErrorMap> {
        let Some(shape) = self.shape else {
            return Err(Error::ContractViolation(
                "error map of an empty corpus".into(),
            ));
        };
        let n = self.maps.len();
        let mut column = vec![0.0; n];
        let mut out = Vec::with_capacity(shape.pixels());
        for p in 0..shape.pixels() {
            for (slot, map) in column.iter_mut().zip(&self.maps) {
                *slot = map[p];
            }
            column.sort_by(f64::total_cmp);
            out.push(column.iter().sum::<f64>() / n as f64);
        }
        Ok(ErrorMap {
            map: Tensor::from_vec(shape.with_channels(1)?, out)?,
            corpus_size: n,
        })
    }
}

pub fn error_map_accumulate(preds: &[Tensor], targets: &[Tensor]) -> Result<ErrorMap> {
    if preds.len() != targets.len() {
        return Err(Error::ContractViolation(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut acc = ErrorMapAccumulator::new();
    for (p, t) in preds.iter().zip(targets) {
        acc.add(p, t)?;
    }
    acc.finish()
}

impl ErrorMap {
    /// Largest map value; the PGM export divides by it.
    pub fn peak(&self) -> f64 {
        self.map.max()
    }

    /// Scale factor applied before PGM export so the map fills `[0, 1]`.
    pub fn pgm_scale(&self) -> f64 {
        let peak = self.peak();
        if peak > 0.0 {
            1.0 / peak
        } else {
            1.0
        }
    }

    /// 16-bit PGM of `map * pgm_scale()`.
    pub fn to_pgm(&self) -> Result<Vec<u8>> {
        let scale = self.pgm_scale();
        encode_netpbm(&self.map.map(|v| v * scale), NetpbmFormat::P5, 65535)
    }

    /// Long-format CSV, one row per pixel.
    pub fn to_csv(&self) -> String {
        let s = self.map.shape();
        let mut out = String::from("y,x,mae[intensity]\n");
        for y in 0..s.height() {
            for x in 0..s.width() {
                out.push_str(&format!("{y},{x},{}\n", self.map.get(y, x, 0)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandClass {
    Corner,
    Edge,
    Interior,
}

/// Class of pixel `(y, x)` for a band of `band` pixels along each side.
pub fn band_class(y: usize, x: usize, height: usize, width: usize, band: usize) -> BandClass {
    let near_row = y < band || y >= height - band;
    let near_col = x < band || x >= width - band;
    match (near_row, near_col) {
        (true, true) => BandClass::Corner,
        (false, false) => BandClass::Interior,
        _ => BandClass::Edge,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStats {
    pub corner_mean: f64,
    pub edge_mean: f64,
    pub interior_mean: f64,
    pub band_width: usize,
}

impl BandStats {
    pub const CSV_HEADER: &'static str =
        "band_width[px],corner_mean[intensity],edge_mean[intensity],interior_mean[intensity]";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.band_width, self.corner_mean, self.edge_mean, self.interior_mean
        )
    }
}

/// Mean of a single-channel map over its corner squares, remaining border
/// band, and interior.
pub fn band_stats(map: &Tensor, band_width: usize) -> Result<BandStats> {
    let s = map.shape();
    if s.channels() != 1 {
        return Err(Error::ContractViolation(format!(
            "band statistics need one channel, got {s}"
        )));
    }
    if band_width == 0 || 2 * band_width >= s.height().min(s.width()) {
        return Err(Error::ContractViolation(format!(
            "band width {band_width} must be at least 1 and below half of {}x{}",
            s.height(),
            s.width()
        )));
    }
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for y in 0..s.height() {
        for x in 0..s.width() {
            let slot = band_class(y, x, s.height(), s.width(), band_width) as usize;
            sums[slot] += map.get(y, x, 0);
            counts[slot] += 1;
        }
    }
    Ok(BandStats {
        corner_mean: sums[0] / counts[0] as f64,
        edge_mean: sums[1] / counts[1] as f64,
        interior_mean: sums[2] / counts[2] as f64,
        band_width,
    })
}

pub fn boundary_band_stats(map: &ErrorMap, band_width: usize) -> Result<BandStats> {
    band_stats(&map.map, band_width)
}
