//! Same-size, stride-1 2D convolution under classical boundary rules and under
//! explicit per-region boundary kernels.
//!
//! With [`BoundaryMode::Explicit`] every output pixel `x` is produced by the
//! kernel `g[s(x)]` chosen by the [`RegionPartition`]; taps that fall outside
//! the image contribute nothing. The classical modes use one kernel everywhere
//! and synthesize out-of-image taps through [`sample_extended`].
//!
//! Taps are always summed in kernel-domain row-major order (`ty`, `tx`, then
//! input channel), so every execution path produces bit-identical pixels.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How a convolution treats taps that fall outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Zero,
    Clamp,
    Reflect,
    Mean,
    Explicit,
}

impl BoundaryMode {
    pub const ALL: [BoundaryMode; 5] = [
        BoundaryMode::Zero,
        BoundaryMode::Clamp,
        BoundaryMode::Reflect,
        BoundaryMode::Mean,
        BoundaryMode::Explicit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundaryMode::Zero => "zero",
            BoundaryMode::Clamp => "clamp",
            BoundaryMode::Reflect => "reflect",
            BoundaryMode::Mean => "mean",
            BoundaryMode::Explicit => "explicit",
        }
    }

    pub fn is_explicit(self) -> bool {
        self == BoundaryMode::Explicit
    }

    /// Number of kernels a layer needs for this mode at the given radius.
    pub fn region_count(self, radius: usize) -> usize {
        if self.is_explicit() {
            (2 * radius + 1) * (2 * radius + 1)
        } else {
            1
        }
    }
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundaryMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown boundary mode `{s}`")))
    }
}

/// Execution strategy for explicit mode. Both produce identical outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Run every region kernel over the whole image, then mask and sum.
    Compose,
    /// Run each region kernel only over its own region.
    #[default]
    Decompose,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Compose => "compose",
            Strategy::Decompose => "decompose",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compose" => Ok(Strategy::Compose),
            "decompose" => Ok(Strategy::Decompose),
            _ => Err(Error::Config(format!("unknown strategy `{s}`"))),
        }
    }
}

/// Rectangular block of pixels that share one region index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionRect {
    pub region: usize,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

/// Per-pixel selection of the boundary case for a kernel of radius `r`.
///
/// Along each axis a pixel closer than `r` to an edge gets its own case, all
/// other pixels share the middle case `r`. The region index is
/// `row_case * (2r + 1) + col_case`, which gives `(2r + 1)^2` regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPartition {
    radius: usize,
    height: usize,
    width: usize,
    region_of: Vec<u16>,
}

/// Boundary case of coordinate `i` on an axis of length `n`.
#[inline]
fn axis_case(i: usize, n: usize, radius: usize) -> usize {
    if i < radius {
        i
    } else if i > n - 1 - radius {
        2 * radius - (n - 1 - i)
    } else {
        radius
    }
}

impl RegionPartition {
    pub fn build(height: usize, width: usize, radius: usize) -> Result<Self> {
        let side = 2 * radius + 1;
        if height < side || width < side {
            return Err(Error::UnsupportedGeometry(format!(
                "{height}x{width} image is smaller than the {side}x{side} kernel window"
            )));
        }
        if side * side > u16::MAX as usize {
            return Err(Error::UnsupportedGeometry(format!(
                "radius {radius} needs too many regions"
            )));
        }
        let mut region_of = Vec::with_capacity(height * width);
        for y in 0..height {
            let row = axis_case(y, height, radius) * side;
            for x in 0..width {
                region_of.push((row + axis_case(x, width, radius)) as u16);
            }
        }
        Ok(RegionPartition {
            radius,
            height,
            width,
            region_of,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn region_count(&self) -> usize {
        self.side() * self.side()
    }

    pub fn interior_region(&self) -> usize {
        self.radius * self.side() + self.radius
    }

    #[inline]
    pub fn region(&self, y: usize, x: usize) -> usize {
        self.region_of[y * self.width + x] as usize
    }

    /// Region index of every pixel, row-major.
    pub fn region_of(&self) -> &[u16] {
        &self.region_of
    }

    /// Pixel count per region.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.region_count()];
        for &r in &self.region_of {
            counts[r as usize] += 1;
        }
        counts
    }

    /// The regions as rectangles, in region-index order.
    pub fn rects(&self) -> Vec<RegionRect> {
        let side = self.side();
        let r = self.radius;
        let span = |case: usize, n: usize| -> Range<usize> {
            if case < r {
                case..case + 1
            } else if case == r {
                r..n - r
            } else {
                let i = n - 1 - (2 * r - case);
                i..i + 1
            }
        };
        let mut rects = Vec::with_capacity(side * side);
        for row_case in 0..side {
            for col_case in 0..side {
                rects.push(RegionRect {
                    region: row_case * side + col_case,
                    rows: span(row_case, self.height),
                    cols: span(col_case, self.width),
                });
            }
        }
        rects
    }

    /// 0/1 mask of one region, row-major.
    pub fn mask(&self, region: usize) -> Vec<f64> {
        self.region_of
            .iter()
            .map(|&r| if r as usize == region { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Kernels and biases of one convolution layer.
///
/// Weights are laid out region-major, then by output feature, then row-major
/// over kernel taps with input channels innermost. Biases are shared across
/// regions.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    regions: usize,
    in_channels: usize,
    out_features: usize,
    radius: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl KernelSet {
    /// An all-zero kernel set.
    pub fn new(
        regions: usize,
        in_channels: usize,
        out_features: usize,
        radius: usize,
    ) -> Result<Self> {
        if regions == 0 || in_channels == 0 || out_features == 0 {
            return Err(Error::InvalidShape(format!(
                "kernel set with {regions} regions, {in_channels} inputs, {out_features} outputs"
            )));
        }
        let side = 2 * radius + 1;
        Ok(KernelSet {
            regions,
            in_channels,
            out_features,
            radius,
            weights: vec![0.0; regions * out_features * side * side * in_channels],
            bias: vec![0.0; out_features],
        })
    }

    /// An all-zero kernel set sized for `mode`.
    pub fn for_mode(
        mode: BoundaryMode,
        in_channels: usize,
        out_features: usize,
        radius: usize,
    ) -> Result<Self> {
        KernelSet::new(mode.region_count(radius), in_channels, out_features, radius)
    }

    /// A zero set with the same dimensions as `self`.
    pub fn zeros_like(&self) -> Self {
        KernelSet {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
            ..*self
        }
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Values in one kernel: `side * side * in_channels`.
    pub fn kernel_len(&self) -> usize {
        self.side() * self.side() * self.in_channels
    }

    #[inline]
    fn kernel_offset(&self, region: usize, feature: usize) -> usize {
        (region * self.out_features + feature) * self.kernel_len()
    }

    pub fn kernel(&self, region: usize, feature: usize) -> &[f64] {
        let start = self.kernel_offset(region, feature);
        &self.weights[start..start + self.kernel_len()]
    }

    pub fn kernel_mut(&mut self, region: usize, feature: usize) -> &mut [f64] {
        let start = self.kernel_offset(region, feature);
        let len = self.kernel_len();
        &mut self.weights[start..start + len]
    }

    /// Index of tap `(ty, tx)` for input channel `c` inside one kernel.
    pub fn tap_index(&self, ty: usize, tx: usize, c: usize) -> usize {
        (ty * self.side() + tx) * self.in_channels + c
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Overwrites every region's kernels with a copy of `source`'s.
    pub fn broadcast_region(&mut self, source: usize) {
        let block = self.out_features * self.kernel_len();
        let start = source * block;
        let template = self.weights[start..start + block].to_vec();
        for chunk in self.weights.chunks_exact_mut(block) {
            chunk.copy_from_slice(&template);
        }
    }

    pub fn add_assign(&mut self, other: &KernelSet) {
        debug_assert_eq!(self.weights.len(), other.weights.len());
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.bias.iter_mut().for_each(|b| *b *= factor);
    }

    pub fn same_dims(&self, other: &KernelSet) -> bool {
        self.regions == other.regions
            && self.in_channels == other.in_channels
            && self.out_features == other.out_features
            && self.radius == other.radius
    }
}

/// Mirror about the edge sample without repeating it: `-1 -> 1`, `n -> n - 2`.
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Value read at `(y, x, c)` when the coordinate may lie outside the image.
///
/// Inside the image every mode returns the stored value. Outside: `zero` (and
/// `explicit`, which never extends the image) gives 0, `clamp` the nearest
/// in-range pixel, `reflect` the mirrored pixel per axis, and `mean` the
/// supplied `image_mean`.
pub fn sample_extended(
    t: &Tensor,
    y: isize,
    x: isize,
    c: usize,
    mode: BoundaryMode,
    image_mean: f64,
) -> f64 {
    let shape = t.shape();
    match resolve(y, x, shape.height(), shape.width(), mode) {
        Source::Pixel(p) => t.data()[p * shape.channels() + c],
        Source::Mean => image_mean,
        Source::Nothing => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    /// Flat pixel index `y * width + x`.
    Pixel(usize),
    Mean,
    Nothing,
}

#[inline]
fn resolve(y: isize, x: isize, height: usize, width: usize, mode: BoundaryMode) -> Source {
    let inside = y >= 0 && x >= 0 && (y as usize) < height && (x as usize) < width;
    if inside {
        return Source::Pixel(y as usize * width + x as usize);
    }
    match mode {
        BoundaryMode::Zero | BoundaryMode::Explicit => Source::Nothing,
        BoundaryMode::Mean => Source::Mean,
        BoundaryMode::Clamp => {
            let yy = y.clamp(0, height as isize - 1) as usize;
            let xx = x.clamp(0, width as isize - 1) as usize;
            Source::Pixel(yy * width + xx)
        }
        BoundaryMode::Reflect => {
            Source::Pixel(reflect_index(y, height) * width + reflect_index(x, width))
        }
    }
}

fn check_forward(
    input: &Tensor,
    kernels: &KernelSet,
    mode: BoundaryMode,
    partition: &RegionPartition,
) -> Result<()> {
    let shape = input.shape();
    if shape.height() != partition.height() || shape.width() != partition.width() {
        return Err(Error::ContractViolation(format!(
            "partition is {}x{} but input is {shape}",
            partition.height(),
            partition.width()
        )));
    }
    if partition.radius() != kernels.radius() {
        return Err(Error::ContractViolation(format!(
            "partition radius {} does not match kernel radius {}",
            partition.radius(),
            kernels.radius()
        )));
    }
    if shape.channels() != kernels.in_channels() {
        return Err(Error::ContractViolation(format!(
            "input has {} channels, kernels expect {}",
            shape.channels(),
            kernels.in_channels()
        )));
    }
    let expected = mode.region_count(kernels.radius());
    if kernels.regions() != expected {
        return Err(Error::ContractViolation(format!(
            "{mode} mode needs {expected} region kernels, got {}",
            kernels.regions()
        )));
    }
    Ok(())
}

/// Tap sum for a pixel whose whole window lies inside the image.
#[inline]
fn interior_dot(
    data: &[f64],
    width: usize,
    channels: usize,
    kernel: &[f64],
    y: usize,
    x: usize,
    radius: usize,
) -> f64 {
    let side = 2 * radius + 1;
    let row_len = side * channels;
    let mut acc = 0.0;
    for ty in 0..side {
        let start = ((y + ty - radius) * width + (x - radius)) * channels;
        let src = &data[start..start + row_len];
        let k = &kernel[ty * row_len..(ty + 1) * row_len];
        for (a, b) in src.iter().zip(k) {
            acc += a * b;
        }
    }
    acc
}

struct Frame<'a> {
    data: &'a [f64],
    height: usize,
    width: usize,
    channels: usize,
    radius: usize,
    mode: BoundaryMode,
    means: &'a [f64],
}

impl Frame<'_> {
    fn new<'a>(
        input: &'a Tensor,
        radius: usize,
        mode: BoundaryMode,
        means: &'a [f64],
    ) -> Frame<'a> {
        let shape = input.shape();
        Frame {
            data: input.data(),
            height: shape.height(),
            width: shape.width(),
            channels: shape.channels(),
            radius,
            mode,
            means,
        }
    }

    #[inline]
    fn border_dot(&self, kernel: &[f64], y: usize, x: usize) -> f64 {
        let side = 2 * self.radius + 1;
        let c = self.channels;
        let mut acc = 0.0;
        for ty in 0..side {
            let sy = y as isize + ty as isize - self.radius as isize;
            for tx in 0..side {
                let sx = x as isize + tx as isize - self.radius as isize;
                let k = &kernel[(ty * side + tx) * c..(ty * side + tx + 1) * c];
                match resolve(sy, sx, self.height, self.width, self.mode) {
                    Source::Pixel(p) => {
                        for (a, b) in self.data[p * c..(p + 1) * c].iter().zip(k) {
                            acc += a * b;
                        }
                    }
                    Source::Mean => {
                        for (a, b) in self.means.iter().zip(k) {
                            acc += a * b;
                        }
                    }
                    Source::Nothing => {}
                }
            }
        }
        acc
    }

    #[inline]
    fn dot(&self, kernel: &[f64], y: usize, x: usize, interior: bool) -> f64 {
        if interior {
            interior_dot(
                self.data,
                self.width,
                self.channels,
                kernel,
                y,
                x,
                self.radius,
            )
        } else {
            self.border_dot(kernel, y, x)
        }
    }
}

/// Evaluates one pass over all region rectangles, using kernel `pick(region)`
/// for the pixels of each rectangle. Writes `tap sum + bias` into `out`.
fn run_pass(
    frame: &Frame<'_>,
    kernels: &KernelSet,
    rects: &[RegionRect],
    interior_region: usize,
    pick: impl Fn(usize) -> usize,
    out: &mut [f64],
) {
    let features = kernels.out_features();
    for rect in rects {
        let region = pick(rect.region);
        let interior = rect.region == interior_region;
        for y in rect.rows.clone() {
            for x in rect.cols.clone() {
                let base = (y * frame.width + x) * features;
                for f in 0..features {
                    let acc = frame.dot(kernels.kernel(region, f), y, x, interior);
                    out[base + f] = acc + kernels.bias()[f];
                }
            }
        }
    }
}

/// Same-size convolution of `input` (stride 1) under `mode`.
///
/// For [`BoundaryMode::Explicit`] each pixel uses the kernel of its region and
/// out-of-image taps contribute zero; the classical modes use the single kernel
/// of region 0 with out-of-image taps from [`sample_extended`].
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &KernelSet,
    mode: BoundaryMode,
    partition: &RegionPartition,
    strategy: Strategy,
) -> Result<Tensor> {
    check_forward(input, kernels, mode, partition)?;
    let shape = input.shape();
    let out_shape = shape.with_channels(kernels.out_features())?;
    let means = if mode == BoundaryMode::Mean {
        input.channel_means()
    } else {
        Vec::new()
    };
    let frame = Frame::new(input, kernels.radius(), mode, &means);
    let rects = partition.rects();
    let interior = partition.interior_region();
    let mut out = Tensor::zeros(out_shape);

    match (mode, strategy) {
        (BoundaryMode::Explicit, Strategy::Compose) => {
            let features = kernels.out_features();
            let mut full = vec![0.0; out_shape.len()];
            let acc = out.data_mut();
            for region in 0..kernels.regions() {
                run_pass(&frame, kernels, &rects, interior, |_| region, &mut full);
                let mask = partition.mask(region);
                for (p, m) in mask.iter().enumerate() {
                    for f in 0..features {
                        let i = p * features + f;
                        acc[i] += m * full[i];
                    }
                }
            }
        }
        (BoundaryMode::Explicit, Strategy::Decompose) => {
            run_pass(&frame, kernels, &rects, interior, |r| r, out.data_mut());
        }
        _ => {
            run_pass(&frame, kernels, &rects, interior, |_| 0, out.data_mut());
        }
    }
    Ok(out)
}

/// Gradients of a convolution with respect to its input and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    /// Kernel and bias gradients, shaped like the forward [`KernelSet`].
    pub params: KernelSet,
}

/// Backpropagates `grad_output` through [`conv2d_forward`].
///
/// Region `i`'s kernel gradient accumulates only from pixels with `s(x) = i`.
/// The input gradient is the adjoint of the forward map: out-of-image taps are
/// dropped (zero, explicit), folded back onto their source pixel (clamp,
/// reflect), or spread evenly over the channel (mean).
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &KernelSet,
    mode: BoundaryMode,
    partition: &RegionPartition,
    grad_output: &Tensor,
) -> Result<ConvGrads> {
    let (grad_input, params) = backward_impl(input, kernels, mode, partition, grad_output, true)?;
    Ok(ConvGrads {
        input: grad_input.expect("input gradient requested"),
        params,
    })
}

pub(crate) fn backward_impl(
    input: &Tensor,
    kernels: &KernelSet,
    mode: BoundaryMode,
    partition: &RegionPartition,
    grad_output: &Tensor,
    want_input: bool,
) -> Result<(Option<Tensor>, KernelSet)> {
    check_forward(input, kernels, mode, partition)?;
    let shape = input.shape();
    let features = kernels.out_features();
    if grad_output.shape() != shape.with_channels(features)? {
        return Err(Error::ContractViolation(format!(
            "output gradient is {} but the forward output is {}x{}x{features}",
            grad_output.shape(),
            shape.height(),
            shape.width()
        )));
    }
    let means = if mode == BoundaryMode::Mean {
        input.channel_means()
    } else {
        Vec::new()
    };
    let frame = Frame::new(input, kernels.radius(), mode, &means);
    let (width, channels, radius) = (frame.width, frame.channels, frame.radius);
    let side = 2 * radius + 1;
    let row_len = side * channels;
    let go = grad_output.data();

    let mut grads = kernels.zeros_like();
    let mut grad_in = if want_input {
        vec![0.0; shape.len()]
    } else {
        Vec::new()
    };
    let mut grad_means = vec![0.0; channels];
    let interior_region = partition.interior_region();

    for rect in partition.rects() {
        let region = if mode.is_explicit() { rect.region } else { 0 };
        let interior = rect.region == interior_region;
        for y in rect.rows.clone() {
            for x in rect.cols.clone() {
                for f in 0..features {
                    let g = go[(y * width + x) * features + f];
                    grads.bias[f] += g;
                    let k = kernels.kernel(region, f);
                    let start = grads.kernel_offset(region, f);
                    let gk = &mut grads.weights[start..start + k.len()];
                    if interior {
                        for ty in 0..side {
                            let src = ((y + ty - radius) * width + (x - radius)) * channels;
                            let kt = ty * row_len;
                            for j in 0..row_len {
                                gk[kt + j] += g * frame.data[src + j];
                                if want_input {
                                    grad_in[src + j] += g * k[kt + j];
                                }
                            }
                        }
                        continue;
                    }
                    for ty in 0..side {
                        let sy = y as isize + ty as isize - radius as isize;
                        for tx in 0..side {
                            let sx = x as isize + tx as isize - radius as isize;
                            let kt = (ty * side + tx) * channels;
                            match resolve(sy, sx, frame.height, width, mode) {
                                Source::Pixel(p) => {
                                    for c in 0..channels {
                                        gk[kt + c] += g * frame.data[p * channels + c];
                                        if want_input {
                                            grad_in[p * channels + c] += g * k[kt + c];
                                        }
                                    }
                                }
                                Source::Mean => {
                                    for c in 0..channels {
                                        gk[kt + c] += g * means[c];
                                        grad_means[c] += g * k[kt + c];
                                    }
                                }
                                Source::Nothing => {}
                            }
                        }
                    }
                }
            }
        }
    }

    if !want_input {
        return Ok((None, grads));
    }
    if mode == BoundaryMode::Mean {
        let n = shape.pixels() as f64;
        for px in grad_in.chunks_exact_mut(channels) {
            for (v, gm) in px.iter_mut().zip(&grad_means) {
                *v += gm / n;
            }
        }
    }
    Ok((Some(Tensor::from_vec(shape, grad_in)?), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn seq_image(h: usize, w: usize) -> Tensor {
        let shape = Shape::new(h, w, 1).unwrap();
        Tensor::from_vec(shape, (1..=h * w).map(|v| v as f64).collect()).unwrap()
    }

    fn random_tensor(rng: &mut Pcg64, h: usize, w: usize, c: usize) -> Tensor {
        let shape = Shape::new(h, w, c).unwrap();
        Tensor::from_vec(
            shape,
            (0..shape.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    fn random_kernels(
        rng: &mut Pcg64,
        mode: BoundaryMode,
        cin: usize,
        cout: usize,
        r: usize,
    ) -> KernelSet {
        let mut k = KernelSet::for_mode(mode, cin, cout, r).unwrap();
        k.weights_mut()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-1.0..1.0));
        k.bias_mut()
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-1.0..1.0));
        k
    }

    #[test]
    fn partition_5x5_matches_domain_figure() {
        let p = RegionPartition::build(5, 5, 1).unwrap();
        let counts = p.counts();
        assert_eq!(counts.len(), 9);
        assert_eq!(counts, vec![1, 3, 1, 3, 9, 3, 1, 3, 1]);
        assert_eq!(p.interior_region(), 4);
        assert_eq!(p.region(0, 0), 0);
        assert_eq!(p.region(0, 4), 2);
        assert_eq!(p.region(4, 0), 6);
        assert_eq!(p.region(4, 4), 8);
        assert_eq!(p.region(2, 2), 4);
        assert_eq!(p.region(0, 2), 1);
        assert_eq!(p.region(2, 4), 5);
    }

    #[test]
    fn partition_3x3_every_pixel_distinct() {
        let p = RegionPartition::build(3, 3, 1).unwrap();
        assert_eq!(p.counts(), vec![1; 9]);
        let mut regions: Vec<_> = p.region_of().to_vec();
        regions.sort();
        assert_eq!(regions, (0..9).collect::<Vec<u16>>());
    }

    #[test]
    fn partition_7x9_radius_2() {
        let p = RegionPartition::build(7, 9, 2).unwrap();
        assert_eq!(p.region_count(), 25);
        let counts = p.counts();
        assert_eq!(counts.iter().sum::<usize>(), 63);
        assert_eq!(counts[p.interior_region()], 15);
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn partition_rejects_small_images() {
        assert!(matches!(
            RegionPartition::build(2, 5, 1),
            Err(Error::UnsupportedGeometry(_))
        ));
        assert!(RegionPartition::build(5, 4, 2).is_err());
    }

    #[test]
    fn rects_cover_partition() {
        for r in 1..=2 {
            for h in 2 * r + 1..=9 {
                for w in 2 * r + 1..=9 {
                    let p = RegionPartition::build(h, w, r).unwrap();
                    let mut covered = vec![0u8; h * w];
                    for rect in p.rects() {
                        for y in rect.rows.clone() {
                            for x in rect.cols.clone() {
                                assert_eq!(p.region(y, x), rect.region);
                                covered[y * w + x] += 1;
                            }
                        }
                    }
                    assert!(covered.iter().all(|&c| c == 1));
                }
            }
        }
    }

    #[test]
    fn sample_extended_examples() {
        let t = seq_image(4, 4);
        assert_eq!(sample_extended(&t, -1, 0, 0, BoundaryMode::Zero, 0.0), 0.0);
        assert_eq!(
            sample_extended(&t, -1, 2, 0, BoundaryMode::Clamp, 0.0),
            t.get(0, 2, 0)
        );
        assert_eq!(
            sample_extended(&t, -1, -1, 0, BoundaryMode::Reflect, 0.0),
            t.get(1, 1, 0)
        );
        assert_eq!(
            sample_extended(&t, 4, 1, 0, BoundaryMode::Reflect, 0.0),
            t.get(2, 1, 0)
        );
        assert_eq!(sample_extended(&t, 1, 4, 0, BoundaryMode::Mean, 8.5), 8.5);
        for mode in BoundaryMode::ALL {
            assert_eq!(sample_extended(&t, 2, 3, 0, mode, -1.0), t.get(2, 3, 0));
        }
    }

    #[test]
    fn reflect_index_mirrors_without_duplication() {
        assert_eq!(reflect_index(-1, 4), 1);
        assert_eq!(reflect_index(-2, 4), 2);
        assert_eq!(reflect_index(4, 4), 2);
        assert_eq!(reflect_index(5, 4), 1);
        assert_eq!(reflect_index(0, 1), 0);
    }

    fn delta_kernels(mode: BoundaryMode, r: usize) -> KernelSet {
        let mut k = KernelSet::for_mode(mode, 1, 1, r).unwrap();
        let center = k.tap_index(r, r, 0);
        for region in 0..k.regions() {
            k.kernel_mut(region, 0)[center] = 1.0;
        }
        k
    }

    #[test]
    fn delta_kernel_is_identity() {
        let t = seq_image(5, 6);
        for r in 1..=2 {
            let p = RegionPartition::build(5, 6, r).unwrap();
            for mode in BoundaryMode::ALL {
                for strategy in [Strategy::Compose, Strategy::Decompose] {
                    let out =
                        conv2d_forward(&t, &delta_kernels(mode, r), mode, &p, strategy).unwrap();
                    assert_eq!(out, t, "{mode} {strategy} r={r}");
                }
            }
        }
    }

    #[test]
    fn box_filter_zero_and_reflect() {
        let t = seq_image(3, 3);
        let p = RegionPartition::build(3, 3, 1).unwrap();
        let mut k = KernelSet::for_mode(BoundaryMode::Zero, 1, 1, 1).unwrap();
        k.weights_mut().iter_mut().for_each(|w| *w = 1.0 / 9.0);

        let out = conv2d_forward(&t, &k, BoundaryMode::Zero, &p, Strategy::Decompose).unwrap();
        assert!((out.get(1, 1, 0) - 5.0).abs() < 1e-12);
        assert!((out.get(0, 0, 0) - 12.0 / 9.0).abs() < 1e-12);

        // Reflected neighborhood of (0, 0): rows/cols {1, 0, 1}.
        let mut expected = 0.0;
        for yy in [1, 0, 1] {
            for xx in [1, 0, 1] {
                expected += t.get(yy, xx, 0) / 9.0;
            }
        }
        let out = conv2d_forward(&t, &k, BoundaryMode::Reflect, &p, Strategy::Decompose).unwrap();
        assert!((out.get(0, 0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn explicit_with_equal_kernels_equals_zero_mode() {
        let mut rng = Pcg64::seed_from_u64(3);
        let t = random_tensor(&mut rng, 6, 7, 2);
        let zero = random_kernels(&mut rng, BoundaryMode::Zero, 2, 3, 1);
        let mut explicit = KernelSet::for_mode(BoundaryMode::Explicit, 2, 3, 1).unwrap();
        for region in 0..9 {
            for f in 0..3 {
                explicit
                    .kernel_mut(region, f)
                    .copy_from_slice(zero.kernel(0, f));
            }
        }
        explicit.bias_mut().copy_from_slice(zero.bias());
        let p = RegionPartition::build(6, 7, 1).unwrap();
        let a = conv2d_forward(&t, &zero, BoundaryMode::Zero, &p, Strategy::Decompose).unwrap();
        for strategy in [Strategy::Compose, Strategy::Decompose] {
            let b = conv2d_forward(&t, &explicit, BoundaryMode::Explicit, &p, strategy).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn contract_violations() {
        let t = seq_image(5, 5);
        let p = RegionPartition::build(5, 5, 1).unwrap();
        let k = KernelSet::for_mode(BoundaryMode::Zero, 1, 1, 1).unwrap();
        // Region count does not match the mode.
        assert!(matches!(
            conv2d_forward(&t, &k, BoundaryMode::Explicit, &p, Strategy::Decompose),
            Err(Error::ContractViolation(_))
        ));
        // Channel mismatch.
        let k2 = KernelSet::for_mode(BoundaryMode::Zero, 2, 1, 1).unwrap();
        assert!(conv2d_forward(&t, &k2, BoundaryMode::Zero, &p, Strategy::Decompose).is_err());
        // Partition size mismatch.
        let p6 = RegionPartition::build(6, 5, 1).unwrap();
        assert!(conv2d_forward(&t, &k, BoundaryMode::Zero, &p6, Strategy::Decompose).is_err());
        // Radius mismatch.
        let p2 = RegionPartition::build(5, 5, 2).unwrap();
        assert!(conv2d_forward(&t, &k, BoundaryMode::Zero, &p2, Strategy::Decompose).is_err());
        // Bad output gradient shape.
        let go = Tensor::zeros(Shape::new(5, 5, 2).unwrap());
        assert!(conv2d_backward(&t, &k, BoundaryMode::Zero, &p, &go).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = Pcg64::seed_from_u64(11);
        let t = random_tensor(&mut rng, 5, 6, 2);
        let p = RegionPartition::build(5, 6, 1).unwrap();
        for mode in BoundaryMode::ALL {
            let k = random_kernels(&mut rng, mode, 2, 2, 1);
            let go = Tensor::zeros(Shape::new(5, 6, 2).unwrap());
            let g = conv2d_backward(&t, &k, mode, &p, &go).unwrap();
            assert!(g.input.data().iter().all(|&v| v == 0.0));
            assert!(g.params.weights().iter().all(|&v| v == 0.0));
            assert!(g.params.bias().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn delta_kernel_adjoint_is_delta() {
        let t = seq_image(5, 5);
        let p = RegionPartition::build(5, 5, 1).unwrap();
        for mode in BoundaryMode::ALL {
            let mut go = Tensor::zeros(Shape::new(5, 5, 1).unwrap());
            go.set(2, 3, 0, 1.0);
            let g = conv2d_backward(&t, &delta_kernels(mode, 1), mode, &p, &go).unwrap();
            let mut expected = Tensor::zeros(Shape::new(5, 5, 1).unwrap());
            expected.set(2, 3, 0, 1.0);
            assert_eq!(g.input, expected, "{mode}");
        }
    }

    #[test]
    fn region_gradient_comes_only_from_its_pixels() {
        let mut rng = Pcg64::seed_from_u64(5);
        let t = random_tensor(&mut rng, 5, 5, 1);
        let p = RegionPartition::build(5, 5, 1).unwrap();
        let k = random_kernels(&mut rng, BoundaryMode::Explicit, 1, 1, 1);
        // Gradient only at the top-left corner pixel (region 0).
        let mut go = Tensor::zeros(Shape::new(5, 5, 1).unwrap());
        go.set(0, 0, 0, 1.0);
        let g = conv2d_backward(&t, &k, BoundaryMode::Explicit, &p, &go).unwrap();
        for region in 1..9 {
            assert!(g.params.kernel(region, 0).iter().all(|&v| v == 0.0));
        }
        // Region 0 sees taps (0..2, 0..2) of the input at offsets (1..3, 1..3).
        let k0 = g.params.kernel(0, 0);
        assert_eq!(k0[k.tap_index(0, 0, 0)], 0.0);
        assert_eq!(k0[k.tap_index(1, 1, 0)], t.get(0, 0, 0));
        assert_eq!(k0[k.tap_index(2, 2, 0)], t.get(1, 1, 0));
        assert_eq!(g.params.bias(), &[1.0]);
    }
}
