use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use crate::conv::{conv2d_forward, BoundaryMode, KernelSet, RegionPartition, Strategy};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Median and interquartile range of one variant's wall-clock times.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchTiming {
    pub variant: &'static str,
    pub repeats: usize,
    pub median_ms: f64,
    pub iqr_ms: f64,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn random_kernels(
    rng: &mut Pcg64,
    regions: usize,
    channels: usize,
    radius: usize,
) -> Result<KernelSet> {
    let mut k = KernelSet::new(regions, channels, channels, radius)?;
    k.weights_mut()
        .iter_mut()
        .for_each(|w| *w = rng.random_range(-0.5..0.5));
    k.bias_mut()
        .iter_mut()
        .for_each(|b| *b = rng.random_range(-0.5..0.5));
    Ok(k)
}

/// Times a zero-padding convolution against explicit-mode compose and
/// decompose on a random `height × width × channels` image with as many
/// output features as input channels. Compose and decompose must agree within
/// 1e-12 before any timing is taken. Variants are interleaved per repeat.
pub fn bench_strategies(
    height: usize,
    width: usize,
    channels: usize,
    radius: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchTiming>> {
    if repeats == 0 {
        return Err(Error::ContractViolation(
            "repeats must be at least 1".into(),
        ));
    }
    let partition = RegionPartition::build(height, width, radius)?;
    let shape = Shape::new(height, width, channels)?;
    let mut rng = Pcg64::seed_from_u64(seed);
    let input = Tensor::from_vec(
        shape,
        (0..shape.len()).map(|_| rng.random::<f64>()).collect(),
    )?;
    let zero = random_kernels(&mut rng, 1, channels, radius)?;
    let explicit = random_kernels(&mut rng, partition.region_count(), channels, radius)?;

    let composed = conv2d_forward(
        &input,
        &explicit,
        BoundaryMode::Explicit,
        &partition,
        Strategy::Compose,
    )?;
    let decomposed = conv2d_forward(
        &input,
        &explicit,
        BoundaryMode::Explicit,
        &partition,
        Strategy::Decompose,
    )?;
    let diff = composed
        .data()
        .iter()
        .zip(decomposed.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if diff > 1e-12 {
        return Err(Error::InvalidState(format!(
            "compose and decompose differ by {diff:e}"
        )));
    }

    let variants: [(&'static str, &KernelSet, BoundaryMode, Strategy); 3] = [
        (
            "zero-baseline",
            &zero,
            BoundaryMode::Zero,
            Strategy::Decompose,
        ),
        (
            "compose",
            &explicit,
            BoundaryMode::Explicit,
            Strategy::Compose,
        ),
        (
            "decompose",
            &explicit,
            BoundaryMode::Explicit,
            Strategy::Decompose,
        ),
    ];
    let mut times = vec![Vec::with_capacity(repeats); variants.len()];
    for _ in 0..repeats {
        for (slot, (_, kernels, mode, strategy)) in times.iter_mut().zip(&variants) {
            let start = Instant::now();
            black_box(conv2d_forward(
                black_box(&input),
                kernels,
                *mode,
                &partition,
                *strategy,
            )?);
            slot.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(variants
        .iter()
        .zip(times)
        .map(|((variant, ..), mut t)| {
            t.sort_by(f64::total_cmp);
            BenchTiming {
                variant,
                repeats,
                median_ms: quantile(&t, 0.5),
                iqr_ms: quantile(&t, 0.75) - quantile(&t, 0.25),
            }
        })
        .collect())
}

pub fn bench_csv(rows: &[BenchTiming]) -> String {
    let mut out = String::from("variant,repeats[runs],median[ms],iqr[ms]\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.variant, r.repeats, r.median_ms, r.iqr_ms
        )
        .unwrap();
    }
    out
}
