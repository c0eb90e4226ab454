//! Fixtures shared by the strategy benchmarks.

use edgeconv::conv::{BoundaryMode, KernelSet, RegionPartition};
use edgeconv::{Result, Shape, Tensor};

/// Input image, partition, single zero-mode kernel set and a per-region
/// explicit kernel set, all filled from a fixed integer hash so no RNG is
/// needed.
pub struct Fixture {
    pub input: Tensor,
    pub partition: RegionPartition,
    pub zero: KernelSet,
    pub explicit: KernelSet,
}

fn hashed(i: usize, salt: u64) -> f64 {
    let mut z = (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt;
    z = (z ^ (z >> 31)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

fn fill(k: &mut KernelSet, salt: u64) {
    for (i, w) in k.weights_mut().iter_mut().enumerate() {
        *w = hashed(i, salt);
    }
    for (i, b) in k.bias_mut().iter_mut().enumerate() {
        *b = hashed(i, salt ^ 1);
    }
}

impl Fixture {
    pub fn new(height: usize, width: usize, channels: usize, radius: usize) -> Result<Fixture> {
        let shape = Shape::new(height, width, channels)?;
        let input = Tensor::from_vec(
            shape,
            (0..shape.len()).map(|i| hashed(i, 7) + 0.5).collect(),
        )?;
        let partition = RegionPartition::build(height, width, radius)?;
        let mut zero = KernelSet::new(
            BoundaryMode::Zero.region_count(radius),
            channels,
            channels,
            radius,
        )?;
        let mut explicit = KernelSet::new(partition.region_count(), channels, channels, radius)?;
        fill(&mut zero, 11);
        fill(&mut explicit, 13);
        Ok(Fixture {
            input,
            partition,
            zero,
            explicit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgeconv::conv::{conv2d_forward, Strategy};

    #[test]
    fn strategies_agree_on_fixture() {
        let f = Fixture::new(24, 20, 3, 1).unwrap();
        let a = conv2d_forward(
            &f.input,
            &f.explicit,
            BoundaryMode::Explicit,
            &f.partition,
            Strategy::Compose,
        )
        .unwrap();
        let b = conv2d_forward(
            &f.input,
            &f.explicit,
            BoundaryMode::Explicit,
            &f.partition,
            Strategy::Decompose,
        )
        .unwrap();
        let diff = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-12);
        assert!(f.input.min() >= 0.0 && f.input.max() <= 1.0);
    }
}
