use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use edgeconv::conv::{conv2d_forward, BoundaryMode, Strategy};
use edgeconv_bench::Fixture;

fn strategies(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d_forward");
    group
        .sample_size(10)
        .measurement_time(Duration::from_secs(5));
    for size in [128, 512] {
        let f = Fixture::new(size, size, 3, 1).unwrap();
        let variants = [
            (
                "zero-baseline",
                &f.zero,
                BoundaryMode::Zero,
                Strategy::Decompose,
            ),
            (
                "compose",
                &f.explicit,
                BoundaryMode::Explicit,
                Strategy::Compose,
            ),
            (
                "decompose",
                &f.explicit,
                BoundaryMode::Explicit,
                Strategy::Decompose,
            ),
        ];
        for (name, kernels, mode, strategy) in variants {
            group.bench_with_input(BenchmarkId::new(name, size), &size, |b, _| {
                b.iter(|| {
                    conv2d_forward(black_box(&f.input), kernels, mode, &f.partition, strategy)
                        .unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, strategies);
criterion_main!(benches);
