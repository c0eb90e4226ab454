mod common;

use common::region_oracle;
use edgeconv::conv::RegionPartition;
use edgeconv::Error;

#[test]
fn exhaustive_partition_up_to_16() {
    for r in 1..=3 {
        let side = 2 * r + 1;
        for h in side..=16 {
            for w in side..=16 {
                let p = RegionPartition::build(h, w, r).unwrap();
                assert_eq!(p.region_count(), side * side);
                let mut cover = vec![0u32; h * w];
                for region in 0..p.region_count() {
                    for (i, m) in p.mask(region).iter().enumerate() {
                        assert!(*m == 0.0 || *m == 1.0);
                        cover[i] += *m as u32;
                    }
                }
                assert!(cover.iter().all(|&n| n == 1), "{h}x{w} r={r}");

                let counts = p.counts();
                for (region, &count) in counts.iter().enumerate() {
                    let (i, j) = (region / side, region % side);
                    let rows = if i == r { h - 2 * r } else { 1 };
                    let cols = if j == r { w - 2 * r } else { 1 };
                    assert_eq!(count, rows * cols);
                }
                for y in 0..h {
                    for x in 0..w {
                        assert_eq!(p.region(y, x), region_oracle(y, x, h, w, r));
                    }
                }
            }
        }
    }
}

#[test]
fn five_by_five_counts() {
    let p = RegionPartition::build(5, 5, 1).unwrap();
    let counts = p.counts();
    let corners: usize = [0, 2, 6, 8].iter().map(|&i| counts[i]).sum();
    let edges: usize = [1, 3, 5, 7].iter().map(|&i| counts[i]).sum();
    assert_eq!((corners, edges, counts[4]), (4, 12, 9));
}

#[test]
fn too_small_geometries_are_rejected() {
    for r in 1..=3 {
        for n in 1..2 * r + 1 {
            assert!(matches!(
                RegionPartition::build(n, 16, r),
                Err(Error::UnsupportedGeometry(_))
            ));
            assert!(matches!(
                RegionPartition::build(16, n, r),
                Err(Error::UnsupportedGeometry(_))
            ));
        }
    }
}
