mod common;

use common::*;
use ctrl_core::linalg::hcat;
use ctrl_core::rate::{classwise_upper_bound, coding_rate, rate_reduction_classwise, rate_reduction_pair, ClassPartition, Precision};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn eps(v: f64) -> Precision {
    Precision::new(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairwise_reduction_is_nonnegative(seed in any::<u64>(), d in 1usize..8, n in 1usize..12, e in 0.1f64..4.0) {
        let mut r = rng(seed);
        let z1 = gaussian(d, n, &mut r);
        let z2 = gaussian(d, n, &mut r) * 3.0;
        prop_assert!(rate_reduction_pair(&z1, &z2, eps(e)).unwrap() >= -1e-10);
    }

    #[test]
    fn pairwise_reduction_vanishes_under_rotation(seed in any::<u64>(), d in 1usize..8, n in 1usize..10, e in 0.1f64..4.0) {
        let mut r = rng(seed);
        let z = gaussian(d, n, &mut r);
        let q = gaussian(n, n, &mut r).qr().q();
        prop_assert!(rate_reduction_pair(&z, &(&z * q), eps(e)).unwrap().abs() < 1e-9);
    }

    #[test]
    fn pairwise_reduction_is_symmetric(seed in any::<u64>(), d in 1usize..6, n in 1usize..8) {
        let mut r = rng(seed);
        let (a, b) = (gaussian(d, n, &mut r), gaussian(d, n, &mut r));
        let p = eps(1.0);
        let ab = rate_reduction_pair(&a, &b, p).unwrap();
        let ba = rate_reduction_pair(&b, &a, p).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12 * (1.0 + ab.abs()));
    }

    #[test]
    fn rate_is_nonnegative_and_invariant_to_column_order(seed in any::<u64>(), d in 1usize..8, n in 1usize..12) {
        let mut r = rng(seed);
        let z = gaussian(d, n, &mut r);
        let p = eps(0.5);
        let base = coding_rate(&z, p).unwrap();
        prop_assert!(base >= 0.0);
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        let shuffled = z.select_columns(&order);
        prop_assert!((coding_rate(&shuffled, p).unwrap() - base).abs() < 1e-10 * (1.0 + base));
    }

    #[test]
    fn classwise_reduction_is_below_upper_bound(seed in any::<u64>(), d in 2usize..8, a in 1usize..7, b in 1usize..7, e in 0.1f64..4.0) {
        let mut r = rng(seed);
        let z = gaussian(d, a + b, &mut r);
        let part = ClassPartition::contiguous(&[a, b]).unwrap();
        let dr = rate_reduction_classwise(&z, &part, eps(e)).unwrap();
        let ub = classwise_upper_bound(&z, &part, eps(e)).unwrap();
        prop_assert!(dr <= ub + 1e-9, "{dr} > {ub}");
    }

    #[test]
    fn cross_orthogonal_blocks_attain_the_bound(seed in any::<u64>(), d1 in 1usize..4, d2 in 1usize..4, a in 1usize..7, b in 1usize..7, e in 0.1f64..4.0) {
        let mut r = rng(seed);
        let (z, part) = cross_orthogonal(d1 + d2 + 1, &[d1, d2], &[a, b], &mut r);
        let dr = rate_reduction_classwise(&z, &part, eps(e)).unwrap();
        let ub = classwise_upper_bound(&z, &part, eps(e)).unwrap();
        prop_assert!((dr - ub).abs() < 1e-9, "gap {}", ub - dr);
    }
}

#[test]
fn coherent_blocks_stay_strictly_below_bound() {
    let mut r = rng(5);
    let base = gaussian(4, 1, &mut r);
    let base2 = gaussian(4, 1, &mut r);
    let z = hcat(&(&base * DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5])), &((&base + &base2) * DMatrix::from_row_slice(1, 2, &[1.0, 3.0])));
    let part = ClassPartition::contiguous(&[3, 2]).unwrap();
    let p = eps(1.0);
    let gap = classwise_upper_bound(&z, &part, p).unwrap() - rate_reduction_classwise(&z, &part, p).unwrap();
    assert!(gap > 1e-6, "gap {gap}");
}
