mod common;

use common::channel;
use mumimo::kernels::gram_deviation;
use mumimo::precoding::{
    bd_leakage, block_diagonalize, coordinated_leakage, coordinated_txrx, IterationControls,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(common::proptest_config(48))]

    #[test]
    fn bd_cancels_interference(seed in any::<u64>(), layout in 0usize..3) {
        let (n_tx, rx): (usize, Vec<usize>) = match layout {
            0 => (4, vec![2, 2]),
            1 => (8, vec![2, 2, 2, 2]),
            _ => (6, vec![1, 2, 3]),
        };
        let h = channel(seed, n_tx, &rx);
        let (pre, eff) = block_diagonalize(&h).unwrap();
        prop_assert!(bd_leakage(&h, &pre) / h.full.norm() < 1e-9);
        for (k, t) in pre.per_user_tx.iter().enumerate() {
            prop_assert!(gram_deviation(t) < 1e-10);
            prop_assert!((h.user_block(k) * t - &eff.per_user_eff[k]).norm() < 1e-10);
        }
        prop_assert!((pre.total_power() - n_tx as f64).abs() < 1e-10);
    }

    #[test]
    fn coordinated_cancels_interference(seed in any::<u64>(), layout in 0usize..3) {
        let (n_tx, rx, streams): (usize, Vec<usize>, Vec<usize>) = match layout {
            0 => (4, vec![2, 2], vec![2, 2]),
            1 => (8, vec![2, 2, 2, 2], vec![2, 2, 2, 2]),
            _ => (8, vec![4, 4, 4, 4], vec![1, 3, 2, 2]),
        };
        let h = channel(seed, n_tx, &rx);
        let out = coordinated_txrx(&h, &streams, IterationControls::default()).unwrap();
        prop_assert!(coordinated_leakage(&h, &out.precoders, &out.filters) < 1e-8);
        prop_assert_eq!(out.precoders.streams(), streams.clone());
        prop_assert!((out.precoders.total_power() - n_tx as f64).abs() < 1e-10);
        for k in 0..rx.len() {
            let r = &out.filters.per_user_rx[k];
            let t = &out.precoders.per_user_tx[k];
            prop_assert!(gram_deviation(r) < 1e-10);
            prop_assert!(gram_deviation(t) < 1e-10);
            // the effective channel is diagonal and nonnegative
            let e = r.adjoint() * h.user_block(k) * t;
            prop_assert!((&e - &out.effective.per_user_eff[k]).norm() < 1e-9);
            for i in 0..e.nrows() {
                for j in 0..e.ncols() {
                    if i == j {
                        prop_assert!(e[(i, j)].re >= -1e-12 && e[(i, j)].im.abs() < 1e-9);
                    } else {
                        prop_assert!(e[(i, j)].norm() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn received_power_matches_stream_power(seed in any::<u64>()) {
        // with unit-energy symbols and no noise, the filtered signal power of
        // each stream equals p * gain^2 for the diagonal effective channel
        let h = channel(seed, 8, &[2, 2, 2, 2]);
        let out = coordinated_txrx(&h, &[2, 2, 2, 2], IterationControls::default()).unwrap();
        let mut rx_power = 0.0;
        let mut expected = 0.0;
        for k in 0..4 {
            let e = &out.effective.per_user_eff[k];
            let p = &out.precoders.power_loading[k];
            for i in 0..2 {
                rx_power += (out.filters.per_user_rx[k].adjoint() * h.user_block(k) * out.precoders.loaded(k))
                    .row(i)
                    .norm_squared();
                expected += p[i] * e[(i, i)].norm_sqr();
            }
        }
        prop_assert!((rx_power - expected).abs() < 1e-8 * expected);
    }
}
