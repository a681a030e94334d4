#![allow(dead_code)]

use mumimo::channel::{generate_channel, ChannelMatrix, SystemConfig};
use mumimo::ComplexMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal) * s,
            rng.sample::<f64, _>(StandardNormal) * s,
        )
    })
}

/// Orthonormal columns scaled by distinct positive gains.
pub fn orthogonal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    let q = gaussian(rng, rows, cols).qr().q();
    let mut h = q;
    for j in 0..cols {
        let g = 0.5 + j as f64 + rng.random::<f64>() * 0.5;
        h.column_mut(j).scale_mut(g);
    }
    h
}

pub fn channel(seed: u64, n_tx: usize, rx: &[usize]) -> ChannelMatrix {
    let cfg = SystemConfig::new(n_tx, rx.to_vec(), rx.len()).unwrap();
    generate_channel(&cfg, &mut rng(seed))
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn proptest_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}
