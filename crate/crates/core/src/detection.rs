//! 4QAM mapping and linear (ZF / MMSE) detection.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{ComplexMatrix, RANK_EPS};

pub type ComplexVector = DVector<Complex64>;

/// Modulated symbols together with the bits they carry (two per symbol).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolVector {
    pub symbols: Vec<Complex64>,
    pub bits: Vec<u8>,
}

/// Gray-mapped 4QAM with unit average energy: the first bit of each pair
/// picks the sign of the real part, the second the sign of the imaginary
/// part (`0 -> +`, `1 -> -`).
pub fn qam4_modulate(bits: &[u8]) -> Result<SymbolVector> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::OddBitCount(bits.len()));
    }
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let level = |b: u8| if b == 0 { a } else { -a };
    let symbols = bits
        .chunks_exact(2)
        .map(|p| Complex64::new(level(p[0]), level(p[1])))
        .collect();
    Ok(SymbolVector {
        symbols,
        bits: bits.to_vec(),
    })
}

/// Hard quadrant decision. A component that is exactly zero decodes as 0.
pub fn qam4_demodulate(symbols: &[Complex64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|s| [u8::from(s.re < 0.0), u8::from(s.im < 0.0)])
        .collect()
}

/// Zero-forcing estimate `(H^H H)^-1 H^H y`, computed as a least-squares
/// solve through a Householder QR of `H`.
pub fn zf_detect(heff: &ComplexMatrix, y: &ComplexVector) -> Result<ComplexVector> {
    let (rows, cols) = heff.shape();
    if y.len() != rows {
        return Err(Error::Dimension(format!(
            "observation has {} entries for a {rows}-row channel",
            y.len()
        )));
    }
    if cols > rows {
        return Err(Error::Singular {
            rank: rows,
            required: cols,
        });
    }
    let qr = heff.clone().qr();
    let r = qr.r();
    let max_col = (0..cols).map(|j| heff.column(j).norm()).fold(0.0, f64::max);
    let tol = rows.max(cols) as f64 * RANK_EPS * max_col;
    let rank = (0..cols).filter(|&i| r[(i, i)].norm() > tol).count();
    if rank < cols || max_col == 0.0 {
        return Err(Error::Singular {
            rank,
            required: cols,
        });
    }
    let qhy = qr.q().adjoint() * y;
    r.solve_upper_triangular(&qhy).ok_or(Error::Singular {
        rank,
        required: cols,
    })
}

/// Linear MMSE estimate `(H^H H + (sigma2/Es) I)^-1 H^H y`. With
/// `sigma2 == 0` this is the ZF estimate.
pub fn mmse_detect(
    heff: &ComplexMatrix,
    y: &ComplexVector,
    sigma2: f64,
    symbol_energy: f64,
) -> Result<ComplexVector> {
    if sigma2 < 0.0 || symbol_energy <= 0.0 {
        return Err(Error::Dimension(format!(
            "need sigma2 >= 0 and Es > 0, got {sigma2} and {symbol_energy}"
        )));
    }
    if sigma2 == 0.0 {
        return zf_detect(heff, y);
    }
    if y.len() != heff.nrows() {
        return Err(Error::Dimension(format!(
            "observation has {} entries for a {}-row channel",
            y.len(),
            heff.nrows()
        )));
    }
    let cols = heff.ncols();
    let reg = Complex64::new(sigma2 / symbol_energy, 0.0);
    let mut gram = heff.adjoint() * heff;
    for i in 0..cols {
        gram[(i, i)] += reg;
    }
    let rhs = heff.adjoint() * y;
    let chol = gram.cholesky().ok_or(Error::Singular {
        rank: 0,
        required: cols,
    })?;
    Ok(chol.solve(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cn<R: Rng>(rng: &mut R, rows: usize, cols: usize, var: f64) -> ComplexMatrix {
        let s = (var / 2.0).sqrt();
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(
                rng.sample::<f64, _>(StandardNormal) * s,
                rng.sample::<f64, _>(StandardNormal) * s,
            )
        })
    }

    #[test]
    fn modulate_constants() {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(qam4_modulate(&[0, 0]).unwrap().symbols, vec![c(a, a)]);
        assert_eq!(qam4_modulate(&[0, 1]).unwrap().symbols, vec![c(a, -a)]);
        assert_eq!(qam4_modulate(&[1, 0]).unwrap().symbols, vec![c(-a, a)]);
        assert_eq!(qam4_modulate(&[1, 1]).unwrap().symbols, vec![c(-a, -a)]);
        assert_eq!(qam4_modulate(&[1]), Err(Error::OddBitCount(1)));
    }

    #[test]
    fn demodulate_quadrants() {
        assert_eq!(qam4_demodulate(&[c(0.5, 0.5)]), vec![0, 0]);
        assert_eq!(qam4_demodulate(&[c(-3.0, -0.1)]), vec![1, 1]);
        assert_eq!(qam4_demodulate(&[c(0.0, 0.0)]), vec![0, 0]);
    }

    #[test]
    fn round_trip_and_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..2u8)).collect();
        let sv = qam4_modulate(&bits).unwrap();
        assert_eq!(sv.bits.len(), 2 * sv.symbols.len());
        assert_eq!(qam4_demodulate(&sv.symbols), bits);
        let energy = sv.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / sv.symbols.len() as f64;
        assert!((energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zf_examples() {
        let h = ComplexMatrix::identity(2, 2);
        let y = ComplexVector::from_vec(vec![c(1.0, 1.0), c(2.0, 0.0)]);
        assert!((zf_detect(&h, &y).unwrap() - &y).norm() < 1e-15);

        let h2 = ComplexMatrix::identity(2, 2) * c(2.0, 0.0);
        let y2 = &y * c(2.0, 0.0);
        assert!((zf_detect(&h2, &y2).unwrap() - &y).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = cn(&mut rng, 4, 2, 1.0);
        let x = ComplexVector::from_vec(vec![c(0.3, -1.0), c(-2.0, 0.5)]);
        let y = &h * &x;
        assert!((zf_detect(&h, &y).unwrap() - x).norm() < 1e-9);
    }

    #[test]
    fn zf_rejects_rank_deficient() {
        let h = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)],
        );
        let y = ComplexVector::zeros(2);
        assert!(matches!(zf_detect(&h, &y), Err(Error::Singular { .. })));
        let wide = ComplexMatrix::identity(1, 2);
        assert!(zf_detect(&wide, &ComplexVector::zeros(1)).is_err());
    }

    #[test]
    fn mmse_examples() {
        let h = ComplexMatrix::identity(2, 2);
        let y = ComplexVector::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0)]);
        let x = mmse_detect(&h, &y, 1.0, 1.0).unwrap();
        assert!((x - ComplexVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = cn(&mut rng, 3, 3, 1.0);
        let y = cn(&mut rng, 3, 1, 1.0).column(0).into_owned();
        let zf = zf_detect(&h, &y).unwrap();
        assert_eq!(mmse_detect(&h, &y, 0.0, 1.0).unwrap(), zf);
        assert!((mmse_detect(&h, &y, 1e-12, 1.0).unwrap() - &zf).norm() < 1e-6);
        assert!(mmse_detect(&h, &y, -1.0, 1.0).is_err());
    }

    #[test]
    fn mmse_matches_augmented_least_squares() {
        // second route: min ||[H; sqrt(s2/Es) I] x - [y; 0]||
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = cn(&mut rng, 4, 3, 1.0);
        let y = cn(&mut rng, 4, 1, 1.0).column(0).into_owned();
        let (sigma2, es) = (0.5f64, 2.0);
        let lam = (sigma2 / es).sqrt();
        let mut aug = ComplexMatrix::zeros(7, 3);
        aug.rows_mut(0, 4).copy_from(&h);
        for i in 0..3 {
            aug[(4 + i, i)] = c(lam, 0.0);
        }
        let mut rhs = ComplexVector::zeros(7);
        rhs.rows_mut(0, 4).copy_from(&y);
        let qr = aug.qr();
        let expected = qr
            .r()
            .solve_upper_triangular(&(qr.q().adjoint() * rhs))
            .unwrap();
        let got = mmse_detect(&h, &y, sigma2, es).unwrap();
        assert!((got - expected).norm() < 1e-12);
    }

    #[test]
    fn zf_unbiased_and_mmse_lower_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = cn(&mut rng, 3, 3, 1.0);
        let x = ComplexVector::from_vec(vec![c(0.7, 0.7), c(-0.7, 0.7), c(0.7, -0.7)]);
        let sigma2 = 0.2;
        let trials = 10_000;
        let mut mean = ComplexVector::zeros(3);
        let mut sq = [0.0; 3];
        let (mut mse_zf, mut mse_mmse) = (vec![0.0; 3], vec![0.0; 3]);
        for _ in 0..trials {
            let n = cn(&mut rng, 3, 1, sigma2).column(0).into_owned();
            let y = &h * &x + n;
            let z = zf_detect(&h, &y).unwrap();
            let m = mmse_detect(&h, &y, sigma2, 1.0).unwrap();
            for i in 0..3 {
                sq[i] += (z[i] - x[i]).norm_sqr();
                mse_zf[i] += (z[i] - x[i]).norm_sqr();
                mse_mmse[i] += (m[i] - x[i]).norm_sqr();
            }
            mean += z;
        }
        mean /= c(trials as f64, 0.0);
        for i in 0..3 {
            // standard error of the complex sample mean
            let se = (sq[i] / trials as f64 / trials as f64).sqrt();
            assert!((mean[i] - x[i]).norm() < 3.0 * se, "stream {i}");
            assert!(mse_mmse[i] <= mse_zf[i] * 1.05, "stream {i}");
        }
    }

    #[test]
    fn filtered_noise_stays_white() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = cn(&mut rng, 4, 2, 1.0);
        let r = g.qr().q();
        let sigma2 = 0.5;
        let trials = 20_000;
        let mut cov = ComplexMatrix::zeros(2, 2);
        for _ in 0..trials {
            let n = cn(&mut rng, 4, 1, sigma2);
            let f = r.adjoint() * n;
            cov += &f * f.adjoint();
        }
        cov /= c(trials as f64, 0.0);
        let target = ComplexMatrix::identity(2, 2) * c(sigma2, 0.0);
        // entrywise sampling error is about sigma2 / sqrt(trials)
        assert!((cov - target).camax() < 5.0 * sigma2 / (trials as f64).sqrt());
    }
}
