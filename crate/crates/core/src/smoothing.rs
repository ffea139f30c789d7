//! Low-pass Fourier smoothing of the observed curves.
//!
//! `ĉ_{j,k} = (1/n) Σ_{ℓ=1}^{n} Y_j^ℓ e^{-i2πkℓ/n}` is kept for `|k| <= λ`,
//! with `λ < n/2` so no Nyquist bin is ever retained.

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{cis_turns, plan_fft, Dataset, DesignGrid, FourierTemplate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothingError {
    #[error("spectral cutoff {lambda} must satisfy 2λ < n = {n}")]
    CutoffTooLarge { lambda: usize, n: usize },
    #[error("bias term needs a cutoff of at least 1")]
    ZeroCutoff,
    #[error("smoothness must be positive, got {0}")]
    BadSmoothness(f64),
}

/// Truncated Fourier coefficients of `J` curves, `ĉ_{j,k}` for `|k| <= λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCurves {
    coeffs: Vec<Vec<Complex64>>,
    lambda: usize,
    grid: DesignGrid,
}

impl SmoothedCurves {
    /// Builds directly from coefficient rows of length `2λ + 1` (index `k + λ`).
    /// Rows are assumed Hermitian; they are not re-symmetrized.
    pub fn from_rows(coeffs: Vec<Vec<Complex64>>, lambda: usize, grid: DesignGrid) -> Result<Self, SmoothingError> {
        check_cutoff(lambda, grid.n())?;
        assert!(coeffs.iter().all(|r| r.len() == 2 * lambda + 1), "coefficient rows must have length 2λ+1");
        Ok(Self { coeffs, lambda, grid })
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn curves(&self) -> usize {
        self.coeffs.len()
    }

    pub fn grid(&self) -> &DesignGrid {
        &self.grid
    }

    pub fn rows(&self) -> &[Vec<Complex64>] {
        &self.coeffs
    }

    /// `ĉ_{j,k}` for 0-based curve `j`.
    pub fn coeff(&self, j: usize, k: i64) -> Complex64 {
        self.coeffs[j][(k + self.lambda as i64) as usize]
    }

    /// `f̂_j^λ` as a template.
    pub fn curve_template(&self, j: usize) -> FourierTemplate {
        FourierTemplate::from_dense(self.coeffs[j].clone())
            .expect("smoothed rows of real curves are Hermitian")
    }
}

fn check_cutoff(lambda: usize, n: usize) -> Result<(), SmoothingError> {
    if 2 * lambda >= n {
        return Err(SmoothingError::CutoffTooLarge { lambda, n });
    }
    Ok(())
}

/// FFT implementation of the truncated DFT.
pub fn dft_coeffs(dataset: &Dataset, lambda: usize) -> Result<SmoothedCurves, SmoothingError> {
    let grid = *dataset.grid();
    let n = grid.n();
    check_cutoff(lambda, n)?;
    let fft = plan_fft(n, false);
    let inv_n = 1.0 / n as f64;
    let coeffs = dataset
        .rows()
        .iter()
        .map(|row| {
            // sample ℓ sits in bin ℓ mod n
            let mut buf: Vec<Complex64> = (0..n)
                .map(|m| Complex64::new(row[(m + n - 1) % n], 0.0))
                .collect();
            fft.process(&mut buf);
            let mut out: Vec<Complex64> = (-(lambda as i64)..=lambda as i64)
                .map(|k| buf[k.rem_euclid(n as i64) as usize] * inv_n)
                .collect();
            // real input: enforce exact conjugate symmetry and a real mean
            out[lambda].im = 0.0;
            for k in 1..=lambda {
                out[lambda - k] = out[lambda + k].conj();
            }
            out
        })
        .collect();
    Ok(SmoothedCurves { coeffs, lambda, grid })
}

/// The defining sum, evaluated term by term.
pub fn dft_coeffs_direct(dataset: &Dataset, lambda: usize) -> Result<SmoothedCurves, SmoothingError> {
    let grid = *dataset.grid();
    let n = grid.n();
    check_cutoff(lambda, n)?;
    let coeffs = dataset
        .rows()
        .iter()
        .map(|row| {
            (-(lambda as i64)..=lambda as i64)
                .map(|k| {
                    let s: Complex64 = row
                        .iter()
                        .enumerate()
                        .map(|(i, y)| cis_turns(-(k as f64) * ((i + 1) as f64 / n as f64)) * y)
                        .sum();
                    s / n as f64
                })
                .collect()
        })
        .collect();
    Ok(SmoothedCurves { coeffs, lambda, grid })
}

/// `f̂_j^λ(t)` for 0-based curve `j`.
pub fn smoothed_eval(curves: &SmoothedCurves, j: usize, t: f64) -> f64 {
    let lambda = curves.lambda as i64;
    curves.coeffs[j]
        .iter()
        .enumerate()
        .map(|(i, c)| (c * cis_turns((i as i64 - lambda) as f64 * t)).re)
        .sum()
}

/// Variance proxy `V(λ) = (2λ + 1)/n`.
pub fn variance_v(lambda: usize, n: usize) -> f64 {
    (2 * lambda + 1) as f64 / n as f64
}

/// `B(λ, n) = (2λ + 1)/n + λ^{-2s}`.
pub fn bias_b(lambda: usize, n: usize, s: f64) -> Result<f64, SmoothingError> {
    if lambda == 0 {
        return Err(SmoothingError::ZeroCutoff);
    }
    if !(s > 0.0) {
        return Err(SmoothingError::BadSmoothness(s));
    }
    Ok(variance_v(lambda, n) + (lambda as f64).powf(-2.0 * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ShiftVector};
    use crate::synthdata::{generate_dataset, ProcessRealization};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn dataset(rows: Vec<Vec<f64>>) -> Dataset {
        let n = rows[0].len();
        Dataset::new(rows, DesignGrid::new(n).unwrap()).unwrap()
    }

    #[test]
    fn constant_curve() {
        let s = dft_coeffs(&dataset(vec![vec![1.0; 16]]), 2).unwrap();
        assert_relative_eq!(s.coeff(0, 0).re, 1.0, epsilon = 1e-15);
        for k in [-2, -1, 1, 2] {
            assert!(s.coeff(0, k).norm() < 1e-15);
        }
    }

    #[test]
    fn cosine_curve() {
        let n = 64;
        let row: Vec<f64> = (1..=n).map(|l| (2.0 * PI * l as f64 / n as f64).cos()).collect();
        let s = dft_coeffs(&dataset(vec![row]), 1).unwrap();
        assert_relative_eq!(s.coeff(0, 1).re, 0.5, epsilon = 1e-14);
        assert_relative_eq!(s.coeff(0, -1).re, 0.5, epsilon = 1e-14);
        assert!(s.coeff(0, 0).norm() < 1e-15);
        assert_relative_eq!(smoothed_eval(&s, 0, 0.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(smoothed_eval(&s, 0, 0.3), smoothed_eval(&s, 0, 1.3), epsilon = 1e-13);
    }

    #[test]
    fn lambda_zero_is_constant() {
        let s = dft_coeffs(&dataset(vec![vec![0.0, 3.0, 6.0]]), 0).unwrap();
        for t in [0.0, 0.4, 0.9] {
            assert_relative_eq!(smoothed_eval(&s, 0, t), 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_nyquist() {
        let ds = dataset(vec![vec![0.0; 8]]);
        assert!(matches!(dft_coeffs(&ds, 4), Err(SmoothingError::CutoffTooLarge { .. })));
        assert!(dft_coeffs(&ds, 3).is_ok());
        assert!(dft_coeffs_direct(&ds, 4).is_err());
    }

    #[test]
    fn band_limited_noiseless_recovers_rotated_coefficients() {
        let f = FourierTemplate::sin_cos();
        let shifts = ShiftVector::new(vec![0.013, -0.17, 0.3]).unwrap();
        let grid = DesignGrid::new(33).unwrap();
        let ds = generate_dataset(&f, &shifts, &vec![ProcessRealization::zero(); 3], 0.0, grid, 0).unwrap();
        let s = dft_coeffs(&ds, 7).unwrap();
        for (j, &th) in shifts.as_slice().iter().enumerate() {
            for k in -7i64..=7 {
                let expect = f.coeff(k) * cis_turns(-(k as f64) * th);
                assert!((s.coeff(j, k) - expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn fft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &n in &[7usize, 64, 100, 512] {
            let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
            let ds = dataset(rows);
            let lambda = (n - 1) / 2;
            let a = dft_coeffs(&ds, lambda).unwrap();
            let b = dft_coeffs_direct(&ds, lambda).unwrap();
            for j in 0..3 {
                for k in -(lambda as i64)..=lambda as i64 {
                    assert!((a.coeff(j, k) - b.coeff(j, k)).norm() < 1e-10, "n={n} k={k}");
                }
            }
        }
    }

    #[test]
    fn pure_noise_energy() {
        // E Σ_{|k|<=λ} |ĉ_k|² = σ²(2λ+1)/n
        let (n, lambda, sigma) = (64, 3, 2.0);
        let grid = DesignGrid::new(n).unwrap();
        let f = FourierTemplate::zero();
        let reps = 10_000;
        let shifts = ShiftVector::zeros(reps);
        let ds = generate_dataset(&f, &shifts, &vec![ProcessRealization::zero(); reps], sigma, grid, 8).unwrap();
        let s = dft_coeffs(&ds, lambda).unwrap();
        let mean: f64 = s.rows().iter().map(|r| r.iter().map(|c| c.norm_sqr()).sum::<f64>()).sum::<f64>() / reps as f64;
        let expect = sigma * sigma * variance_v(lambda, n);
        assert!((mean / expect - 1.0).abs() < 0.05, "{mean} vs {expect}");
    }

    #[test]
    fn variance_and_bias_formulas() {
        assert_eq!(variance_v(0, 1), 1.0);
        assert_relative_eq!(variance_v(7, 512), 15.0 / 512.0);
        assert_relative_eq!(variance_v(7, 1024), 15.0 / 1024.0);
        assert_relative_eq!(bias_b(1, 3, 1.0).unwrap(), 2.0);
        assert_relative_eq!(bias_b(7, 512, 1.0).unwrap(), 15.0 / 512.0 + 1.0 / 49.0, epsilon = 1e-15);
        assert!(bias_b(7, 1024, 1.0).unwrap() < bias_b(7, 512, 1.0).unwrap());
        assert!(matches!(bias_b(0, 3, 1.0), Err(SmoothingError::ZeroCutoff)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dft_is_linear(
                a in -3.0f64..3.0,
                b in -3.0f64..3.0,
                y1 in prop::collection::vec(-10.0f64..10.0, 24),
                y2 in prop::collection::vec(-10.0f64..10.0, 24),
            ) {
                let comb: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
                let s1 = dft_coeffs(&dataset(vec![y1]), 11).unwrap();
                let s2 = dft_coeffs(&dataset(vec![y2]), 11).unwrap();
                let sc = dft_coeffs(&dataset(vec![comb]), 11).unwrap();
                for k in -11i64..=11 {
                    let expect = s1.coeff(0, k) * a + s2.coeff(0, k) * b;
                    prop_assert!((sc.coeff(0, k) - expect).norm() < 1e-11);
                }
            }

            #[test]
            fn shift_covariance(theta in -0.5f64..0.5) {
                let f = FourierTemplate::sin_cos();
                let grid = DesignGrid::new(21).unwrap();
                let shifted = dataset(vec![f.sample_on_grid(&grid, theta)]);
                let base = dataset(vec![f.sample_on_grid(&grid, 0.0)]);
                let s = dft_coeffs(&shifted, 10).unwrap();
                let b = dft_coeffs(&base, 10).unwrap();
                for k in -10i64..=10 {
                    let expect = b.coeff(0, k) * cis_turns(-(k as f64) * theta);
                    prop_assert!((s.coeff(0, k) - expect).norm() < 1e-12);
                }
            }
        }
    }
}
