//! Seeded sampling. ChaCha12 streams keyed by explicit `u64` seeds; nothing
//! here touches global or thread-local RNG state.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_finite, Error, Result};
use crate::numerics::linalg::psd_factor;
use crate::Matrix;

/// Deterministic RNG for `seed`.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Independent child seed `k` of `seed` (SplitMix64 finalizer), so parallel
/// workers can draw without sharing a stream.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `rows x cols` matrix of iid standard normal entries drawn from `rng`,
/// filled column by column.
pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `rows x cols` matrix whose columns are iid `N(0, cov)` draws; `cov` must be
/// `rows x rows` symmetric PSD.
pub fn rng_gaussian(rows: usize, cols: usize, cov: &Matrix, seed: u64) -> Result<Matrix> {
    if cov.nrows() != rows || cov.ncols() != rows {
        return Err(Error::dim(format!(
            "covariance is {}x{}, expected {rows}x{rows}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    ensure_finite("covariance", cov)?;
    let l = psd_factor(cov, "gaussian covariance")?;
    let mut rng = seeded_rng(seed);
    let z = standard_normal_matrix(rows, cols, &mut rng);
    Ok(l * z)
}

/// `rows x cols` matrix of iid uniform draws on `[lo, hi)`.
pub fn rng_uniform(rows: usize, cols: usize, bounds: (f64, f64), seed: u64) -> Result<Matrix> {
    let (lo, hi) = bounds;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("bad uniform bounds [{lo}, {hi})")));
    }
    let mut rng = seeded_rng(seed);
    Ok(Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let cov = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let a = rng_gaussian(2, 50, &cov, 42).unwrap();
        let b = rng_gaussian(2, 50, &cov, 42).unwrap();
        assert_eq!(a, b);
        let c = rng_gaussian(2, 50, &cov, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_matches_covariance() {
        let cov = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let n = 200_000;
        let x = rng_gaussian(2, n, &cov, 7).unwrap();
        let sample_cov = (&x * x.transpose()) / n as f64;
        assert!((sample_cov - cov).abs().max() < 0.03);
    }

    #[test]
    fn uniform_respects_bounds_and_mean() {
        let x = rng_uniform(4, 10_000, (-1.0, 3.0), 9).unwrap();
        assert!(x.iter().all(|&v| (-1.0..3.0).contains(&v)));
        let mean = x.iter().sum::<f64>() / (x.len() as f64);
        assert!((mean - 1.0).abs() < 0.05);
        assert!(rng_uniform(1, 1, (2.0, 2.0), 0).is_err());
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let s: Vec<u64> = (0..100).map(|k| derive_seed(5, k)).collect();
        let mut uniq = s.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), s.len());
    }
}
