//! Distribution functions for the test statistics used by the detection
//! suite: chi-square and F CDFs/quantiles, a Monte Carlo weighted-chi-square,
//! and the asymptotic Kolmogorov law.

use rand::Rng;
use rand_distr::Distribution;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

use crate::error::{Error, Result};
use crate::numerics::rng::seeded_rng;

/// Chi-square CDF with `k` degrees of freedom; 0 for x <= 0.
pub fn chi2_cdf(x: f64, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("chi-square needs k >= 1"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let d = ChiSquared::new(k as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(d.cdf(x))
}

/// Chi-square quantile (inverse CDF) at probability `p` in (0, 1).
pub fn chi2_quantile(p: f64, k: u64) -> Result<f64> {
    if k == 0 || !(0.0..1.0).contains(&p) || p <= 0.0 {
        return Err(Error::invalid(format!("chi2_quantile(p={p}, k={k})")));
    }
    let d = ChiSquared::new(k as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(d.inverse_cdf(p))
}

/// F-distribution CDF with `d1`, `d2` degrees of freedom; 0 for x <= 0.
pub fn f_cdf(x: f64, d1: u64, d2: u64) -> Result<f64> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::invalid("F distribution needs d1, d2 >= 1"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let d = FisherSnedecor::new(d1 as f64, d2 as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(d.cdf(x))
}

/// F-distribution quantile at probability `p` in (0, 1).
pub fn f_quantile(p: f64, d1: u64, d2: u64) -> Result<f64> {
    if d1 == 0 || d2 == 0 || !(0.0 < p && p < 1.0) {
        return Err(Error::invalid(format!("f_quantile(p={p}, d1={d1}, d2={d2})")));
    }
    let d = FisherSnedecor::new(d1 as f64, d2 as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(d.inverse_cdf(p))
}

/// Normal CDF.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> Result<f64> {
    let d = Normal::new(mean, sd).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(d.cdf(x))
}

/// Law of `sum_i weights[i] * Q_i` with `Q_i` iid chi-square(`dof`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedChiSquare {
    pub weights: Vec<f64>,
    pub dof: u64,
}

impl WeightedChiSquare {
    pub fn new(weights: Vec<f64>, dof: u64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("weighted chi-square needs at least one weight"));
        }
        if dof == 0 {
            return Err(Error::invalid("weighted chi-square needs dof >= 1"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::Degenerate("all weighted chi-square weights are zero".into()));
        }
        Ok(Self { weights, dof })
    }
}

/// `draws` Monte Carlo samples of `d`, deterministic in `seed`.
pub fn weighted_chi2_samples(d: &WeightedChiSquare, draws: usize, seed: u64) -> Result<Vec<f64>> {
    if draws == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let chi = rand_distr::ChiSquared::new(d.dof as f64)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut s = 0.0;
        for &w in &d.weights {
            let q: f64 = chi.sample(&mut rng);
            s += w * q;
        }
        out.push(s);
    }
    Ok(out)
}

/// Empirical `p`-quantile of pre-sorted samples (linear interpolation).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Fraction of pre-sorted samples `<= x`.
pub fn empirical_cdf(sorted: &[f64], x: f64) -> f64 {
    let k = sorted.partition_point(|&v| v <= x);
    k as f64 / sorted.len() as f64
}

/// Monte Carlo `p`-quantile of a weighted chi-square law.
pub fn weighted_chi2_quantile(
    d: &WeightedChiSquare,
    p: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::invalid(format!("quantile probability {p} outside (0,1)")));
    }
    let mut samples = weighted_chi2_samples(d, draws, seed)?;
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(empirical_quantile(&samples, p))
}

/// Survival function of the Kolmogorov distribution,
/// `P(K > lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=1000u32 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-14 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Standard normal draws helper for tests and reference-sample generation.
pub fn standard_normal_samples(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // CDF spot values frozen from an independent Monte Carlo run (1e7 draws)
    // plus the closed form for k = 2: F(x) = 1 - exp(-x/2).
    #[test]
    fn chi2_cdf_matches_closed_form_k2() {
        for x in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let want = 1.0 - (-x / 2.0f64).exp();
            assert_relative_eq!(chi2_cdf(x, 2).unwrap(), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn chi2_cdf_matches_monte_carlo() {
        let draws = 400_000;
        let d = WeightedChiSquare::new(vec![1.0], 5).unwrap();
        let samples = weighted_chi2_samples(&d, draws, 123).unwrap();
        for x in [1.0, 3.0, 5.0, 9.0] {
            let mc = samples.iter().filter(|&&s| s <= x).count() as f64 / draws as f64;
            let analytic = chi2_cdf(x, 5).unwrap();
            assert!((mc - analytic).abs() < 3e-3, "x={x}: mc={mc}, analytic={analytic}");
        }
    }

    #[test]
    fn chi2_quantile_inverts_cdf() {
        for (p, k) in [(0.025, 7u64), (0.5, 3), (0.975, 118), (0.99, 1)] {
            let q = chi2_quantile(p, k).unwrap();
            assert_relative_eq!(chi2_cdf(q, k).unwrap(), p, epsilon = 1e-8);
        }
    }

    #[test]
    fn f_cdf_matches_monte_carlo() {
        let (d1, d2) = (4u64, 17u64);
        let n = 400_000usize;
        let num = weighted_chi2_samples(&WeightedChiSquare::new(vec![1.0], d1).unwrap(), n, 7)
            .unwrap();
        let den = weighted_chi2_samples(&WeightedChiSquare::new(vec![1.0], d2).unwrap(), n, 8)
            .unwrap();
        for x in [0.3, 1.0, 2.5] {
            let mc = num
                .iter()
                .zip(&den)
                .filter(|&(a, b)| (a / d1 as f64) / (b / d2 as f64) <= x)
                .count() as f64
                / n as f64;
            let analytic = f_cdf(x, d1, d2).unwrap();
            assert!((mc - analytic).abs() < 3e-3, "x={x}: mc={mc} vs {analytic}");
        }
    }

    #[test]
    fn f_quantile_inverts_cdf() {
        let q = f_quantile(0.95, 1, 196).unwrap();
        assert_relative_eq!(f_cdf(q, 1, 196).unwrap(), 0.95, epsilon = 1e-8);
    }

    #[test]
    fn weighted_chi2_scales_linearly() {
        // Law of c * chi2(k) has quantile c * q.
        let c = 3.7;
        let base = weighted_chi2_quantile(&WeightedChiSquare::new(vec![1.0], 9).unwrap(), 0.9,
            200_000, 5).unwrap();
        let scaled = weighted_chi2_quantile(&WeightedChiSquare::new(vec![c], 9).unwrap(), 0.9,
            200_000, 5).unwrap();
        assert_relative_eq!(scaled, c * base, max_relative = 1e-12);
        // And matches the analytic chi-square quantile within MC error.
        assert_relative_eq!(base, chi2_quantile(0.9, 9).unwrap(), max_relative = 0.01);
    }

    #[test]
    fn equal_weights_collapse_to_scaled_chi2() {
        // sum of 3 weights w * chi2(4) = w * chi2(12).
        let w = 0.25;
        let d = WeightedChiSquare::new(vec![w; 3], 4).unwrap();
        let q = weighted_chi2_quantile(&d, 0.975, 200_000, 11).unwrap();
        let analytic = w * chi2_quantile(0.975, 12).unwrap();
        assert_relative_eq!(q, analytic, max_relative = 0.01);
    }

    #[test]
    fn weighted_chi2_rejects_bad_input() {
        assert!(WeightedChiSquare::new(vec![], 3).is_err());
        assert!(WeightedChiSquare::new(vec![1.0], 0).is_err());
        assert!(WeightedChiSquare::new(vec![-1.0], 3).is_err());
        assert!(WeightedChiSquare::new(vec![0.0, 0.0], 3).is_err());
    }

    #[test]
    fn kolmogorov_sf_known_values() {
        // Classical table: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 5e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(3.0) < 1e-6);
    }

    #[test]
    fn cdf_edges() {
        assert_eq!(chi2_cdf(-1.0, 3).unwrap(), 0.0);
        assert_eq!(f_cdf(0.0, 2, 5).unwrap(), 0.0);
        assert!(chi2_cdf(1.0, 0).is_err());
        assert!(f_quantile(1.5, 1, 1).is_err());
    }
}
