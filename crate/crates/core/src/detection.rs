//! Statistical tests a defender can run on a recorded trajectory to decide
//! whether it is consistent with the nominal system and noise model.
//!
//! Every test returns a [`TestOutcome`] with a p-value in [0, 1] and a
//! rejection decision at the requested level; under its own null each test
//! rejects at rate alpha.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ensure_finite, Error, Result};
use crate::lti::{Dataset, LtiSystem};
use crate::numerics::dist::{
    chi2_cdf, empirical_cdf, empirical_quantile, f_cdf, kolmogorov_sf, normal_cdf,
    weighted_chi2_samples, WeightedChiSquare,
};
use crate::numerics::linalg::{pinv, psd_eigenvalues, singular_values};
use crate::regression::{ls_fit, LsFit};
use crate::Matrix;

/// Result of one hypothesis test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestOutcome {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Human-readable description of the null distribution.
    pub null_params: String,
    /// Free-form per-test payload (thresholds, degrees of freedom, ...).
    pub detail: serde_json::Value,
}

impl TestOutcome {
    /// Reads the outcome as a poisoning alarm. Every test flags on rejection
    /// except the input-effect F-test, whose null is "the input has no
    /// explanatory power": healthy input-driven data rejects that null, and an
    /// attack that decouples the recorded input makes the rejection go away,
    /// so there the *absence* of a rejection is the anomaly.
    pub fn flags_poisoning(&self) -> bool {
        if self.name == "partial_f" {
            !self.reject
        } else {
            self.reject
        }
    }
}

/// Defender's knowledge of the noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSpec {
    /// Exact covariance.
    Known(Matrix),
    /// Elementwise confidence interval on the covariance eigenvalues
    /// (sorted descending); the test uses the widest acceptance region the
    /// interval allows.
    EigenInterval { lower: Vec<f64>, upper: Vec<f64> },
}

fn acceptance_quantiles(
    weights: &[f64],
    dof: u64,
    alpha: f64,
    mc_draws: usize,
    mc_seed: u64,
) -> Result<(f64, f64, Vec<f64>)> {
    let law = WeightedChiSquare::new(weights.to_vec(), dof)?;
    let mut samples = weighted_chi2_samples(&law, mc_draws, mc_seed)?;
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = empirical_quantile(&samples, alpha / 2.0);
    let hi = empirical_quantile(&samples, 1.0 - alpha / 2.0);
    Ok((lo, hi, samples))
}

/// Two-sided test of the residual energy ||R||_F^2 against its exact null
/// law sum_i lambda_i(sigma_w) chi2(T - n - m), with Monte Carlo quantiles.
/// With an eigenvalue interval the acceptance region is the widest over the
/// interval (lower quantile from the lower eigenvalues, upper from the
/// upper), making the test conservative.
pub fn residual_variance_test(
    fit: &LsFit,
    sigma: &SigmaSpec,
    alpha: f64,
    mc_draws: usize,
    mc_seed: u64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let (n, m, t) = (fit.a_hat.nrows(), fit.m(), fit.t());
    if t <= n + m {
        return Err(Error::Undefined(format!("need T > n+m, got T={t}")));
    }
    let dof = (t - n - m) as u64;
    let statistic = fit.r.norm_squared();
    let (lo, hi, p_value, weights_desc) = match sigma {
        SigmaSpec::Known(cov) => {
            if cov.shape() != (n, n) {
                return Err(Error::dim(format!("sigma_w must be {n} x {n}")));
            }
            let weights = psd_eigenvalues(cov, "sigma_w")?;
            let (lo, hi, samples) = acceptance_quantiles(&weights, dof, alpha, mc_draws, mc_seed)?;
            let cdf = empirical_cdf(&samples, statistic);
            let p = (2.0 * cdf.min(1.0 - cdf)).clamp(0.0, 1.0);
            (lo, hi, p, format!("{weights:?}"))
        }
        SigmaSpec::EigenInterval { lower, upper } => {
            if lower.len() != n || upper.len() != n {
                return Err(Error::dim(format!("eigenvalue bounds must have length {n}")));
            }
            if lower.iter().zip(upper).any(|(l, u)| !(0.0 <= *l && l <= u)) {
                return Err(Error::invalid("need 0 <= lower_i <= upper_i"));
            }
            let (lo, _, lo_samples) =
                acceptance_quantiles(lower, dof, alpha, mc_draws, mc_seed)?;
            let (_, hi, hi_samples) =
                acceptance_quantiles(upper, dof, alpha, mc_draws, mc_seed.wrapping_add(1))?;
            let p_lo = {
                let c = empirical_cdf(&lo_samples, statistic);
                2.0 * c.min(1.0 - c)
            };
            let p_hi = {
                let c = empirical_cdf(&hi_samples, statistic);
                2.0 * c.min(1.0 - c)
            };
            (lo, hi, p_lo.max(p_hi).clamp(0.0, 1.0), format!("[{lower:?}, {upper:?}]"))
        }
    };
    let reject = statistic < lo || statistic > hi;
    Ok(TestOutcome {
        name: "residual_variance".into(),
        statistic,
        p_value,
        reject,
        null_params: format!("weighted chi-square, dof {dof}, eigenvalues {weights_desc}"),
        detail: json!({
            "lower": lo,
            "upper": hi,
            "dof": dof,
            "mc_draws": mc_draws,
            "rank_ok": fit.rank_ok,
        }),
    })
}

/// Expected residual-energy increase caused by an oblivious (data-independent)
/// Gaussian attack with per-column covariances `cov_dx` (states) and `cov_du`
/// (inputs): (T - n - m) * trace(cov_dx + A cov_dx A^T + B cov_du B^T).
/// First-order in the attack covariances.
pub fn oblivious_variance_shift(
    sys: &LtiSystem,
    cov_dx: &Matrix,
    cov_du: &Matrix,
    t: usize,
) -> Result<f64> {
    let (n, m) = (sys.n(), sys.m());
    if cov_dx.shape() != (n, n) || cov_du.shape() != (m, m) {
        return Err(Error::dim("attack covariances must be n x n and m x m"));
    }
    ensure_finite("cov_dx", cov_dx)?;
    ensure_finite("cov_du", cov_du)?;
    if t <= n + m {
        return Err(Error::Undefined(format!("need T > n+m, got T={t}")));
    }
    let inner = cov_dx
        + &sys.a * cov_dx * sys.a.transpose()
        + &sys.b * cov_du * sys.b.transpose();
    Ok((t - n - m) as f64 * inner.trace())
}

/// Upper-tail F-test of whether the input explains the state transitions:
/// compares the full fit against one restricted to the state alone.
/// Statistic ((RSS1 - RSS2)/(n m)) / (RSS2/(T - n(n+m) - 1)) with null
/// F(n m, T - n(n+m) - 1); rejecting means the input matters.
pub fn partial_f_test(d: &Dataset, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let (n, m, t) = (d.n(), d.m(), d.t());
    let dof2 = t as isize - (n * (n + m)) as isize - 1;
    if dof2 <= 0 {
        return Err(Error::Undefined(format!(
            "model-fit statistic needs T > n(n+m) + 1, got T={t}"
        )));
    }
    let full = ls_fit(d)?;
    let rss2 = full.r.norm_squared();
    if rss2 <= 0.0 {
        return Err(Error::Degenerate("full-model residual is zero".into()));
    }
    let x_minus = d.x_minus();
    let pinv1 = pinv(&x_minus, None);
    let a1 = d.x_plus() * &pinv1;
    let rss1 = (d.x_plus() - &a1 * &x_minus).norm_squared();
    let dof1 = (n * m) as u64;
    let statistic = ((rss1 - rss2) / dof1 as f64) / (rss2 / dof2 as f64);
    let p_value = (1.0 - f_cdf(statistic, dof1, dof2 as u64)?).clamp(0.0, 1.0);
    let reject = p_value < alpha;
    Ok(TestOutcome {
        name: "partial_f".into(),
        statistic,
        p_value,
        reject,
        null_params: format!("F({dof1}, {dof2})"),
        detail: json!({ "rss_restricted": rss1, "rss_full": rss2 }),
    })
}

/// Sample autocovariance matrices of a residual sequence.
#[derive(Debug, Clone)]
pub struct CorrelationSet {
    /// c[tau] = (1/T) sum_t R_t R_{t+tau}^T for tau = 0..=s.
    pub c: Vec<Matrix>,
}

/// Lag-0..s sample autocovariances of the columns of `r` (n x T).
pub fn correlations(r: &Matrix, s: usize) -> Result<CorrelationSet> {
    let t = r.ncols();
    if s >= t {
        return Err(Error::invalid(format!("need s < T, got s={s}, T={t}")));
    }
    if t == 0 || r.nrows() == 0 {
        return Err(Error::dim("residual matrix is empty"));
    }
    let tf = t as f64;
    let mut c = Vec::with_capacity(s + 1);
    for tau in 0..=s {
        let lead = r.columns(0, t - tau);
        let lag = r.columns(tau, t - tau);
        c.push(lead * lag.transpose() / tf);
    }
    Ok(CorrelationSet { c })
}

/// Inverse of the lag-0 autocovariance with a relative ridge
/// (1e-10 trace/n I); the flag reports near-singularity before the ridge.
pub(crate) fn correlation_inverse(c0: &Matrix) -> Result<(Matrix, bool)> {
    let n = c0.nrows();
    let sv = singular_values(c0);
    let near_singular = sv[0] == 0.0 || sv[sv.len() - 1] < 1e-8 * sv[0];
    let ridge = 1e-10 * c0.trace() / n as f64;
    let reg = c0 + Matrix::identity(n, n) * ridge;
    match reg.try_inverse() {
        Some(inv) => Ok((inv, near_singular)),
        None => Err(Error::Degenerate("lag-0 autocovariance is singular".into())),
    }
}

fn whiteness_statistic(cs: &CorrelationSet, t: usize, taus: std::ops::RangeInclusive<usize>) -> Result<(f64, bool)> {
    let (c0_inv, near_singular) = correlation_inverse(&cs.c[0])?;
    let mut acc = 0.0;
    for tau in taus {
        if tau >= cs.c.len() {
            return Err(Error::invalid(format!("lag {tau} beyond computed window")));
        }
        acc += (&cs.c[tau] * &c0_inv).norm_squared();
    }
    Ok((t as f64 * acc, near_singular))
}

/// Upper-tail whiteness test at a single lag: T ||C_tau C_0^-1||_F^2 is
/// asymptotically chi-square(n^2) for white residuals.
pub fn lag_correlation_test(
    cs: &CorrelationSet,
    t: usize,
    tau: usize,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    if tau == 0 {
        return Err(Error::invalid("lag must be >= 1"));
    }
    let n = cs.c[0].nrows();
    let (statistic, near_singular) = whiteness_statistic(cs, t, tau..=tau)?;
    let dof = (n * n) as u64;
    let p_value = (1.0 - chi2_cdf(statistic, dof)?).clamp(0.0, 1.0);
    Ok(TestOutcome {
        name: format!("lag_correlation_{tau}"),
        statistic,
        p_value,
        reject: p_value < alpha,
        null_params: format!("chi-square({dof})"),
        detail: json!({ "lag": tau, "regularized": near_singular }),
    })
}

/// Portmanteau whiteness test over lags 1..=s:
/// T sum_tau ||C_tau C_0^-1||_F^2, asymptotically chi-square(n^2 s) for the
/// truncated lag window.
pub fn portmanteau_test(cs: &CorrelationSet, t: usize, s: usize, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    if s == 0 {
        return Err(Error::invalid("need s >= 1"));
    }
    let n = cs.c[0].nrows();
    let (statistic, near_singular) = whiteness_statistic(cs, t, 1..=s)?;
    let dof = (n * n * s) as u64;
    let p_value = (1.0 - chi2_cdf(statistic, dof)?).clamp(0.0, 1.0);
    Ok(TestOutcome {
        name: "portmanteau".into(),
        statistic,
        p_value,
        reject: p_value < alpha,
        null_params: format!("chi-square({dof})"),
        detail: json!({ "lags": s, "regularized": near_singular }),
    })
}

/// Two-sided energy test of the input against the nominal law N(0, I_m):
/// ||U||_F^2 is exactly chi-square(T m). `identity_law` acknowledges that the
/// nominal input covariance is the identity; pass false to skip with an error.
pub fn input_norm_test(u: &Matrix, identity_law: bool, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    if !identity_law {
        return Err(Error::Undefined(
            "input-norm test requires the nominal N(0, I) input law".into(),
        ));
    }
    let (m, t) = (u.nrows(), u.ncols());
    if m == 0 || t == 0 {
        return Err(Error::dim("input matrix is empty"));
    }
    let statistic = u.norm_squared();
    let dof = (t * m) as u64;
    let cdf = chi2_cdf(statistic, dof)?;
    let p_value = (2.0 * cdf.min(1.0 - cdf)).clamp(0.0, 1.0);
    Ok(TestOutcome {
        name: "input_norm".into(),
        statistic,
        p_value,
        reject: p_value < alpha,
        null_params: format!("chi-square({dof})"),
        detail: json!({ "dof": dof }),
    })
}

/// One-sample Kolmogorov-Smirnov test against a reference CDF, using the
/// asymptotic Kolmogorov law at the finite-sample-corrected argument
/// (sqrt(N) + 0.12 + 0.11/sqrt(N)) D. Needs at least 10 samples.
pub fn ks_one_sample_test(
    samples: &[f64],
    cdf: &dyn Fn(f64) -> f64,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let n = samples.len();
    if n < 10 {
        return Err(Error::invalid(format!("need at least 10 samples, got {n}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d_stat: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x).clamp(0.0, 1.0);
        let d_plus = (i + 1) as f64 / nf - f;
        let d_minus = f - i as f64 / nf;
        d_stat = d_stat.max(d_plus).max(d_minus);
    }
    let lambda = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d_stat;
    let p_value = kolmogorov_sf(lambda).clamp(0.0, 1.0);
    Ok(TestOutcome {
        name: "ks".into(),
        statistic: d_stat,
        p_value,
        reject: p_value < alpha,
        null_params: format!("Kolmogorov, N = {n}"),
        detail: json!({ "lambda": lambda }),
    })
}

/// Indices of samples whose leverage exceeds `multiplier` times the average
/// leverage (n+m)/T.
pub fn leverage_outliers(fit: &LsFit, multiplier: f64) -> Vec<usize> {
    let t = fit.t();
    let p = fit.a_hat.nrows() + fit.m();
    let threshold = multiplier * p as f64 / t as f64;
    (0..t).filter(|&i| fit.leverage[i] > threshold).collect()
}

/// Configuration of [`run_suite`].
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub alpha: f64,
    /// Enables the residual-variance test when the noise covariance (or an
    /// eigenvalue interval) is known.
    pub sigma_w: Option<SigmaSpec>,
    /// Portmanteau window; lag-1 is also tested individually.
    pub lags: usize,
    pub mc_draws: usize,
    pub mc_seed: u64,
    /// Whether the nominal input law is N(0, I_m); enables the input-norm
    /// and per-coordinate KS tests.
    pub input_identity: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            sigma_w: None,
            lags: 5,
            mc_draws: 200_000,
            mc_seed: 0,
            input_identity: true,
        }
    }
}

fn capture(name: &str, outcome: Result<TestOutcome>) -> TestOutcome {
    match outcome {
        Ok(o) => o,
        Err(e) => TestOutcome {
            name: name.into(),
            statistic: f64::NAN,
            p_value: 1.0,
            reject: false,
            null_params: "error".into(),
            detail: json!({ "error": e.to_string() }),
        },
    }
}

/// Runs the configured battery of tests on a dataset. Individual test errors
/// are captured per entry (null_params = "error", reject = false) rather than
/// propagated, so one degenerate statistic cannot hide the others.
pub fn run_suite(d: &Dataset, config: &SuiteConfig) -> Vec<TestOutcome> {
    let mut out = Vec::new();
    let fit = ls_fit(d);
    if let Some(sigma) = &config.sigma_w {
        out.push(capture(
            "residual_variance",
            fit.as_ref().map_err(clone_err).and_then(|f| {
                residual_variance_test(f, sigma, config.alpha, config.mc_draws, config.mc_seed)
            }),
        ));
    }
    out.push(capture("partial_f", partial_f_test(d, config.alpha)));
    let cs = fit
        .as_ref()
        .map_err(clone_err)
        .and_then(|f| correlations(&f.r, config.lags));
    out.push(capture(
        "lag_correlation_1",
        cs.as_ref()
            .map_err(clone_err)
            .and_then(|c| lag_correlation_test(c, d.t(), 1, config.alpha)),
    ));
    out.push(capture(
        "portmanteau",
        cs.as_ref()
            .map_err(clone_err)
            .and_then(|c| portmanteau_test(c, d.t(), config.lags, config.alpha)),
    ));
    if config.input_identity {
        out.push(capture("input_norm", input_norm_test(&d.u, true, config.alpha)));
        out.push(capture("ks_input", ks_input_test(d, config.alpha)));
    }
    out
}

fn clone_err(e: &Error) -> Error {
    Error::Invalid(e.to_string())
}

/// Per-coordinate KS test of the inputs against N(0, 1) with Bonferroni
/// correction across coordinates.
fn ks_input_test(d: &Dataset, alpha: f64) -> Result<TestOutcome> {
    let m = d.m();
    let mut min_p = 1.0f64;
    let mut max_d = 0.0f64;
    let mut coords = Vec::with_capacity(m);
    for i in 0..m {
        let row: Vec<f64> = d.u.row(i).iter().copied().collect();
        let out = ks_one_sample_test(&row, &|x| normal_cdf(x, 0.0, 1.0).unwrap_or(0.5), alpha)?;
        coords.push(out.p_value);
        min_p = min_p.min(out.p_value);
        max_d = max_d.max(out.statistic);
    }
    let p_value = (min_p * m as f64).min(1.0);
    Ok(TestOutcome {
        name: "ks_input".into(),
        statistic: max_d,
        p_value,
        reject: p_value < alpha,
        null_params: format!("Kolmogorov, Bonferroni over {m} coordinates"),
        detail: json!({ "per_coordinate_p": coords }),
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0,1)")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{example_scalar, example_scalar_with_noise, gaussian_input, simulate};
    use crate::numerics::rng::{derive_seed, rng_gaussian, seeded_rng, standard_normal_matrix};
    use crate::Vector;
    use approx::assert_relative_eq;

    fn sim(t: usize, sigma: f64, seed: u64) -> (Dataset, LsFit) {
        let sys = example_scalar_with_noise(sigma);
        let u = gaussian_input(1, t, &Matrix::identity(1, 1), derive_seed(seed, 0)).unwrap();
        let (d, _) = simulate(&sys, &u, &Vector::zeros(1), derive_seed(seed, 1)).unwrap();
        let fit = ls_fit(&d).unwrap();
        (d, fit)
    }

    #[test]
    fn residual_variance_accepts_clean_and_rejects_inflated() {
        let (_, fit) = sim(150, 1.0, 1);
        let spec = SigmaSpec::Known(Matrix::identity(1, 1));
        let ok = residual_variance_test(&fit, &spec, 0.05, 100_000, 7).unwrap();
        assert!(!ok.reject, "clean data rejected: p = {}", ok.p_value);
        // Claiming sigma = 0.3 when the truth is 1.0 inflates the statistic.
        let small = SigmaSpec::Known(Matrix::identity(1, 1) * 0.09);
        let bad = residual_variance_test(&fit, &small, 0.05, 100_000, 7).unwrap();
        assert!(bad.reject);
        assert!(bad.statistic > 0.0 && (0.0..=1.0).contains(&bad.p_value));
    }

    #[test]
    fn residual_variance_interval_is_conservative() {
        let (_, fit) = sim(120, 1.0, 2);
        let exact = SigmaSpec::Known(Matrix::identity(1, 1));
        let wide = SigmaSpec::EigenInterval { lower: vec![0.5], upper: vec![2.0] };
        let e = residual_variance_test(&fit, &exact, 0.05, 100_000, 3).unwrap();
        let w = residual_variance_test(&fit, &wide, 0.05, 100_000, 3).unwrap();
        let (e_lo, e_hi) = (e.detail["lower"].as_f64().unwrap(), e.detail["upper"].as_f64().unwrap());
        let (w_lo, w_hi) = (w.detail["lower"].as_f64().unwrap(), w.detail["upper"].as_f64().unwrap());
        assert!(w_lo <= e_lo && w_hi >= e_hi, "interval region must contain exact region");
        assert!(!w.reject);
    }

    #[test]
    fn variance_shift_scalar_closed_form() {
        let sys = example_scalar(); // a = 0.7, b = 0.5
        let shift = oblivious_variance_shift(
            &sys,
            &(Matrix::identity(1, 1) * 0.04),
            &(Matrix::identity(1, 1) * 0.09),
            100,
        )
        .unwrap();
        let want = 98.0 * (0.04 + 0.49 * 0.04 + 0.25 * 0.09);
        assert_relative_eq!(shift, want, epsilon = 1e-12);
    }

    #[test]
    fn partial_f_sees_input_when_present() {
        let (d, _) = sim(300, 1.0, 3);
        let out = partial_f_test(&d, 0.01).unwrap();
        assert!(out.reject, "B = 0.5 should be detected, Z = {}", out.statistic);
        // With B = 0 the test holds its level (single seed: just no huge stat).
        let sys = crate::lti::LtiSystem::new(
            Matrix::from_element(1, 1, 0.7),
            Matrix::from_element(1, 1, 0.0),
            Matrix::identity(1, 1),
            crate::lti::DisturbanceSet::Unbounded,
        )
        .unwrap();
        let u = gaussian_input(1, 300, &Matrix::identity(1, 1), 4).unwrap();
        let (d0, _) = simulate(&sys, &u, &Vector::zeros(1), 5).unwrap();
        let out0 = partial_f_test(&d0, 0.01).unwrap();
        assert!(out0.statistic < 10.0);
        // Degenerate sizes are refused.
        let tiny = Dataset::new(
            Matrix::from_element(1, 2, 1.0),
            Matrix::from_row_slice(1, 3, &[0.0, 1.0, 0.5]),
        )
        .unwrap();
        assert!(partial_f_test(&tiny, 0.05).is_err());
    }

    #[test]
    fn correlations_hand_example() {
        let r = Matrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let cs = correlations(&r, 1).unwrap();
        assert_relative_eq!(cs.c[0][(0, 0)], 14.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(cs.c[1][(0, 0)], 8.0 / 3.0, epsilon = 1e-12);
        assert!(correlations(&r, 3).is_err());
    }

    #[test]
    fn whiteness_tests_accept_white_and_reject_correlated() {
        let mut rng = seeded_rng(11);
        let white = standard_normal_matrix(2, 600, &mut rng);
        let cs = correlations(&white, 5).unwrap();
        let lag = lag_correlation_test(&cs, 600, 1, 0.01).unwrap();
        assert!(!lag.reject, "white noise rejected: p = {}", lag.p_value);
        let pm = portmanteau_test(&cs, 600, 5, 0.01).unwrap();
        assert!(!pm.reject);

        // AR(0.9) rows are strongly lag-correlated.
        let mut ar = Matrix::zeros(2, 600);
        let innov = standard_normal_matrix(2, 600, &mut rng);
        for t in 1..600 {
            for i in 0..2 {
                ar[(i, t)] = 0.9 * ar[(i, t - 1)] + innov[(i, t)];
            }
        }
        let cs_ar = correlations(&ar, 5).unwrap();
        assert!(lag_correlation_test(&cs_ar, 600, 1, 0.01).unwrap().reject);
        assert!(portmanteau_test(&cs_ar, 600, 5, 0.01).unwrap().reject);
    }

    #[test]
    fn portmanteau_window_one_equals_lag_one() {
        let mut rng = seeded_rng(13);
        let r = standard_normal_matrix(3, 200, &mut rng);
        let cs = correlations(&r, 1).unwrap();
        let a = lag_correlation_test(&cs, 200, 1, 0.05).unwrap();
        let b = portmanteau_test(&cs, 200, 1, 0.05).unwrap();
        assert_relative_eq!(a.statistic, b.statistic, epsilon = 1e-12);
        assert_eq!(a.null_params, b.null_params);
    }

    #[test]
    fn input_norm_accepts_nominal_rejects_scaled() {
        let u = rng_gaussian(2, 400, &Matrix::identity(2, 2), 17).unwrap();
        let ok = input_norm_test(&u, true, 0.05).unwrap();
        assert!(!ok.reject, "nominal input rejected: p = {}", ok.p_value);
        let loud = &u * 1.3;
        assert!(input_norm_test(&loud, true, 0.05).unwrap().reject);
        assert!(input_norm_test(&u, false, 0.05).is_err());
    }

    #[test]
    fn ks_accepts_matching_law_and_rejects_shift() {
        let samples = crate::numerics::dist::standard_normal_samples(800, 19);
        let cdf = |x: f64| normal_cdf(x, 0.0, 1.0).unwrap();
        let ok = ks_one_sample_test(&samples, &cdf, 0.05).unwrap();
        assert!(!ok.reject, "matching law rejected: p = {}", ok.p_value);
        let shifted: Vec<f64> = samples.iter().map(|v| v + 0.3).collect();
        assert!(ks_one_sample_test(&shifted, &cdf, 0.05).unwrap().reject);
        assert!(ks_one_sample_test(&samples[..5], &cdf, 0.05).is_err());
    }

    #[test]
    fn leverage_flags_spiked_sample() {
        let (d, _) = sim(100, 1.0, 23);
        let mut spiked = d.clone();
        spiked.x[(0, 40)] = 60.0;
        let fit = ls_fit(&spiked).unwrap();
        let outliers = leverage_outliers(&fit, 2.0);
        assert!(outliers.contains(&40), "outliers: {outliers:?}");
        // Threshold multiplier large enough flags nothing.
        assert!(leverage_outliers(&fit, 1e6).is_empty());
    }

    #[test]
    fn suite_runs_all_configured_tests() {
        let (d, _) = sim(200, 1.0, 29);
        let config = SuiteConfig {
            sigma_w: Some(SigmaSpec::Known(Matrix::identity(1, 1))),
            mc_draws: 50_000,
            ..Default::default()
        };
        let out = run_suite(&d, &config);
        let names: Vec<&str> = out.iter().map(|o| o.name.as_str()).collect();
        assert_eq!(
            names,
            vec!["residual_variance", "partial_f", "lag_correlation_1", "portmanteau", "input_norm", "ks_input"]
        );
        for o in &out {
            assert!((0.0..=1.0).contains(&o.p_value), "{}: p = {}", o.name, o.p_value);
        }
    }

    #[test]
    fn suite_captures_per_test_errors() {
        // T = 2 makes the model-fit statistic undefined; the suite entry
        // reports the error instead of failing the whole run.
        let d = Dataset::new(
            Matrix::from_row_slice(1, 2, &[1.0, -1.0]),
            Matrix::from_row_slice(1, 3, &[0.0, 1.0, 0.5]),
        )
        .unwrap();
        let out = run_suite(&d, &SuiteConfig { lags: 1, ..Default::default() });
        let pf = out.iter().find(|o| o.name == "partial_f").unwrap();
        assert_eq!(pf.null_params, "error");
        assert!(!pf.reject);
        assert!(pf.detail["error"].as_str().unwrap().contains("T"));
    }
}
