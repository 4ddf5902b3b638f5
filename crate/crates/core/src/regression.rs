//! Least-squares identification and the exact algebra relating fits, noise,
//! and poisoning perturbations.
//!
//! Conventions: theta = [A B] (n x (n+m)), regressor Psi = [X_minus; U]
//! ((n+m) x T), residual R = X_plus - theta Psi. Vectorization is
//! column-major throughout.

use crate::attacks::PoisonDelta;
use crate::error::{Error, Result};
use crate::lti::{Dataset, LtiSystem, NoiseRecord};
use crate::numerics::dist::f_quantile;
use crate::numerics::linalg::{numerical_rank, pinv, singular_values, spectral_norm, vec_col};
use crate::{Matrix, Vector};

/// Least-squares fit of (A, B) from a dataset, with the byproducts every
/// downstream consumer needs: residuals, leverage scores, noise-variance
/// estimate, and the rank status of the regressor.
#[derive(Debug, Clone)]
pub struct LsFit {
    /// Estimated state transition, n x n.
    pub a_hat: Matrix,
    /// Estimated input map, n x m.
    pub b_hat: Matrix,
    /// Residuals X_plus - [A_hat B_hat] Psi, n x T.
    pub r: Matrix,
    /// Leverage scores diag(Psi^+ Psi), length T, each in [0, 1].
    pub leverage: Vector,
    /// Noise variance estimate ||R||_F^2 / (n (T - n - m)); NaN when
    /// T <= n + m.
    pub mse: f64,
    /// Whether the regressor has full row rank n + m. The fit is still
    /// produced when false (minimum-norm solution).
    pub rank_ok: bool,
    /// The regressor the fit was computed from, (n+m) x T.
    pub psi: Matrix,
    /// Pseudoinverse of the regressor, T x (n+m).
    pub psi_pinv: Matrix,
}

impl LsFit {
    /// Stacked estimate [A_hat B_hat], n x (n+m).
    pub fn theta(&self) -> Matrix {
        let (n, m) = (self.a_hat.nrows(), self.b_hat.ncols());
        let mut th = Matrix::zeros(n, n + m);
        th.view_mut((0, 0), (n, n)).copy_from(&self.a_hat);
        th.view_mut((0, n), (n, m)).copy_from(&self.b_hat);
        th
    }

    /// Input dimension m.
    pub fn m(&self) -> usize {
        self.b_hat.ncols()
    }

    /// Number of transitions T.
    pub fn t(&self) -> usize {
        self.r.ncols()
    }

    /// Projection matrix M = Psi^+ Psi onto the regressor row space.
    /// T x T; intended for small-T diagnostics, not the hot path.
    pub fn projection_matrix(&self) -> Matrix {
        &self.psi_pinv * &self.psi
    }
}

/// Fits x_{t+1} ~ A x_t + B u_t by least squares (minimum-norm when the
/// regressor is rank deficient; see `rank_ok`).
pub fn ls_fit(d: &Dataset) -> Result<LsFit> {
    let (n, m, t) = (d.n(), d.m(), d.t());
    let psi = d.psi_minus();
    let psi_pinv = pinv(&psi, None);
    let rank_ok = numerical_rank(&psi, None) == n + m;
    let x_plus = d.x_plus();
    let theta = &x_plus * &psi_pinv;
    let r = &x_plus - &theta * &psi;
    let dof = t as isize - (n + m) as isize;
    let mse = if dof > 0 {
        r.norm_squared() / (n as f64 * dof as f64)
    } else {
        f64::NAN
    };
    let leverage = Vector::from_fn(t, |i, _| {
        let mut h = 0.0;
        for k in 0..n + m {
            h += psi_pinv[(i, k)] * psi[(k, i)];
        }
        h
    });
    Ok(LsFit {
        a_hat: theta.columns(0, n).into_owned(),
        b_hat: theta.columns(n, m).into_owned(),
        r,
        leverage,
        mse,
        rank_ok,
        psi,
        psi_pinv,
    })
}

/// Difference between a fit and the true system.
#[derive(Debug, Clone)]
pub struct FitDelta {
    /// A_hat - A, n x n.
    pub d_a: Matrix,
    /// B_hat - B, n x m.
    pub d_b: Matrix,
    /// Frobenius norm of [d_a d_b].
    pub frobenius_norm: f64,
    /// Largest singular value of [d_a d_b].
    pub spectral_norm: f64,
}

impl FitDelta {
    /// Stacked error [d_a d_b], n x (n+m).
    pub fn stacked(&self) -> Matrix {
        let (n, m) = (self.d_a.nrows(), self.d_b.ncols());
        let mut s = Matrix::zeros(n, n + m);
        s.view_mut((0, 0), (n, n)).copy_from(&self.d_a);
        s.view_mut((0, n), (n, m)).copy_from(&self.d_b);
        s
    }
}

/// Estimation error of a fit against the true system matrices.
pub fn ls_error(fit: &LsFit, sys: &LtiSystem) -> Result<FitDelta> {
    if fit.a_hat.shape() != sys.a.shape() || fit.b_hat.shape() != sys.b.shape() {
        return Err(Error::dim("fit and system dimensions differ"));
    }
    let d_a = &fit.a_hat - &sys.a;
    let d_b = &fit.b_hat - &sys.b;
    let mut stacked = Matrix::zeros(d_a.nrows(), d_a.ncols() + d_b.ncols());
    stacked.view_mut((0, 0), (d_a.nrows(), d_a.ncols())).copy_from(&d_a);
    stacked.view_mut((0, d_a.ncols()), (d_b.nrows(), d_b.ncols())).copy_from(&d_b);
    let frobenius_norm = stacked.norm();
    let spectral_norm = spectral_norm(&stacked);
    Ok(FitDelta { d_a, d_b, frobenius_norm, spectral_norm })
}

/// Equivalent noise perturbation induced by a poisoning delta:
/// dW = dX_plus - A dX_minus - B dU, the exact amount by which the
/// perturbed data shifts the realized process noise.
pub fn poisoned_noise(sys: &LtiSystem, delta: &PoisonDelta) -> Result<Matrix> {
    let (n, m) = (sys.n(), sys.m());
    if delta.dx.nrows() != n || delta.du.nrows() != m {
        return Err(Error::dim("delta does not match system dimensions"));
    }
    Ok(delta.dx_plus() - &sys.a * delta.dx_minus() - &sys.b * &delta.du)
}

/// Noise sequence explaining the poisoned data under the true system:
/// W_tilde = W + dW.
pub fn total_poisoned_noise(noise: &NoiseRecord, dw: &Matrix) -> Result<Matrix> {
    if noise.w.shape() != dw.shape() {
        return Err(Error::dim("noise and delta-noise shapes differ"));
    }
    Ok(&noise.w + dw)
}

/// Two-sided bound certificate for the scaled estimation error
/// ||Psi_tilde||_F * sigma_max(theta_tilde - theta_true) in terms of extreme
/// singular values of the clean and perturbation noise.
#[derive(Debug, Clone)]
pub struct SandwichBounds {
    /// sigma_n(W) + sigma_n(dW), the claimed lower bound (n-th singular
    /// value, i.e. the smallest of the n row-space directions).
    pub lower: f64,
    /// sigma_1(W) + sigma_1(dW), the claimed upper bound.
    pub upper: f64,
    /// ||Psi_tilde||_F * sigma_max(estimation error) actually realized.
    pub value: f64,
    /// Whether lower - slack <= value <= upper + slack at 1e-8 relative slack.
    pub holds: bool,
}

/// Evaluates the sandwich certificate for a fit on poisoned data.
/// `fit_poisoned` must come from the poisoned dataset; `w_minus` and `dw` are
/// the clean noise and the poisoning-induced noise shift.
pub fn error_sandwich_bounds(
    fit_poisoned: &LsFit,
    sys: &LtiSystem,
    w_minus: &Matrix,
    dw: &Matrix,
) -> Result<SandwichBounds> {
    if w_minus.shape() != dw.shape() || w_minus.nrows() != sys.n() {
        return Err(Error::dim("noise matrices must both be n x T"));
    }
    let delta = ls_error(fit_poisoned, sys)?;
    let value = fit_poisoned.psi.norm() * delta.spectral_norm;
    let nth = |m: &Matrix| -> f64 {
        let sv = singular_values(m);
        sv.last().copied().unwrap_or(0.0)
    };
    let lower = nth(w_minus) + nth(dw);
    let upper = spectral_norm(w_minus) + spectral_norm(dw);
    let slack = 1e-8 * upper.abs().max(1.0);
    let holds = value >= lower - slack && value <= upper + slack;
    Ok(SandwichBounds { lower, upper, value, holds })
}

/// Exact residual identity discrepancy ||R_tilde - W_tilde (I - M_tilde)||_F,
/// where the fit and projection are computed on the poisoned dataset and
/// `w_tilde` is the total noise explaining it under the true system.
/// Zero (to roundoff) for any dataset and any perturbation.
pub fn residual_identity_check(d_poisoned: &Dataset, w_tilde: &Matrix) -> Result<f64> {
    if w_tilde.shape() != (d_poisoned.n(), d_poisoned.t()) {
        return Err(Error::dim("w_tilde must be n x T"));
    }
    let fit = ls_fit(d_poisoned)?;
    // W (I - M) without forming the T x T projection.
    let w_proj = (w_tilde * &fit.psi_pinv) * &fit.psi;
    let rhs = w_tilde - w_proj;
    Ok((&fit.r - rhs).norm())
}

/// Residual sensitivity certificate comparing clean and poisoned fits.
#[derive(Debug, Clone)]
pub struct SensitivityBound {
    /// ||R_tilde - R||_F / ||R||_F.
    pub ratio: f64,
    /// ||dPsi||_2 / ||Psi_tilde||_F, the claimed bound.
    pub bound: f64,
    /// ratio <= bound + 1e-8 relative slack.
    pub holds: bool,
}

/// Evaluates the residual sensitivity certificate between a clean dataset and
/// its poisoned counterpart. Errors when the clean residual is zero.
pub fn sensitivity_bound(d_clean: &Dataset, d_poisoned: &Dataset) -> Result<SensitivityBound> {
    if d_clean.n() != d_poisoned.n() || d_clean.m() != d_poisoned.m() || d_clean.t() != d_poisoned.t()
    {
        return Err(Error::dim("datasets must share dimensions"));
    }
    let clean = ls_fit(d_clean)?;
    let poisoned = ls_fit(d_poisoned)?;
    let r_norm = clean.r.norm();
    if r_norm == 0.0 {
        return Err(Error::Degenerate("clean residual is zero".into()));
    }
    let ratio = (&poisoned.r - &clean.r).norm() / r_norm;
    let d_psi = &poisoned.psi - &clean.psi;
    let psi_tilde_norm = poisoned.psi.norm();
    if psi_tilde_norm == 0.0 {
        return Err(Error::Degenerate("poisoned regressor is zero".into()));
    }
    let bound = spectral_norm(&d_psi) / psi_tilde_norm;
    let holds = ratio <= bound + 1e-8 * bound.max(1.0);
    Ok(SensitivityBound { ratio, bound, holds })
}

/// Confidence ellipsoid for the stacked parameter vec([A B]) (column-major):
/// { theta : (theta - center)^T shape (theta - center) <= radius2 }.
#[derive(Debug, Clone)]
pub struct ConfidenceEllipse {
    /// vec of the point estimate, length p = n (n+m).
    pub center: Vector,
    /// (Psi Psi^T kron I_n) / mse, p x p.
    pub shape: Matrix,
    /// p * F_quantile(1 - alpha; p, T - n - m).
    pub radius2: f64,
    /// (p, T - n - m).
    pub dof: (u64, u64),
}

impl ConfidenceEllipse {
    /// Whether stacked parameters [A B] (n x (n+m)) lie inside the ellipsoid.
    pub fn contains(&self, theta: &Matrix) -> bool {
        let v = vec_col(theta) - &self.center;
        let q = (&self.shape * &v).dot(&v);
        q <= self.radius2
    }
}

/// Confidence ellipsoid at level 1 - alpha around the least-squares estimate.
/// Needs T > n + m and a finite noise-variance estimate.
pub fn confidence_ellipse(fit: &LsFit, alpha: f64) -> Result<ConfidenceEllipse> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0,1)")));
    }
    let (n, m, t) = (fit.a_hat.nrows(), fit.m(), fit.t());
    let p = n * (n + m);
    if t <= n + m {
        return Err(Error::Undefined(format!("need T > n+m, got T={t}")));
    }
    if !fit.mse.is_finite() || fit.mse <= 0.0 {
        return Err(Error::Degenerate("noise variance estimate is not positive".into()));
    }
    let gram = &fit.psi * fit.psi.transpose();
    let shape = gram.kronecker(&Matrix::identity(n, n)) / fit.mse;
    let dof2 = (t - n - m) as u64;
    let radius2 = p as f64 * f_quantile(1.0 - alpha, p as u64, dof2)?;
    Ok(ConfidenceEllipse { center: vec_col(&fit.theta()), shape, radius2, dof: (p as u64, dof2) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::PoisonDelta;
    use crate::lti::{example_scalar, example_scalar_with_noise, gaussian_input, simulate, DisturbanceSet};
    use crate::numerics::rng::{derive_seed, rng_gaussian};
    use approx::assert_relative_eq;

    fn sim_scalar(t: usize, seed: u64) -> (crate::lti::LtiSystem, Dataset, NoiseRecord) {
        let sys = example_scalar();
        let u = gaussian_input(1, t, &Matrix::identity(1, 1), derive_seed(seed, 1)).unwrap();
        let (d, w) = simulate(&sys, &u, &Vector::zeros(1), derive_seed(seed, 2)).unwrap();
        (sys, d, w)
    }

    fn random_system(n: usize, m: usize, seed: u64, sigma: f64) -> crate::lti::LtiSystem {
        let mut a = rng_gaussian(n, n, &Matrix::identity(n, n), derive_seed(seed, 10)).unwrap();
        let radius = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        if radius > 0.0 {
            a /= radius / 0.8;
        }
        let b = rng_gaussian(n, m, &Matrix::identity(n, n), derive_seed(seed, 11)).unwrap();
        crate::lti::LtiSystem::new(a, b, Matrix::identity(n, n) * sigma * sigma,
            DisturbanceSet::Unbounded).unwrap()
    }

    #[test]
    fn two_sample_fit_solved_by_hand() {
        // x = (0, 1, 1), u = (1, 0): transitions give b = 1 then a = 1.
        let d = Dataset::new(
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Matrix::from_row_slice(1, 3, &[0.0, 1.0, 1.0]),
        )
        .unwrap();
        let fit = ls_fit(&d).unwrap();
        assert_relative_eq!(fit.a_hat[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.b_hat[(0, 0)], 1.0, epsilon = 1e-12);
        assert!(fit.r.norm() < 1e-12);
        assert!(fit.rank_ok);
        assert!(fit.mse.is_nan());
    }

    #[test]
    fn noise_free_fit_recovers_system() {
        let sys = random_system(3, 2, 4, 0.0);
        let u = gaussian_input(2, 40, &Matrix::identity(2, 2), 5).unwrap();
        let (d, _) = simulate(&sys, &u, &Vector::zeros(3), 6).unwrap();
        let fit = ls_fit(&d).unwrap();
        assert!((&fit.a_hat - &sys.a).norm() < 1e-9);
        assert!((&fit.b_hat - &sys.b).norm() < 1e-9);
        let err = ls_error(&fit, &sys).unwrap();
        assert!(err.frobenius_norm < 1e-9);
        assert!(err.spectral_norm <= err.frobenius_norm + 1e-15);
    }

    #[test]
    fn clean_error_identity_matches_pseudoinverse_form() {
        // theta_hat - theta_true = W Psi^+ whenever the rank condition holds.
        let (sys, d, w) = sim_scalar(60, 7);
        let fit = ls_fit(&d).unwrap();
        let delta = ls_error(&fit, &sys).unwrap();
        let expect = &w.w * &fit.psi_pinv;
        assert!((delta.stacked() - expect).norm() < 1e-10);
    }

    #[test]
    fn leverage_matches_projection_diagonal() {
        let (_, d, _) = sim_scalar(30, 9);
        let fit = ls_fit(&d).unwrap();
        let m = fit.projection_matrix();
        for i in 0..d.t() {
            assert_relative_eq!(fit.leverage[i], m[(i, i)], epsilon = 1e-10);
            assert!((-1e-12..=1.0 + 1e-12).contains(&fit.leverage[i]));
        }
        let trace: f64 = fit.leverage.iter().sum();
        assert_relative_eq!(trace, 2.0, epsilon = 1e-9);
        // Idempotent projection.
        assert!((&m * &m - &m).norm() < 1e-9);
    }

    #[test]
    fn mse_estimates_noise_variance() {
        let (_, d, _) = sim_scalar(400, 13);
        let fit = ls_fit(&d).unwrap();
        assert!((fit.mse - 1.0).abs() < 0.4, "mse = {}", fit.mse);
    }

    #[test]
    fn rank_deficient_fit_is_flagged_not_fatal() {
        let sys = example_scalar();
        let (d, _) = simulate(&sys, &Matrix::zeros(1, 20), &Vector::zeros(1), 3).unwrap();
        let fit = ls_fit(&d).unwrap();
        assert!(!fit.rank_ok);
        assert!(fit.a_hat[(0, 0)].is_finite());
    }

    #[test]
    fn poisoned_noise_is_linear_in_delta() {
        let (sys, d, _) = sim_scalar(25, 15);
        let delta = PoisonDelta::gaussian_scaled(&d, 0.1, 0.1, 16).unwrap();
        let dw = poisoned_noise(&sys, &delta).unwrap();
        let manual = delta.dx_plus() - &sys.a * delta.dx_minus() - &sys.b * &delta.du;
        assert_relative_eq!(dw, manual, epsilon = 1e-14);
        let zero = PoisonDelta::zeros(d.n(), d.m(), d.t());
        assert_eq!(poisoned_noise(&sys, &zero).unwrap(), Matrix::zeros(1, 25));
    }

    #[test]
    fn residual_identity_is_exact() {
        for seed in 0..5u64 {
            let (sys, d, w) = sim_scalar(30, 20 + seed);
            let delta = PoisonDelta::gaussian_scaled(&d, 0.3, 0.3, seed).unwrap();
            let poisoned = delta.apply(&d).unwrap();
            let dw = poisoned_noise(&sys, &delta).unwrap();
            let w_tilde = total_poisoned_noise(&w, &dw).unwrap();
            let gap = residual_identity_check(&poisoned, &w_tilde).unwrap();
            assert!(gap < 1e-9, "seed {seed}: gap {gap}");
        }
    }

    #[test]
    fn sandwich_bounds_report_components() {
        let (sys, d, w) = sim_scalar(40, 31);
        let delta = PoisonDelta::gaussian_scaled(&d, 0.1, 0.1, 32).unwrap();
        let poisoned = delta.apply(&d).unwrap();
        let fit_p = ls_fit(&poisoned).unwrap();
        let dw = poisoned_noise(&sys, &delta).unwrap();
        let out = error_sandwich_bounds(&fit_p, &sys, &w.w, &dw).unwrap();
        // Independent recomputation of each component.
        let err = ls_error(&fit_p, &sys).unwrap();
        assert_relative_eq!(out.value, poisoned.psi_minus().norm() * err.spectral_norm,
            epsilon = 1e-12);
        let sv_w = singular_values(&w.w);
        let sv_dw = singular_values(&dw);
        assert_relative_eq!(out.lower, sv_w.last().unwrap() + sv_dw.last().unwrap(),
            epsilon = 1e-12);
        assert_relative_eq!(out.upper, sv_w[0] + sv_dw[0], epsilon = 1e-12);
        assert_eq!(out.holds, out.value >= out.lower - 1e-8 * out.upper.max(1.0)
            && out.value <= out.upper + 1e-8 * out.upper.max(1.0));
    }

    #[test]
    fn sensitivity_bound_reports_ratio() {
        let (_, d, _) = sim_scalar(35, 41);
        let delta = PoisonDelta::gaussian_scaled(&d, 0.05, 0.05, 42).unwrap();
        let poisoned = delta.apply(&d).unwrap();
        let out = sensitivity_bound(&d, &poisoned).unwrap();
        let r = ls_fit(&d).unwrap().r;
        let r_t = ls_fit(&poisoned).unwrap().r;
        assert_relative_eq!(out.ratio, (r_t - &r).norm() / r.norm(), epsilon = 1e-12);
        assert!(out.bound > 0.0);
    }

    #[test]
    fn ellipse_covers_truth_at_nominal_rate() {
        let sys = example_scalar_with_noise(1.0);
        let theta_true = Matrix::from_row_slice(1, 2, &[0.7, 0.5]);
        let alpha = 0.1;
        let trials = 400;
        let mut hits = 0;
        for s in 0..trials {
            let u = gaussian_input(1, 100, &Matrix::identity(1, 1), derive_seed(50, 2 * s)).unwrap();
            let (d, _) = simulate(&sys, &u, &Vector::zeros(1), derive_seed(50, 2 * s + 1)).unwrap();
            let fit = ls_fit(&d).unwrap();
            let ell = confidence_ellipse(&fit, alpha).unwrap();
            assert_eq!(ell.dof, (2, 98));
            if ell.contains(&theta_true) {
                hits += 1;
            }
        }
        let coverage = hits as f64 / trials as f64;
        assert!((0.85..=0.95).contains(&coverage), "coverage {coverage}");
    }

    #[test]
    fn ellipse_center_is_estimate() {
        let (_, d, _) = sim_scalar(80, 61);
        let fit = ls_fit(&d).unwrap();
        let ell = confidence_ellipse(&fit, 0.05).unwrap();
        assert_eq!(ell.center.len(), 2);
        assert_relative_eq!(ell.center[0], fit.a_hat[(0, 0)], epsilon = 1e-14);
        assert_relative_eq!(ell.center[1], fit.b_hat[(0, 0)], epsilon = 1e-14);
        assert!(ell.contains(&fit.theta()));
        assert!(confidence_ellipse(&fit, 1.5).is_err());
    }
}
