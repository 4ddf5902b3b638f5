//! Post-hoc analysis of a poisoned regression: can the corruption hide inside
//! the disturbance class, how does the estimate error distribute over
//! parameter directions, and closed forms for the estimate shift caused by
//! input-only or state-only corruption.

use crate::error::{ensure_finite, Error, Result};
use crate::lti::{Dataset, LtiSystem};
use crate::numerics::linalg::{numerical_rank, orthonormal_completion, pinv, singular_values, unvec_col, vec_col};
use crate::regression::{FitDelta, LsFit};
use crate::Matrix;

/// True when every column of `w` lies in the system's disturbance set, i.e.
/// the combined noise sequence could have been produced by the nominal model
/// and the attack is invisible to a set-membership check.
pub fn compatible_membership(sys: &LtiSystem, w: &Matrix) -> Result<bool> {
    if w.nrows() != sys.n() {
        return Err(Error::dim(format!(
            "noise matrix has {} rows, system state dimension is {}",
            w.nrows(),
            sys.n()
        )));
    }
    ensure_finite("w", w)?;
    for j in 0..w.ncols() {
        let col = w.column(j).into_owned();
        if !sys.disturbance.contains(&col) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One direction of the parameter-space error decomposition.
#[derive(Debug, Clone)]
pub struct DirectionalComponent {
    /// ||V_k Psi||_F: how strongly the data excites this direction.
    pub exploration: f64,
    /// Cosine of the angle between vec(V_k Psi) and the combined noise.
    pub alignment: f64,
    /// |cos| (sigma_n(W) + sigma_n(dW)) / exploration.
    pub claimed_lower_bound: f64,
    /// |v_k^T vec(theta_hat - theta_true)|.
    pub projection: f64,
    /// Whether projection >= claimed_lower_bound (up to slack).
    pub holds: bool,
}

/// Error decomposition over an orthonormal basis of parameter space anchored
/// at the estimate direction (v_1 proportional to vec(theta_hat)).
#[derive(Debug, Clone)]
pub struct DirectionalErrorReport {
    pub components: Vec<DirectionalComponent>,
    /// Smallest singular value of the clean noise block (n-th of n).
    pub sigma_min_w: f64,
    /// Smallest singular value of the noise perturbation block.
    pub sigma_min_dw: f64,
    /// Number of directions where the claimed lower bound fails.
    pub violations: usize,
}

/// Decomposes the true-parameter error of a (possibly poisoned) fit over an
/// orthonormal basis of R^{n(n+m)} and evaluates, per direction, a putative
/// lower bound built from the noise spectra and the per-direction excitation.
/// `w_minus` and `dw_minus` are the clean noise and the noise perturbation
/// over the regression window (n x T each); their sum is the combined noise
/// the fit actually absorbed.
pub fn directional_error(
    fit: &LsFit,
    sys: &LtiSystem,
    w_minus: &Matrix,
    dw_minus: &Matrix,
) -> Result<DirectionalErrorReport> {
    let (n, m, t) = (sys.n(), sys.m(), fit.t());
    if fit.a_hat.nrows() != n || fit.m() != m {
        return Err(Error::dim("fit and system dimensions disagree"));
    }
    if w_minus.shape() != (n, t) || dw_minus.shape() != (n, t) {
        return Err(Error::dim(format!("noise blocks must be {n} x {t}")));
    }
    ensure_finite("w_minus", w_minus)?;
    ensure_finite("dw_minus", dw_minus)?;
    let combined = w_minus + dw_minus;
    let combined_norm = combined.norm();
    if combined_norm == 0.0 {
        return Err(Error::Degenerate(
            "combined noise is zero, direction angles are undefined".into(),
        ));
    }
    let theta = fit.theta();
    let mut truth = Matrix::zeros(n, n + m);
    truth.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    truth.view_mut((0, n), (n, m)).copy_from(&sys.b);
    let d_theta = vec_col(&(&theta - &truth));
    let basis = orthonormal_completion(&vec_col(&theta))?;
    let sv_w = singular_values(w_minus);
    let sv_dw = singular_values(dw_minus);
    let sigma_min_w = *sv_w.last().unwrap();
    let sigma_min_dw = *sv_dw.last().unwrap();
    let numerator_base = sigma_min_w + sigma_min_dw;
    let mut components = Vec::with_capacity(basis.len());
    let mut violations = 0;
    for v_k in &basis {
        let v_mat = unvec_col(v_k, n, n + m);
        let excited = v_mat * &fit.psi;
        let exploration = excited.norm();
        let alignment = if exploration == 0.0 {
            0.0
        } else {
            excited.dot(&combined) / (exploration * combined_norm)
        };
        let numerator = alignment.abs() * numerator_base;
        let claimed_lower_bound = if numerator == 0.0 {
            0.0
        } else if exploration == 0.0 {
            f64::INFINITY
        } else {
            numerator / exploration
        };
        let projection = v_k.dot(&d_theta).abs();
        let holds = projection + 1e-9 * (1.0 + claimed_lower_bound.abs()) >= claimed_lower_bound;
        if !holds {
            violations += 1;
        }
        components.push(DirectionalComponent {
            exploration,
            alignment,
            claimed_lower_bound,
            projection,
            holds,
        });
    }
    Ok(DirectionalErrorReport { components, sigma_min_w, sigma_min_dw, violations })
}

fn split_shift(shift: Matrix, n: usize, m: usize) -> FitDelta {
    let d_a = shift.view((0, 0), (n, n)).into_owned();
    let d_b = shift.view((0, n), (n, m)).into_owned();
    FitDelta {
        frobenius_norm: shift.norm(),
        spectral_norm: singular_values(&shift)[0],
        d_a,
        d_b,
    }
}

/// Closed-form extra estimation error caused by corrupting only the inputs:
/// with dU added to U the noise the regression absorbs changes by -B dU, so
/// the true-parameter error shifts by -B dU pinv([X-; U+dU]) on top of the
/// clean-noise term. Requires the corrupted regressor to keep full row rank.
pub fn input_attack_shift(d: &Dataset, sys: &LtiSystem, du: &Matrix) -> Result<FitDelta> {
    let (n, m, t) = (d.n(), d.m(), d.t());
    if sys.n() != n || sys.m() != m {
        return Err(Error::dim("dataset and system dimensions disagree"));
    }
    if du.shape() != (m, t) {
        return Err(Error::dim(format!("dU must be {m} x {t}")));
    }
    ensure_finite("du", du)?;
    let mut psi = d.psi_minus();
    let mut u_block = psi.view_mut((n, 0), (m, t));
    u_block += du;
    if numerical_rank(&psi, None) < n + m {
        return Err(Error::Degenerate(
            "corrupted regressor loses full row rank, shift is not well defined".into(),
        ));
    }
    let dw = -(&sys.b * du);
    Ok(split_shift(dw * pinv(&psi, None), n, m))
}

/// Closed-form extra estimation error caused by corrupting only the states:
/// with dX added to X the absorbed noise changes by dX+ - A dX-, and the
/// error shifts by (dX+ - A dX-) pinv([X+dX-; U]). `dx` is n x (T+1).
pub fn state_attack_shift(d: &Dataset, sys: &LtiSystem, dx: &Matrix) -> Result<FitDelta> {
    let (n, m, t) = (d.n(), d.m(), d.t());
    if sys.n() != n || sys.m() != m {
        return Err(Error::dim("dataset and system dimensions disagree"));
    }
    if dx.shape() != (n, t + 1) {
        return Err(Error::dim(format!("dX must be {n} x {}", t + 1)));
    }
    ensure_finite("dx", dx)?;
    let dx_minus = dx.columns(0, t);
    let dx_plus = dx.columns(1, t);
    let mut psi = d.psi_minus();
    let mut x_block = psi.view_mut((0, 0), (n, t));
    x_block += dx_minus;
    if numerical_rank(&psi, None) < n + m {
        return Err(Error::Degenerate(
            "corrupted regressor loses full row rank, shift is not well defined".into(),
        ));
    }
    let dw = dx_plus - &sys.a * dx_minus;
    Ok(split_shift(dw * pinv(&psi, None), n, m))
}
