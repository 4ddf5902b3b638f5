//! Shared evaluation state and analytic gradients for the optimizing attacks.
//!
//! All quantities live in the attacker's information set: the clean
//! least-squares fit (theta_c, R) is the reference, the objective is
//! sigma_max of the fit shift caused by the delta, and the constraints are
//! relative distortions of the statistics a defender would compute.
//!
//! Gradients rely on the full-row-rank pseudoinverse differential; with
//! Psi_tilde = U S V^T, G = Psi_tilde Psi_tilde^T and W_tilde = R + dW:
//!   d(pinv) = dPsi^T G^-1 - pinv dPsi pinv - M dPsi^T G^-1,
//! which yields, for f = sigma_max(W_tilde pinv) with singular pair (u1, v1):
//!   grad_W f   = u1 (pinv v1)^T
//!   grad_Psi f = -(shift^T u1)(pinv v1)^T + (G^-1 v1)(R_tilde^T u1)^T
//! and for any phi(R_tilde) with Gamma = dphi/dR_tilde:
//!   grad_Xplus phi = Gamma (I - M)
//!   grad_Psi phi   = -A_tilde^T Gamma (I - M) - pinv^T Gamma^T R_tilde.

use crate::attacks::PoisonDelta;
use crate::detection::{correlation_inverse, correlations};
use crate::error::{Error, Result};
use crate::lti::Dataset;
use crate::numerics::linalg::default_rank_tol;
use crate::regression::ls_fit;
use crate::{Matrix, Vector};

/// Gradient of a scalar with respect to the two perturbation blocks.
#[derive(Debug, Clone)]
pub struct PoisonGradient {
    /// d/d(dX), n x (T+1).
    pub grad_dx: Matrix,
    /// d/d(dU), m x T.
    pub grad_du: Matrix,
}

impl PoisonGradient {
    fn zeros(n: usize, m: usize, t: usize) -> Self {
        Self { grad_dx: Matrix::zeros(n, t + 1), grad_du: Matrix::zeros(m, t) }
    }

    /// Inner product with a delta, for directional-derivative checks.
    pub fn dot(&self, delta: &PoisonDelta) -> f64 {
        self.grad_dx.dot(&delta.dx) + self.grad_du.dot(&delta.du)
    }
}

/// Objective value and gradient at a delta.
#[derive(Debug, Clone)]
pub struct ObjectiveGradient {
    pub grad_dx: Matrix,
    pub grad_du: Matrix,
    /// sigma_max of the fit shift at the evaluation point.
    pub value: f64,
    /// True when the top singular value is (near-)tied or zero, in which case
    /// the returned gradient is one subgradient of sigma_max.
    pub degenerate: bool,
}

/// Constraint values g_0..g_{s+3} at a delta.
#[derive(Debug, Clone)]
pub struct ConstraintValues {
    /// g_0 = ||dX||_F/||X||_F, g_1 = ||dU||_F/||U||_F,
    /// g_2 = |1 - ||R_tilde||^2/||R||^2|, g_3 = |1 - Z_tilde/Z|,
    /// g_{3+tau} = |1 - h_tau(poisoned)/h_tau(clean)| for tau = 1..s.
    pub values: Vec<f64>,
    /// True when T - n(n+m) - 1 <= 0: the model-fit statistic is undefined,
    /// g_3 is not enforced, and its slot reads 0.
    pub f_statistic_dropped: bool,
}

/// Baselines from the clean dataset, reused across every evaluation of a
/// candidate delta.
#[derive(Debug, Clone)]
pub struct AttackContext {
    n: usize,
    m: usize,
    t: usize,
    x: Matrix,
    u: Matrix,
    x_norm: f64,
    u_norm: f64,
    theta_c: Matrix,
    r_norm2: f64,
    /// Clean model-fit statistic; None when its degrees of freedom are
    /// nonpositive (constraint dropped).
    z_base: Option<f64>,
    /// Multiplier (T - n(n+m) - 1) / (n m).
    z_const: f64,
    /// Clean ||C_tau C_0^-1||_F^2 for tau = 1..s.
    corr_base: Vec<f64>,
    s: usize,
}

/// Everything derived from one poisoned-data evaluation.
pub(crate) struct EvalState {
    pub psi_t: Matrix,
    pub x_minus_t: Matrix,
    pub pinv: Matrix,
    pub gram_inv: Matrix,
    pub a_tilde: Matrix,
    pub shift: Matrix,
    pub r_tilde: Matrix,
    /// Restricted fit of X_plus on X_minus alone (for the model-fit ratio).
    pub restricted: Option<RestrictedFit>,
}

pub(crate) struct RestrictedFit {
    pub pinv: Matrix,
    pub a1: Matrix,
    pub r1: Matrix,
}

fn thin_pinv_pieces(mat: &Matrix) -> (Matrix, Matrix) {
    // Returns (pinv, gram_pinv) with the relative singular-value cutoff.
    let svd = mat.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let k = svd.singular_values.len();
    let smax = svd.singular_values.max();
    let cut = default_rank_tol(mat.nrows(), mat.ncols()) * smax;
    let mut sinv = Matrix::zeros(k, k);
    let mut sinv2 = Matrix::zeros(k, k);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > cut && s > 0.0 {
            sinv[(i, i)] = 1.0 / s;
            sinv2[(i, i)] = 1.0 / (s * s);
        }
    }
    let pinv = vt.transpose() * &sinv * u.transpose();
    let gram_inv = u * &sinv2 * u.transpose();
    (pinv, gram_inv)
}

impl AttackContext {
    /// Builds baselines from the clean dataset for constraints up to lag `s`.
    pub fn new(d: &Dataset, s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::invalid("need at least one correlation lag"));
        }
        let (n, m, t) = (d.n(), d.m(), d.t());
        if s >= t {
            return Err(Error::invalid(format!("lag window s={s} needs T > s, got T={t}")));
        }
        let x_norm = d.x.norm();
        let u_norm = d.u.norm();
        if x_norm == 0.0 || u_norm == 0.0 {
            return Err(Error::Degenerate("clean data has zero norm".into()));
        }
        let fit = ls_fit(d)?;
        let r_norm2 = fit.r.norm_squared();
        // Relative check: a residual at rounding level makes the ratio
        // constraints meaningless even when it is not exactly zero.
        if r_norm2 <= 1e-24 * x_norm * x_norm {
            return Err(Error::Degenerate("clean residual is numerically zero".into()));
        }
        let dof = t as isize - (n * (n + m)) as isize - 1;
        let z_const = dof as f64 / (n * m) as f64;
        let z_base = if dof > 0 {
            let x_minus = d.x_minus();
            let pinv1 = crate::numerics::linalg::pinv(&x_minus, None);
            let a1 = d.x_plus() * &pinv1;
            let rss1 = (d.x_plus() - &a1 * &x_minus).norm_squared();
            let z = z_const * (rss1 - r_norm2) / r_norm2;
            if z == 0.0 {
                return Err(Error::Degenerate("clean model-fit statistic is zero".into()));
            }
            Some(z)
        } else {
            None
        };
        let cs = correlations(&fit.r, s)?;
        let (c0_inv, _) = correlation_inverse(&cs.c[0])?;
        let mut corr_base = Vec::with_capacity(s);
        for tau in 1..=s {
            let h = (&cs.c[tau] * &c0_inv).norm_squared();
            if h == 0.0 {
                return Err(Error::Degenerate(format!("clean lag-{tau} statistic is zero")));
            }
            corr_base.push(h);
        }
        Ok(Self {
            n,
            m,
            t,
            x: d.x.clone(),
            u: d.u.clone(),
            x_norm,
            u_norm,
            theta_c: fit.theta(),
            r_norm2,
            z_base,
            z_const,
            corr_base,
            s,
        })
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// Whether the model-fit constraint slot is enforced.
    pub fn f_statistic_dropped(&self) -> bool {
        self.z_base.is_none()
    }

    pub(crate) fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.t)
    }

    fn check_delta(&self, delta: &PoisonDelta) -> Result<()> {
        if delta.dx.shape() != (self.n, self.t + 1) || delta.du.shape() != (self.m, self.t) {
            return Err(Error::dim("delta does not match dataset dimensions"));
        }
        Ok(())
    }

    pub(crate) fn evaluate(&self, delta: &PoisonDelta) -> Result<EvalState> {
        self.check_delta(delta)?;
        let x_t = &self.x + &delta.dx;
        let u_t = &self.u + &delta.du;
        let x_minus_t = x_t.columns(0, self.t).into_owned();
        let x_plus_t = x_t.columns(1, self.t).into_owned();
        let mut psi_t = Matrix::zeros(self.n + self.m, self.t);
        psi_t.view_mut((0, 0), (self.n, self.t)).copy_from(&x_minus_t);
        psi_t.view_mut((self.n, 0), (self.m, self.t)).copy_from(&u_t);
        let (pinv, gram_inv) = thin_pinv_pieces(&psi_t);
        let a_tilde = &x_plus_t * &pinv;
        let r_tilde = &x_plus_t - &a_tilde * &psi_t;
        let shift = &a_tilde - &self.theta_c;
        let restricted = if self.z_base.is_some() {
            let (pinv1, _) = thin_pinv_pieces(&x_minus_t);
            let a1 = &x_plus_t * &pinv1;
            let r1 = &x_plus_t - &a1 * &x_minus_t;
            Some(RestrictedFit { pinv: pinv1, a1, r1 })
        } else {
            None
        };
        Ok(EvalState { psi_t, x_minus_t, pinv, gram_inv, a_tilde, shift, r_tilde, restricted })
    }

    /// sigma_max of the fit shift.
    pub(crate) fn objective_of(&self, st: &EvalState) -> f64 {
        crate::numerics::linalg::spectral_norm(&st.shift)
    }

    /// Poisoned model-fit statistic from an evaluation; +inf when the full
    /// residual vanishes.
    fn z_of(&self, st: &EvalState) -> Option<f64> {
        let restricted = st.restricted.as_ref()?;
        let rss2 = st.r_tilde.norm_squared();
        let rss1 = restricted.r1.norm_squared();
        if rss2 <= f64::MIN_POSITIVE {
            return Some(f64::INFINITY);
        }
        Some(self.z_const * (rss1 - rss2) / rss2)
    }

    pub(crate) fn constraints_of(&self, st: &EvalState, delta: &PoisonDelta) -> Result<Vec<f64>> {
        let mut g = Vec::with_capacity(self.s + 4);
        g.push(delta.dx.norm() / self.x_norm);
        g.push(delta.du.norm() / self.u_norm);
        g.push((1.0 - st.r_tilde.norm_squared() / self.r_norm2).abs());
        match (self.z_base, self.z_of(st)) {
            (Some(zb), Some(zt)) => g.push((1.0 - zt / zb).abs()),
            _ => g.push(0.0),
        }
        let cs = correlations(&st.r_tilde, self.s)?;
        let (c0_inv, _) = correlation_inverse(&cs.c[0])?;
        for tau in 1..=self.s {
            let h = (&cs.c[tau] * &c0_inv).norm_squared();
            g.push((1.0 - h / self.corr_base[tau - 1]).abs());
        }
        Ok(g)
    }

    /// Adjoint of the full-model residual map: accumulates the gradient of
    /// phi into (grad_dx, grad_du) given Gamma = dphi/dR_tilde.
    fn chain_residual(&self, st: &EvalState, gamma: &Matrix, out: &mut PoisonGradient) {
        // Gamma (I - M) without the T x T projection.
        let gamma_proj = gamma - (gamma * &st.pinv) * &st.psi_t;
        // X_plus term.
        out.grad_dx.view_mut((0, 1), (self.n, self.t)).zip_apply(&gamma_proj, |o, g| *o += g);
        // Psi terms.
        let mut psi_grad = -(st.a_tilde.transpose() * &gamma_proj);
        psi_grad -= (st.pinv.transpose() * gamma.transpose()) * &st.r_tilde;
        self.scatter_psi(&psi_grad, out);
    }

    /// Adjoint of the restricted-model residual map (regressor X_minus only).
    fn chain_restricted(&self, st: &EvalState, gamma: &Matrix, out: &mut PoisonGradient) {
        let restricted = st.restricted.as_ref().expect("restricted fit present");
        let gamma_proj = gamma - (gamma * &restricted.pinv) * &st.x_minus_t;
        out.grad_dx.view_mut((0, 1), (self.n, self.t)).zip_apply(&gamma_proj, |o, g| *o += g);
        let mut xm_grad = -(restricted.a1.transpose() * &gamma_proj);
        xm_grad -= (restricted.pinv.transpose() * gamma.transpose()) * &restricted.r1;
        out.grad_dx.view_mut((0, 0), (self.n, self.t)).zip_apply(&xm_grad, |o, g| *o += g);
    }

    /// Scatters a d/d(Psi_tilde) gradient into the delta blocks.
    fn scatter_psi(&self, psi_grad: &Matrix, out: &mut PoisonGradient) {
        let rows_x = psi_grad.rows(0, self.n);
        out.grad_dx.view_mut((0, 0), (self.n, self.t)).zip_apply(&rows_x, |o, g| *o += g);
        let rows_u = psi_grad.rows(self.n, self.m);
        out.grad_du.zip_apply(&rows_u, |o, g| *o += g);
    }

    /// Gradient (or subgradient at ties) of sigma_max of the fit shift.
    pub(crate) fn objective_grad_of(&self, st: &EvalState) -> (PoisonGradient, f64, bool) {
        let svd = st.shift.clone().svd(true, true);
        let sv = &svd.singular_values;
        let value = sv[0];
        let degenerate =
            value <= 1e-300 || (sv.len() > 1 && sv[0] - sv[1] <= 1e-8 * sv[0].max(1e-300));
        let u1: Vector = svd.u.as_ref().expect("u").column(0).into_owned();
        let v1: Vector = svd.v_t.as_ref().expect("v_t").row(0).transpose();
        let mut out = PoisonGradient::zeros(self.n, self.m, self.t);
        let pv = &st.pinv * &v1;
        // W_tilde route: dW = d(dX_plus) - theta_c d(dPsi).
        let gw = &u1 * pv.transpose();
        out.grad_dx.view_mut((0, 1), (self.n, self.t)).zip_apply(&gw, |o, g| *o += g);
        let psi_from_w = -(self.theta_c.transpose() * &gw);
        self.scatter_psi(&psi_from_w, &mut out);
        // Psi_tilde route.
        let mut psi_grad = -(st.shift.transpose() * &u1) * pv.transpose();
        psi_grad += (&st.gram_inv * &v1) * (st.r_tilde.transpose() * &u1).transpose();
        self.scatter_psi(&psi_grad, &mut out);
        (out, value, degenerate)
    }

    /// Analytic gradients of every constraint at a delta (same indexing as
    /// [`ConstraintValues::values`]; dropped slots get zero gradients).
    pub(crate) fn constraint_grads_of(
        &self,
        st: &EvalState,
        delta: &PoisonDelta,
    ) -> Result<Vec<PoisonGradient>> {
        let (n, m, t) = (self.n, self.m, self.t);
        let mut grads = Vec::with_capacity(self.s + 4);

        // g0, g1: block-norm ratios.
        let mut g0 = PoisonGradient::zeros(n, m, t);
        let nx = delta.dx.norm();
        if nx > 0.0 {
            g0.grad_dx = &delta.dx * (1.0 / (nx * self.x_norm));
        }
        grads.push(g0);
        let mut g1 = PoisonGradient::zeros(n, m, t);
        let nu = delta.du.norm();
        if nu > 0.0 {
            g1.grad_du = &delta.du * (1.0 / (nu * self.u_norm));
        }
        grads.push(g1);

        // g2: |1 - ||R_tilde||^2 / ||R||^2|.
        let mut g2 = PoisonGradient::zeros(n, m, t);
        let ratio2 = st.r_tilde.norm_squared() / self.r_norm2;
        let sgn2 = sign(ratio2 - 1.0);
        if sgn2 != 0.0 {
            let gamma = &st.r_tilde * (2.0 * sgn2 / self.r_norm2);
            self.chain_residual(st, &gamma, &mut g2);
        }
        grads.push(g2);

        // g3: |1 - Z_tilde / Z|.
        let mut g3 = PoisonGradient::zeros(n, m, t);
        if let (Some(zb), Some(zt)) = (self.z_base, self.z_of(st)) {
            if zt.is_finite() {
                let sgn = sign(zt / zb - 1.0);
                if sgn != 0.0 {
                    let restricted = st.restricted.as_ref().expect("restricted fit present");
                    let rss2 = st.r_tilde.norm_squared();
                    let rss1 = restricted.r1.norm_squared();
                    // dg3 = (sgn/zb) * z_const * [dRSS1/RSS2 - RSS1 dRSS2/RSS2^2].
                    let scale = sgn / zb * self.z_const;
                    let gamma1 = &restricted.r1 * (2.0 * scale / rss2);
                    self.chain_restricted(st, &gamma1, &mut g3);
                    let gamma2 = &st.r_tilde * (-2.0 * scale * rss1 / (rss2 * rss2));
                    self.chain_residual(st, &gamma2, &mut g3);
                }
            }
        }
        grads.push(g3);

        // g_{3+tau}: |1 - h_tau / h_tau(clean)| through the lag correlations.
        let cs = correlations(&st.r_tilde, self.s)?;
        let (c0_inv, _) = correlation_inverse(&cs.c[0])?;
        let tf = t as f64;
        for tau in 1..=self.s {
            let mut g = PoisonGradient::zeros(n, m, t);
            let k = &cs.c[tau] * &c0_inv;
            let h = k.norm_squared();
            let sgn = sign(h / self.corr_base[tau - 1] - 1.0);
            if sgn != 0.0 {
                let scale = sgn / self.corr_base[tau - 1];
                let p = &k * &c0_inv * (2.0 * scale);
                let q = k.transpose() * &k * &c0_inv * (-2.0 * scale);
                let mut gamma = Matrix::zeros(n, t);
                // dC_tau route.
                let head = &p * st.r_tilde.columns(tau, t - tau);
                gamma.view_mut((0, 0), (n, t - tau)).zip_apply(&head, |o, v| *o += v / tf);
                let tail = p.transpose() * st.r_tilde.columns(0, t - tau);
                gamma.view_mut((0, tau), (n, t - tau)).zip_apply(&tail, |o, v| *o += v / tf);
                // dC_0 route.
                let sym = (&q + q.transpose()) * (1.0 / tf);
                gamma += sym * &st.r_tilde;
                self.chain_residual(st, &gamma, &mut g);
            }
            grads.push(g);
        }
        Ok(grads)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Constraint values g_0..g_{s+3} of a delta against its clean dataset.
pub fn constraint_values(d: &Dataset, delta: &PoisonDelta, s: usize) -> Result<ConstraintValues> {
    let ctx = AttackContext::new(d, s)?;
    let st = ctx.evaluate(delta)?;
    let values = ctx.constraints_of(&st, delta)?;
    Ok(ConstraintValues { values, f_statistic_dropped: ctx.f_statistic_dropped() })
}

/// Analytic constraint gradients, indexed like [`constraint_values`].
pub fn constraint_gradients(d: &Dataset, delta: &PoisonDelta, s: usize) -> Result<Vec<PoisonGradient>> {
    let ctx = AttackContext::new(d, s)?;
    let st = ctx.evaluate(delta)?;
    ctx.constraint_grads_of(&st, delta)
}

/// Value and analytic gradient of the attack objective sigma_max(fit shift)
/// at a delta. `degenerate` marks (near-)tied top singular values, where the
/// returned direction is one subgradient.
pub fn objective_gradient(d: &Dataset, delta: &PoisonDelta) -> Result<ObjectiveGradient> {
    // Lag count does not affect the objective; use the smallest valid window.
    let ctx = AttackContext::new(d, 1)?;
    let st = ctx.evaluate(delta)?;
    let (grad, value, degenerate) = ctx.objective_grad_of(&st);
    Ok(ObjectiveGradient { grad_dx: grad.grad_dx, grad_du: grad.grad_du, value, degenerate })
}
