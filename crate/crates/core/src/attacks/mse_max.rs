//! Budget-constrained MSE-maximizing attack.
//!
//! Objective J(delta) = ||dW||_F^2 + 2 <R, dW> with dW = dX_plus
//! - A_hat dX_minus - B_hat dU (clean fit held fixed): the exact change in
//! residual energy a defender would see if the estimate did not move. J is
//! convex in the delta, so maximizing its linearization over the Frobenius
//! budget balls and repeating yields a nondecreasing objective; the
//! linearized subproblem is solved in closed form (each block lands on its
//! budget sphere along the gradient direction).

use crate::attacks::{AttackResult, BudgetSpec, PoisonDelta};
use crate::error::{Error, Result};
use crate::lti::Dataset;
use crate::numerics::rng::derive_seed;
use crate::regression::ls_fit;
use crate::Matrix;

struct Objective {
    theta: Matrix,
    r: Matrix,
    n: usize,
    m: usize,
    t: usize,
}

impl Objective {
    fn dw(&self, delta: &PoisonDelta) -> Matrix {
        delta.dx_plus() - &self.theta * delta.d_psi()
    }

    fn value(&self, delta: &PoisonDelta) -> f64 {
        let dw = self.dw(delta);
        dw.norm_squared() + 2.0 * self.r.dot(&dw)
    }

    /// Gradient blocks (d/d dX, d/d dU); chain of G = 2 (dW + R) through dW.
    fn gradient(&self, delta: &PoisonDelta) -> (Matrix, Matrix) {
        let g = (self.dw(delta) + &self.r) * 2.0;
        let mut grad_dx = Matrix::zeros(self.n, self.t + 1);
        grad_dx.view_mut((0, 1), (self.n, self.t)).copy_from(&g);
        let a_t = self.theta.columns(0, self.n).transpose() * &g;
        grad_dx.view_mut((0, 0), (self.n, self.t)).zip_apply(&a_t, |o, v| *o -= v);
        let grad_du = -(self.theta.columns(self.n, self.m).transpose() * &g);
        (grad_dx, grad_du)
    }
}

fn boundary_step(
    obj: &Objective,
    delta: &PoisonDelta,
    rx: f64,
    ru: f64,
) -> PoisonDelta {
    let (gx, gu) = obj.gradient(delta);
    let mut next = PoisonDelta { dx: gx, du: gu };
    // Zero-gradient blocks keep their previous value (already on the sphere).
    if next.dx.norm() == 0.0 {
        next.dx = delta.dx.clone();
    }
    if next.du.norm() == 0.0 {
        next.du = delta.du.clone();
    }
    next.scale_to_radii(rx, ru);
    next
}

/// Maximizes the residual-energy objective over the budget balls by repeated
/// linearization, restarting from `n_restarts` random boundary points and
/// keeping the best run. The objective trace of the returned run is
/// nondecreasing.
pub fn mse_max_attack(
    d: &Dataset,
    budget: &BudgetSpec,
    max_iters: usize,
    tol: f64,
    n_restarts: usize,
    seed: u64,
) -> Result<AttackResult> {
    if max_iters == 0 || n_restarts == 0 {
        return Err(Error::invalid("need max_iters >= 1 and n_restarts >= 1"));
    }
    if !(tol >= 0.0) {
        return Err(Error::invalid("tolerance must be >= 0"));
    }
    let fit = ls_fit(d)?;
    let (n, m, t) = (d.n(), d.m(), d.t());
    let obj = Objective { theta: fit.theta(), r: fit.r.clone(), n, m, t };
    let (rx, ru) = budget.radii(d);

    if rx == 0.0 && ru == 0.0 {
        return Ok(AttackResult {
            delta: PoisonDelta::zeros(n, m, t),
            objective_trace: vec![0.0],
            constraint_values: vec![0.0, 0.0],
            converged: true,
            iterations: 0,
            seed,
        });
    }

    let mut best: Option<(f64, PoisonDelta, Vec<f64>, bool, usize)> = None;
    for restart in 0..n_restarts {
        // Restart 0 starts from one exact step at the origin (gradient 2R);
        // later restarts start from random boundary points.
        let mut delta = if restart == 0 {
            boundary_step(&obj, &PoisonDelta::zeros(n, m, t), rx, ru)
        } else {
            let mut rand = PoisonDelta::gaussian_scaled(d, 1.0, 1.0, derive_seed(seed, restart as u64))?;
            rand.scale_to_radii(rx, ru);
            rand
        };
        let mut value = obj.value(&delta);
        let mut trace = vec![value];
        let mut converged = false;
        let mut iters = 1;
        for _ in 1..max_iters {
            let next = boundary_step(&obj, &delta, rx, ru);
            let next_value = obj.value(&next);
            iters += 1;
            if next_value < value {
                // Ascent is guaranteed in exact arithmetic; a numerical
                // decrease means we are at stationarity.
                converged = true;
                break;
            }
            let gain = next_value - value;
            delta = next;
            value = next_value;
            trace.push(value);
            if gain <= tol * (1.0 + value.abs()) {
                converged = true;
                break;
            }
        }
        if best.as_ref().map_or(true, |(b, ..)| value > *b) {
            best = Some((value, delta, trace, converged, iters));
        }
    }
    let (_, delta, trace, converged, iterations) = best.unwrap();
    let g0 = if d.x.norm() > 0.0 { delta.dx.norm() / d.x.norm() } else { 0.0 };
    let g1 = if d.u.norm() > 0.0 { delta.du.norm() / d.u.norm() } else { 0.0 };
    Ok(AttackResult {
        delta,
        objective_trace: trace,
        constraint_values: vec![g0, g1],
        converged,
        iterations,
        seed,
    })
}
