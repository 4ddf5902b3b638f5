//! Stealthy attack: maximize the least-squares shift subject to staying
//! statistically close to the clean data.
//!
//! maximize    sigma_max(theta_tilde - theta_clean)
//! subject to  g_i <= delta_i,  i = 0..s+3
//!
//! Solved by projected gradient ascent on an exact penalty: the two budget
//! constraints (g_0, g_1) are handled by projection onto their Frobenius
//! balls, the statistical constraints by a hinge penalty whose weight doubles
//! whenever an iterate crosses the activation levels. The hinge can activate
//! at a configurable fraction of the statistical budgets (see
//! [`StealthyOptions::stat_margin`]) to keep solutions off the constraint
//! boundary; feasibility is always judged against the full budgets.
//! Backtracking line search with an Armijo condition; gradient at tied top
//! singular values is treated as a subgradient. The best feasible iterate
//! ever seen is returned, and the all-zero delta (always feasible) seeds that
//! record, so a feasible problem never errors.

use crate::attacks::grad::{AttackContext, PoisonGradient};
use crate::attacks::{AttackResult, PoisonDelta, StealthyConstraintSpec};
use crate::error::{Error, Result};
use crate::lti::Dataset;
use crate::numerics::rng::derive_seed;

#[derive(Debug, Clone, Copy)]
pub struct StealthyOptions {
    /// Iteration cap per restart.
    pub max_iters: usize,
    /// Number of random restarts.
    pub n_restarts: usize,
    /// Line-search step floor relative to the initial step.
    pub min_step_ratio: f64,
    /// Fraction of each statistical budget (constraints i >= 2) at which the
    /// ascent penalty activates. The returned solution is always checked
    /// against the full budgets; a margin below 1 merely steers the search
    /// away from the boundary. The clean baselines the constraints normalize
    /// by are themselves noisy, so a solution that saturates a statistical
    /// budget sits at the detector's acceptance edge roughly whenever the
    /// baseline does; keeping the search interior makes the realized test
    /// statistics robust to that sampling variability.
    pub stat_margin: f64,
    pub seed: u64,
}

impl Default for StealthyOptions {
    fn default() -> Self {
        Self { max_iters: 300, n_restarts: 10, min_step_ratio: 1e-10, stat_margin: 0.35, seed: 0 }
    }
}

const FEAS_SLACK: f64 = 1e-6;
const ARMIJO: f64 = 1e-4;

struct Best {
    value: f64,
    delta: PoisonDelta,
    constraints: Vec<f64>,
}

fn feasible(g: &[f64], levels: &[f64]) -> bool {
    g.iter().zip(levels).all(|(gi, di)| *gi <= di + FEAS_SLACK)
}

/// Penalized objective: f - mu * sum_i max(0, g_i - margin * delta_i) over
/// the non-projected constraints (i >= 2).
fn penalized(f: f64, g: &[f64], levels: &[f64], margin: f64, mu: f64) -> f64 {
    let mut pen = 0.0;
    for i in 2..g.len() {
        pen += (g[i] - margin * levels[i]).max(0.0);
    }
    f - mu * pen
}

fn project(delta: &mut PoisonDelta, rx: f64, ru: f64) {
    let nx = delta.dx.norm();
    if nx > rx {
        if rx == 0.0 {
            delta.dx.fill(0.0);
        } else {
            delta.dx *= rx / nx;
        }
    }
    let nu = delta.du.norm();
    if nu > ru {
        if ru == 0.0 {
            delta.du.fill(0.0);
        } else {
            delta.du *= ru / nu;
        }
    }
}

/// Synthesizes a stealthy poisoning signal for the dataset. Errors with
/// [`Error::Infeasible`] only if no feasible point is found (the zero delta
/// is checked first, so this indicates a degenerate constraint evaluation
/// rather than an over-tight budget).
pub fn stealthy_attack(
    d: &Dataset,
    spec: &StealthyConstraintSpec,
    opts: &StealthyOptions,
) -> Result<AttackResult> {
    if opts.max_iters == 0 || opts.n_restarts == 0 {
        return Err(Error::invalid("need max_iters >= 1 and n_restarts >= 1"));
    }
    if !(opts.stat_margin > 0.0 && opts.stat_margin <= 1.0) {
        return Err(Error::invalid("stat_margin must lie in (0, 1]"));
    }
    let margin = opts.stat_margin;
    let ctx = AttackContext::new(d, spec.s)?;
    let (n, m, t) = ctx.dims();
    let levels = &spec.deltas;
    let rx = levels[0] * d.x.norm();
    let ru = levels[1] * d.u.norm();

    // The zero delta is feasible for any nonnegative levels; it seeds the
    // incumbent so the solver can only improve on it.
    let zero = PoisonDelta::zeros(n, m, t);
    let st0 = ctx.evaluate(&zero)?;
    let g0 = ctx.constraints_of(&st0, &zero)?;
    let mut best: Option<Best> = None;
    let mut infeasible_record: Option<(f64, Vec<f64>)> = None;
    if feasible(&g0, levels) {
        best = Some(Best { value: ctx.objective_of(&st0), delta: zero.clone(), constraints: g0 });
    } else {
        let worst = worst_violation(&g0, levels);
        infeasible_record = Some((worst, g0));
    }

    let mut total_iters = 0usize;
    let mut best_trace: Vec<f64> = vec![best.as_ref().map_or(0.0, |b| b.value)];

    for restart in 0..opts.n_restarts {
        // Start at 10% of the budget radii (or at zero when both budgets are
        // zero, where the feasible set is a single point).
        let mut delta =
            PoisonDelta::gaussian_scaled(d, 1.0, 1.0, derive_seed(opts.seed, restart as u64))?;
        delta.scale_to_radii(0.1 * rx, 0.1 * ru);
        let mut st = ctx.evaluate(&delta)?;
        let mut g = ctx.constraints_of(&st, &delta)?;
        let mut f = ctx.objective_of(&st);
        let mut mu = 1.0f64;
        let mut trace = vec![f];
        let mut improved_best = false;

        // Step scale relative to the data so the first trials are meaningful
        // regardless of the trajectory magnitude.
        let budget_scale = rx.max(ru).max(1e-12 * d.x.norm().max(d.u.norm()));
        let mut step: Option<f64> = None;

        for _ in 0..opts.max_iters {
            total_iters += 1;
            if feasible(&g, levels) {
                if best.as_ref().map_or(true, |b| f > b.value) {
                    best = Some(Best { value: f, delta: delta.clone(), constraints: g.clone() });
                    improved_best = true;
                }
            } else {
                let worst = worst_violation(&g, levels);
                if infeasible_record.as_ref().map_or(true, |(w, _)| worst < *w) {
                    infeasible_record = Some((worst, g.clone()));
                }
            }
            // Escalate the penalty weight whenever an iterate crosses the
            // (margin-scaled) activation levels, so the hinge eventually
            // dominates the ascent direction.
            if (2..g.len()).any(|i| g[i] > margin * levels[i]) {
                mu = (mu * 2.0).min(1e12);
            }

            // Ascent direction of the penalized objective.
            let (fg, _, _) = ctx.objective_grad_of(&st);
            let cgs = ctx.constraint_grads_of(&st, &delta)?;
            let mut dir = fg;
            for i in 2..g.len() {
                if g[i] > margin * levels[i] {
                    axpy(&mut dir, -mu, &cgs[i]);
                }
            }
            let dir_norm = (dir.grad_dx.norm_squared() + dir.grad_du.norm_squared()).sqrt();
            if dir_norm == 0.0 {
                break;
            }
            let alpha0 = step.unwrap_or(0.5 * budget_scale / dir_norm);
            let cur_pen = penalized(f, &g, levels, margin, mu);
            let mut alpha = alpha0;
            let mut accepted = false;
            for _ in 0..40 {
                let mut cand = PoisonDelta {
                    dx: &delta.dx + &dir.grad_dx * alpha,
                    du: &delta.du + &dir.grad_du * alpha,
                };
                project(&mut cand, rx, ru);
                let cand_st = ctx.evaluate(&cand)?;
                let cand_g = ctx.constraints_of(&cand_st, &cand)?;
                let cand_f = ctx.objective_of(&cand_st);
                let gain_needed = ARMIJO
                    * (dir.grad_dx.dot(&(&cand.dx - &delta.dx))
                        + dir.grad_du.dot(&(&cand.du - &delta.du)));
                if penalized(cand_f, &cand_g, levels, margin, mu) >= cur_pen + gain_needed
                    && gain_needed > 0.0
                {
                    delta = cand;
                    st = cand_st;
                    g = cand_g;
                    f = cand_f;
                    step = Some(alpha * 2.0);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
                if alpha < opts.min_step_ratio * alpha0 {
                    break;
                }
            }
            if !accepted {
                break;
            }
            trace.push(f);
        }
        if improved_best {
            best_trace = trace;
        }
    }

    match best {
        Some(b) => Ok(AttackResult {
            delta: b.delta,
            objective_trace: best_trace,
            constraint_values: b.constraints,
            converged: true,
            iterations: total_iters,
            seed: opts.seed,
        }),
        None => {
            let (worst_violation, constraint_values) =
                infeasible_record.unwrap_or((f64::INFINITY, Vec::new()));
            Err(Error::Infeasible { constraint_values, worst_violation })
        }
    }
}

fn worst_violation(g: &[f64], levels: &[f64]) -> f64 {
    g.iter()
        .zip(levels)
        .map(|(gi, di)| gi - di)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn axpy(acc: &mut PoisonGradient, c: f64, other: &PoisonGradient) {
    acc.grad_dx.zip_apply(&other.grad_dx, |o, v| *o += c * v);
    acc.grad_du.zip_apply(&other.grad_du, |o, v| *o += c * v);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{constraint_values, StealthyConstraintSpec};
    use crate::lti::{example_scalar, gaussian_input, simulate};
    use crate::numerics::rng::derive_seed;
    use crate::{Matrix, Vector};

    fn dataset(t: usize, seed: u64) -> Dataset {
        let sys = example_scalar();
        let u = gaussian_input(1, t, &Matrix::identity(1, 1), derive_seed(seed, 0)).unwrap();
        simulate(&sys, &u, &Vector::zeros(1), derive_seed(seed, 1)).unwrap().0
    }

    #[test]
    fn zero_levels_return_zero_delta() {
        let d = dataset(50, 1);
        let spec = StealthyConstraintSpec::uniform(0.0, 2).unwrap();
        let opts = StealthyOptions { max_iters: 30, n_restarts: 2, seed: 3, ..Default::default() };
        let res = stealthy_attack(&d, &spec, &opts).unwrap();
        assert_eq!(res.delta.dx.norm(), 0.0);
        assert_eq!(res.delta.du.norm(), 0.0);
        assert!(res.converged);
    }

    #[test]
    fn solution_is_feasible_and_nontrivial() {
        let d = dataset(120, 2);
        let spec = StealthyConstraintSpec::uniform(0.05, 2).unwrap();
        let opts = StealthyOptions { max_iters: 150, n_restarts: 3, seed: 5, ..Default::default() };
        let res = stealthy_attack(&d, &spec, &opts).unwrap();
        for (i, (g, lim)) in res.constraint_values.iter().zip(&spec.deltas).enumerate() {
            assert!(g <= &(lim + 1e-6), "g{i} = {g} exceeds {lim}");
        }
        // Recomputing the constraints from scratch agrees.
        let cv = constraint_values(&d, &res.delta, 2).unwrap();
        for (a, b) in res.constraint_values.iter().zip(&cv.values) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(*res.objective_trace.last().unwrap() >= res.objective_trace[0]);
        assert!(res.delta.du.norm() > 0.0 || res.delta.dx.norm() > 0.0);
    }

    #[test]
    fn same_seed_reproduces() {
        let d = dataset(80, 7);
        let spec = StealthyConstraintSpec::uniform(0.05, 1).unwrap();
        let opts = StealthyOptions { max_iters: 60, n_restarts: 2, seed: 9, ..Default::default() };
        let a = stealthy_attack(&d, &spec, &opts).unwrap();
        let b = stealthy_attack(&d, &spec, &opts).unwrap();
        assert_eq!(a.delta, b.delta);
    }
}
