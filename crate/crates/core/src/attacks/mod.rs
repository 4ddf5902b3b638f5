//! Poisoning attack synthesis.
//!
//! A poisoning signal perturbs the recorded trajectory additively: the
//! defender sees (U + dU, X + dX) instead of (U, X). Attacks range from
//! oblivious random noise to constraint-aware gradient optimization of the
//! least-squares shift.

mod grad;
mod mse_max;
mod stealthy;

pub use grad::{
    constraint_gradients, constraint_values, objective_gradient, AttackContext, ConstraintValues,
    ObjectiveGradient, PoisonGradient,
};
pub use mse_max::mse_max_attack;
pub use stealthy::{stealthy_attack, StealthyOptions};

use crate::error::{ensure_finite, Error, Result};
use crate::lti::Dataset;
use crate::numerics::rng::{derive_seed, seeded_rng, standard_normal_matrix};
use crate::Matrix;
use rand::Rng;

/// Additive perturbation of a dataset: `du` is m x T, `dx` is n x (T+1).
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonDelta {
    pub du: Matrix,
    pub dx: Matrix,
}

impl PoisonDelta {
    pub fn new(du: Matrix, dx: Matrix) -> Result<Self> {
        if du.ncols() == 0 || dx.ncols() != du.ncols() + 1 {
            return Err(Error::dim(format!(
                "delta shapes must be m x T and n x (T+1), got {}x{} and {}x{}",
                du.nrows(),
                du.ncols(),
                dx.nrows(),
                dx.ncols()
            )));
        }
        ensure_finite("dU", &du)?;
        ensure_finite("dX", &dx)?;
        Ok(Self { du, dx })
    }

    /// All-zero perturbation for an n-state, m-input, T-transition dataset.
    pub fn zeros(n: usize, m: usize, t: usize) -> Self {
        Self { du: Matrix::zeros(m, t), dx: Matrix::zeros(n, t + 1) }
    }

    /// Number of transitions T.
    pub fn t(&self) -> usize {
        self.du.ncols()
    }

    /// State perturbation columns 0..T (aligned with X_minus).
    pub fn dx_minus(&self) -> Matrix {
        self.dx.columns(0, self.t()).into_owned()
    }

    /// State perturbation columns 1..T+1 (aligned with X_plus).
    pub fn dx_plus(&self) -> Matrix {
        self.dx.columns(1, self.t()).into_owned()
    }

    /// Stacked regressor perturbation [dX_minus; dU], (n+m) x T.
    pub fn d_psi(&self) -> Matrix {
        let (n, m, t) = (self.dx.nrows(), self.du.nrows(), self.t());
        let mut d = Matrix::zeros(n + m, t);
        d.view_mut((0, 0), (n, t)).copy_from(&self.dx_minus());
        d.view_mut((n, 0), (m, t)).copy_from(&self.du);
        d
    }

    /// The poisoned dataset the defender observes.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if self.du.shape() != d.u.shape() || self.dx.shape() != d.x.shape() {
            return Err(Error::dim("delta does not match dataset dimensions"));
        }
        Dataset::new(&d.u + &self.du, &d.x + &self.dx)
    }

    /// Rescales each block to the given Frobenius radius (zero blocks stay
    /// zero; a zero radius zeroes the block).
    pub fn scale_to_radii(&mut self, rx: f64, ru: f64) {
        let nx = self.dx.norm();
        if rx == 0.0 {
            self.dx.fill(0.0);
        } else if nx > 0.0 {
            self.dx *= rx / nx;
        }
        let nu = self.du.norm();
        if ru == 0.0 {
            self.du.fill(0.0);
        } else if nu > 0.0 {
            self.du *= ru / nu;
        }
    }

    /// Random Gaussian perturbation scaled to `rel_x * ||X||_F` and
    /// `rel_u * ||U||_F`.
    pub fn gaussian_scaled(d: &Dataset, rel_x: f64, rel_u: f64, seed: u64) -> Result<Self> {
        if rel_x < 0.0 || rel_u < 0.0 || !rel_x.is_finite() || !rel_u.is_finite() {
            return Err(Error::invalid("relative scales must be finite and >= 0"));
        }
        let mut rng = seeded_rng(seed);
        let mut delta = Self {
            dx: standard_normal_matrix(d.n(), d.t() + 1, &mut rng),
            du: standard_normal_matrix(d.m(), d.t(), &mut rng),
        };
        delta.scale_to_radii(rel_x * d.x.norm(), rel_u * d.u.norm());
        Ok(delta)
    }
}

/// Relative Frobenius budgets for the two perturbation blocks:
/// ||dX||_F <= delta_x ||X||_F and ||dU||_F <= delta_u ||U||_F.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSpec {
    pub delta_x: f64,
    pub delta_u: f64,
}

impl BudgetSpec {
    pub fn new(delta_x: f64, delta_u: f64) -> Result<Self> {
        if !(delta_x >= 0.0 && delta_u >= 0.0) || !delta_x.is_finite() || !delta_u.is_finite() {
            return Err(Error::invalid("budgets must be finite and >= 0"));
        }
        Ok(Self { delta_x, delta_u })
    }

    /// Absolute Frobenius radii for a concrete dataset.
    pub fn radii(&self, d: &Dataset) -> (f64, f64) {
        (self.delta_x * d.x.norm(), self.delta_u * d.u.norm())
    }
}

/// Constraint levels for the stealthy attack: slot 0 is the state budget,
/// slot 1 the input budget, slot 2 the residual-energy ratio, slot 3 the
/// model-fit statistic ratio, slots 4..4+s the lag-1..s correlation ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct StealthyConstraintSpec {
    pub deltas: Vec<f64>,
    pub s: usize,
}

impl StealthyConstraintSpec {
    pub fn new(deltas: Vec<f64>, s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::invalid("need at least one correlation lag"));
        }
        if deltas.len() != s + 4 {
            return Err(Error::dim(format!(
                "expected {} constraint levels for s = {s}, got {}",
                s + 4,
                deltas.len()
            )));
        }
        if deltas.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("constraint levels must be finite and >= 0"));
        }
        Ok(Self { deltas, s })
    }

    /// All s+4 levels set to the same value.
    pub fn uniform(delta: f64, s: usize) -> Result<Self> {
        Self::new(vec![delta; s + 4], s)
    }
}

/// Outcome of an attack synthesis run.
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub delta: PoisonDelta,
    /// Objective value per (accepted) iteration; nondecreasing for the
    /// MSE-maximizing attack.
    pub objective_trace: Vec<f64>,
    /// Constraint values g_i at the returned solution.
    pub constraint_values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
}

/// Candidate distribution for the oblivious random attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackDist {
    Gaussian,
    Uniform,
}

/// Oblivious attack: samples `n_candidates` random perturbations on the
/// budget boundary and keeps the one maximizing the refit residual MSE.
/// Needs no knowledge of the system beyond the dataset dimensions and norms.
pub fn oblivious_random(
    d: &Dataset,
    budget: &BudgetSpec,
    dist: AttackDist,
    n_candidates: usize,
    seed: u64,
) -> Result<AttackResult> {
    if n_candidates == 0 {
        return Err(Error::invalid("need at least one candidate"));
    }
    let (rx, ru) = budget.radii(d);
    let (n, m, t) = (d.n(), d.m(), d.t());
    let mut best: Option<(f64, PoisonDelta)> = None;
    let mut trace = Vec::with_capacity(n_candidates);
    for k in 0..n_candidates {
        let mut rng = seeded_rng(derive_seed(seed, k as u64));
        let mut delta = match dist {
            AttackDist::Gaussian => PoisonDelta {
                dx: standard_normal_matrix(n, t + 1, &mut rng),
                du: standard_normal_matrix(m, t, &mut rng),
            },
            AttackDist::Uniform => PoisonDelta {
                dx: Matrix::from_fn(n, t + 1, |_, _| rng.random_range(-1.0..1.0)),
                du: Matrix::from_fn(m, t, |_, _| rng.random_range(-1.0..1.0)),
            },
        };
        delta.scale_to_radii(rx, ru);
        let poisoned = delta.apply(d)?;
        let mse = crate::regression::ls_fit(&poisoned)?.mse;
        if best.as_ref().map_or(true, |(b, _)| mse > *b) {
            best = Some((mse, delta));
        }
        trace.push(best.as_ref().unwrap().0);
    }
    let (_, delta) = best.unwrap();
    let g0 = if d.x.norm() > 0.0 { delta.dx.norm() / d.x.norm() } else { 0.0 };
    let g1 = if d.u.norm() > 0.0 { delta.du.norm() / d.u.norm() } else { 0.0 };
    Ok(AttackResult {
        delta,
        objective_trace: trace,
        constraint_values: vec![g0, g1],
        converged: true,
        iterations: n_candidates,
        seed,
    })
}

/// Input-indistinguishable attack: replaces the recorded input with a fresh
/// draw from the nominal input law, so the poisoned input is exactly
/// distributed like the clean one. States are untouched.
pub fn indistinguishable_input(d: &Dataset, sigma_u: &Matrix, seed: u64) -> Result<PoisonDelta> {
    let fresh = crate::numerics::rng::rng_gaussian(d.m(), d.t(), sigma_u, seed)?;
    let du = &fresh - &d.u;
    Ok(PoisonDelta { du, dx: Matrix::zeros(d.n(), d.t() + 1) })
}

/// Frobenius norms (||dX||_F, ||dU||_F) of a delta.
pub fn delta_norms(delta: &PoisonDelta) -> (f64, f64) {
    (delta.dx.norm(), delta.du.norm())
}
