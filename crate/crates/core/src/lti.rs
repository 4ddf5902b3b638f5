//! Discrete-time LTI simulation: x_{t+1} = A x_t + B u_t + w_t with process
//! noise w_t ~ N(0, sigma_w) optionally confined to a bounded disturbance set.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::numerics::linalg::{numerical_rank, psd_factor};
use crate::numerics::rng::{seeded_rng, standard_normal_matrix};
use crate::{Matrix, Vector};

/// Admissible disturbance set for the process noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DisturbanceSet {
    /// All of R^n.
    Unbounded,
    /// Axis-aligned box, elementwise lower <= w <= upper.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Euclidean ball of the given radius centered at the origin.
    Ball { radius: f64 },
}

impl DisturbanceSet {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            DisturbanceSet::Unbounded => Ok(()),
            DisturbanceSet::Box { lower, upper } => {
                if lower.len() != n || upper.len() != n {
                    return Err(Error::dim(format!("box bounds must have length {n}")));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
                {
                    return Err(Error::invalid("box needs finite lower <= upper"));
                }
                Ok(())
            }
            DisturbanceSet::Ball { radius } => {
                if !radius.is_finite() || *radius < 0.0 {
                    return Err(Error::invalid("ball radius must be finite and >= 0"));
                }
                Ok(())
            }
        }
    }

    /// Membership with a small absolute slack to absorb roundoff.
    pub fn contains(&self, w: &Vector) -> bool {
        const SLACK: f64 = 1e-9;
        match self {
            DisturbanceSet::Unbounded => true,
            DisturbanceSet::Box { lower, upper } => w
                .iter()
                .enumerate()
                .all(|(i, &v)| v >= lower[i] - SLACK && v <= upper[i] + SLACK),
            DisturbanceSet::Ball { radius } => w.norm() <= radius + SLACK,
        }
    }

    /// Nearest point of the set (Euclidean projection).
    fn project(&self, w: &Vector) -> Vector {
        match self {
            DisturbanceSet::Unbounded => w.clone(),
            DisturbanceSet::Box { lower, upper } => {
                Vector::from_fn(w.len(), |i, _| w[i].clamp(lower[i], upper[i]))
            }
            DisturbanceSet::Ball { radius } => {
                let n = w.norm();
                if n <= *radius || n == 0.0 {
                    w.clone()
                } else {
                    w * (*radius / n)
                }
            }
        }
    }
}

/// System matrices, noise covariance, and the disturbance set.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    /// State transition, n x n.
    pub a: Matrix,
    /// Input map, n x m.
    pub b: Matrix,
    /// Process noise covariance, n x n PSD.
    pub sigma_w: Matrix,
    pub disturbance: DisturbanceSet,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, sigma_w: Matrix, disturbance: DisturbanceSet) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(Error::dim("A must be square and nonempty"));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dim(format!("B must be {n} x m with m >= 1")));
        }
        if sigma_w.shape() != (n, n) {
            return Err(Error::dim(format!("sigma_w must be {n} x {n}")));
        }
        ensure_finite("A", &a)?;
        ensure_finite("B", &b)?;
        ensure_finite("sigma_w", &sigma_w)?;
        psd_factor(&sigma_w, "sigma_w")?;
        disturbance.validate(n)?;
        Ok(Self { a, b, sigma_w, disturbance })
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// A simulated (or poisoned) trajectory: inputs `u` (m x T) and states `x`
/// (n x (T+1)), column t holding the value at time t.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub u: Matrix,
    pub x: Matrix,
}

impl Dataset {
    pub fn new(u: Matrix, x: Matrix) -> Result<Self> {
        if u.ncols() == 0 || u.nrows() == 0 {
            return Err(Error::dim("U must be m x T with m, T >= 1"));
        }
        if x.nrows() == 0 || x.ncols() != u.ncols() + 1 {
            return Err(Error::dim(format!(
                "X must be n x (T+1) = n x {}, got {} x {}",
                u.ncols() + 1,
                x.nrows(),
                x.ncols()
            )));
        }
        ensure_finite("U", &u)?;
        ensure_finite("X", &x)?;
        Ok(Self { u, x })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    /// Number of transitions T.
    pub fn t(&self) -> usize {
        self.u.ncols()
    }

    /// States x_0..x_{T-1}, n x T.
    pub fn x_minus(&self) -> Matrix {
        self.x.columns(0, self.t()).into_owned()
    }

    /// States x_1..x_T, n x T.
    pub fn x_plus(&self) -> Matrix {
        self.x.columns(1, self.t()).into_owned()
    }

    /// Stacked regressor [X_minus; U], (n+m) x T.
    pub fn psi_minus(&self) -> Matrix {
        let (n, m, t) = (self.n(), self.m(), self.t());
        let mut psi = Matrix::zeros(n + m, t);
        psi.view_mut((0, 0), (n, t)).copy_from(&self.x_minus());
        psi.view_mut((n, 0), (m, t)).copy_from(&self.u);
        psi
    }
}

/// Realized process noise of a simulation, n x T (column t = w_t).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRecord {
    pub w: Matrix,
}

fn draw_noise(
    l: &Matrix,
    set: &DisturbanceSet,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Vector {
    const MAX_REDRAWS: usize = 100;
    let n = l.nrows();
    let mut w = l * standard_normal_matrix(n, 1, rng).column(0);
    if matches!(set, DisturbanceSet::Unbounded) {
        return w;
    }
    for _ in 0..MAX_REDRAWS {
        if set.contains(&w) {
            return w;
        }
        w = l * standard_normal_matrix(n, 1, rng).column(0);
    }
    set.project(&w)
}

/// Simulates the system under the input sequence `u` (m x T) from initial
/// state `x0`, drawing noise from the given seed. Returns the trajectory and
/// the realized noise.
pub fn simulate(sys: &LtiSystem, u: &Matrix, x0: &Vector, seed: u64) -> Result<(Dataset, NoiseRecord)> {
    let (n, m) = (sys.n(), sys.m());
    if u.nrows() != m {
        return Err(Error::dim(format!("U has {} rows, system expects {m}", u.nrows())));
    }
    if u.ncols() == 0 {
        return Err(Error::dim("U must have at least one column"));
    }
    if x0.len() != n {
        return Err(Error::dim(format!("x0 has length {}, expected {n}", x0.len())));
    }
    ensure_finite("U", u)?;
    let t = u.ncols();
    let l = psd_factor(&sys.sigma_w, "sigma_w")?;
    let mut rng = seeded_rng(seed);
    let mut x = Matrix::zeros(n, t + 1);
    let mut w = Matrix::zeros(n, t);
    x.column_mut(0).copy_from(x0);
    for k in 0..t {
        let wk = draw_noise(&l, &sys.disturbance, &mut rng);
        let xk = x.column(k).into_owned();
        let next = &sys.a * xk + &sys.b * u.column(k) + &wk;
        x.column_mut(k + 1).copy_from(&next);
        w.column_mut(k).copy_from(&wk);
    }
    ensure_finite("X", &x)?;
    Ok((Dataset::new(u.clone(), x)?, NoiseRecord { w }))
}

/// Like [`simulate`], but discards the first `burn_in` transitions so the
/// retained trajectory starts from an (approximately) stationary state.
/// `u` must have more than `burn_in` columns.
pub fn simulate_with_burn_in(
    sys: &LtiSystem,
    u: &Matrix,
    x0: &Vector,
    burn_in: usize,
    seed: u64,
) -> Result<(Dataset, NoiseRecord)> {
    if u.ncols() <= burn_in {
        return Err(Error::dim(format!(
            "burn-in {burn_in} leaves no transitions out of {}",
            u.ncols()
        )));
    }
    let (full, noise) = simulate(sys, u, x0, seed)?;
    let t = full.t() - burn_in;
    let d = Dataset::new(
        full.u.columns(burn_in, t).into_owned(),
        full.x.columns(burn_in, t + 1).into_owned(),
    )?;
    let w = noise.w.columns(burn_in, t).into_owned();
    Ok((d, NoiseRecord { w }))
}

/// iid Gaussian exploration input, m x T with columns ~ N(0, sigma_u).
pub fn gaussian_input(m: usize, t: usize, sigma_u: &Matrix, seed: u64) -> Result<Matrix> {
    crate::numerics::rng::rng_gaussian(m, t, sigma_u, seed)
}

/// Whether the stacked regressor [X_minus; U] has full row rank n+m, the
/// identifiability condition for the least-squares fit.
pub fn check_rank_condition(d: &Dataset) -> bool {
    let psi = d.psi_minus();
    numerical_rank(&psi, None) == d.n() + d.m()
}

/// Scalar reference system x_{t+1} = 0.7 x_t + 0.5 u_t + w_t with the given
/// noise standard deviation.
pub fn example_scalar_with_noise(sigma_w: f64) -> LtiSystem {
    LtiSystem::new(
        Matrix::from_element(1, 1, 0.7),
        Matrix::from_element(1, 1, 0.5),
        Matrix::from_element(1, 1, sigma_w * sigma_w),
        DisturbanceSet::Unbounded,
    )
    .expect("scalar example is valid")
}

/// Scalar reference system with unit noise variance.
pub fn example_scalar() -> LtiSystem {
    example_scalar_with_noise(1.0)
}

/// Fourth-order benchmark plant: the flexible-transmission model with
/// discrete-time characteristic polynomial
/// z^4 - 1.41833 z^3 + 1.58939 z^2 - 1.31608 z + 0.88642
/// in controller canonical form.  All poles lie inside the unit circle
/// (spectral radius about 0.976), so trajectories stay bounded.  The
/// transfer-function numerator only shapes an output map that the
/// state-space identification problem never sees, so it is not encoded
/// here.  Noise covariance is 0.01 I (sigma_w = 0.1 per state).
pub fn example_benchmark_plant() -> LtiSystem {
    let n = 4;
    let mut a = Matrix::zeros(n, n);
    // First row carries the negated characteristic coefficients.
    a[(0, 0)] = 1.41833;
    a[(0, 1)] = -1.58939;
    a[(0, 2)] = 1.31608;
    a[(0, 3)] = -0.88642;
    for i in 1..n {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = Matrix::zeros(n, 1);
    b[(0, 0)] = 1.0;
    LtiSystem::new(a, b, Matrix::identity(n, n) * 0.01, DisturbanceSet::Unbounded)
        .expect("benchmark plant is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::numerics::rng::rng_gaussian;

    fn scalar_input(t: usize, seed: u64) -> Matrix {
        gaussian_input(1, t, &Matrix::identity(1, 1), seed).unwrap()
    }

    #[test]
    fn trajectory_satisfies_state_recursion() {
        let sys = example_scalar();
        let u = scalar_input(40, 1);
        let (d, noise) = simulate(&sys, &u, &Vector::zeros(1), 2).unwrap();
        let lhs = d.x_plus();
        let rhs = &sys.a * d.x_minus() + &sys.b * &d.u + &noise.w;
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        assert_eq!(d.t(), 40);
        assert_eq!(noise.w.ncols(), 40);
    }

    #[test]
    fn zero_noise_trajectory_is_deterministic() {
        let sys = LtiSystem::new(
            Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]),
            Matrix::from_row_slice(2, 1, &[1.0, 0.5]),
            Matrix::zeros(2, 2),
            DisturbanceSet::Unbounded,
        )
        .unwrap();
        let u = Matrix::from_row_slice(1, 3, &[1.0, -1.0, 2.0]);
        let x0 = Vector::from_vec(vec![1.0, 0.0]);
        let (d, noise) = simulate(&sys, &u, &x0, 99).unwrap();
        assert_eq!(noise.w, Matrix::zeros(2, 3));
        let mut x = x0.clone();
        for k in 0..3 {
            x = &sys.a * x + &sys.b * u.column(k);
            assert_relative_eq!(d.x.column(k + 1).into_owned(), x, epsilon = 1e-14);
        }
    }

    #[test]
    fn same_seed_reproduces_trajectory() {
        let sys = example_scalar();
        let u = scalar_input(25, 3);
        let (d1, w1) = simulate(&sys, &u, &Vector::zeros(1), 7).unwrap();
        let (d2, w2) = simulate(&sys, &u, &Vector::zeros(1), 7).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(w1, w2);
        let (d3, _) = simulate(&sys, &u, &Vector::zeros(1), 8).unwrap();
        assert_ne!(d1, d3);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let sys = example_scalar();
        let u2 = Matrix::zeros(2, 10);
        assert!(simulate(&sys, &u2, &Vector::zeros(1), 0).is_err());
        let u = scalar_input(10, 0);
        assert!(simulate(&sys, &u, &Vector::zeros(2), 0).is_err());
        assert!(Dataset::new(Matrix::zeros(1, 10), Matrix::zeros(1, 10)).is_err());
    }

    #[test]
    fn bounded_disturbances_stay_in_set() {
        let ball = LtiSystem::new(
            Matrix::from_element(1, 1, 0.7),
            Matrix::from_element(1, 1, 0.5),
            Matrix::from_element(1, 1, 1.0),
            DisturbanceSet::Ball { radius: 0.8 },
        )
        .unwrap();
        let u = scalar_input(200, 5);
        let (_, noise) = simulate(&ball, &u, &Vector::zeros(1), 6).unwrap();
        for c in noise.w.column_iter() {
            assert!(c.norm() <= 0.8 + 1e-9);
        }

        let boxed = LtiSystem::new(
            Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]),
            Matrix::from_row_slice(2, 1, &[1.0, 1.0]),
            Matrix::identity(2, 2),
            DisturbanceSet::Box { lower: vec![-0.5, -1.0], upper: vec![0.5, 1.0] },
        )
        .unwrap();
        let (_, noise) = simulate(&boxed, &rng_gaussian(1, 300, &Matrix::identity(1, 1), 1).unwrap(),
            &Vector::zeros(2), 2).unwrap();
        for c in noise.w.column_iter() {
            assert!(c[0].abs() <= 0.5 + 1e-9 && c[1].abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn burn_in_drops_prefix() {
        let sys = example_scalar();
        let u = scalar_input(50, 11);
        let (full, _) = simulate(&sys, &u, &Vector::zeros(1), 12).unwrap();
        let (trimmed, noise) = simulate_with_burn_in(&sys, &u, &Vector::zeros(1), 20, 12).unwrap();
        assert_eq!(trimmed.t(), 30);
        assert_eq!(noise.w.ncols(), 30);
        assert_eq!(trimmed.x.column(0), full.x.column(20));
        assert_eq!(trimmed.u.column(0), full.u.column(20));
        assert!(simulate_with_burn_in(&sys, &u, &Vector::zeros(1), 50, 12).is_err());
    }

    #[test]
    fn rank_condition_holds_for_exciting_input() {
        let sys = example_scalar();
        let u = scalar_input(30, 21);
        let (d, _) = simulate(&sys, &u, &Vector::zeros(1), 22).unwrap();
        assert!(check_rank_condition(&d));
        // Zero input makes the U block zero: rank deficit.
        let (d0, _) = simulate(&sys, &Matrix::zeros(1, 30), &Vector::zeros(1), 23).unwrap();
        assert!(!check_rank_condition(&d0));
    }

    #[test]
    fn scalar_example_parameters() {
        let sys = example_scalar_with_noise(0.1);
        assert_eq!(sys.a[(0, 0)], 0.7);
        assert_eq!(sys.b[(0, 0)], 0.5);
        assert_relative_eq!(sys.sigma_w[(0, 0)], 0.01, epsilon = 1e-15);
        assert_eq!(example_scalar().sigma_w[(0, 0)], 1.0);
    }

    #[test]
    fn benchmark_plant_characteristic_polynomial() {
        let sys = example_benchmark_plant();
        assert_eq!(sys.n(), 4);
        assert_eq!(sys.m(), 1);
        // Controller canonical form: the first row of A holds the negated
        // characteristic coefficients, so every eigenvalue of A must be a
        // root of the printed quartic.
        let poly = |z: nalgebra::Complex<f64>| {
            z.powu(4) - 1.41833 * z.powu(3) + 1.58939 * z.powu(2) - 1.31608 * z + 0.88642
        };
        for lam in sys.a.complex_eigenvalues().iter() {
            assert!(poly(*lam).norm() < 1e-9, "eigenvalue {lam} is not a root");
        }
    }

    #[test]
    fn benchmark_plant_is_stable_and_controllable() {
        let sys = example_benchmark_plant();
        let rho = sys
            .a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        assert!(rho < 1.0, "spectral radius {rho} must be inside the unit circle");
        assert!(rho > 0.9, "benchmark poles are known to be lightly damped");
        // Controllability: [B, AB, A^2 B, A^3 B] has full rank.
        let mut ctrb = Matrix::zeros(4, 4);
        let mut col = sys.b.clone();
        for j in 0..4 {
            ctrb.view_mut((0, j), (4, 1)).copy_from(&col);
            col = &sys.a * &col;
        }
        assert_eq!(ctrb.rank(1e-10), 4);
    }
}
