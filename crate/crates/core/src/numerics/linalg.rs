//! SVD-backed matrix routines shared by the whole crate.

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Default relative singular-value cutoff: `max(rows, cols) * eps`, the usual
/// LAPACK-style choice. The effective absolute threshold is `tol * sigma_max`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Largest singular value; 0 for an empty matrix.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Moore-Penrose pseudoinverse with singular values below `tol * sigma_max`
/// treated as zero. `tol = None` uses [`default_rank_tol`].
pub fn pinv(m: &Matrix, tol: Option<f64>) -> Matrix {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Matrix::zeros(cols, rows);
    }
    let tol = tol.unwrap_or_else(|| default_rank_tol(rows, cols));
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let smax = svd.singular_values.max();
    let cut = tol * smax;
    let k = svd.singular_values.len();
    let mut sigma_inv = Matrix::zeros(k, k);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > cut && s > 0.0 {
            sigma_inv[(i, i)] = 1.0 / s;
        }
    }
    vt.transpose() * sigma_inv * u.transpose()
}

/// Number of singular values above `tol * sigma_max`.
pub fn numerical_rank(m: &Matrix, tol: Option<f64>) -> usize {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return 0;
    }
    let tol = tol.unwrap_or_else(|| default_rank_tol(rows, cols));
    let sv = singular_values(m);
    let smax = sv[0];
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Matrix exponential of a square matrix (Padé approximation with scaling and
/// squaring).
pub fn expm(m: &Matrix) -> Result<Matrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(format!(
            "expm needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.clone().exp())
}

/// Eigenvalues of a symmetric PSD matrix, clamped at zero. Errors if `m` is
/// meaningfully asymmetric or has an eigenvalue below `-tol * max(|eig|)`.
pub fn psd_eigenvalues(m: &Matrix, ctx: &str) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(format!("{ctx}: not square")));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1e-300);
    if asym > 1e-8 * scale {
        return Err(Error::NotPsd(format!("{ctx}: asymmetry {asym:.3e}")));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eigs = sym.symmetric_eigen().eigenvalues;
    let max = eigs.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    let tol = 1e-10 * max.max(1.0e-300);
    let mut out = Vec::with_capacity(eigs.len());
    for &e in eigs.iter() {
        if e < -tol {
            return Err(Error::NotPsd(format!("{ctx}: eigenvalue {e:.3e}")));
        }
        out.push(e.max(0.0));
    }
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(out)
}

/// Factor `L` of a symmetric PSD matrix with `L L^T = m`: Cholesky when
/// positive definite, symmetric eigendecomposition otherwise.
pub fn psd_factor(m: &Matrix, ctx: &str) -> Result<Matrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(format!("{ctx}: not square")));
    }
    let sym = (m + m.transpose()) * 0.5;
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    let tol = 1e-10 * max.max(1e-300);
    let n = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        let e = eig.eigenvalues[j];
        if e < -tol {
            return Err(Error::NotPsd(format!("{ctx}: eigenvalue {e:.3e}")));
        }
        let s = e.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(s);
    }
    Ok(scaled)
}

/// Column-major vectorization of a matrix.
pub fn vec_col(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_col`]: reshape a length rows*cols vector into a matrix.
pub fn unvec_col(v: &Vector, rows: usize, cols: usize) -> Matrix {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    Matrix::from_column_slice(rows, cols, v.as_slice())
}

/// Orthonormal basis of R^p whose first vector is `v1 / ||v1||`: Gram-Schmidt
/// over `[v1, e_1, e_2, ...]`, dropping the standard vector that becomes
/// numerically dependent. Errors on a zero anchor.
pub fn orthonormal_completion(v1: &Vector) -> Result<Vec<Vector>> {
    let p = v1.len();
    let norm = v1.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate("zero anchor vector for basis completion".into()));
    }
    let mut basis: Vec<Vector> = vec![v1 / norm];
    for j in 0..p {
        if basis.len() == p {
            break;
        }
        let mut cand = Vector::zeros(p);
        cand[j] = 1.0;
        for b in &basis {
            let c = b.dot(&cand);
            cand -= b * c;
        }
        // Re-orthogonalize once; plain GS loses orthogonality near dependence.
        for b in &basis {
            let c = b.dot(&cand);
            cand -= b * c;
        }
        let n = cand.norm();
        if n > 1e-8 {
            basis.push(cand / n);
        }
    }
    if basis.len() != p {
        return Err(Error::Degenerate("basis completion failed".into()));
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::numerics::rng::{rng_gaussian, seeded_rng};
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        rng_gaussian(rows, cols, &Matrix::identity(rows, rows), seed).unwrap()
    }

    #[test]
    fn pinv_of_identity_is_identity() {
        let i = Matrix::identity(4, 4);
        assert_relative_eq!(pinv(&i, None), i, epsilon = 1e-12);
    }

    #[test]
    fn pinv_satisfies_penrose_conditions() {
        for (rows, cols, seed) in [(3usize, 7usize, 1u64), (7, 3, 2), (4, 4, 3), (2, 9, 4)] {
            let a = random_matrix(rows, cols, seed);
            let p = pinv(&a, None);
            let apa = &a * &p * &a;
            let pap = &p * &a * &p;
            let ap = &a * &p;
            let pa = &p * &a;
            assert!((&apa - &a).norm() <= 1e-10 * a.norm().max(1.0));
            assert!((&pap - &p).norm() <= 1e-10 * p.norm().max(1.0));
            assert!((&ap - ap.transpose()).norm() <= 1e-10);
            assert!((&pa - pa.transpose()).norm() <= 1e-10);
        }
    }

    #[test]
    fn pinv_handles_rank_deficiency() {
        // Rank-1 matrix: pinv known in closed form u v^T -> v u^T / (|u|^2 |v|^2).
        let u = Vector::from_vec(vec![1.0, 2.0, -1.0]);
        let v = Vector::from_vec(vec![3.0, 0.5]);
        let a = &u * v.transpose();
        let expect = &v * u.transpose() / (u.norm_squared() * v.norm_squared());
        assert_relative_eq!(pinv(&a, None), expect, epsilon = 1e-12);
        assert_eq!(numerical_rank(&a, None), 1);
    }

    #[test]
    fn rank_counts_independent_rows() {
        let mut a = random_matrix(3, 10, 7);
        assert_eq!(numerical_rank(&a, None), 3);
        let dup = a.row(0) * 2.0;
        a.set_row(2, &dup);
        assert_eq!(numerical_rank(&a, None), 2);
        assert_eq!(numerical_rank(&Matrix::zeros(3, 3), None), 0);
    }

    #[test]
    fn expm_zero_and_diagonal() {
        let z = Matrix::zeros(3, 3);
        assert_relative_eq!(expm(&z).unwrap(), Matrix::identity(3, 3), epsilon = 1e-14);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -2.0, 0.5]));
        let e = expm(&d).unwrap();
        for (i, &x) in [1.0f64, -2.0, 0.5].iter().enumerate() {
            assert_relative_eq!(e[(i, i)], x.exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn expm_rotation_block() {
        // exp([[0, -t], [t, 0]]) = [[cos t, -sin t], [sin t, cos t]]
        let t = 0.73;
        let m = Matrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&m).unwrap();
        assert_relative_eq!(e[(0, 0)], t.cos(), epsilon = 1e-12);
        assert_relative_eq!(e[(1, 0)], t.sin(), epsilon = 1e-12);
    }

    #[test]
    fn expm_inverse_is_exp_of_negation() {
        let a = random_matrix(4, 4, 11) * 0.4;
        let e = expm(&a).unwrap();
        let einv = expm(&(-&a)).unwrap();
        assert_relative_eq!(&e * &einv, Matrix::identity(4, 4), epsilon = 1e-10);
    }

    #[test]
    fn expm_rejects_nonsquare() {
        assert!(expm(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn psd_factor_reproduces_covariance() {
        let mut rng = seeded_rng(5);
        let g: Matrix = Matrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
        let cov = &g * g.transpose();
        let l = psd_factor(&cov, "test").unwrap();
        assert_relative_eq!(&l * l.transpose(), cov, epsilon = 1e-10);
        // Singular PSD matrix still factors.
        let sing = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = psd_factor(&sing, "test").unwrap();
        assert_relative_eq!(&l * l.transpose(), sing, epsilon = 1e-10);
        // Indefinite matrix is rejected.
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(psd_factor(&bad, "test").is_err());
    }

    #[test]
    fn completion_is_orthonormal_and_anchored() {
        let v = Vector::from_vec(vec![1.0, 1.0, 0.0, -2.0]);
        let basis = orthonormal_completion(&v).unwrap();
        assert_eq!(basis.len(), 4);
        assert_relative_eq!(basis[0].clone(), v.normalize(), epsilon = 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                let d = basis[i].dot(&basis[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10, "gram[{i}][{j}] = {d}");
            }
        }
        assert!(orthonormal_completion(&Vector::zeros(3)).is_err());
    }
}
