//! Small dense complex linear algebra used throughout the crate.

use nalgebra::{linalg::Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::{CMat, CVec, GbdtError, Result};

/// Inversions whose 2-norm condition number exceeds this are refused.
pub const CONDITION_LIMIT: f64 = 1e12;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn r(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Frobenius norm.
pub fn fro(m: &CMat) -> f64 {
    m.norm()
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * r(0.5)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// 2-norm condition number; infinite for singular or non-finite input.
pub fn condition_number(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    if !is_finite(m) {
        return f64::INFINITY;
    }
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse with the condition-number guard applied. On refusal the
/// offending condition number is returned.
pub fn guarded_inverse(m: &CMat) -> std::result::Result<CMat, f64> {
    if m.nrows() != m.ncols() {
        return Err(f64::INFINITY);
    }
    let cond = condition_number(m);
    if !(cond < CONDITION_LIMIT) {
        return Err(cond);
    }
    m.clone().lu().try_inverse().ok_or(f64::INFINITY)
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitian_part(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Solves `A X - X B = C` through the Kronecker form
/// `(I ⊗ A - Bᵀ ⊗ I) vec(X) = vec(C)` (column-major vec).
pub fn solve_sylvester(a: &CMat, b: &CMat, rhs: &CMat) -> Result<CMat> {
    let (n, m) = (a.nrows(), b.nrows());
    if a.ncols() != n || b.ncols() != m || rhs.shape() != (n, m) {
        return Err(GbdtError::Dimension(format!(
            "sylvester: A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            rhs.shape()
        )));
    }
    let size = n * m;
    let mut op = CMat::zeros(size, size);
    for col in 0..m {
        for i in 0..n {
            let row = col * n + i;
            for k in 0..n {
                op[(row, col * n + k)] += a[(i, k)];
            }
            for k in 0..m {
                op[(row, k * n + i)] -= b[(k, col)];
            }
        }
    }
    let cond = condition_number(&op);
    if !(cond < CONDITION_LIMIT) {
        return Err(GbdtError::InvalidInput(format!(
            "Sylvester operator is singular (condition {cond:.3e}); spectra of A and B overlap"
        )));
    }
    let vec_c = CVec::from_column_slice(rhs.as_slice());
    let x = op.lu().solve(&vec_c).ok_or_else(|| GbdtError::InvalidInput("Sylvester solve failed".into()))?;
    Ok(CMat::from_column_slice(n, m, x.as_slice()))
}

/// Eigen-decomposition `M = V diag(d) V⁻¹` for a diagonalizable matrix with
/// distinct eigenvalues, via the complex Schur form and back substitution.
pub fn eigen_decomposition(m: &CMat) -> Result<(Vec<Complex64>, CMat)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(GbdtError::Dimension("eigen decomposition needs a square matrix".into()));
    }
    let (q, t) = Schur::new(m.clone()).unpack();
    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let scale = fro(m).max(1.0);
    let mut vecs = CMat::zeros(n, n);
    for k in 0..n {
        let mut y = CVec::zeros(n);
        y[k] = r(1.0);
        for i in (0..k).rev() {
            let gap = t[(i, i)] - values[k];
            if gap.norm() < 1e-10 * scale {
                return Err(GbdtError::InvalidInput(
                    "repeated eigenvalue: matrix is treated as non-diagonalizable".into(),
                ));
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * y[j];
            }
            y[i] = -acc / gap;
        }
        let x = &q * y;
        let x = x.unscale(x.norm());
        vecs.set_column(k, &x);
    }
    if !(condition_number(&vecs) < CONDITION_LIMIT) {
        return Err(GbdtError::InvalidInput("eigenvector basis is ill-conditioned".into()));
    }
    Ok((values, vecs))
}
