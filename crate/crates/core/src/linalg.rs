//! Small dense linear-algebra kernels shared by every module.
//!
//! Matrices here are at most a few dozen rows, so everything is plain
//! `DMatrix<f64>` with eigen/Cholesky factorizations from nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Largest absolute asymmetry `|m_ij - m_ji|`.
pub fn asymmetry(m: &Mat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Frobenius norm.
pub fn norm(m: &Mat) -> f64 {
    m.norm()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Symmetric eigendecomposition with eigenvalues sorted descending;
/// column `i` of the returned matrix pairs with `values[i]`.
pub fn sym_eigen_desc(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m)
        .last()
        .copied()
        .unwrap_or(f64::NEG_INFINITY)
}

/// PSD test with the roundoff allowance `-1e-10 (1 + |M|)`.
pub fn is_psd(m: &Mat) -> bool {
    min_eigenvalue(m) >= -1e-10 * (1.0 + norm(m))
}

pub fn is_pd(m: &Mat) -> bool {
    m.nrows() == 0 || (min_eigenvalue(m) > 0.0 && m.clone().cholesky().is_some())
}

/// PSD square root with negative eigenvalues clamped to zero.
pub fn psd_sqrt(m: &Mat) -> Mat {
    let n = m.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let eig = symmetrize(m).symmetric_eigen();
    let d = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
    &eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Factor `M = F F'` keeping eigenvalues above `rel_tol * lambda_max`; `F` is n x r.
pub fn psd_factor(m: &Mat, rel_tol: f64) -> Mat {
    let n = m.nrows();
    let (values, vectors) = sym_eigen_desc(m);
    let top = values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Mat::zeros(n, 0);
    }
    let kept: Vec<usize> = (0..n).filter(|&i| values[i] > rel_tol * top).collect();
    Mat::from_fn(n, kept.len(), |r, c| {
        vectors[(r, kept[c])] * values[kept[c]].sqrt()
    })
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(m: &Mat) -> Result<Mat> {
    if m.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

pub fn inverse(m: &Mat) -> Result<Mat> {
    if m.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("matrix is singular".into()))
}

/// `log det M` for symmetric positive-definite `M`.
pub fn log_det_spd(m: &Mat) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::Numerical("log-det of a non positive-definite matrix".into()))?;
    Ok(2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>())
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(m: &Mat) -> f64 {
    eigenvalues(m).iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Numerical rank via singular values relative to the largest one.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

pub fn complex_rank(m: &DMatrix<Complex<f64>>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

pub fn to_complex(m: &Mat) -> DMatrix<Complex<f64>> {
    m.map(|x| Complex::new(x, 0.0))
}

/// Moore-Penrose left inverse `(L'L)^{-1} L'` of a full-column-rank matrix.
pub fn left_pseudo_inverse(l: &Mat) -> Result<Mat> {
    let gram = l.transpose() * l;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Numerical("matrix does not have full column rank".into()))?;
    Ok(inv * l.transpose())
}

/// Unique solution of `P = A P A' + W` for Schur-stable `A`, via the Kronecker system.
pub fn discrete_lyapunov(a: &Mat, w: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let kron = a.kronecker(a);
    let lhs = Mat::identity(n * n, n * n) - kron;
    let rhs = DVector::from_column_slice(w.as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Lyapunov operator".into()))?;
    Ok(symmetrize(&Mat::from_column_slice(n, n, sol.as_slice())))
}

/// Relative Frobenius distance `|a - b| / (1 + |b|)`.
pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

/// Pairwise (cascade) summation; the result only depends on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}
