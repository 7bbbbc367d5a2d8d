//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Dimension up to which operator norms use a full SVD.
pub const SVD_LIMIT: usize = 200;

/// Largest singular value.
///
/// Uses an SVD for matrices with both sides at most [`SVD_LIMIT`] and power
/// iteration on `A^T A` (relative tolerance `1e-10`) otherwise.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if a.nrows().max(a.ncols()) <= SVD_LIMIT {
        return a.singular_values().max();
    }
    power_op_norm(a, 1e-10, 10_000)
}

/// Power iteration estimate of the largest singular value.
pub fn power_op_norm(a: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let n = a.ncols();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * (i as f64).sin());
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let w = a.transpose() * (a * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = w / norm;
        if (next - sigma).abs() <= rel_tol * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped to zero).
/// Returns the projection and the most negative eigenvalue found.
pub fn psd_project(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let clipped = eig.eigenvalues.map(|x| x.max(0.0));
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&clipped) * q.transpose(), min)
}

/// A factor `L` with `L L^T = a` for a PSD matrix (eigen square root, so
/// singular matrices are fine).
pub fn psd_sqrt_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Lower-triangular `L` with `L L^T = a` for a PSD matrix. Pivots below
/// `rel_tol` times the largest diagonal entry are treated as zero, so the
/// leading rows of the factor only depend on the leading block of `a`.
pub fn semi_cholesky(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let d = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d <= rel_tol * scale {
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in j + 1..n {
            l[(i, j)] = (a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>()) / pivot;
        }
    }
    l
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_agrees_with_svd() {
        let a = DMatrix::from_fn(30, 20, |i, j| ((i * 7 + j * 3) as f64).sin());
        let exact = a.singular_values().max();
        assert!((power_op_norm(&a, 1e-12, 100_000) - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn psd_projection_clips_negative_directions() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (p, min) = psd_project(&a);
        assert!((min + 1.0).abs() < 1e-12);
        let ev = sym_eigenvalues(&p);
        assert!(ev[0].abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
        let l = psd_sqrt_factor(&p);
        assert!((&l * l.transpose() - &p).norm() < 1e-12);
    }

    #[test]
    fn semi_cholesky_handles_singular_blocks() {
        // Rank two: third row is the sum of the first two.
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 2.5]);
        let a = &b * b.transpose();
        let l = semi_cholesky(&a, 1e-12);
        assert!((&l * l.transpose() - &a).norm() < 1e-10);
        let lead = semi_cholesky(&a.view((0, 0), (2, 2)).into_owned(), 1e-12);
        assert!((l.view((0, 0), (2, 2)) - lead).norm() < 1e-14);
    }
}
