//! Small dense complex linear algebra used throughout the crate.
//!
//! Everything here operates on matrices of dimension 3 or 4, so the
//! routines favour clarity over blocking or allocation tricks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(dim: usize) -> CMatrix {
    CMatrix::zeros(dim, dim)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// Largest entrywise deviation `|m_ij - conj(m_ji)|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest entrywise modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues are returned in
/// ascending order with matching eigenvector columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    // Symmetrize first so round-off in the input cannot leak into the solver.
    let sym = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `exp(-i H dt)` for Hermitian `H`, via its eigendecomposition.
pub fn expm_hermitian(h: &CMatrix, dt: f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(h);
    let phases = DVector::from_iterator(
        values.len(),
        values.iter().map(|&w| C64::from_polar(1.0, -w * dt)),
    );
    let scaled = CMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| {
        vectors[(i, j)] * phases[j]
    });
    scaled * vectors.adjoint()
}

/// Applies `f` to the (real) spectrum of a Hermitian matrix.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let n = vectors.nrows();
    let scaled = CMatrix::from_fn(n, n, |i, j| vectors[(i, j)] * f(values[j]));
    scaled * vectors.adjoint()
}

/// Dense matrix exponential by scaling and squaring with a Taylor core.
/// Only used as an independent reference in tests and diagnostics.
pub fn expm_general(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = a.iter().map(|z| z.norm()).sum::<f64>();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a / c(2f64.powi(squarings as i32), 0.0);
    let mut term = identity(n);
    let mut sum = identity(n);
    for k in 1..=20 {
        term = &term * &scaled / c(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_exponential_matches_taylor_reference() {
        let h = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.3, 0.0),
                c(0.1, -0.2),
                c(0.0, 0.4),
                c(0.1, 0.2),
                c(-0.5, 0.0),
                c(0.7, 0.0),
                c(0.0, -0.4),
                c(0.7, 0.0),
                c(0.2, 0.0),
            ],
        );
        let u = expm_hermitian(&h, 1.7);
        let reference = expm_general(&(h * c(0.0, -1.7)));
        assert!(max_abs(&(u - reference)) < 1e-12);
    }

    #[test]
    fn eigenvalues_sorted() {
        let h = CMatrix::from_diagonal(&CVector::from_vec(vec![c(2.0, 0.0), c(-1.0, 0.0), c(0.5, 0.0)]));
        let (w, _) = hermitian_eigen(&h);
        assert_eq!(w, vec![-1.0, 0.5, 2.0]);
    }
}
