//! Small dense linear-algebra helpers shared by the law and FEM code.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`; matrices are at most a
//! few thousand rows, so dense storage is fine.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance under which a negative eigenvalue is treated as roundoff.
pub const PSD_TOLERANCE: f64 = 1e-10;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

/// Symmetric eigendecomposition with eigenvalues sorted ascending and
/// eigenvectors permuted to match.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry relative to the largest absolute entry.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

/// Checks the PSD invariant: smallest eigenvalue >= -1e-10 * largest.
/// Returns the sorted eigen-decomposition on success.
pub fn check_psd(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (values, vectors) = sym_eigen_sorted(m);
    if values.is_empty() {
        return Ok((values, vectors));
    }
    let largest = values[values.len() - 1].abs().max(values[0].abs());
    if values[0] < -PSD_TOLERANCE * largest {
        return Err(Error::NotPositiveSemidefinite {
            index: 0,
            value: values[0],
            largest,
        });
    }
    Ok((values, vectors))
}

/// Real power `M^p` of a symmetric PSD matrix; eigenvalues inside the
/// roundoff band are clamped to zero first.
pub fn psd_power(m: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    let (values, vectors) = check_psd(m)?;
    let scaled = DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| if v > 0.0 { v.powf(p) } else { 0.0 }),
    );
    Ok(&vectors * DMatrix::from_diagonal(&scaled) * vectors.transpose())
}

/// Symmetric PSD square root `B` with `B B = M`.
///
/// Any factor `C` with `C C^T = M` drives the same Gaussian law: if
/// `Z ~ N(0, I)` then `C Z ~ N(0, C C^T)`. The symmetric root is used because
/// it is unique and basis-independent.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    psd_power(m, 0.5)
}

/// Operator 2-norm by power iteration on `M^T M`.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 || m.amax() == 0.0 {
        return 0.0;
    }
    // deterministic, non-degenerate start vector
    let mut v = DVector::from_iterator(
        n,
        (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract()),
    );
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let mv = m * &v;
        let w = m.tr_mul(&mv);
        let next = mv.norm_squared();
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        if (next - estimate).abs() <= POWER_TOL * next {
            estimate = next;
            break;
        }
        estimate = next;
    }
    estimate.sqrt()
}

/// Hilbert-Schmidt (Frobenius) norm.
pub fn hs_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Pairwise summation: error grows like `O(log n)` and the result depends
/// only on the order of `xs`, not on how it was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
