//! Small dense complex linear-algebra helpers shared by the rate and optimizer code.
//!
//! Matrices crossing module boundaries are `nalgebra` dynamic matrices. The hot
//! loops of the optimizer work on receive-side matrices of size `Nr x Nr`
//! (two in the default scenario), so the log-determinant used there is a
//! hand-rolled in-place Cholesky over a caller-provided buffer.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// `log2 det(A)` for a Hermitian positive-definite matrix stored row-major in
/// `a` (`n * n` entries). The buffer is overwritten by its Cholesky factor.
/// Returns `None` if a pivot is not strictly positive.
pub fn log2_det_hpd_in_place(a: &mut [C64], n: usize) -> Option<f64> {
    debug_assert_eq!(a.len(), n * n);
    let mut acc = 0.0;
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= a[j * n + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        a[j * n + j] = C64::new(ljj, 0.0);
        acc += d.log2();
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k].conj();
            }
            a[i * n + j] = s / ljj;
        }
    }
    Some(acc)
}

/// `log2 det(A)` of a Hermitian positive-definite matrix.
pub fn log2_det_hpd(a: &CMatrix) -> Option<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "log-det of a non-square matrix");
    let mut buf: Vec<C64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            buf.push(a[(i, j)]);
        }
    }
    log2_det_hpd_in_place(&mut buf, n)
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix.
pub fn cholesky_lower(a: &CMatrix) -> Option<CMatrix> {
    nalgebra::Cholesky::new(a.clone()).map(|c| c.l())
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Real trace of a (Hermitian) matrix.
pub fn trace_re(a: &CMatrix) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// Squared Frobenius norm.
pub fn frobenius_sq(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `A * Q * A^H`, symmetrized to remove rounding asymmetry.
pub fn sandwich(a: &CMatrix, q: &CMatrix) -> CMatrix {
    let m = a * q * a.adjoint();
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn all_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
