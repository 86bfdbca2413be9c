//! Small dense complex-matrix helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn zeros(n: usize) -> CMatrix {
    CMatrix::zeros(n, n)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |r, c| {
        if r == c {
            C64::new(values[r], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Average with the conjugate transpose.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    CMatrix::from_fn(n, n, |r, c| (m[(r, c)] + m[(c, r)].conj()) * 0.5)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.trace()
}

/// `Re Tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for r in 0..n {
        for k in 0..n {
            acc += (a[(r, k)] * b[(k, r)]).re;
        }
    }
    acc
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

/// Largest elementwise deviation `|m - m†|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn check_square(m: &CMatrix, expected: usize) -> Result<()> {
    if m.nrows() != expected || m.ncols() != expected {
        return Err(Error::Dimension {
            expected,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let n = m.nrows();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigen(m).0[0]
}

/// Rebuild `V diag(f(λ)) V†`.
pub fn spectral_map(values: &DVector<f64>, vectors: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = vectors.nrows();
    let mut out = zeros(n);
    for k in 0..values.len() {
        let w = f(values[k]);
        if w == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] += v[r] * v[c].conj() * w;
            }
        }
    }
    out
}

/// Principal square root of a positive semi-definite matrix. Eigenvalues are
/// clamped at zero first so round-off never yields NaN.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    spectral_map(&values, &vectors, |x| x.max(0.0).sqrt())
}

/// Cheap test for `λ_min(m) > -tol` through a shifted Cholesky factorization.
///
/// nalgebra's complex Cholesky accepts negative pivots (complex square roots
/// always exist), so the pivots are checked here directly.
pub fn is_psd_within(m: &CMatrix, tol: f64) -> bool {
    let n = m.nrows();
    let mut l = zeros(n);
    for j in 0..n {
        let mut pivot = m[(j, j)].re + tol;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) {
            return false;
        }
        let d = pivot.sqrt();
        l[(j, j)] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / d;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.7, 0.0),
                C64::new(0.1, 0.2),
                C64::new(0.1, -0.2),
                C64::new(0.3, 0.0),
            ],
        );
        let s = psd_sqrt(&a);
        assert!(frobenius(&(&s * &s - &a)) < 1e-12);
    }

    #[test]
    fn cholesky_psd_probe() {
        assert!(is_psd_within(&diag(&[1.0, 0.0]), 1e-12));
        assert!(!is_psd_within(&diag(&[1.0, -1e-6]), 1e-8));
        assert!(is_psd_within(&diag(&[1.0, -1e-9]), 1e-8));
    }
}
