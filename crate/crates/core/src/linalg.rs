//! Complex dense matrix helpers for per-frequency slice work.
//!
//! Large complex products are split into real and imaginary parts so that the
//! real `gemm` kernels behind `nalgebra` do the heavy lifting.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

struct Split {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl Split {
    fn of(m: &CMatrix) -> Self {
        Split {
            re: m.map(|z| z.re),
            im: m.map(|z| z.im),
        }
    }

    fn join(re: DMatrix<f64>, im: DMatrix<f64>) -> CMatrix {
        re.zip_map(&im, Complex64::new)
    }
}

/// `a * b`
pub fn cmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (a, b) = (Split::of(a), Split::of(b));
    let re = &a.re * &b.re - &a.im * &b.im;
    let im = &a.re * &b.im + &a.im * &b.re;
    Split::join(re, im)
}

/// `a^H * b`
pub fn cmul_adj_a(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (a, b) = (Split::of(a), Split::of(b));
    let re = a.re.tr_mul(&b.re) + a.im.tr_mul(&b.im);
    let im = a.re.tr_mul(&b.im) - a.im.tr_mul(&b.re);
    Split::join(re, im)
}

/// `a * b^H`
pub fn cmul_adj_b(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (a, b) = (Split::of(a), Split::of(b));
    let re = &a.re * b.re.transpose() + &a.im * b.im.transpose();
    let im = &a.im * b.re.transpose() - &a.re * b.im.transpose();
    Split::join(re, im)
}

/// Squared Frobenius norm of a complex matrix.
pub fn norm_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `Re tr(a^H b)`, the real inner product of two complex matrices.
pub fn re_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn hpd_inverse(m: &CMatrix) -> Option<CMatrix> {
    m.clone().cholesky().map(|c| c.inverse())
}
