//! Order-3 tensors and the t-product.
//!
//! The t-product of `a` (n1×n2×n3) and `b` (n2×n4×n3) convolves tubes
//! circularly along the third dimension. The fast path takes an unnormalized
//! DFT of every tube, multiplies matching frequency slices as ordinary complex
//! matrices and transforms back with a `1/n3` factor. The block-circulant
//! matrix path is kept as an oracle for tests and is never used by the
//! pipeline.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{cmul, CMatrix};

/// Imaginary residue tolerated (relative to the largest real magnitude, floor
/// 1.0) when returning from the frequency domain.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

pub type Dims = (usize, usize, usize);

/// Dense real tensor of shape n1×n2×n3.
///
/// Storage is slice-major along the third dimension, then rows, then columns:
/// entry `(i, j, k)` lives at `(k * n1 + i) * n2 + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: Dims,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        assert!(n1 > 0 && n2 > 0 && n3 > 0, "tensor dims must be positive");
        Tensor3 {
            dims: (n1, n2, n3),
            data: vec![0.0; n1 * n2 * n3],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        let (n1, n2, n3) = dims;
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(Error::InvalidShape(format!("zero dimension in {dims:?}")));
        }
        if data.len() != n1 * n2 * n3 {
            return Err(Error::InvalidShape(format!(
                "data length {} does not match {dims:?}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let (n1, n2, n3) = dims;
        let mut t = Tensor3::zeros(n1, n2, n3);
        for k in 0..n3 {
            for i in 0..n1 {
                for j in 0..n2 {
                    t.data[(k * n1 + i) * n2 + j] = f(i, j, k);
                }
            }
        }
        t
    }

    /// Identity for the t-product: first frontal slice is `I`, the rest zero.
    pub fn identity(n: usize, n3: usize) -> Self {
        Tensor3::from_fn((n, n, n3), |i, j, k| if k == 0 && i == j { 1.0 } else { 0.0 })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n1(&self) -> usize {
        self.dims.0
    }

    pub fn n2(&self) -> usize {
        self.dims.1
    }

    pub fn n3(&self) -> usize {
        self.dims.2
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims.0 + i) * self.dims.1 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frontal_slice(&self, k: usize) -> DMatrix<f64> {
        let (n1, n2, _) = self.dims;
        DMatrix::from_fn(n1, n2, |i, j| self.get(i, j, k))
    }

    pub fn from_frontal_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidShape("no frontal slices".into()))?;
        let (n1, n2) = first.shape();
        if slices.iter().any(|s| s.shape() != (n1, n2)) {
            return Err(Error::InvalidShape("frontal slices differ in shape".into()));
        }
        let data = slices
            .iter()
            .flat_map(|s| (0..n1).flat_map(move |i| (0..n2).map(move |j| s[(i, j)])))
            .collect();
        Tensor3::from_vec((n1, n2, slices.len()), data)
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Squared Frobenius norm of the lateral slice `(:, j, :)`.
    pub fn lateral_norm_sq(&self, j: usize) -> Result<f64> {
        let (n1, n2, n3) = self.dims;
        if j >= n2 {
            return Err(Error::IndexOutOfRange { index: j, len: n2 });
        }
        Ok((0..n3)
            .flat_map(|k| (0..n1).map(move |i| (i, k)))
            .map(|(i, k)| self.get(i, j, k).powi(2))
            .sum())
    }

    /// Lateral slice `(:, j, :)` as an n1×1×n3 tensor.
    pub fn lateral(&self, j: usize) -> Tensor3 {
        Tensor3::from_fn((self.n1(), 1, self.n3()), |i, _, k| self.get(i, j, k))
    }

    pub fn set_lateral(&mut self, j: usize, col: &Tensor3) {
        for k in 0..self.n3() {
            for i in 0..self.n1() {
                self.set(i, j, k, col.get(i, 0, k));
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn try_sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn try_add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with("add", other, |a, b| a + b)
    }

    fn zip_with(
        &self,
        op: &'static str,
        other: &Tensor3,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                op,
                left: self.dims,
                right: other.dims,
            });
        }
        Ok(Tensor3 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    /// Rows `start..start + len` of the tensor.
    pub fn row_block(&self, start: usize, len: usize) -> Tensor3 {
        Tensor3::from_fn((len, self.n2(), self.n3()), |i, j, k| self.get(start + i, j, k))
    }

    /// Stacks tensors along the first dimension.
    pub fn vstack(parts: &[&Tensor3]) -> Result<Tensor3> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidShape("nothing to stack".into()))?;
        let (_, n2, n3) = first.dims;
        for p in parts {
            if p.n2() != n2 || p.n3() != n3 {
                return Err(Error::DimensionMismatch {
                    op: "vstack",
                    left: first.dims,
                    right: p.dims,
                });
            }
        }
        let n1: usize = parts.iter().map(|p| p.n1()).sum();
        let mut out = Tensor3::zeros(n1, n2, n3);
        let mut offset = 0;
        for p in parts {
            for k in 0..n3 {
                for i in 0..p.n1() {
                    let src = p.index(i, 0, k);
                    let dst = out.index(offset + i, 0, k);
                    out.data[dst..dst + n2].copy_from_slice(&p.data[src..src + n2]);
                }
            }
            offset += p.n1();
        }
        Ok(out)
    }
}

/// Frequency-domain image of a [`Tensor3`]: slice `b` holds the `b`-th DFT
/// coefficient of every tube.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTensor {
    dims: Dims,
    slices: Vec<CMatrix>,
}

impl SpectralTensor {
    pub fn new(slices: Vec<CMatrix>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidShape("no spectral slices".into()))?;
        let (n1, n2) = first.shape();
        if slices.iter().any(|s| s.shape() != (n1, n2)) {
            return Err(Error::InvalidShape("spectral slices differ in shape".into()));
        }
        Ok(SpectralTensor {
            dims: (n1, n2, slices.len()),
            slices,
        })
    }

    /// Builds a conjugate-symmetric spectrum from its non-redundant half.
    ///
    /// `f(b)` is evaluated for `b` in `0..=n3/2` (in parallel); the remaining
    /// slices are filled with `conj(slice[n3 - b])`. Valid whenever `f`
    /// commutes with complex conjugation, which holds for products and
    /// solves of spectra of real tensors.
    pub fn from_half_fn<F>(n3: usize, f: F) -> Self
    where
        F: Fn(usize) -> CMatrix + Sync,
    {
        let half: Vec<CMatrix> = (0..half_len(n3)).into_par_iter().map(&f).collect();
        let (n1, n2) = half[0].shape();
        let mut slices = half;
        for b in slices.len()..n3 {
            let mirror = slices[n3 - b].map(|z| z.conj());
            slices.push(mirror);
        }
        SpectralTensor {
            dims: (n1, n2, n3),
            slices,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn slices(&self) -> &[CMatrix] {
        &self.slices
    }

    pub fn slice(&self, b: usize) -> &CMatrix {
        &self.slices[b]
    }

    pub fn into_slices(self) -> Vec<CMatrix> {
        self.slices
    }

    /// Sum of squared magnitudes over all slices.
    pub fn norm_sq(&self) -> f64 {
        self.slices.iter().map(crate::linalg::norm_sq).sum()
    }
}

/// Number of non-redundant frequency slices of a real signal of length `n3`.
pub fn half_len(n3: usize) -> usize {
    n3 / 2 + 1
}

/// Multiplicity of frequency `b` (`b < half_len(n3)`) in the full spectrum.
pub fn half_weight(b: usize, n3: usize) -> f64 {
    if b == 0 || (n3.is_multiple_of(2) && b == n3 / 2) {
        1.0
    } else {
        2.0
    }
}

/// Unnormalized DFT along the third dimension.
pub fn fft3(a: &Tensor3) -> SpectralTensor {
    let (n1, n2, n3) = a.dims();
    let mut buf: Vec<Complex64> = Vec::with_capacity(n1 * n2 * n3);
    for i in 0..n1 {
        for j in 0..n2 {
            buf.extend((0..n3).map(|k| Complex64::new(a.get(i, j, k), 0.0)));
        }
    }
    if n3 > 1 {
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n3);
        fft.process(&mut buf);
    }
    let slices = (0..n3)
        .map(|b| CMatrix::from_fn(n1, n2, |i, j| buf[(i * n2 + j) * n3 + b]))
        .collect();
    SpectralTensor {
        dims: (n1, n2, n3),
        slices,
    }
}

/// Inverse of [`fft3`], including the `1/n3` factor.
///
/// The imaginary residue of the result is discarded when it is below
/// [`IMAG_RESIDUE_TOL`] relative to the signal scale and reported as a
/// corrupted spectrum otherwise.
pub fn ifft3(s: &SpectralTensor) -> Result<Tensor3> {
    let (n1, n2, n3) = s.dims();
    let mut buf: Vec<Complex64> = Vec::with_capacity(n1 * n2 * n3);
    for i in 0..n1 {
        for j in 0..n2 {
            buf.extend((0..n3).map(|b| s.slices[b][(i, j)]));
        }
    }
    if n3 > 1 {
        let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n3);
        ifft.process(&mut buf);
    }
    let scale = 1.0 / n3 as f64;
    let mut residue = 0.0f64;
    let mut magnitude = 1.0f64;
    let mut out = Tensor3::zeros(n1, n2, n3);
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..n3 {
                let z = buf[(i * n2 + j) * n3 + k] * scale;
                residue = residue.max(z.im.abs());
                magnitude = magnitude.max(z.re.abs());
                out.set(i, j, k, z.re);
            }
        }
    }
    if !(residue <= IMAG_RESIDUE_TOL * magnitude) {
        return Err(Error::CorruptedSpectrum { residue });
    }
    if let Some(index) = out.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(out)
}

/// Which algebraic route a t-product takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProductPath {
    /// Per-frequency matrix products after a DFT along the tubes.
    #[default]
    Fourier,
    /// Block-circulant matrix times the stacked frontal slices.
    Circulant,
}

fn check_product_dims(a: &Tensor3, b: &Tensor3) -> Result<()> {
    if a.n2() != b.n1() || a.n3() != b.n3() {
        return Err(Error::DimensionMismatch {
            op: "tproduct",
            left: a.dims(),
            right: b.dims(),
        });
    }
    Ok(())
}

/// `a * b` via the Fourier path.
pub fn tproduct(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    tproduct_with(a, b, ProductPath::Fourier)
}

pub fn tproduct_with(a: &Tensor3, b: &Tensor3, path: ProductPath) -> Result<Tensor3> {
    check_product_dims(a, b)?;
    match path {
        ProductPath::Fourier => {
            let (fa, fb) = (fft3(a), fft3(b));
            let prod = SpectralTensor::from_half_fn(a.n3(), |k| cmul(fa.slice(k), fb.slice(k)));
            ifft3(&prod)
        }
        ProductPath::Circulant => {
            let stacked = circulant_unfold(a) * stack_frontal(b);
            unstack_frontal(&stacked, a.n1(), a.n3())
        }
    }
}

/// Spectral product of two spectra already in the frequency domain.
pub fn spectral_product(a: &SpectralTensor, b: &SpectralTensor) -> SpectralTensor {
    SpectralTensor::from_half_fn(a.dims().2, |k| cmul(a.slice(k), b.slice(k)))
}

/// Block-circulant matrix of a tensor: block `(r, c)` is frontal slice
/// `(r - c) mod n3`.
pub fn circulant_unfold(a: &Tensor3) -> DMatrix<f64> {
    let (n1, n2, n3) = a.dims();
    DMatrix::from_fn(n1 * n3, n2 * n3, |row, col| {
        let (br, i) = (row / n1, row % n1);
        let (bc, j) = (col / n2, col % n2);
        a.get(i, j, (br + n3 - bc) % n3)
    })
}

/// Frontal slices stacked vertically, an (n1·n3)×n2 matrix.
pub fn stack_frontal(a: &Tensor3) -> DMatrix<f64> {
    let (n1, n2, _) = a.dims();
    DMatrix::from_fn(n1 * a.n3(), n2, |row, j| a.get(row % n1, j, row / n1))
}

/// Inverse of [`stack_frontal`].
pub fn unstack_frontal(m: &DMatrix<f64>, n1: usize, n3: usize) -> Result<Tensor3> {
    if m.nrows() != n1 * n3 {
        return Err(Error::InvalidShape(format!(
            "{} rows cannot hold {n3} slices of {n1} rows",
            m.nrows()
        )));
    }
    Ok(Tensor3::from_fn((n1, m.ncols(), n3), |i, j, k| m[(k * n1 + i, j)]))
}

/// Tensor transpose: every frontal slice transposed, slices `2..n3` in
/// reverse order. Spectral slices of the result are the conjugate transposes
/// of the input's.
pub fn ttranspose(a: &Tensor3) -> Tensor3 {
    let (n1, n2, n3) = a.dims();
    Tensor3::from_fn((n2, n1, n3), |i, j, k| a.get(j, i, (n3 - k) % n3))
}
