//! Reference implementations shared by the integration tests. Everything
//! here works in the spatial domain with plain loops or real matrices, so it
//! shares no code path with the FFT-based library routines.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensor_sr::image::GrayImage;
use tensor_sr::Tensor3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(dims: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Tensor3 {
    Tensor3::from_fn(dims, |_, _, _| rng.gen_range(-1.0..1.0))
}

/// Rescales every lateral slice to unit Frobenius norm.
pub fn normalize_atoms(d: &Tensor3) -> Tensor3 {
    let (n1, m, n3) = d.dims();
    let norms: Vec<f64> = (0..m)
        .map(|j| {
            let mut s = 0.0;
            for k in 0..n3 {
                for i in 0..n1 {
                    s += d.get(i, j, k).powi(2);
                }
            }
            s.sqrt()
        })
        .collect();
    Tensor3::from_fn(d.dims(), |i, j, k| d.get(i, j, k) / norms[j])
}

/// `C(:,:,k) = Σ_l A(:,:,(k−l) mod n3) · B(:,:,l)` by direct summation.
pub fn naive_tproduct(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let (n1, n2, n3) = a.dims();
    let (_, n4, _) = b.dims();
    assert_eq!(b.n1(), n2);
    assert_eq!(b.n3(), n3);
    Tensor3::from_fn((n1, n4, n3), |i, j, k| {
        let mut s = 0.0;
        for l in 0..n3 {
            let ka = (k + n3 - l) % n3;
            for p in 0..n2 {
                s += a.get(i, p, ka) * b.get(p, j, l);
            }
        }
        s
    })
}

/// Block-circulant matrix of `a`: block `(r, s)` is `A(:,:,(r−s) mod n3)`.
pub fn bcirc(a: &Tensor3) -> DMatrix<f64> {
    let (n1, n2, n3) = a.dims();
    DMatrix::from_fn(n1 * n3, n2 * n3, |row, col| {
        let (r, i) = (row / n1, row % n1);
        let (s, j) = (col / n2, col % n2);
        a.get(i, j, (r + n3 - s) % n3)
    })
}

/// Frontal slices stacked vertically: `(n1·n3) × n2`.
pub fn unfold_slices(a: &Tensor3) -> DMatrix<f64> {
    let (n1, n2, n3) = a.dims();
    DMatrix::from_fn(n1 * n3, n2, |row, j| a.get(row % n1, j, row / n1))
}

pub fn fold_slices(m: &DMatrix<f64>, n1: usize, n3: usize) -> Tensor3 {
    Tensor3::from_fn((n1, m.ncols(), n3), |i, j, k| m[(k * n1 + i, j)])
}

pub fn squared_distance(a: &Tensor3, b: &Tensor3) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn max_abs_diff(a: &Tensor3, b: &Tensor3) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `½‖T − D*C‖² + λ‖C‖₁` through the circulant matrix.
pub fn objective_oracle(d: &Tensor3, c: &Tensor3, t: &Tensor3, lambda: f64) -> f64 {
    let r = bcirc(d) * unfold_slices(c) - unfold_slices(t);
    0.5 * r.norm_squared() + lambda * c.data().iter().map(|v| v.abs()).sum::<f64>()
}

/// Gradient of the smooth part, `bcirc(D)ᵀ (bcirc(D) C − T)`, refolded.
pub fn gradient_oracle(d: &Tensor3, c: &Tensor3, t: &Tensor3) -> Tensor3 {
    let a = bcirc(d);
    let g = a.transpose() * (&a * unfold_slices(c) - unfold_slices(t));
    fold_slices(&g, c.n1(), c.n3())
}

fn soft(v: f64, theta: f64) -> f64 {
    v.signum() * (v.abs() - theta).max(0.0)
}

/// Plain proximal gradient on the circulant form with step `1/‖A‖₂²`.
pub fn ista_oracle(d: &Tensor3, t: &Tensor3, lambda: f64, iters: usize) -> (Tensor3, f64) {
    let a = bcirc(d);
    let y = unfold_slices(t);
    let step = 1.0 / a.singular_values().max().powi(2);
    let ata = a.transpose() * &a;
    let aty = a.transpose() * &y;
    let mut x = DMatrix::<f64>::zeros(a.ncols(), y.ncols());
    for _ in 0..iters {
        let g = &ata * &x - &aty;
        x = (&x - g * step).map(|v| soft(v, lambda * step));
    }
    let c = fold_slices(&x, d.n2(), d.n3());
    let obj = objective_oracle(d, &c, t, lambda);
    (c, obj)
}

/// Oriented stripes or a two-grating texture, 32×32 with values in `[0.1, 0.9]`.
pub fn synthetic_image(rng: &mut ChaCha8Rng) -> GrayImage {
    let pi = std::f64::consts::PI;
    let texture = rng.gen_bool(0.5);
    let theta: f64 = rng.gen_range(0.0..pi);
    let period: f64 = rng.gen_range(3.0..9.0);
    let phase: f64 = rng.gen_range(0.0..2.0 * pi);
    let theta2: f64 = rng.gen_range(0.0..pi);
    let period2: f64 = rng.gen_range(4.0..10.0);
    GrayImage::from_fn(32, 32, |r, c| {
        let (r, c) = (r as f64, c as f64);
        let wave = |th: f64, p: f64, ph: f64| ((th.cos() * c + th.sin() * r) * 2.0 * pi / p + ph).sin();
        if texture {
            0.5 + 0.25 * wave(theta, period, phase) + 0.15 * wave(theta2, period2, 0.0)
        } else {
            0.5 + 0.4 * wave(theta, period, phase)
        }
    })
    .unwrap()
}
