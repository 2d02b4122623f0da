//! Tensor sparse coding.
//!
//! Solves `min_C ½‖T − D*C‖²_F + λ‖C‖₁` for a fixed dictionary `D` with an
//! accelerated proximal gradient method. The smooth part is evaluated through
//! per-frequency Gram matrices `D̃ᴴD̃` and cross terms `D̃ᴴT̃`, so an iteration
//! costs two m×m by m×N products per non-redundant frequency instead of two
//! products against the full dictionary.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cmul, cmul_adj_a, hermitian_eigenvalues, re_inner, CMatrix};
use crate::tensor::{fft3, half_len, half_weight, ifft3, tproduct, ttranspose, SpectralTensor, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LipschitzStrategy {
    /// `η · max_b σ_max(D̃⁽ᵇ⁾)²`, the exact Lipschitz constant of the gradient
    /// when `η = 1`.
    #[default]
    Spectral,
    /// `η · Σ_b ‖D̃⁽ᵇ⁾ᴴ D̃⁽ᵇ⁾‖_F`, a cheaper upper bound.
    FrobeniusBound,
}

impl std::str::FromStr for LipschitzStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(LipschitzStrategy::Spectral),
            "frobenius" | "frobeniusBound" => Ok(LipschitzStrategy::FrobeniusBound),
            other => Err(Error::Config(format!("unknown lipschitz strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodeConfig {
    pub lambda: f64,
    /// Inner iterations `S`.
    pub max_iter: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    pub lipschitz: LipschitzStrategy,
    /// Safety factor applied to the Lipschitz constant.
    pub eta: f64,
}

impl Default for SparseCodeConfig {
    fn default() -> Self {
        SparseCodeConfig {
            lambda: 0.05,
            max_iter: 50,
            tol: 1e-7,
            lipschitz: LipschitzStrategy::Spectral,
            eta: 1.0,
        }
    }
}

impl SparseCodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda = {} violates lambda >= 0", self.lambda)));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("S = 0 violates S >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol = {} violates tol >= 0", self.tol)));
        }
        if !(self.eta >= 1.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("eta = {} violates eta >= 1", self.eta)));
        }
        Ok(())
    }
}

#[inline]
fn shrink(v: f64, theta: f64) -> f64 {
    if v > theta {
        v - theta
    } else if v < -theta {
        v + theta
    } else {
        0.0
    }
}

/// Entrywise `sign(x)·max(|x| − θ, 0)`.
pub fn soft_threshold(x: &Tensor3, theta: f64) -> Result<Tensor3> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold {theta} must be >= 0")));
    }
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = shrink(*v, theta));
    Ok(out)
}

fn check_coding_dims(d: &Tensor3, c: Option<&Tensor3>, t: &Tensor3) -> Result<()> {
    let (rows, m, n) = d.dims();
    if t.n1() != rows || t.n3() != n {
        return Err(Error::DimensionMismatch {
            op: "sparse coding (dictionary vs target)",
            left: d.dims(),
            right: t.dims(),
        });
    }
    if let Some(c) = c {
        if c.dims() != (m, t.n2(), n) {
            return Err(Error::DimensionMismatch {
                op: "sparse coding (coefficients)",
                left: (m, t.n2(), n),
                right: c.dims(),
            });
        }
    }
    Ok(())
}

/// `½‖T − D*C‖²_F + λ‖C‖₁`, evaluated directly in the spatial domain.
pub fn objective(d: &Tensor3, c: &Tensor3, t: &Tensor3, lambda: f64) -> Result<f64> {
    check_coding_dims(d, Some(c), t)?;
    let residual = t.try_sub(&tproduct(d, c)?)?;
    Ok(0.5 * residual.frob_norm_sq() + lambda * c.l1_norm())
}

/// Gradient of `½‖T − D*C‖²_F` with respect to `C`: `Dᵀ * (D*C − T)`.
pub fn grad_f(d: &Tensor3, c: &Tensor3, t: &Tensor3) -> Result<Tensor3> {
    check_coding_dims(d, Some(c), t)?;
    let residual = tproduct(d, c)?.try_sub(t)?;
    tproduct(&ttranspose(d), &residual)
}

fn half_grams(d: &SpectralTensor) -> Vec<CMatrix> {
    let n3 = d.dims().2;
    (0..half_len(n3)).map(|b| cmul_adj_a(d.slice(b), d.slice(b))).collect()
}

fn lipschitz_from_grams(grams: &[CMatrix], n3: usize, strategy: LipschitzStrategy, eta: f64) -> f64 {
    match strategy {
        LipschitzStrategy::Spectral => {
            let top = grams
                .iter()
                .map(|g| hermitian_eigenvalues(g).last().copied().unwrap_or(0.0))
                .fold(0.0, f64::max);
            eta * top
        }
        LipschitzStrategy::FrobeniusBound => {
            let sum: f64 = grams
                .iter()
                .enumerate()
                .map(|(b, g)| half_weight(b, n3) * g.norm())
                .sum();
            eta * sum
        }
    }
}

/// Lipschitz constant of `∇f` for dictionary `d`.
pub fn lipschitz_constant(d: &Tensor3, strategy: LipschitzStrategy, eta: f64) -> Result<f64> {
    if d.frob_norm_sq() == 0.0 {
        return Err(Error::Degenerate("zero dictionary has no Lipschitz constant".into()));
    }
    let spec = fft3(d);
    Ok(lipschitz_from_grams(&half_grams(&spec), d.n3(), strategy, eta))
}

/// Smooth part `f(C) = ½‖T − D*C‖²_F` in Gram form.
pub(crate) struct GramModel {
    n3: usize,
    coeff_dims: (usize, usize, usize),
    grams: Vec<CMatrix>,
    cross: Vec<CMatrix>,
    target_energy: f64,
}

impl GramModel {
    pub(crate) fn new(d: &Tensor3, t: &Tensor3) -> Result<Self> {
        check_coding_dims(d, None, t)?;
        let (fd, ft) = (fft3(d), fft3(t));
        let n3 = d.n3();
        let grams = half_grams(&fd);
        let cross = (0..half_len(n3)).map(|b| cmul_adj_a(fd.slice(b), ft.slice(b))).collect();
        Ok(GramModel {
            n3,
            coeff_dims: (d.n2(), t.n2(), n3),
            grams,
            cross,
            target_energy: t.frob_norm_sq(),
        })
    }

    pub(crate) fn lipschitz(&self, strategy: LipschitzStrategy, eta: f64) -> f64 {
        lipschitz_from_grams(&self.grams, self.n3, strategy, eta)
    }

    /// `(f(C), ∇f(C))`.
    pub(crate) fn eval(&self, c: &Tensor3) -> Result<(f64, Tensor3)> {
        let fc = fft3(c);
        let products: Vec<CMatrix> = (0..half_len(self.n3))
            .into_par_iter()
            .map(|b| cmul(&self.grams[b], fc.slice(b)))
            .collect();
        let mut quad = 0.0;
        for (b, prod) in products.iter().enumerate() {
            let w = half_weight(b, self.n3);
            quad += w * (re_inner(fc.slice(b), prod) - 2.0 * re_inner(fc.slice(b), &self.cross[b]));
        }
        let value = (0.5 * self.target_energy + quad / (2.0 * self.n3 as f64)).max(0.0);
        let grad_spec = SpectralTensor::from_half_fn(self.n3, |b| &products[b] - &self.cross[b]);
        let grad = ifft3(&grad_spec)?;
        debug_assert_eq!(grad.dims(), self.coeff_dims);
        Ok((value, grad))
    }
}

/// Outcome of a sparse coding run.
#[derive(Debug, Clone)]
pub struct CodingResult {
    /// Best coefficients found, `m×N×n`.
    pub coeffs: Tensor3,
    /// Objective after every iteration.
    pub objective_trace: Vec<f64>,
    /// Objective of the returned coefficients.
    pub objective: f64,
    pub iterations: usize,
    pub restarts: usize,
    /// Global bound `η·L`; individual steps may use smaller local constants.
    pub lipschitz: f64,
}

/// FISTA from the zero coefficient tensor.
pub fn fista(d: &Tensor3, t: &Tensor3, cfg: &SparseCodeConfig) -> Result<CodingResult> {
    fista_warm(d, t, cfg, None)
}

/// Per-iteration trial reduction of the local step constant.
const STEP_SHRINK: f64 = 0.9;
/// Growth of the local step constant after a failed sufficient-decrease test.
const STEP_GROW: f64 = 2.0;
/// Relative objective change treated as rounding noise rather than ascent.
const OBJECTIVE_NOISE: f64 = 1e-13;
/// Smallest local constant tried, relative to the global bound.
const STEP_FLOOR: f64 = 1e-3;

/// FISTA started from `init` (zero when `None`).
///
/// Iterates `C ← shrink(B − ∇f(B)/L_s, λ/L_s)` with the momentum schedule
/// `t ← (1 + √(1 + 4t²))/2`, `B ← C + ((t_old − 1)/t)(C − C_prev)`. Whenever
/// an iterate raises the objective above the best seen so far, the momentum
/// is reset (`t = 1`, `B` = best iterate). The returned coefficients are the
/// best iterate, so the result never does worse than `init`.
///
/// `L_s` starts each iteration slightly below its previous value and grows
/// until the quadratic upper model holds at the trial point, never beyond
/// the configured bound `η·L`, where the model always holds.
pub fn fista_warm(
    d: &Tensor3,
    t: &Tensor3,
    cfg: &SparseCodeConfig,
    init: Option<&Tensor3>,
) -> Result<CodingResult> {
    cfg.validate()?;
    check_coding_dims(d, init, t)?;
    if d.frob_norm_sq() == 0.0 {
        return Err(Error::Degenerate("zero dictionary".into()));
    }
    let model = GramModel::new(d, t)?;
    let lipschitz = model.lipschitz(cfg.lipschitz, cfg.eta);
    let floor = lipschitz * STEP_FLOOR;
    let lambda = cfg.lambda;

    let start = match init {
        Some(c) => c.clone(),
        None => Tensor3::zeros(d.n2(), t.n2(), d.n3()),
    };
    let (f0, g0) = model.eval(&start)?;
    let mut best_obj = f0 + lambda * start.l1_norm();
    let mut best = start;
    let mut best_smooth = f0;
    let mut best_grad = g0;

    let mut prev = best.clone();
    let mut y = best.clone();
    let mut f_y = best_smooth;
    let mut grad_y = best_grad.clone();
    let mut local_l = lipschitz;
    let mut momentum = 1.0f64;
    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut restarts = 0;
    let mut iterations = 0;

    for s in 1..=cfg.max_iter {
        iterations = s;
        local_l = (local_l * STEP_SHRINK).max(floor);
        let (next, f_next, g_next) = loop {
            let step = 1.0 / local_l;
            let mut cand = y.clone();
            for (v, g) in cand.data_mut().iter_mut().zip(grad_y.data()) {
                *v = shrink(*v - step * g, lambda * step);
            }
            let (f_cand, g_cand) = model.eval(&cand)?;
            if local_l >= lipschitz || !f_cand.is_finite() {
                break (cand, f_cand, g_cand);
            }
            let (mut lin, mut dist) = (0.0, 0.0);
            for ((c, yv), g) in cand.data().iter().zip(y.data()).zip(grad_y.data()) {
                lin += g * (c - yv);
                dist += (c - yv) * (c - yv);
            }
            if f_cand <= f_y + lin + 0.5 * local_l * dist {
                break (cand, f_cand, g_cand);
            }
            local_l = (local_l * STEP_GROW).min(lipschitz);
        };
        let obj = f_next + lambda * next.l1_norm();
        if !obj.is_finite() {
            return Err(Error::Divergence {
                iteration: s,
                lipschitz: local_l,
            });
        }
        trace.push(obj);

        if obj > best_obj + OBJECTIVE_NOISE * best_obj.abs() {
            restarts += 1;
            momentum = 1.0;
            prev = best.clone();
            y = best.clone();
            f_y = best_smooth;
            grad_y = best_grad.clone();
            continue;
        }

        let decrease = (best_obj - obj).max(0.0);
        let reference = best_obj.abs();
        let momentum_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / momentum_next;
        if beta == 0.0 {
            y = next.clone();
            f_y = f_next;
            grad_y = g_next.clone();
        } else {
            y = next.clone();
            for ((yv, nv), pv) in y.data_mut().iter_mut().zip(next.data()).zip(prev.data()) {
                *yv = nv + beta * (nv - pv);
            }
            (f_y, grad_y) = model.eval(&y)?;
        }
        prev = next.clone();
        best = next;
        best_obj = obj;
        best_smooth = f_next;
        best_grad = g_next;
        momentum = momentum_next;

        if decrease < cfg.tol * reference {
            break;
        }
    }

    Ok(CodingResult {
        coeffs: best,
        objective_trace: trace,
        objective: best_obj,
        iterations,
        restarts,
        lipschitz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Tensor3 {
        Tensor3::from_fn(dims, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn shrink_values() {
        let x = Tensor3::from_vec((1, 3, 1), vec![0.3, -0.02, -0.4]).unwrap();
        let y = soft_threshold(&x, 0.05).unwrap();
        assert!((y.get(0, 0, 0) - 0.25).abs() < 1e-15);
        assert_eq!(y.get(0, 1, 0), 0.0);
        assert!((y.get(0, 2, 0) + 0.35).abs() < 1e-15);
        assert_eq!(soft_threshold(&x, 0.0).unwrap(), x);
        assert!(soft_threshold(&x, -1.0).is_err());
    }

    #[test]
    fn gradient_vanishes_at_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random((3, 5, 4), &mut rng);
        let c = random((5, 6, 4), &mut rng);
        let t = tproduct(&d, &c).unwrap();
        assert!(grad_f(&d, &c, &t).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn identity_dictionary_gradient_is_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random((3, 4, 5), &mut rng);
        let g = grad_f(&Tensor3::identity(3, 5), &c, &Tensor3::zeros(3, 4, 5)).unwrap();
        assert!(g.try_sub(&c).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn gram_model_matches_direct_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n3 in [1, 3, 4, 5] {
            let d = random((4, 6, n3), &mut rng);
            let t = random((4, 7, n3), &mut rng);
            let c = random((6, 7, n3), &mut rng);
            let (f, g) = GramModel::new(&d, &t).unwrap().eval(&c).unwrap();
            let f_direct = objective(&d, &c, &t, 0.0).unwrap();
            assert!((f - f_direct).abs() < 1e-10 * f_direct.max(1.0));
            let g_direct = grad_f(&d, &c, &t).unwrap();
            assert!(g.try_sub(&g_direct).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn identity_lipschitz_is_one() {
        let l = lipschitz_constant(&Tensor3::identity(4, 4), LipschitzStrategy::Spectral, 1.0).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert!(lipschitz_constant(&Tensor3::zeros(2, 2, 2), LipschitzStrategy::Spectral, 1.0).is_err());
    }

    #[test]
    fn frobenius_bound_dominates_spectral() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let d = random((4, 6, 4), &mut rng);
            let s = lipschitz_constant(&d, LipschitzStrategy::Spectral, 1.0).unwrap();
            let f = lipschitz_constant(&d, LipschitzStrategy::FrobeniusBound, 1.0).unwrap();
            assert!(f >= s);
        }
    }

    #[test]
    fn scalar_problem_is_soft_threshold() {
        let d = Tensor3::from_vec((1, 1, 1), vec![1.0]).unwrap();
        let t = Tensor3::from_vec((1, 1, 1), vec![1.0]).unwrap();
        let r = fista(&d, &t, &SparseCodeConfig::default()).unwrap();
        assert!((r.coeffs.get(0, 0, 0) - 0.95).abs() < 1e-12);
    }

    #[test]
    fn zero_target_gives_zero_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random((4, 8, 4), &mut rng);
        let cfg = SparseCodeConfig { tol: 0.0, ..Default::default() };
        let r = fista(&d, &Tensor3::zeros(4, 10, 4), &cfg).unwrap();
        assert_eq!(r.coeffs.max_abs(), 0.0);
        assert!(r.objective_trace.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn large_lambda_kills_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random((4, 8, 4), &mut rng);
        let t = random((4, 10, 4), &mut rng);
        let g0 = grad_f(&d, &Tensor3::zeros(8, 10, 4), &t).unwrap();
        let cfg = SparseCodeConfig {
            lambda: g0.max_abs() * 1.0001,
            ..Default::default()
        };
        assert_eq!(fista(&d, &t, &cfg).unwrap().coeffs.max_abs(), 0.0);
    }

    #[test]
    fn running_minimum_never_increases_and_beats_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = random((4, 8, 4), &mut rng);
        let t = random((4, 16, 4), &mut rng);
        let cfg = SparseCodeConfig { max_iter: 200, tol: 0.0, ..Default::default() };
        let r = fista(&d, &t, &cfg).unwrap();
        let mut running = f64::INFINITY;
        for v in &r.objective_trace {
            running = running.min(*v);
        }
        assert!((running - r.objective).abs() < 1e-12);
        assert!(r.objective <= 0.5 * t.frob_norm_sq());
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let d = Tensor3::identity(2, 2);
        let t = Tensor3::zeros(3, 2, 2);
        assert!(fista(&d, &t, &SparseCodeConfig::default()).is_err());
        let bad = SparseCodeConfig { eta: 0.5, ..Default::default() };
        assert!(fista(&d, &Tensor3::zeros(2, 2, 2), &bad).is_err());
    }
}
