//! Joint tensor dictionary learning.
//!
//! High-resolution patch blocks and low-resolution feature blocks that share
//! cube origins are stacked into one problem and forced to share codes. The
//! learner alternates a FISTA code update with a dictionary update solved in
//! the Fourier domain: for fixed codes, each frequency slice of the
//! dictionary has the closed form `D̃ = X̃C̃ᴴ(C̃C̃ᴴ + Ω)⁻¹`, where `Ω = diag(ω)`
//! holds one multiplier per atom. The multipliers maximize the Lagrange dual
//!
//! ```text
//! g(ω) = Σ_b ‖X̃⁽ᵇ⁾‖² − tr((C̃C̃ᴴ + Ω)⁻¹ K⁽ᵇ⁾) − n Σ_j ω_j,   K = (X̃C̃ᴴ)ᴴ(X̃C̃ᴴ)
//! ```
//!
//! over `ω ≥ 0`, which enforces `Σ_b ‖D̃⁽ᵇ⁾(:,j)‖² ≤ n`, i.e. unit Frobenius
//! norm for every spatial atom `D(:,j,:)`.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fold::TensorBlock;
use crate::linalg::{cmul, cmul_adj_a, cmul_adj_b, hermitian_eigenvalues, hpd_inverse, norm_sq, CMatrix};
use crate::sparse::{fista_warm, objective, SparseCodeConfig};
use crate::tensor::{fft3, half_len, half_weight, ifft3, tproduct, SpectralTensor, Tensor3};

/// Condition number above which the code Gram matrix gets a ridge.
pub const RIDGE_CONDITION: f64 = 1e12;
/// Relative ridge added to an ill-conditioned code Gram matrix.
pub const RIDGE: f64 = 1e-8;

/// Stacked high/low resolution training problem with shared codes.
#[derive(Debug, Clone)]
pub struct JointProblem {
    /// `[T_h/√N; T_l/√M]`.
    pub x: Tensor3,
    pub rows_high: usize,
    pub rows_low: usize,
    pub samples: usize,
    pub lambda: f64,
}

impl JointProblem {
    /// Stacking weights `(1/√N, 1/√M)`; both blocks carry `N` columns.
    pub fn weights(&self) -> (f64, f64) {
        let w = 1.0 / (self.samples as f64).sqrt();
        (w, w)
    }

    /// Splits a stacked dictionary into its high and low blocks, undoing
    /// the stacking weights.
    pub fn unstack(&self, d: &Tensor3) -> Result<(Tensor3, Tensor3)> {
        if d.n1() != self.rows_high + self.rows_low {
            return Err(Error::InvalidShape(format!(
                "dictionary has {} rows, problem stacks {} + {}",
                d.n1(),
                self.rows_high,
                self.rows_low
            )));
        }
        let (wh, wl) = self.weights();
        Ok((
            d.row_block(0, self.rows_high).scaled(1.0 / wh),
            d.row_block(self.rows_high, self.rows_low).scaled(1.0 / wl),
        ))
    }
}

/// Builds the stacked problem from co-located high and low resolution
/// blocks. `lambda` is the single combined sparsity weight.
pub fn stack_problem(th: &TensorBlock, tl: &TensorBlock, lambda: f64) -> Result<JointProblem> {
    if th.origins != tl.origins {
        return Err(Error::InvalidShape(
            "high and low resolution blocks come from different cube origins".into(),
        ));
    }
    stack_tensors(&th.block, &tl.block, lambda)
}

pub fn stack_tensors(th: &Tensor3, tl: &Tensor3, lambda: f64) -> Result<JointProblem> {
    if th.n2() != tl.n2() || th.n3() != tl.n3() {
        return Err(Error::DimensionMismatch {
            op: "stack_problem",
            left: th.dims(),
            right: tl.dims(),
        });
    }
    let samples = th.n2();
    let w = 1.0 / (samples as f64).sqrt();
    let x = Tensor3::vstack(&[&th.scaled(w), &tl.scaled(w)])?;
    Ok(JointProblem {
        x,
        rows_high: th.n1(),
        rows_low: tl.n1(),
        samples,
        lambda,
    })
}

/// Per-atom dual multipliers and Newton settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub omega: Vec<f64>,
    /// Tolerance on the projected dual gradient.
    pub tol: f64,
    pub max_iter: usize,
    pub backtrack: f64,
}

impl DualState {
    pub fn new(atoms: usize) -> Self {
        DualState {
            omega: vec![0.0; atoms],
            tol: 1e-8,
            max_iter: 50,
            backtrack: 0.5,
        }
    }
}

fn with_diagonal(gram: &CMatrix, omega: &[f64], ridge: f64) -> CMatrix {
    let mut m = gram.clone();
    for (j, w) in omega.iter().enumerate() {
        m[(j, j)] += Complex64::new(w + ridge, 0.0);
    }
    m
}

/// Ridge needed to make `gram + diag(ω)` safely invertible, or 0.
fn ridge_for(gram: &CMatrix, omega: &[f64]) -> f64 {
    let ev = hermitian_eigenvalues(&with_diagonal(gram, omega, 0.0));
    let (lo, hi) = (ev[0], *ev.last().unwrap());
    if lo > 0.0 && hi / lo <= RIDGE_CONDITION {
        0.0
    } else {
        RIDGE * hi.max(1.0)
    }
}

/// Closed-form dictionary slice `X̃C̃ᴴ(C̃C̃ᴴ + Ω)⁻¹` for one frequency.
pub fn dict_slice_update(x: &CMatrix, c: &CMatrix, omega: &[f64]) -> Result<CMatrix> {
    if x.ncols() != c.ncols() || omega.len() != c.nrows() {
        return Err(Error::InvalidShape(format!(
            "slice update with X {:?}, C {:?}, {} multipliers",
            x.shape(),
            c.shape(),
            omega.len()
        )));
    }
    let gram = cmul_adj_b(c, c);
    let ridge = ridge_for(&gram, omega);
    let inv = hpd_inverse(&with_diagonal(&gram, omega, ridge))
        .ok_or_else(|| Error::Conditioning("code Gram matrix singular after ridge".into()))?;
    Ok(cmul(&cmul_adj_b(x, c), &inv))
}

/// Frequency-slice data for the dual, non-redundant half of the spectrum.
struct DualProblem {
    n3: usize,
    atoms: usize,
    grams: Vec<CMatrix>,
    cross: Vec<CMatrix>,
    ks: Vec<CMatrix>,
    x_energy: f64,
    ridge: f64,
}

struct DualEval {
    value: f64,
    /// `Σ_b ‖D̃⁽ᵇ⁾(:,j)‖²` per atom.
    atom_energy: Vec<f64>,
    /// Hessian of the dual, negative semidefinite.
    hessian: Option<DMatrix<f64>>,
}

impl DualProblem {
    fn new(x: &SpectralTensor, c: &SpectralTensor) -> Result<Self> {
        let (_, samples, n3) = x.dims();
        if c.dims().1 != samples || c.dims().2 != n3 {
            return Err(Error::DimensionMismatch {
                op: "dual problem",
                left: x.dims(),
                right: c.dims(),
            });
        }
        let h = half_len(n3);
        let parts: Vec<(CMatrix, CMatrix, CMatrix)> = (0..h)
            .into_par_iter()
            .map(|b| {
                let gram = cmul_adj_b(c.slice(b), c.slice(b));
                let cross = cmul_adj_b(x.slice(b), c.slice(b));
                let k = cmul_adj_a(&cross, &cross);
                (gram, cross, k)
            })
            .collect();
        let x_energy = (0..h).map(|b| half_weight(b, n3) * norm_sq(x.slice(b))).sum();
        let (mut grams, mut cross, mut ks) = (Vec::new(), Vec::new(), Vec::new());
        for (g, a, k) in parts {
            grams.push(g);
            cross.push(a);
            ks.push(k);
        }
        Ok(DualProblem {
            n3,
            atoms: c.dims().0,
            grams,
            cross,
            ks,
            x_energy,
            ridge: 0.0,
        })
    }

    fn choose_ridge(&mut self, omega: &[f64]) {
        self.ridge = self.grams.iter().map(|g| ridge_for(g, omega)).fold(0.0, f64::max);
    }

    fn inverses(&self, omega: &[f64]) -> Result<Vec<CMatrix>> {
        self.grams
            .par_iter()
            .map(|g| {
                hpd_inverse(&with_diagonal(g, omega, self.ridge))
                    .ok_or_else(|| Error::Conditioning("code Gram matrix is singular".into()))
            })
            .collect()
    }

    fn eval(&self, omega: &[f64], with_hessian: bool) -> Result<DualEval> {
        let m = self.atoms;
        let inverses = self.inverses(omega)?;
        let per_slice: Vec<(f64, Vec<f64>, Option<DMatrix<f64>>)> = (0..inverses.len())
            .into_par_iter()
            .map(|b| {
                let inv = &inverses[b];
                let inv_k = cmul(inv, &self.ks[b]);
                let trace: f64 = (0..m).map(|j| inv_k[(j, j)].re).sum();
                // D̃ᴴD̃ = M⁻¹ K M⁻¹
                let p = cmul(&inv_k, inv);
                let energy = (0..m).map(|j| p[(j, j)].re).collect();
                let hess = with_hessian
                    .then(|| DMatrix::from_fn(m, m, |i, j| -2.0 * (inv[(j, i)] * p[(i, j)]).re));
                (trace, energy, hess)
            })
            .collect();
        let mut value = self.x_energy - self.n3 as f64 * omega.iter().sum::<f64>();
        let mut atom_energy = vec![0.0; m];
        let mut hessian = with_hessian.then(|| DMatrix::zeros(m, m));
        for (b, (trace, energy, hess)) in per_slice.into_iter().enumerate() {
            let w = half_weight(b, self.n3);
            value -= w * trace;
            for (acc, e) in atom_energy.iter_mut().zip(energy) {
                *acc += w * e;
            }
            if let (Some(total), Some(h)) = (hessian.as_mut(), hess) {
                *total += h * w;
            }
        }
        Ok(DualEval {
            value,
            atom_energy,
            hessian,
        })
    }

    fn dictionary(&self, omega: &[f64]) -> Result<SpectralTensor> {
        let inverses = self.inverses(omega)?;
        Ok(SpectralTensor::from_half_fn(self.n3, |b| cmul(&self.cross[b], &inverses[b])))
    }
}

/// Result of maximizing the dual.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub omega: Vec<f64>,
    pub value: f64,
    /// `Σ_b ‖D̃⁽ᵇ⁾(:,j)‖²` at `omega`; the constraint bound is `n`.
    pub atom_energy: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub ridge: f64,
}

/// Dual value `g(ω)` for spectra `x̃`, `c̃`, ignoring any ridge.
pub fn dual_value(x: &SpectralTensor, c: &SpectralTensor, omega: &[f64]) -> Result<f64> {
    Ok(DualProblem::new(x, c)?.eval(omega, false)?.value)
}

fn projected_gradient_norm(omega: &[f64], grad_h: &[f64]) -> f64 {
    omega
        .iter()
        .zip(grad_h)
        .map(|(w, g)| (w - (w - g).max(0.0)).abs())
        .fold(0.0, f64::max)
}

fn solve_newton_system(h: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut damping = 0.0;
    loop {
        let mut hd = h.clone();
        for i in 0..hd.nrows() {
            hd[(i, i)] += damping;
        }
        if let Some(ch) = hd.cholesky() {
            return ch.solve(rhs);
        }
        damping = if damping == 0.0 { 1e-12 * scale } else { damping * 10.0 };
        if damping > 1e6 * scale {
            return rhs / scale;
        }
    }
}

/// Maximizes the dual over `ω ≥ 0` with a projected Newton method and
/// backtracking line search, starting from `state.omega`.
///
/// Atoms sitting at the bound with a dual gradient pointing outward are held
/// fixed; the remaining coordinates take a Newton step on their sub-Hessian.
/// If the iteration limit is hit, the best iterate is returned with
/// `converged = false`.
pub fn solve_dual(x: &SpectralTensor, c: &SpectralTensor, state: &DualState) -> Result<DualSolution> {
    let mut problem = DualProblem::new(x, c)?;
    solve_dual_problem(&mut problem, state)
}

fn solve_dual_problem(problem: &mut DualProblem, state: &DualState) -> Result<DualSolution> {
    let m = problem.atoms;
    let bound = problem.n3 as f64;
    let mut omega: Vec<f64> = if state.omega.len() == m {
        state.omega.iter().map(|w| w.max(0.0)).collect()
    } else {
        vec![0.0; m]
    };
    problem.choose_ridge(&omega);

    let mut current = problem.eval(&omega, true)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < state.max_iter {
        // minimize h = −g; ∇h_j = n − energy_j
        let grad_h: Vec<f64> = current.atom_energy.iter().map(|e| bound - e).collect();
        let pg = projected_gradient_norm(&omega, &grad_h);
        if pg <= state.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let eps = pg.min(1e-6);
        let free: Vec<usize> = (0..m).filter(|&j| !(omega[j] <= eps && grad_h[j] > 0.0)).collect();
        let mut direction = vec![0.0; m];
        for j in 0..m {
            direction[j] = -grad_h[j];
        }
        if !free.is_empty() {
            let hess = current.hessian.as_ref().expect("hessian requested");
            let sub = DMatrix::from_fn(free.len(), free.len(), |a, b| -hess[(free[a], free[b])]);
            let rhs = DVector::from_iterator(free.len(), free.iter().map(|&j| -grad_h[j]));
            let step = solve_newton_system(&sub, &rhs);
            for (a, &j) in free.iter().enumerate() {
                direction[j] = step[a];
            }
        }

        let h_now = -current.value;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = omega
                .iter()
                .zip(&direction)
                .map(|(w, p)| (w + alpha * p).max(0.0))
                .collect();
            let predicted: f64 = grad_h
                .iter()
                .zip(trial.iter().zip(&omega))
                .map(|(g, (t, w))| g * (t - w))
                .sum();
            let eval = problem.eval(&trial, true)?;
            let h_trial = -eval.value;
            let noise = 1e-13 * h_now.abs().max(1.0);
            let armijo = h_trial <= h_now + 1e-4 * predicted.min(0.0);
            let within_noise = (1e-4 * predicted).abs() < noise && h_trial <= h_now + noise && {
                let g_trial: Vec<f64> = eval.atom_energy.iter().map(|e| bound - e).collect();
                projected_gradient_norm(&trial, &g_trial) < pg
            };
            if armijo || within_noise {
                accepted = Some((trial, eval));
                break;
            }
            alpha *= state.backtrack;
        }
        match accepted {
            Some((trial, eval)) => {
                omega = trial;
                current = eval;
            }
            None => break,
        }
    }
    if !converged {
        let grad_h: Vec<f64> = current.atom_energy.iter().map(|e| bound - e).collect();
        converged = projected_gradient_norm(&omega, &grad_h) <= state.tol;
        if !converged {
            warn!("dual Newton stopped after {iterations} iterations without converging");
        }
    }
    Ok(DualSolution {
        omega,
        value: current.value,
        atom_energy: current.atom_energy,
        iterations,
        converged,
        ridge: problem.ridge,
    })
}

/// Outcome of one dictionary update.
#[derive(Debug, Clone)]
pub struct DictUpdate {
    pub dictionary: Tensor3,
    /// Multipliers for every atom; unused atoms carry 0.
    pub omega: Vec<f64>,
    pub converged: bool,
    pub newton_iterations: usize,
}

/// Atoms whose code row is nonzero somewhere.
fn used_atoms(c: &Tensor3) -> Vec<usize> {
    let (m, samples, n3) = c.dims();
    (0..m)
        .filter(|&j| (0..n3).any(|k| (0..samples).any(|s| c.get(j, s, k) != 0.0)))
        .collect()
}

fn rows_of(c: &Tensor3, rows: &[usize]) -> Tensor3 {
    Tensor3::from_fn((rows.len(), c.n2(), c.n3()), |i, s, k| c.get(rows[i], s, k))
}

/// Scales atoms with `‖D(:,j,:)‖²_F > 1` back onto the unit sphere.
pub fn project_atoms(d: &mut Tensor3) {
    for j in 0..d.n2() {
        let e = d.lateral_norm_sq(j).expect("atom index in range");
        if e > 1.0 {
            let s = 1.0 / e.sqrt();
            let col = d.lateral(j).scaled(s);
            d.set_lateral(j, &col);
        }
    }
}

/// Minimizes `‖X − D*C‖²_F` over dictionaries with unit-bounded atoms, for
/// fixed codes `c`.
///
/// Atoms no sample uses keep their column from `previous`; they do not
/// affect the fit. With `c = 0` the previous dictionary is returned as is.
pub fn dictionary_update(
    x: &Tensor3,
    c: &Tensor3,
    previous: &Tensor3,
    state: &DualState,
) -> Result<DictUpdate> {
    let (rows, samples, n3) = x.dims();
    let m = previous.n2();
    if c.dims() != (m, samples, n3) || previous.dims() != (rows, m, n3) {
        return Err(Error::DimensionMismatch {
            op: "dictionary_update",
            left: x.dims(),
            right: c.dims(),
        });
    }
    let used = used_atoms(c);
    if used.is_empty() {
        return Ok(DictUpdate {
            dictionary: previous.clone(),
            omega: vec![0.0; m],
            converged: true,
            newton_iterations: 0,
        });
    }
    let sub_state = DualState {
        omega: used
            .iter()
            .map(|&j| state.omega.get(j).copied().unwrap_or(0.0))
            .collect(),
        ..state.clone()
    };
    let mut problem = DualProblem::new(&fft3(x), &fft3(&rows_of(c, &used)))?;
    let solution = solve_dual_problem(&mut problem, &sub_state)?;
    let learned = ifft3(&problem.dictionary(&solution.omega)?)?;

    let mut dictionary = previous.clone();
    let mut omega = vec![0.0; m];
    for (a, &j) in used.iter().enumerate() {
        dictionary.set_lateral(j, &learned.lateral(a));
        omega[j] = solution.omega[a];
    }
    project_atoms(&mut dictionary);
    Ok(DictUpdate {
        dictionary,
        omega,
        converged: solution.converged,
        newton_iterations: solution.iterations,
    })
}

/// Settings for alternating dictionary learning.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    /// Number of atoms `m`.
    pub atoms: usize,
    /// Outer iterations `T`.
    pub outer_iters: usize,
    pub sparse: SparseCodeConfig,
    pub seed: u32,
}

/// Output of [`learn_dictionary`].
#[derive(Debug, Clone)]
pub struct LearnedDictionary {
    pub dictionary: Tensor3,
    pub coeffs: Tensor3,
    /// Objective at the start and after every half-step (length `1 + 2T`).
    pub trace: Vec<f64>,
    /// Objective at the start and after every outer iteration (length `1 + T`).
    pub outer_trace: Vec<f64>,
    pub reseeded_atoms: usize,
    pub warnings: Vec<String>,
}

fn nonzero_columns(x: &Tensor3) -> Vec<usize> {
    (0..x.n2()).filter(|&j| x.lateral_norm_sq(j).unwrap() > 0.0).collect()
}

fn normalized_column(x: &Tensor3, j: usize) -> Tensor3 {
    let col = x.lateral(j);
    let norm = col.frob_norm();
    col.scaled(1.0 / norm)
}

/// `m` atoms copied from randomly chosen nonzero training columns and
/// normalized to unit Frobenius norm.
pub fn initial_dictionary(x: &Tensor3, atoms: usize, seed: u32) -> Result<Tensor3> {
    let candidates = nonzero_columns(x);
    if candidates.is_empty() {
        return Err(Error::Degenerate("all training columns are zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let picks: Vec<usize> = if candidates.len() >= atoms {
        index::sample(&mut rng, candidates.len(), atoms).into_vec()
    } else {
        let mut v: Vec<usize> = (0..candidates.len()).collect();
        while v.len() < atoms {
            v.push(rng.gen_range(0..candidates.len()));
        }
        v
    };
    let mut d = Tensor3::zeros(x.n1(), atoms, x.n3());
    for (j, &p) in picks.iter().enumerate() {
        d.set_lateral(j, &normalized_column(x, candidates[p]));
    }
    Ok(d)
}

/// Replaces atoms with an all-zero code row by the worst-reconstructed
/// training columns. Returns how many atoms were replaced.
fn reseed_dead_atoms(x: &Tensor3, d: &mut Tensor3, c: &Tensor3) -> Result<usize> {
    let used = used_atoms(c);
    let dead: Vec<usize> = (0..d.n2()).filter(|j| !used.contains(j)).collect();
    if dead.is_empty() {
        return Ok(0);
    }
    let residual = x.try_sub(&tproduct(d, c)?)?;
    let mut order: Vec<(f64, usize)> = nonzero_columns(x)
        .into_iter()
        .map(|j| (residual.lateral_norm_sq(j).unwrap(), j))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    if order.is_empty() {
        return Ok(0);
    }
    for (slot, &atom) in dead.iter().enumerate() {
        let (_, col) = order[slot % order.len()];
        d.set_lateral(atom, &normalized_column(x, col));
    }
    Ok(dead.len())
}

/// Alternating minimization of `½‖X − D*C‖²_F + λ‖C‖₁` subject to
/// `‖D(:,j,:)‖²_F ≤ 1`.
///
/// Each outer iteration runs FISTA warm-started from the previous codes,
/// reseeds unused atoms, then updates the dictionary. Neither half-step can
/// raise the objective.
pub fn learn_dictionary(x: &Tensor3, cfg: &LearnConfig) -> Result<LearnedDictionary> {
    cfg.sparse.validate()?;
    if cfg.atoms == 0 {
        return Err(Error::Config("m = 0 atoms".into()));
    }
    if x.frob_norm_sq() == 0.0 {
        return Err(Error::Degenerate("training block is all zeros".into()));
    }
    let mut warnings = Vec::new();
    if x.n2() < cfg.atoms {
        let msg = format!("only {} samples for {} atoms", x.n2(), cfg.atoms);
        warn!("{msg}");
        warnings.push(msg);
    }
    let lambda = cfg.sparse.lambda;
    let mut d = initial_dictionary(x, cfg.atoms, cfg.seed)?;
    let mut c = Tensor3::zeros(cfg.atoms, x.n2(), x.n3());
    let initial = objective(&d, &c, x, lambda)?;
    let mut trace = vec![initial];
    let mut outer_trace = vec![initial];
    let mut dual = DualState::new(cfg.atoms);
    let mut reseeded_atoms = 0;

    for outer in 0..cfg.outer_iters {
        let coding = fista_warm(&d, x, &cfg.sparse, Some(&c))?;
        c = coding.coeffs;
        trace.push(objective(&d, &c, x, lambda)?);
        reseeded_atoms += reseed_dead_atoms(x, &mut d, &c)?;

        let update = dictionary_update(x, &c, &d, &dual)?;
        if !update.converged {
            warnings.push(format!("dual Newton did not converge in outer iteration {}", outer + 1));
        }
        d = update.dictionary;
        dual.omega = update.omega;
        let value = objective(&d, &c, x, lambda)?;
        trace.push(value);
        outer_trace.push(value);
        debug!(
            "outer {}: objective {:.9e}, FISTA iters {}, Newton iters {}",
            outer + 1,
            value,
            coding.iterations,
            update.newton_iterations
        );
    }
    Ok(LearnedDictionary {
        dictionary: d,
        coeffs: c,
        trace,
        outer_trace,
        reseeded_atoms,
        warnings,
    })
}

/// Training metadata carried alongside a learned pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub lambda: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub seed: u32,
    pub samples: usize,
    pub objective_trace: Vec<f64>,
    pub outer_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Coupled dictionaries: `dh` (`d_h×m×n`) reconstructs high-resolution
/// patches, `dl` (`d_l×m×n`) explains low-resolution features.
///
/// Both are the row blocks of the learned stacked dictionary, so every
/// stacked atom `[dh; dl](:,j,:)` has squared norm at most 1.
/// [`JointProblem::unstack`] rescales them to data units.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryPair {
    pub dh: Tensor3,
    pub dl: Tensor3,
    pub meta: TrainingMeta,
}

impl DictionaryPair {
    pub fn stacked(&self) -> Result<Tensor3> {
        Tensor3::vstack(&[&self.dh, &self.dl])
    }
}

/// Learns the coupled pair for a stacked problem.
pub fn train_dictionaries(problem: &JointProblem, cfg: &LearnConfig) -> Result<DictionaryPair> {
    let sparse = SparseCodeConfig {
        lambda: problem.lambda,
        ..cfg.sparse.clone()
    };
    let learned = learn_dictionary(&problem.x, &LearnConfig { sparse, ..cfg.clone() })?;
    let d = &learned.dictionary;
    Ok(DictionaryPair {
        dh: d.row_block(0, problem.rows_high),
        dl: d.row_block(problem.rows_high, problem.rows_low),
        meta: TrainingMeta {
            lambda: problem.lambda,
            outer_iters: cfg.outer_iters,
            inner_iters: cfg.sparse.max_iter,
            seed: cfg.seed,
            samples: problem.samples,
            objective_trace: learned.trace,
            outer_trace: learned.outer_trace,
            warnings: learned.warnings,
        },
    })
}
