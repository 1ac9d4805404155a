//! LASSO sparse coding with FISTA.
//!
//! Every column solves `min_c ||y - A c||^2 + lambda ||c||_1` (no 1/2 factor).
//! The gradient is `2 A'(A c - y)`, so the Lipschitz constant is
//! `2 sigma_max(A)^2` and the soft-threshold level is `lambda * step`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Coefficient matrix, one column per signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodes {
    coeffs: DMatrix<f64>,
}

impl SparseCodes {
    pub fn new(coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse code entry".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(n_atoms: usize, n_signals: usize) -> Self {
        Self {
            coeffs: DMatrix::zeros(n_atoms, n_signals),
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn n_signals(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.coeffs
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.coeffs
    }

    pub fn nonzeros_per_column(&self) -> Vec<usize> {
        self.coeffs
            .column_iter()
            .map(|c| c.iter().filter(|v| **v != 0.0).count())
            .collect()
    }

    /// Largest column support, the effective `S` of the model.
    pub fn max_nonzeros(&self) -> usize {
        self.nonzeros_per_column().into_iter().max().unwrap_or(0)
    }

    /// `||C||_{1,1}`.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|v| v.abs()).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    /// Effective dictionary, `N_sig x N_c`.
    pub dictionary: &'a DMatrix<f64>,
    /// Signals, `N_sig x N`.
    pub signals: &'a DMatrix<f64>,
    pub lambda: f64,
}

impl<'a> LassoProblem<'a> {
    pub fn new(dictionary: &'a DMatrix<f64>, signals: &'a DMatrix<f64>, lambda: f64) -> Self {
        Self {
            dictionary,
            signals,
            lambda,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::param(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.dictionary.nrows() != self.signals.nrows() {
            return Err(Error::dims(format!(
                "dictionary has {} rows, signals have {}",
                self.dictionary.nrows(),
                self.signals.nrows()
            )));
        }
        if self.dictionary.ncols() == 0 {
            return Err(Error::dims("dictionary has no atoms"));
        }
        if self.dictionary.iter().chain(self.signals.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LASSO inputs".into()));
        }
        if self.dictionary.iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate("zero dictionary".into()));
        }
        Ok(())
    }
}

/// `||y - A c||^2 + lambda ||c||_1`, evaluated from the residual.
pub fn lasso_objective(a: &DMatrix<f64>, y: &DVector<f64>, c: &DVector<f64>, lambda: f64) -> f64 {
    (y - a * c).norm_squared() + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
}

#[inline]
pub fn soft_threshold(x: f64, level: f64) -> f64 {
    if x > level {
        x - level
    } else if x < -level {
        x + level
    } else {
        0.0
    }
}

/// Largest singular value of `a` by power iteration on `a'a`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    let n = gram.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = DVector::from_fn(n, |_, _| 1.0 + 0.1 * rng.random::<f64>());
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-13 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotient at the final iterate.
    v.dot(&(&gram * &v)).max(lambda).sqrt()
}

/// Step size `1 / (2 sigma_max(A)^2)`.
pub fn lipschitz_step(a: &DMatrix<f64>) -> Result<f64> {
    let s = spectral_norm(a);
    if !(s > 0.0) {
        return Err(Error::Degenerate("zero dictionary has no Lipschitz step".into()));
    }
    Ok(1.0 / (2.0 * s * s))
}

/// Solver output with per-column iteration counts.
#[derive(Debug, Clone)]
pub struct FistaOutcome {
    pub codes: SparseCodes,
    pub iterations: Vec<usize>,
}

/// Solves every column from zero initial codes.
pub fn fista_solve(prob: &LassoProblem<'_>, max_iters: usize, tol: f64) -> Result<SparseCodes> {
    fista_solve_from(prob, None, max_iters, tol).map(|o| o.codes)
}

/// Solves every column, optionally warm-started from `init`.
///
/// Columns are independent: each uses its own iteration count and stopping
/// test, so results do not depend on how columns are scheduled.
pub fn fista_solve_from(
    prob: &LassoProblem<'_>,
    init: Option<&SparseCodes>,
    max_iters: usize,
    tol: f64,
) -> Result<FistaOutcome> {
    prob.validate()?;
    let a = prob.dictionary;
    let n_atoms = a.ncols();
    let n = prob.signals.ncols();
    if let Some(c0) = init {
        if c0.n_atoms() != n_atoms || c0.n_signals() != n {
            return Err(Error::dims(format!(
                "initial codes {}x{} for {n_atoms} atoms and {n} signals",
                c0.n_atoms(),
                c0.n_signals()
            )));
        }
    }
    let step = lipschitz_step(a)?;
    let gram = a.transpose() * a;
    let solver = ColumnSolver {
        a,
        gram: &gram,
        lambda: prob.lambda,
        step,
        max_iters,
        tol,
    };

    let solved: Vec<(DVector<f64>, usize)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let y = prob.signals.column(j).into_owned();
            let x0 = match init {
                Some(c0) => c0.coeffs().column(j).into_owned(),
                None => DVector::zeros(n_atoms),
            };
            solver.solve(&y, x0)
        })
        .collect();

    let mut coeffs = DMatrix::zeros(n_atoms, n);
    let mut iterations = Vec::with_capacity(n);
    for (j, (c, it)) in solved.into_iter().enumerate() {
        coeffs.set_column(j, &c);
        iterations.push(it);
    }
    Ok(FistaOutcome {
        codes: SparseCodes::new(coeffs)?,
        iterations,
    })
}

struct ColumnSolver<'a> {
    a: &'a DMatrix<f64>,
    gram: &'a DMatrix<f64>,
    lambda: f64,
    step: f64,
    max_iters: usize,
    tol: f64,
}

impl ColumnSolver<'_> {
    /// `G x` with one dot product per row of the symmetric Gram matrix.
    fn gram_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), self.gram.column_iter().map(|g| g.dot(x)))
    }

    fn objective(&self, yy: f64, b: &DVector<f64>, x: &DVector<f64>, gx: &DVector<f64>) -> f64 {
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        (yy - 2.0 * b.dot(x) + x.dot(gx)).max(0.0) + self.lambda * l1
    }

    /// Monotone FISTA: a candidate that raises the objective is rejected and
    /// momentum restarts from the last accepted iterate.
    fn solve(&self, y: &DVector<f64>, x0: DVector<f64>) -> (DVector<f64>, usize) {
        let n = x0.len();
        let b = DVector::from_iterator(n, self.a.column_iter().map(|col| col.dot(y)));
        let yy = y.norm_squared();
        let level = self.lambda * self.step;

        let mut x = x0;
        let mut gx = self.gram_mul(&x);
        let mut fx = self.objective(yy, &b, &x, &gx);
        let mut v = x.clone();
        let mut gv = gx.clone();
        let mut t = 1.0_f64;
        let mut restarted = true;

        let mut iters = 0;
        while iters < self.max_iters {
            iters += 1;
            let z = DVector::from_iterator(
                n,
                (0..n).map(|i| soft_threshold(v[i] - self.step * 2.0 * (gv[i] - b[i]), level)),
            );
            let gz = self.gram_mul(&z);
            let fz = self.objective(yy, &b, &z, &gz);
            if fz > fx {
                if restarted {
                    // A plain proximal step from x cannot increase the
                    // objective beyond rounding; x is converged.
                    break;
                }
                t = 1.0;
                v.copy_from(&x);
                gv.copy_from(&gx);
                restarted = true;
                continue;
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            v = &z + (&z - &x) * beta;
            gv = &gz + (&gz - &gx) * beta;
            let rel = (fx - fz) / fx.max(f64::MIN_POSITIVE);
            x = z;
            gx = gz;
            fx = fz;
            t = t_next;
            restarted = false;
            if rel < self.tol {
                break;
            }
        }
        (x, iters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_dictionary_soft_thresholds() {
        let a = DMatrix::identity(4, 4);
        let y = DMatrix::from_column_slice(4, 1, &[1.0, -0.3, 0.05, -2.0]);
        let lambda = 0.4;
        let c = fista_solve(&LassoProblem::new(&a, &y, lambda), 200, 1e-12).unwrap();
        for i in 0..4 {
            let expected = soft_threshold(y[(i, 0)], lambda / 2.0);
            assert!((c.coeffs()[(i, 0)] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 10, 6);
        let y = random_matrix(&mut rng, 10, 1);
        let lambda = 2.0 * (a.transpose() * &y).amax();
        let c = fista_solve(&LassoProblem::new(&a, &y, lambda * 1.0000001), 500, 0.0).unwrap();
        assert!(c.coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lipschitz_closed_forms() {
        assert!((lipschitz_step(&DMatrix::identity(5, 5)).unwrap() - 0.5).abs() < 1e-12);
        assert!((lipschitz_step(&(DMatrix::identity(5, 5) * 2.0)).unwrap() - 0.125).abs() < 1e-12);
        assert!(lipschitz_step(&DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 12, 7);
            let svd_max = a.clone().svd(false, false).singular_values.max();
            assert!((spectral_norm(&a) - svd_max).abs() < 1e-5 * svd_max);
        }
    }

    #[test]
    fn invalid_problems_rejected() {
        let a = DMatrix::identity(3, 3);
        let y = DMatrix::zeros(3, 2);
        assert!(fista_solve(&LassoProblem::new(&a, &y, 0.0), 10, 1e-6).is_err());
        assert!(fista_solve(&LassoProblem::new(&DMatrix::zeros(3, 3), &y, 0.1), 10, 1e-6).is_err());
        assert!(fista_solve(&LassoProblem::new(&a, &DMatrix::zeros(4, 1), 0.1), 10, 1e-6).is_err());
        let mut bad = y.clone();
        bad[(0, 0)] = f64::INFINITY;
        assert!(fista_solve(&LassoProblem::new(&a, &bad, 0.1), 10, 1e-6).is_err());
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 16, 24);
        let y = random_matrix(&mut rng, 16, 1);
        let yv = y.column(0).into_owned();
        let lambda = 0.1;
        let mut prev = f64::INFINITY;
        let mut codes = SparseCodes::zeros(24, 1);
        for _ in 0..60 {
            let o = fista_solve_from(&LassoProblem::new(&a, &y, lambda), Some(&codes), 1, 0.0).unwrap();
            codes = o.codes;
            let f = lasso_objective(&a, &yv, &codes.coeffs().column(0).into_owned(), lambda);
            assert!(f <= prev + 1e-12);
            prev = f;
        }
    }

    #[test]
    fn warm_start_dimension_checked() {
        let a = DMatrix::identity(3, 3);
        let y = DMatrix::zeros(3, 2);
        let init = SparseCodes::zeros(3, 3);
        assert!(fista_solve_from(&LassoProblem::new(&a, &y, 0.1), Some(&init), 5, 1e-6).is_err());
    }

    #[test]
    fn sparsity_diagnostics() {
        let c = SparseCodes::new(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, -2.0, 3.0, 0.0])).unwrap();
        assert_eq!(c.nonzeros_per_column(), vec![2, 1]);
        assert_eq!(c.max_nonzeros(), 2);
        assert_eq!(c.l1_norm(), 6.0);
    }
}
