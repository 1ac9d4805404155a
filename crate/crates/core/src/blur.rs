//! Block-Toeplitz blur matrices and the two blur estimators.
//!
//! A `k x k` kernel acting on `p x p` patches by narrow convolution is the
//! `N_l x N_h` matrix `B = sum_i theta_i M_i`, with `N_h = p^2`,
//! `N_l = (p - k + 1)^2` and `M_i` the binary selector of kernel tap `i`.
//! Taps are indexed row-major (`i = u * k + v`), matching [`Kernel`].

use nalgebra::{DMatrix, DVector};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::imaging::{Kernel, PatchSet};
use crate::sparse::SparseCodes;

/// Singular values below this fraction of the largest are dropped by BME-GR.
pub const PINV_RTOL: f64 = 1e-10;

/// The `k^2` selector matrices, stored as one column index per LR row.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrixSet {
    k: usize,
    p: usize,
    /// `cols[i][r]` is the HR pixel that tap `i` reads for LR pixel `r`.
    cols: Vec<Vec<usize>>,
}

impl BasisMatrixSet {
    pub fn kernel_side(&self) -> usize {
        self.k
    }

    pub fn patch_side(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn lr_dim(&self) -> usize {
        let q = self.p - self.k + 1;
        q * q
    }

    pub fn hr_dim(&self) -> usize {
        self.p * self.p
    }

    pub fn selector(&self, tap: usize) -> &[usize] {
        &self.cols[tap]
    }

    /// Dense `M_i`.
    pub fn dense(&self, tap: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.lr_dim(), self.hr_dim());
        for (r, &c) in self.cols[tap].iter().enumerate() {
            m[(r, c)] = 1.0;
        }
        m
    }

    /// Dense `sum_i theta_i M_i`.
    pub fn combine(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        if theta.len() != self.len() {
            return Err(Error::dims(format!(
                "{} coefficients for {} basis matrices",
                theta.len(),
                self.len()
            )));
        }
        let mut b = DMatrix::zeros(self.lr_dim(), self.hr_dim());
        for (sel, &t) in self.cols.iter().zip(theta) {
            for (r, &c) in sel.iter().enumerate() {
                b[(r, c)] += t;
            }
        }
        Ok(b)
    }

    /// Least-squares projection of a dense matrix onto the span of the
    /// selectors. The supports are disjoint, so each coefficient is the mean
    /// of the entries its selector picks out.
    pub fn project(&self, dense: &DMatrix<f64>) -> Result<Vec<f64>> {
        if dense.shape() != (self.lr_dim(), self.hr_dim()) {
            return Err(Error::dims(format!(
                "cannot project {:?} onto {}x{} Toeplitz family",
                dense.shape(),
                self.lr_dim(),
                self.hr_dim()
            )));
        }
        Ok(self
            .cols
            .iter()
            .map(|sel| {
                sel.iter().enumerate().map(|(r, &c)| dense[(r, c)]).sum::<f64>() / sel.len() as f64
            })
            .collect())
    }
}

pub fn build_basis_matrices(k: usize, p: usize) -> Result<BasisMatrixSet> {
    if k == 0 || k > p {
        return Err(Error::param(format!(
            "kernel side {k} must be in 1..={p} for {p}x{p} patches"
        )));
    }
    let q = p - k + 1;
    let cols = (0..k * k)
        .map(|tap| {
            let (u, v) = (tap / k, tap % k);
            (0..q * q)
                .map(|r| {
                    let (a, b) = (r / q, r % q);
                    (a + u) * p + b + v
                })
                .collect()
        })
        .collect();
    Ok(BasisMatrixSet { k, p, cols })
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlurRepr {
    /// Block-Toeplitz, parameterized by the `k^2` kernel taps.
    Structured(Vec<f64>),
    /// Unconstrained `N_l x N_h` matrix, as produced by BME-GR.
    Dense(DMatrix<f64>),
}

/// Blur operator for `p x p` patches with a `k x k` support.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurMatrix {
    k: usize,
    p: usize,
    repr: BlurRepr,
}

impl BlurMatrix {
    pub fn structured(k: usize, p: usize, theta: Vec<f64>) -> Result<Self> {
        if k == 0 || k > p {
            return Err(Error::param(format!("kernel side {k} invalid for patch side {p}")));
        }
        if theta.len() != k * k {
            return Err(Error::dims(format!("{} taps for kernel side {k}", theta.len())));
        }
        Ok(Self {
            k,
            p,
            repr: BlurRepr::Structured(theta),
        })
    }

    pub fn dense(k: usize, p: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if k == 0 || k > p {
            return Err(Error::param(format!("kernel side {k} invalid for patch side {p}")));
        }
        let q = p - k + 1;
        if matrix.shape() != (q * q, p * p) {
            return Err(Error::dims(format!(
                "dense blur must be {}x{}, got {:?}",
                q * q,
                p * p,
                matrix.shape()
            )));
        }
        Ok(Self {
            k,
            p,
            repr: BlurRepr::Dense(matrix),
        })
    }

    /// Flat kernel `theta_i = 1 / k^2`.
    pub fn uniform(k: usize, p: usize) -> Result<Self> {
        Self::structured(k, p, vec![1.0 / (k * k) as f64; k * k])
    }

    pub fn kernel_side(&self) -> usize {
        self.k
    }

    pub fn patch_side(&self) -> usize {
        self.p
    }

    pub fn lr_side(&self) -> usize {
        self.p - self.k + 1
    }

    pub fn repr(&self) -> &BlurRepr {
        &self.repr
    }

    pub fn theta(&self) -> Option<&[f64]> {
        match &self.repr {
            BlurRepr::Structured(t) => Some(t),
            BlurRepr::Dense(_) => None,
        }
    }

    pub fn is_structured(&self) -> bool {
        matches!(self.repr, BlurRepr::Structured(_))
    }

    /// Kernel view of a structured operator.
    pub fn kernel(&self) -> Option<Kernel> {
        self.theta()
            .map(|t| Kernel::new(self.k, t.to_vec()).expect("theta length checked on construction"))
    }

    /// Dense `N_l x N_h` realization.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            BlurRepr::Dense(m) => m.clone(),
            BlurRepr::Structured(theta) => build_basis_matrices(self.k, self.p)
                .and_then(|b| b.combine(theta))
                .expect("dimensions validated on construction"),
        }
    }

    /// Nearest structured operator in Frobenius norm and the distance to it.
    pub fn toeplitz_projection(&self) -> (Vec<f64>, f64) {
        let basis = build_basis_matrices(self.k, self.p).expect("validated on construction");
        let dense = self.to_dense();
        let theta = basis.project(&dense).expect("shape matches basis");
        let residual = (&dense - basis.combine(&theta).expect("length matches")).norm();
        (theta, residual)
    }
}

/// Matrix form of narrow convolution with `kernel` on `p x p` patches.
pub fn build_blur_matrix(kernel: &Kernel, p: usize) -> Result<BlurMatrix> {
    BlurMatrix::structured(kernel.size(), p, kernel.taps().to_vec())
}

/// Adam optimizer state over the blur coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    /// Standard moments (0.9, 0.999, 1e-8) with the given learning rate.
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self::with_betas(len, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(len: usize, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Advances the moments with `grad` and returns the parameter delta.
    pub fn step(&mut self, grad: &[f64]) -> Result<Vec<f64>> {
        adam_step(self, grad)
    }
}

/// One bias-corrected Adam update; returns the delta to add to the parameters.
pub fn adam_step(state: &mut AdamState, grad: &[f64]) -> Result<Vec<f64>> {
    if grad.len() != state.m.len() {
        return Err(Error::dims(format!(
            "gradient of length {} for Adam state of length {}",
            grad.len(),
            state.m.len()
        )));
    }
    if let Some(g) = grad.iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {g}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let mut delta = Vec::with_capacity(grad.len());
    for ((m, v), &g) in state.m.iter_mut().zip(state.v.iter_mut()).zip(grad) {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        delta.push(-state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon));
    }
    Ok(delta)
}

/// The structured blur objective `||Y - sum_i theta_i M_i Z||_F^2` written as
/// the quadratic `c - 2 theta.b + theta' G theta`.
///
/// With `W = Z Z'` and `V = Y Z'`, `G_ij = sum_r W[s_i(r), s_j(r)]` and
/// `b_i = sum_r V[r, s_i(r)]`, where `s_i` is the selector of tap `i`.
#[derive(Debug, Clone)]
pub struct StructuredObjective {
    gram: DMatrix<f64>,
    lin: DVector<f64>,
    constant: f64,
}

impl StructuredObjective {
    pub fn new(basis: &BasisMatrixSet, y: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Self> {
        if y.nrows() != basis.lr_dim() || z.nrows() != basis.hr_dim() || y.ncols() != z.ncols() {
            return Err(Error::dims(format!(
                "LR block {:?} and HR block {:?} inconsistent with {}x{} blur",
                y.shape(),
                z.shape(),
                basis.lr_dim(),
                basis.hr_dim()
            )));
        }
        let w = z * z.transpose();
        let v = y * z.transpose();
        let n = basis.len();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            let si = basis.selector(i);
            for j in i..n {
                let sj = basis.selector(j);
                let g: f64 = si.iter().zip(sj).map(|(&a, &b)| w[(a, b)]).sum();
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
        }
        let lin = DVector::from_iterator(
            n,
            (0..n).map(|i| basis.selector(i).iter().enumerate().map(|(r, &c)| v[(r, c)]).sum()),
        );
        Ok(Self {
            gram,
            lin,
            constant: y.norm_squared(),
        })
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        (self.constant - 2.0 * t.dot(&self.lin) + t.dot(&(&self.gram * &t))).max(0.0)
    }

    /// `grad_i = -2 trace((Y - B Z)' M_i Z) = 2 (G theta - b)_i`.
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        (2.0 * (&self.gram * &t - &self.lin)).as_slice().to_vec()
    }
}

#[derive(Debug, Clone)]
pub struct SrOutcome {
    pub blur: BlurMatrix,
    /// Objective before the first step and after every step.
    pub objective: Vec<f64>,
}

fn check_codes(yl: &PatchSet, dh: &Dictionary, codes: &SparseCodes) -> Result<()> {
    if codes.n_atoms() != dh.n_atoms() {
        return Err(Error::dims(format!(
            "codes have {} rows for {} atoms",
            codes.n_atoms(),
            dh.n_atoms()
        )));
    }
    if codes.n_signals() != yl.len() {
        return Err(Error::dims(format!(
            "{} code columns for {} LR patches",
            codes.n_signals(),
            yl.len()
        )));
    }
    Ok(())
}

/// Structured blur estimation: Adam on the `k^2` taps starting from `theta`.
pub fn bme_sr(
    yl: &PatchSet,
    dh: &Dictionary,
    codes: &SparseCodes,
    basis: &BasisMatrixSet,
    theta: &[f64],
    adam: &mut AdamState,
    iters: usize,
) -> Result<SrOutcome> {
    check_codes(yl, dh, codes)?;
    if dh.dim() != basis.hr_dim() {
        return Err(Error::dims(format!(
            "dictionary atoms of length {} for {}-pixel HR patches",
            dh.dim(),
            basis.hr_dim()
        )));
    }
    if theta.len() != basis.len() || adam.len() != basis.len() {
        return Err(Error::dims(format!(
            "theta ({}) and Adam state ({}) must have {} entries",
            theta.len(),
            adam.len(),
            basis.len()
        )));
    }
    let z = dh.atoms() * codes.coeffs();
    let objective = StructuredObjective::new(basis, yl.columns(), &z)?;
    let mut theta = theta.to_vec();
    let mut trace = Vec::with_capacity(iters + 1);
    trace.push(objective.value(&theta));
    for _ in 0..iters {
        let delta = adam.step(&objective.gradient(&theta))?;
        for (t, d) in theta.iter_mut().zip(&delta) {
            *t += d;
        }
        trace.push(objective.value(&theta));
    }
    Ok(SrOutcome {
        blur: BlurMatrix::structured(basis.kernel_side(), basis.patch_side(), theta)?,
        objective: trace,
    })
}

/// General blur estimation `B = Y_l (D_h C)^+` through a truncated SVD.
pub fn bme_gr(yl: &PatchSet, dh: &Dictionary, codes: &SparseCodes, k: usize) -> Result<BlurMatrix> {
    check_codes(yl, dh, codes)?;
    let p = (dh.dim() as f64).sqrt().round() as usize;
    if p * p != dh.dim() || k == 0 || k > p || (p - k + 1).pow(2) != yl.dim() {
        return Err(Error::dims(format!(
            "atoms of length {} and LR patches of length {} do not fit kernel side {k}",
            dh.dim(),
            yl.dim()
        )));
    }
    let z = dh.atoms() * codes.coeffs();
    let pinv = pseudo_inverse(&z)?;
    BlurMatrix::dense(k, p, yl.columns() * pinv)
}

/// Moore-Penrose pseudo-inverse with relative singular-value cutoff
/// [`PINV_RTOL`]. A rank-zero input is an error; other rank deficiency is
/// logged.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if !(smax > 0.0) {
        return Err(Error::Degenerate("rank-zero system in pseudo-inverse".into()));
    }
    let cutoff = PINV_RTOL * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let full = a.nrows().min(a.ncols());
    if rank < full {
        log::warn!("pseudo-inverse of {}x{} matrix is rank deficient ({rank} < {full})", a.nrows(), a.ncols());
    }
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            out += (vt.row(i).transpose() / s) * u.column(i).transpose();
        }
    }
    Ok(out)
}
