//! Dictionary updates: paired K-SVD, the joint dual-domain K-SVD used when
//! HR and LR patches have no correspondence, and the coupled-dictionary
//! (CDL) baseline.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blur::BlurMatrix;
use crate::error::{Error, Result};
use crate::imaging::PatchSet;
use crate::sparse::{fista_solve_from, LassoProblem, SparseCodes};

/// Residuals smaller than this on both sides use an exact eigen solve for
/// the rank-1 fit; larger ones use warm-started power iteration.
const EXACT_RANK_ONE_DIM: usize = 32;
const POWER_MAX_ITERS: usize = 2000;

/// Relative Tikhonov weight for the LR back-projection when `B'B` is singular.
pub const BACKPROJECTION_RIDGE: f64 = 1e-8;

/// `N_h x N_c` matrix of unit-norm atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

impl Dictionary {
    /// Normalizes every column; all-zero columns become coordinate vectors.
    pub fn new(mut atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(Error::dims("dictionary must have at least one atom"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dictionary entry".into()));
        }
        let dim = atoms.nrows();
        for (t, mut col) in atoms.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            } else {
                col[t % dim] = 1.0;
            }
        }
        Ok(Self { atoms })
    }

    /// Takes atoms that are already unit norm without rescaling them, so a
    /// stored dictionary reloads bit for bit.
    pub fn from_unit_atoms(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(Error::dims("dictionary must have at least one atom"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dictionary entry".into()));
        }
        if let Some(t) = atoms.column_iter().position(|c| (c.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::param(format!("atom {t} is not unit norm")));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn into_atoms(self) -> DMatrix<f64> {
        self.atoms
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    /// Atom length `N_h`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn atom_norms(&self) -> Vec<f64> {
        self.atoms.column_iter().map(|c| c.norm()).collect()
    }
}

/// `n_atoms` distinct random patch columns (with replacement when there are
/// fewer patches than atoms), normalized.
pub fn init_dictionary(patches: &PatchSet, n_atoms: usize, seed: u64) -> Result<Dictionary> {
    init_from_columns(patches.columns(), n_atoms, seed)
}

fn init_from_columns(columns: &DMatrix<f64>, n_atoms: usize, seed: u64) -> Result<Dictionary> {
    if columns.ncols() == 0 {
        return Err(Error::param("cannot initialize a dictionary from an empty patch set"));
    }
    if n_atoms == 0 {
        return Err(Error::param("dictionary needs at least one atom"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = columns.ncols();
    let picks: Vec<usize> = if n >= n_atoms {
        sample(&mut rng, n, n_atoms).into_vec()
    } else {
        (0..n_atoms).map(|_| rng.random_range(0..n)).collect()
    };
    let atoms = DMatrix::from_fn(columns.nrows(), n_atoms, |r, t| columns[(r, picks[t])]);
    Dictionary::new(atoms)
}

/// Flips `d` so its largest-magnitude entry is positive.
fn fix_sign(d: &mut DVector<f64>) {
    if d.is_empty() {
        return;
    }
    if d[d.iamax()] < 0.0 {
        d.neg_mut();
    }
}

/// Best rank-1 approximation `d gamma'` of `e` with `||d|| = 1`.
///
/// `warm` seeds the power iteration and is returned unchanged (with zero
/// coefficients) when `e` vanishes.
pub fn rank_one(e: &DMatrix<f64>, warm: Option<&DVector<f64>>) -> (DVector<f64>, DVector<f64>) {
    let (m, n) = e.shape();
    let fallback = || {
        let mut d = warm.cloned().unwrap_or_else(|| DVector::zeros(m));
        let norm = d.norm();
        if norm > 0.0 {
            d /= norm;
        } else if m > 0 {
            d[0] = 1.0;
        }
        d
    };
    if n == 0 || e.iter().all(|&v| v == 0.0) {
        return (fallback(), DVector::zeros(n));
    }

    let mut d = if m.min(n) <= EXACT_RANK_ONE_DIM {
        top_left_singular_exact(e)
    } else {
        top_left_singular_power(e, warm)
    };
    fix_sign(&mut d);
    let gamma = e.transpose() * &d;
    (d, gamma)
}

fn top_eigenvector(gram: DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.imax();
    eig.eigenvectors.column(top).into_owned()
}

fn top_left_singular_exact(e: &DMatrix<f64>) -> DVector<f64> {
    if e.nrows() <= e.ncols() {
        top_eigenvector(e * e.transpose())
    } else {
        let v = top_eigenvector(e.transpose() * e);
        (e * v).normalize()
    }
}

fn top_left_singular_power(e: &DMatrix<f64>, warm: Option<&DVector<f64>>) -> DVector<f64> {
    // Start from the warm atom, or from the largest residual column.
    let mut d = match warm {
        Some(w) if w.norm() > 0.0 && (e.transpose() * w).norm() > 0.0 => w.normalize(),
        _ => {
            let j = (0..e.ncols())
                .max_by(|&a, &b| e.column(a).norm_squared().total_cmp(&e.column(b).norm_squared()))
                .expect("non-empty");
            e.column(j).normalize()
        }
    };
    let mut sigma_sq = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let g = e.transpose() * &d;
        let w = e * &g;
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        let next = w / norm;
        let next_sigma_sq = g.norm_squared();
        let moved = (&next - &d).norm();
        d = next;
        if moved < 1e-12 || (next_sigma_sq - sigma_sq).abs() <= 1e-15 * next_sigma_sq {
            break;
        }
        sigma_sq = next_sigma_sq;
    }
    d
}

/// Columns where row `t` of `codes` is nonzero.
fn support(codes: &DMatrix<f64>, t: usize) -> Vec<usize> {
    (0..codes.ncols()).filter(|&j| codes[(t, j)] != 0.0).collect()
}

fn gather_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |r, j| m[(r, cols[j])])
}

/// Index of the column with the largest residual norm not yet claimed.
fn worst_column(residual: &DMatrix<f64>, claimed: &mut [bool]) -> Option<usize> {
    let best = (0..residual.ncols())
        .filter(|&j| !claimed[j])
        .map(|j| (j, residual.column(j).norm_squared()))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    claimed[best.0] = true;
    Some(best.0)
}

fn replace_atom(atoms: &mut DMatrix<f64>, t: usize, signal: nalgebra::DVectorView<'_, f64>) {
    let norm = signal.norm();
    if norm > 0.0 {
        let mut d = signal / norm;
        fix_sign(&mut d);
        atoms.set_column(t, &d);
    }
}

/// One K-SVD sweep on raw matrices; returns the updated atoms and codes.
fn ksvd_sweep(y: &DMatrix<f64>, atoms: &DMatrix<f64>, codes: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut d = atoms.clone();
    let mut c = codes.clone();
    let mut residual = y - &d * &c;
    let mut claimed = vec![false; y.ncols()];

    for t in 0..d.ncols() {
        let omega = support(&c, t);
        if omega.is_empty() {
            if let Some(j) = worst_column(&residual, &mut claimed) {
                replace_atom(&mut d, t, y.column(j));
            }
            continue;
        }
        let atom = d.column(t).into_owned();
        let mut e = gather_columns(&residual, &omega);
        for (jj, &j) in omega.iter().enumerate() {
            e.column_mut(jj).axpy(c[(t, j)], &atom, 1.0);
        }
        let (atom_new, gamma) = rank_one(&e, Some(&atom));
        for (jj, &j) in omega.iter().enumerate() {
            c[(t, j)] = gamma[jj];
            let mut col = e.column(jj).into_owned();
            col.axpy(-gamma[jj], &atom_new, 1.0);
            residual.set_column(j, &col);
        }
        d.set_column(t, &atom_new);
    }
    (d, c)
}

/// Paired K-SVD sweep over all atoms in ascending order.
///
/// Atoms with empty support are replaced by the worst-represented signal.
pub fn ksvd_update_paired(
    yh: &PatchSet,
    dict: &Dictionary,
    codes: &SparseCodes,
) -> Result<(Dictionary, SparseCodes)> {
    if yh.dim() != dict.dim() || codes.n_atoms() != dict.n_atoms() || codes.n_signals() != yh.len() {
        return Err(Error::dims(format!(
            "signals {}x{}, dictionary {}x{}, codes {}x{}",
            yh.dim(),
            yh.len(),
            dict.dim(),
            dict.n_atoms(),
            codes.n_atoms(),
            codes.n_signals()
        )));
    }
    let (d, c) = ksvd_sweep(yh.columns(), dict.atoms(), codes.coeffs());
    Ok((Dictionary { atoms: d }, SparseCodes::new(c)?))
}

/// Supports of atom `t` in the LR codes (`lr`) and HR codes (`hr`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomSupport {
    pub atom: usize,
    pub lr: Vec<usize>,
    pub hr: Vec<usize>,
}

impl AtomSupport {
    pub fn of(atom: usize, codes_lr: &SparseCodes, codes_hr: &SparseCodes) -> Self {
        Self {
            atom,
            lr: support(codes_lr.coeffs(), atom),
            hr: support(codes_hr.coeffs(), atom),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lr.is_empty() && self.hr.is_empty()
    }
}

/// Concatenated residual for one atom of the joint update: `E = [E_h | E_l]`
/// and the matching coefficient row `gamma = [C~_t | C_t]`.
#[derive(Debug, Clone)]
pub struct JointResidual {
    pub e_hr: DMatrix<f64>,
    pub e_lr: DMatrix<f64>,
    pub gamma: DVector<f64>,
}

impl JointResidual {
    pub fn new(e_hr: DMatrix<f64>, e_lr: DMatrix<f64>, gamma: DVector<f64>) -> Result<Self> {
        if e_hr.nrows() != e_lr.nrows() && e_hr.ncols() > 0 && e_lr.ncols() > 0 {
            return Err(Error::dims("HR and LR residual blocks have different heights"));
        }
        if gamma.len() != e_hr.ncols() + e_lr.ncols() {
            return Err(Error::dims(format!(
                "{} coefficients for {} residual columns",
                gamma.len(),
                e_hr.ncols() + e_lr.ncols()
            )));
        }
        Ok(Self { e_hr, e_lr, gamma })
    }

    pub fn concatenated(&self) -> DMatrix<f64> {
        let rows = self.e_hr.nrows().max(self.e_lr.nrows());
        let (nh, nl) = (self.e_hr.ncols(), self.e_lr.ncols());
        let mut e = DMatrix::zeros(rows, nh + nl);
        if nh > 0 {
            e.columns_mut(0, nh).copy_from(&self.e_hr);
        }
        if nl > 0 {
            e.columns_mut(nh, nl).copy_from(&self.e_lr);
        }
        e
    }

    /// `||E - d gamma'||_F^2`.
    pub fn misfit(&self, atom: &DVector<f64>, gamma: &DVector<f64>) -> f64 {
        (self.concatenated() - atom * gamma.transpose()).norm_squared()
    }

    /// Rank-1 refit; returns the new atom and the HR and LR coefficient parts.
    pub fn update(&self, warm: Option<&DVector<f64>>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (d, gamma) = rank_one(&self.concatenated(), warm);
        let nh = self.e_hr.ncols();
        let hr = gamma.rows(0, nh).into_owned();
        let lr = gamma.rows(nh, gamma.len() - nh).into_owned();
        (d, hr, lr)
    }
}

/// `(B'B)^{-1} B'`, with a ridge of `BACKPROJECTION_RIDGE * trace(B'B) / N_h`
/// added only when `B'B` is numerically singular.
pub fn back_projector(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let btb = b.transpose() * b;
    let n = btb.nrows();
    let trace = btb.trace();
    if !(trace > 0.0) {
        return Err(Error::Degenerate("zero blur matrix cannot be back-projected".into()));
    }
    if let Some(chol) = btb.clone().cholesky() {
        let l = chol.l_dirty();
        let diag: Vec<f64> = (0..n).map(|i| l[(i, i)]).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > 1e-6 * max {
            return Ok(chol.solve(&b.transpose()));
        }
    }
    let ridge = BACKPROJECTION_RIDGE * trace / n as f64;
    let regularized = btb + DMatrix::identity(n, n) * ridge;
    let chol = regularized
        .cholesky()
        .ok_or_else(|| Error::Degenerate("regularized B'B is not positive definite".into()))?;
    Ok(chol.solve(&b.transpose()))
}

#[derive(Debug, Clone)]
pub struct JointKsvdOutcome {
    pub dictionary: Dictionary,
    /// Codes of the LR patches (`C`).
    pub codes_lr: SparseCodes,
    /// Codes of the HR patches (`C~`).
    pub codes_hr: SparseCodes,
    /// Per-atom rank-1 misfit before and after the update (empty supports skipped).
    pub surrogate: Vec<(usize, f64, f64)>,
    /// `||Y_l - B D C||^2 + ||X_h - D C~||^2` before and after the sweep.
    pub fidelity_before: f64,
    pub fidelity_after: f64,
}

/// Joint dual-domain K-SVD sweep for unpaired data.
///
/// For every atom: HR residual on its HR support, LR residual on its LR
/// support mapped back to the HR domain through `(B'B)^{-1}B'`, a rank-1
/// fit of their concatenation, and the coefficients split back by domain.
pub fn joint_ksvd_update(
    yl: &PatchSet,
    xh: &PatchSet,
    blur: &BlurMatrix,
    dict: &Dictionary,
    codes_lr: &SparseCodes,
    codes_hr: &SparseCodes,
) -> Result<JointKsvdOutcome> {
    let b = blur.to_dense();
    if b.nrows() != yl.dim() || b.ncols() != xh.dim() || dict.dim() != xh.dim() {
        return Err(Error::dims(format!(
            "blur {:?}, LR patches {}, HR patches {}, atoms {}",
            b.shape(),
            yl.dim(),
            xh.dim(),
            dict.dim()
        )));
    }
    if codes_lr.n_atoms() != dict.n_atoms()
        || codes_hr.n_atoms() != dict.n_atoms()
        || codes_lr.n_signals() != yl.len()
        || codes_hr.n_signals() != xh.len()
    {
        return Err(Error::dims("code matrices do not match dictionary and patch sets"));
    }

    let proj = back_projector(&b)?;
    let proj_b = &proj * &b;
    let mut d = dict.atoms().clone();
    let mut c = codes_lr.coeffs().clone();
    let mut ct = codes_hr.coeffs().clone();

    let mut res_hr = xh.columns() - &d * &ct;
    let mut res_lr = yl.columns() - &b * (&d * &c);
    let mut back = &proj * &res_lr;
    let fidelity_before = res_lr.norm_squared() + res_hr.norm_squared();
    let mut claimed = vec![false; xh.len()];
    let mut surrogate = Vec::new();

    for t in 0..d.ncols() {
        let omega_l = support(&c, t);
        let omega_h = support(&ct, t);
        if omega_l.is_empty() && omega_h.is_empty() {
            if let Some(j) = worst_column(&res_hr, &mut claimed) {
                replace_atom(&mut d, t, xh.columns().column(j));
            }
            continue;
        }
        let atom = d.column(t).into_owned();
        let atom_lr = &b * &atom;
        let atom_back = &proj_b * &atom;

        let mut e_hr = gather_columns(&res_hr, &omega_h);
        for (jj, &j) in omega_h.iter().enumerate() {
            e_hr.column_mut(jj).axpy(ct[(t, j)], &atom, 1.0);
        }
        let mut e_lr = gather_columns(&back, &omega_l);
        for (jj, &j) in omega_l.iter().enumerate() {
            e_lr.column_mut(jj).axpy(c[(t, j)], &atom_back, 1.0);
        }
        let gamma_old = DVector::from_iterator(
            omega_h.len() + omega_l.len(),
            omega_h.iter().map(|&j| ct[(t, j)]).chain(omega_l.iter().map(|&j| c[(t, j)])),
        );
        let joint = JointResidual::new(e_hr, e_lr, gamma_old)?;
        let before = joint.misfit(&atom, &joint.gamma);
        let (atom_new, g_hr, g_lr) = joint.update(Some(&atom));
        let gamma_new = DVector::from_iterator(g_hr.len() + g_lr.len(), g_hr.iter().chain(g_lr.iter()).cloned());
        let after = joint.misfit(&atom_new, &gamma_new);
        surrogate.push((t, before, after));

        for (jj, &j) in omega_h.iter().enumerate() {
            ct[(t, j)] = g_hr[jj];
            let mut col = joint.e_hr.column(jj).into_owned();
            col.axpy(-g_hr[jj], &atom_new, 1.0);
            res_hr.set_column(j, &col);
        }
        let new_lr = &b * &atom_new;
        let new_back = &proj_b * &atom_new;
        for (jj, &j) in omega_l.iter().enumerate() {
            let old = c[(t, j)];
            c[(t, j)] = g_lr[jj];
            let mut rl = res_lr.column_mut(j);
            rl.axpy(old, &atom_lr, 1.0);
            rl.axpy(-g_lr[jj], &new_lr, 1.0);
            let mut bk = back.column_mut(j);
            bk.axpy(old, &atom_back, 1.0);
            bk.axpy(-g_lr[jj], &new_back, 1.0);
        }
        d.set_column(t, &atom_new);
    }

    let fidelity_after = (yl.columns() - &b * (&d * &c)).norm_squared()
        + (xh.columns() - &d * &ct).norm_squared();
    Ok(JointKsvdOutcome {
        dictionary: Dictionary { atoms: d },
        codes_lr: SparseCodes::new(c)?,
        codes_hr: SparseCodes::new(ct)?,
        surrogate,
        fidelity_before,
        fidelity_after,
    })
}

/// Coupled dictionary pair learned on stacked `[Y_l; Y_h]` with shared codes.
#[derive(Debug, Clone)]
pub struct CdlModel {
    pub dh: DMatrix<f64>,
    pub dl: DMatrix<f64>,
    pub codes: SparseCodes,
    /// Stacked `||Y - D C||^2 + lambda ||C||_1` after each outer iteration.
    pub objective: Vec<f64>,
    /// Stacked fidelity `||Y - D C||^2` after each outer iteration.
    pub fidelity: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct CdlOptions {
    pub n_atoms: usize,
    pub lambda: f64,
    pub iters: usize,
    pub fista_max_iters: usize,
    pub fista_tol: f64,
    pub seed: u64,
}

/// Coupled dictionary learning baseline: alternate FISTA and K-SVD on the
/// stacked paired patches. Rows of `dl` follow `yl`.
pub fn cdl_train(yh: &PatchSet, yl: &PatchSet, opts: &CdlOptions) -> Result<CdlModel> {
    if yh.len() != yl.len() {
        return Err(Error::param(format!(
            "coupled dictionary learning needs paired data, got {} HR and {} LR patches",
            yh.len(),
            yl.len()
        )));
    }
    if let (Some(a), Some(b)) = (yh.origins(), yl.origins()) {
        if a != b {
            return Err(Error::param("HR and LR patches are not paired"));
        }
    }
    if yh.origins().is_some() != yl.origins().is_some() {
        return Err(Error::param("HR and LR patches are not paired"));
    }
    let (nl, nh) = (yl.dim(), yh.dim());
    let n = yh.len();
    let mut stacked = DMatrix::zeros(nl + nh, n);
    stacked.rows_mut(0, nl).copy_from(yl.columns());
    stacked.rows_mut(nl, nh).copy_from(yh.columns());

    let mut d = init_from_columns(&stacked, opts.n_atoms, opts.seed)?.atoms;
    let mut c = SparseCodes::zeros(opts.n_atoms, n);
    let mut objective = Vec::with_capacity(opts.iters);
    let mut fidelity = Vec::with_capacity(opts.iters);
    for _ in 0..opts.iters {
        if stacked.iter().all(|&v| v == 0.0) {
            // Zero data is a fixed point: zero codes and untouched atoms.
            objective.push(0.0);
            fidelity.push(0.0);
            continue;
        }
        let prob = LassoProblem::new(&d, &stacked, opts.lambda);
        c = fista_solve_from(&prob, Some(&c), opts.fista_max_iters, opts.fista_tol)?.codes;
        let (d_new, c_new) = ksvd_sweep(&stacked, &d, c.coeffs());
        d = d_new;
        c = SparseCodes::new(c_new)?;
        let fid = (&stacked - &d * c.coeffs()).norm_squared();
        fidelity.push(fid);
        objective.push(fid + opts.lambda * c.l1_norm());
    }
    Ok(CdlModel {
        dl: d.rows(0, nl).into_owned(),
        dh: d.rows(nl, nh).into_owned(),
        codes: c,
        objective,
        fidelity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn sparse_codes(rng: &mut ChaCha8Rng, atoms: usize, n: usize, density: f64) -> DMatrix<f64> {
        DMatrix::from_fn(atoms, n, |_, _| {
            if rng.random::<f64>() < density {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn single_signal_rank_one_fit() {
        let y = DMatrix::from_column_slice(3, 1, &[3.0, 0.0, 4.0]);
        let set = PatchSet::new(3, 1, y, None).unwrap();
        let dict = Dictionary::new(DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0])).unwrap();
        let codes = SparseCodes::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let (d, c) = ksvd_update_paired(&set, &dict, &codes).unwrap();
        assert!((d.atoms()[(0, 0)] - 0.6).abs() < 1e-12);
        assert!((d.atoms()[(2, 0)] - 0.8).abs() < 1e-12);
        assert!((c.coeffs()[(0, 0)] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_never_increases_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random(&mut rng, 8, 20);
        let dict = Dictionary::new(random(&mut rng, 8, 4)).unwrap();
        let codes = SparseCodes::new(sparse_codes(&mut rng, 4, 20, 0.5)).unwrap();
        let before = (&y - dict.atoms() * codes.coeffs()).norm_squared();
        let set = PatchSet::new(8, 1, y.clone(), None).unwrap();
        let (d, c) = ksvd_update_paired(&set, &dict, &codes).unwrap();
        let after = (&y - d.atoms() * c.coeffs()).norm_squared();
        assert!(after <= before + 1e-9);
        for n in d.atom_norms() {
            assert!((n - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_atom_replaced_by_worst_signal() {
        let y = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 3.0]),
        ]);
        let set = PatchSet::new(2, 1, y, None).unwrap();
        let dict = Dictionary::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.0, 0.8])).unwrap();
        // Atom 0 explains signal 0 exactly; atom 1 is unused.
        let codes = SparseCodes::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        let (d, c) = ksvd_update_paired(&set, &dict, &codes).unwrap();
        assert_eq!(d.atoms().column(1).as_slice(), &[0.0, 1.0]);
        assert_eq!(c.coeffs()[(1, 0)], 0.0);
        assert_eq!(c.coeffs()[(1, 1)], 0.0);
    }

    #[test]
    fn rank_one_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (m, n) in [(16, 40), (40, 10), (50, 60), (3, 3)] {
            let e = random(&mut rng, m, n);
            let (d, g) = rank_one(&e, None);
            let misfit = (&e - &d * g.transpose()).norm_squared();
            let s = e.clone().svd(false, false).singular_values;
            let mut sv: Vec<f64> = s.iter().cloned().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            let tail: f64 = sv[1..].iter().map(|x| x * x).sum();
            assert!((misfit - tail).abs() <= 1e-8 * tail, "{m}x{n}: {misfit} vs {tail}");
            assert!((d.norm() - 1.0).abs() < 1e-12);
            let i = d.iamax();
            assert!(d[i] > 0.0);
        }
    }

    #[test]
    fn init_is_seeded_and_handles_zero_patches() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cols = random(&mut rng, 9, 50);
        let set = PatchSet::new(3, 3, cols, None).unwrap();
        let a = init_dictionary(&set, 10, 5).unwrap();
        assert_eq!(a, init_dictionary(&set, 10, 5).unwrap());
        assert_eq!(a.n_atoms(), 10);
        let zeros = PatchSet::new(3, 3, DMatrix::zeros(9, 4), None).unwrap();
        let z = init_dictionary(&zeros, 6, 0).unwrap();
        for t in 0..6 {
            assert_eq!(z.atoms()[(t % 9, t)], 1.0);
            assert!((z.atoms().column(t).norm() - 1.0).abs() < 1e-15);
        }
        let empty = PatchSet::new(3, 3, DMatrix::zeros(9, 0), None).unwrap();
        assert!(init_dictionary(&empty, 4, 0).is_err());
    }

    #[test]
    fn back_projector_is_exact_for_invertible_blur() {
        let p = back_projector(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(p, DMatrix::identity(4, 4));
        let b = BlurMatrix::uniform(3, 5).unwrap().to_dense();
        let p = back_projector(&b).unwrap();
        // Regularized inverse still acts as a left inverse on the row space of B.
        let pb = &b * &p * &b;
        assert!((&pb - &b).norm() < 1e-4 * b.norm());
    }

    #[test]
    fn cdl_rejects_unpaired_sets() {
        let yh = PatchSet::new(2, 2, DMatrix::zeros(4, 5), None).unwrap();
        let yl = PatchSet::new(1, 1, DMatrix::zeros(1, 4), None).unwrap();
        let opts = CdlOptions {
            n_atoms: 2,
            lambda: 0.1,
            iters: 1,
            fista_max_iters: 10,
            fista_tol: 1e-6,
            seed: 0,
        };
        assert!(cdl_train(&yh, &yl, &opts).is_err());
    }
}
