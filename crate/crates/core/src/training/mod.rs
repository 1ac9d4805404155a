//! Alternating minimization over codes, dictionary and blur.
//!
//! Two loops share one checkpoint type. [`train_paired`] fits the HR
//! dictionary by K-SVD and estimates the blur from co-located LR patches.
//! [`train_no_correspondence`] only sees unrelated HR and LR patch sets and
//! couples them through the joint K-SVD update.

mod checkpoint;
mod config;

use std::ops::ControlFlow;

use log::{info, warn};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::blur::{bme_gr, bme_sr, build_basis_matrices, AdamState, BlurMatrix};
use crate::dictionary::{init_dictionary, joint_ksvd_update, ksvd_update_paired, Dictionary};
use crate::error::{Error, Result};
use crate::imaging::{sample_patch_pairs, sample_patches, Image, PatchSet};
use crate::sparse::{fista_solve_from, LassoProblem, SparseCodes};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{BmeKind, TrainConfig, TrainMode};

const LOG_EVERY: usize = 50;

/// Per-iteration loss terms, recorded after each outer iteration.
///
/// In paired mode `hr` is `||Y_h - D_h C||^2` and `lr` is
/// `||Y_l - B D_h C||^2`. In no-correspondence mode `hr` is the fit of the
/// HR set with its own codes. `l1` already includes `lambda`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LossTrace {
    pub hr: Vec<f64>,
    pub lr: Vec<f64>,
    pub l1: Vec<f64>,
    pub total: Vec<f64>,
}

impl LossTrace {
    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    pub fn push(&mut self, hr: f64, lr: f64, l1: f64) -> Result<()> {
        let total = hr + lr + l1;
        if !total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at iteration {} (hr {hr}, lr {lr}, l1 {l1})",
                self.len()
            )));
        }
        self.hr.push(hr);
        self.lr.push(lr);
        self.l1.push(l1);
        self.total.push(total);
        Ok(())
    }
}

/// A trained model: HR dictionary, blur operator, the config it was trained
/// with and its loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: TrainConfig,
    pub dictionary: Dictionary,
    pub blur: BlurMatrix,
    pub trace: LossTrace,
}

impl ModelCheckpoint {
    pub fn kernel_side(&self) -> usize {
        self.blur.kernel_side()
    }

    pub fn patch_side(&self) -> usize {
        self.blur.patch_side()
    }

    /// Kernel taps; a dense blur is first projected onto Toeplitz structure.
    pub fn theta(&self) -> Vec<f64> {
        match self.blur.theta() {
            Some(t) => t.to_vec(),
            None => self.blur.toeplitz_projection().0,
        }
    }

    /// `D_l = B D_h`.
    pub fn lr_dictionary(&self) -> DMatrix<f64> {
        self.blur.to_dense() * self.dictionary.atoms()
    }
}

/// State handed to a training observer after every outer iteration.
#[derive(Debug)]
pub struct Progress<'a> {
    /// Zero-based index of the iteration just finished.
    pub iteration: usize,
    pub dictionary: &'a Dictionary,
    pub blur: &'a BlurMatrix,
    pub trace: &'a LossTrace,
}

/// Euclidean projection of the taps onto the probability simplex.
///
/// Without shared codes the LR term barely constrains `B`: growing `B` and
/// shrinking `C` always lowers it, and codes re-fit to any kernel shape. The
/// no-correspondence loop therefore keeps the taps a nonnegative unit-mass
/// kernel.
fn project_simplex(theta: &[f64]) -> Vec<f64> {
    let mut sorted = theta.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if v - candidate > 0.0 {
            shift = candidate;
        }
    }
    theta.iter().map(|t| (t - shift).max(0.0)).collect()
}

fn check_sets(cfg: &TrainConfig, hr: &PatchSet, lr: &PatchSet) -> Result<()> {
    cfg.validate()?;
    let q = cfg.lr_side();
    if hr.dim() != cfg.patch * cfg.patch {
        return Err(Error::dims(format!(
            "HR patches of length {} for patch side {}",
            hr.dim(),
            cfg.patch
        )));
    }
    if lr.dim() != q * q {
        return Err(Error::dims(format!(
            "LR patches of length {} for LR side {q}",
            lr.dim()
        )));
    }
    if hr.is_empty() || lr.is_empty() {
        return Err(Error::param("training needs at least one HR and one LR patch"));
    }
    Ok(())
}

fn solve_codes(
    cfg: &TrainConfig,
    dict: &DMatrix<f64>,
    signals: &DMatrix<f64>,
    previous: &SparseCodes,
) -> Result<SparseCodes> {
    let prob = LassoProblem::new(dict, signals, cfg.lambda);
    let init = cfg.warm_start.then_some(previous);
    Ok(fista_solve_from(&prob, init, cfg.fista_max_iters, cfg.fista_tol)?.codes)
}

fn log_progress(cfg: &TrainConfig, it: usize, trace: &LossTrace) {
    let last = trace.len() - 1;
    if it % LOG_EVERY == 0 || it + 1 == cfg.outer_iters {
        info!(
            "{} iter {}/{}: total {:.6e} (hr {:.4e}, lr {:.4e}, l1 {:.4e})",
            cfg.mode,
            it + 1,
            cfg.outer_iters,
            trace.total[last],
            trace.hr[last],
            trace.lr[last],
            trace.l1[last]
        );
    }
}

/// Paired training: FISTA on the HR term, one K-SVD sweep, then a blur
/// update from the co-located LR patches.
pub fn train_paired(cfg: &TrainConfig, yh: &PatchSet, yl: &PatchSet) -> Result<ModelCheckpoint> {
    train_paired_with(cfg, yh, yl, |_| ControlFlow::Continue(()))
}

/// [`train_paired`] with an observer that may stop training early.
pub fn train_paired_with(
    cfg: &TrainConfig,
    yh: &PatchSet,
    yl: &PatchSet,
    mut observer: impl FnMut(&Progress<'_>) -> ControlFlow<()>,
) -> Result<ModelCheckpoint> {
    check_sets(cfg, yh, yl)?;
    if cfg.mode != TrainMode::Paired {
        return Err(Error::param("train_paired called with a no-correspondence config"));
    }
    if yh.len() != yl.len() {
        return Err(Error::dims(format!(
            "{} HR and {} LR patches cannot be paired",
            yh.len(),
            yl.len()
        )));
    }
    let (k, p) = (cfg.k, cfg.patch);
    let basis = build_basis_matrices(k, p)?;
    let mut dict = init_dictionary(yh, cfg.atoms, cfg.seed)?;
    let mut blur = BlurMatrix::uniform(k, p)?;
    let mut theta = vec![1.0 / (k * k) as f64; k * k];
    let mut adam = AdamState::new(k * k, cfg.learning_rate);
    let mut codes = SparseCodes::zeros(cfg.atoms, yh.len());
    let mut trace = LossTrace::default();

    for it in 0..cfg.outer_iters {
        codes = solve_codes(cfg, dict.atoms(), yh.columns(), &codes)?;
        let (d, c) = ksvd_update_paired(yh, &dict, &codes)?;
        dict = d;
        codes = c;
        if it % cfg.blur_every == 0 {
            match cfg.bme {
                BmeKind::Gr => match bme_gr(yl, &dict, &codes, k) {
                    Ok(b) => blur = b,
                    Err(Error::Degenerate(msg)) => {
                        warn!("iteration {it}: keeping previous blur ({msg})")
                    }
                    Err(e) => return Err(e),
                },
                BmeKind::Sr => {
                    let out = bme_sr(yl, &dict, &codes, &basis, &theta, &mut adam, cfg.adam_steps)?;
                    theta = out.blur.theta().expect("structured").to_vec();
                    blur = out.blur;
                }
            }
        }
        let z = dict.atoms() * codes.coeffs();
        let hr = (yh.columns() - &z).norm_squared();
        let lr = (yl.columns() - blur.to_dense() * &z).norm_squared();
        trace.push(hr, lr, cfg.lambda * codes.l1_norm())?;
        log_progress(cfg, it, &trace);
        let progress = Progress {
            iteration: it,
            dictionary: &dict,
            blur: &blur,
            trace: &trace,
        };
        if observer(&progress).is_break() {
            break;
        }
    }
    Ok(ModelCheckpoint {
        config: cfg.clone(),
        dictionary: dict,
        blur,
        trace,
    })
}

/// No-correspondence training on unrelated sets `Y_l` (LR) and `X_h` (HR).
///
/// Each iteration codes `Y_l` against `B D_h` and `X_h` against `D_h`, takes
/// Adam steps on the blur taps, then runs one joint K-SVD sweep.
pub fn train_no_correspondence(cfg: &TrainConfig, yl: &PatchSet, xh: &PatchSet) -> Result<ModelCheckpoint> {
    train_no_correspondence_with(cfg, yl, xh, |_| ControlFlow::Continue(()))
}

/// [`train_no_correspondence`] with an observer that may stop training early.
pub fn train_no_correspondence_with(
    cfg: &TrainConfig,
    yl: &PatchSet,
    xh: &PatchSet,
    mut observer: impl FnMut(&Progress<'_>) -> ControlFlow<()>,
) -> Result<ModelCheckpoint> {
    check_sets(cfg, xh, yl)?;
    if cfg.mode != TrainMode::NoCorrespondence {
        return Err(Error::param("train_no_correspondence called with a paired config"));
    }
    let (k, p) = (cfg.k, cfg.patch);
    let basis = build_basis_matrices(k, p)?;
    let mut dict = init_dictionary(xh, cfg.atoms, cfg.seed)?;
    let mut theta = vec![1.0 / (k * k) as f64; k * k];
    let mut blur = BlurMatrix::structured(k, p, theta.clone())?;
    let mut adam = AdamState::new(k * k, cfg.learning_rate);
    let mut codes_lr = SparseCodes::zeros(cfg.atoms, yl.len());
    let mut codes_hr = SparseCodes::zeros(cfg.atoms, xh.len());
    let mut trace = LossTrace::default();

    for it in 0..cfg.outer_iters {
        let dl = blur.to_dense() * dict.atoms();
        codes_lr = solve_codes(cfg, &dl, yl.columns(), &codes_lr)?;
        codes_hr = solve_codes(cfg, dict.atoms(), xh.columns(), &codes_hr)?;
        if it % cfg.blur_every == 0 {
            let out = bme_sr(yl, &dict, &codes_lr, &basis, &theta, &mut adam, cfg.adam_steps)?;
            theta = project_simplex(out.blur.theta().expect("structured"));
            blur = BlurMatrix::structured(cfg.k, cfg.patch, theta.clone())?;
        }
        let joint = joint_ksvd_update(yl, xh, &blur, &dict, &codes_lr, &codes_hr)?;
        dict = joint.dictionary;
        codes_lr = joint.codes_lr;
        codes_hr = joint.codes_hr;

        let b = blur.to_dense();
        let lr = (yl.columns() - &b * dict.atoms() * codes_lr.coeffs()).norm_squared();
        let hr = (xh.columns() - dict.atoms() * codes_hr.coeffs()).norm_squared();
        trace.push(hr, lr, cfg.lambda * (codes_lr.l1_norm() + codes_hr.l1_norm()))?;
        log_progress(cfg, it, &trace);
        let progress = Progress {
            iteration: it,
            dictionary: &dict,
            blur: &blur,
            trace: &trace,
        };
        if observer(&progress).is_break() {
            break;
        }
    }
    Ok(ModelCheckpoint {
        config: cfg.clone(),
        dictionary: dict,
        blur,
        trace,
    })
}

/// How unpaired training sets are drawn from image pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnpairedScenario {
    /// HR patches from the first half of the images, LR from the second.
    Disjoint,
    /// Co-located pairs whose LR columns are then shuffled.
    Shuffled,
}

impl std::str::FromStr for UnpairedScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "disjoint" => Ok(Self::Disjoint),
            "shuffled" => Ok(Self::Shuffled),
            other => Err(Error::param(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Draws `cfg.n_patches` co-located pairs.
pub fn paired_training_set(cfg: &TrainConfig, pairs: &[(Image, Image)]) -> Result<(PatchSet, PatchSet)> {
    sample_patch_pairs(pairs, cfg.patch, cfg.k, cfg.n_patches, cfg.seed)
}

/// Draws an HR set and an LR set with no correspondence, returned as
/// `(hr, lr)`.
pub fn unpaired_training_set(
    cfg: &TrainConfig,
    pairs: &[(Image, Image)],
    scenario: UnpairedScenario,
) -> Result<(PatchSet, PatchSet)> {
    match scenario {
        UnpairedScenario::Shuffled => {
            let (hr, lr) = paired_training_set(cfg, pairs)?;
            Ok((hr.shuffled(cfg.seed.wrapping_add(1)), lr.shuffled(cfg.seed.wrapping_add(2))))
        }
        UnpairedScenario::Disjoint => {
            if pairs.len() < 2 {
                return Err(Error::param("the disjoint scenario needs at least two images"));
            }
            let half = pairs.len() / 2;
            let hr_imgs: Vec<Image> = pairs[..half].iter().map(|(h, _)| h.clone()).collect();
            let lr_imgs: Vec<Image> = pairs[half..].iter().map(|(_, l)| l.clone()).collect();
            let hr = sample_patches(&hr_imgs, cfg.patch, cfg.n_patches, cfg.seed)?;
            let lr = sample_patches(&lr_imgs, cfg.lr_side(), cfg.n_patches, cfg.seed.wrapping_add(1))?;
            Ok((hr, lr))
        }
    }
}

/// Samples patches according to `cfg.mode` and trains.
pub fn train(cfg: &TrainConfig, pairs: &[(Image, Image)], scenario: UnpairedScenario) -> Result<ModelCheckpoint> {
    cfg.validate()?;
    match cfg.mode {
        TrainMode::Paired => {
            let (yh, yl) = paired_training_set(cfg, pairs)?;
            train_paired(cfg, &yh, &yl)
        }
        TrainMode::NoCorrespondence => {
            let (xh, yl) = unpaired_training_set(cfg, pairs, scenario)?;
            train_no_correspondence(cfg, &yl, &xh)
        }
    }
}
