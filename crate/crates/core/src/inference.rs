//! Patch-wise deblurring with a trained model.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::imaging::{vectorize_patch, Image};
use crate::sparse::{fista_solve_from, LassoProblem, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::training::ModelCheckpoint;

/// Patches coded per FISTA call; bounds the size of the code matrix.
const CHUNK: usize = 2048;

/// `D_l = B D_h` for a checkpoint.
pub fn derive_lr_dictionary(cp: &ModelCheckpoint) -> DMatrix<f64> {
    cp.lr_dictionary()
}

#[derive(Debug, Clone)]
pub struct DeblurRequest<'a> {
    pub lr_image: &'a Image,
    pub checkpoint: &'a ModelCheckpoint,
    pub stride: usize,
    pub lambda: f64,
    pub fista_max_iters: usize,
    pub fista_tol: f64,
}

impl<'a> DeblurRequest<'a> {
    /// Stride 1 and the training `lambda`.
    pub fn new(lr_image: &'a Image, checkpoint: &'a ModelCheckpoint) -> Self {
        Self {
            lr_image,
            checkpoint,
            stride: 1,
            lambda: checkpoint.config.lambda,
            fista_max_iters: DEFAULT_MAX_ITERS,
            fista_tol: DEFAULT_TOL,
        }
    }
}

/// Running sums and coverage counts over the HR frame.
#[derive(Debug, Clone)]
pub struct AggregationBuffer {
    height: usize,
    width: usize,
    accumulator: Vec<f64>,
    counts: Vec<u32>,
}

impl AggregationBuffer {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            accumulator: vec![0.0; height * width],
            counts: vec![0; height * width],
        }
    }

    /// Adds a row-major `side x side` patch with top-left corner `(row, col)`.
    pub fn add_patch(&mut self, row: usize, col: usize, side: usize, values: &[f64]) {
        assert_eq!(values.len(), side * side, "patch length mismatch");
        assert!(row + side <= self.height && col + side <= self.width, "patch outside frame");
        for i in 0..side {
            let base = (row + i) * self.width + col;
            for j in 0..side {
                self.accumulator[base + j] += values[i * side + j];
                self.counts[base + j] += 1;
            }
        }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Count-normalized image; every pixel must be covered.
    pub fn finish(self) -> Result<Image> {
        if let Some(i) = self.counts.iter().position(|&c| c == 0) {
            return Err(Error::Degenerate(format!(
                "pixel ({}, {}) not covered by any patch",
                i / self.width,
                i % self.width
            )));
        }
        let data = self
            .accumulator
            .iter()
            .zip(&self.counts)
            .map(|(&a, &c)| a / c as f64)
            .collect();
        Image::new(self.height, self.width, data)
    }
}

/// Top-left offsets `0, s, 2s, ...` plus one snapped to `len - side` when the
/// stride does not land there.
pub fn patch_offsets(len: usize, side: usize, stride: usize) -> Vec<usize> {
    assert!(side <= len && stride >= 1);
    let last = len - side;
    let mut offs: Vec<usize> = (0..=last).step_by(stride).collect();
    if *offs.last().unwrap() != last {
        offs.push(last);
    }
    offs
}

/// Options shared by [`deblur_with_dictionaries`] callers.
#[derive(Debug, Clone, Copy)]
pub struct CodingOptions {
    pub stride: usize,
    pub lambda: f64,
    pub fista_max_iters: usize,
    pub fista_tol: f64,
}

/// Codes every `q x q` LR patch over `dl` and averages the `p x p` HR patches
/// `dh c` into a frame `k - 1` pixels larger than the input. Unclamped.
pub fn deblur_with_dictionaries(
    lr: &Image,
    dl: &DMatrix<f64>,
    dh: &DMatrix<f64>,
    p: usize,
    k: usize,
    opts: CodingOptions,
) -> Result<Image> {
    if k == 0 || k > p {
        return Err(Error::param(format!("kernel side {k} invalid for patch side {p}")));
    }
    let q = p - k + 1;
    if dl.nrows() != q * q || dh.nrows() != p * p || dl.ncols() != dh.ncols() {
        return Err(Error::dims(format!(
            "dictionaries {:?} and {:?} do not match patch sides {q} and {p}",
            dl.shape(),
            dh.shape()
        )));
    }
    if opts.stride == 0 {
        return Err(Error::param("stride must be at least 1"));
    }
    let (h, w) = lr.dims();
    if q > h || q > w {
        return Err(Error::dims(format!("LR patch side {q} exceeds image {h}x{w}")));
    }
    let rows = patch_offsets(h, q, opts.stride);
    let cols = patch_offsets(w, q, opts.stride);
    let origins: Vec<(usize, usize)> = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();

    let mut buffer = AggregationBuffer::new(h + k - 1, w + k - 1);
    for chunk in origins.chunks(CHUNK) {
        let mut signals = DMatrix::zeros(q * q, chunk.len());
        for (j, &(r, c)) in chunk.iter().enumerate() {
            signals.set_column(j, &vectorize_patch(lr, r, c, q, q));
        }
        let prob = LassoProblem::new(dl, &signals, opts.lambda);
        let codes = fista_solve_from(&prob, None, opts.fista_max_iters, opts.fista_tol)?.codes;
        let patches = dh * codes.coeffs();
        for (j, &(r, c)) in chunk.iter().enumerate() {
            buffer.add_patch(r, c, p, patches.column(j).as_slice());
        }
    }
    buffer.finish()
}

/// Restores `req.lr_image`; output is `k - 1` pixels larger per axis and
/// clamped to `[0, 1]`.
pub fn deblur(req: &DeblurRequest<'_>) -> Result<Image> {
    let cp = req.checkpoint;
    let opts = CodingOptions {
        stride: req.stride,
        lambda: req.lambda,
        fista_max_iters: req.fista_max_iters,
        fista_tol: req.fista_tol,
    };
    let out = deblur_with_dictionaries(
        req.lr_image,
        &derive_lr_dictionary(cp),
        cp.dictionary.atoms(),
        cp.patch_side(),
        cp.kernel_side(),
        opts,
    )?;
    if out.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("deblurred pixel".into()));
    }
    Ok(out.clamped())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_snap_to_edge() {
        assert_eq!(patch_offsets(10, 4, 3), vec![0, 3, 6]);
        assert_eq!(patch_offsets(10, 4, 4), vec![0, 4, 6]);
        assert_eq!(patch_offsets(4, 4, 7), vec![0]);
        assert_eq!(patch_offsets(6, 2, 1), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn stride_one_coverage_matches_closed_form() {
        let (len, p) = (9, 4);
        let mut buf = AggregationBuffer::new(len, len);
        for &r in &patch_offsets(len, p, 1) {
            for &c in &patch_offsets(len, p, 1) {
                buf.add_patch(r, c, p, &vec![1.0; p * p]);
            }
        }
        // Along one axis pixel i is covered by offsets max(0, i-p+1)..=min(i, len-p).
        let axis = |i: usize| (i.min(len - p) + 1 - (i + 1).saturating_sub(p)) as u32;
        for r in 0..len {
            for c in 0..len {
                assert_eq!(buf.counts()[r * len + c], axis(r) * axis(c));
            }
        }
        assert_eq!(buf.counts()[4 * len + 4], (p * p) as u32);
    }

    #[test]
    fn uncovered_pixel_is_an_error() {
        let mut buf = AggregationBuffer::new(3, 3);
        buf.add_patch(0, 0, 2, &[1.0; 4]);
        assert!(buf.finish().is_err());
    }
}
