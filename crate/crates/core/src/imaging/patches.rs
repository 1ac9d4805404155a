use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Image;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchOrigin {
    pub image: usize,
    pub row: usize,
    pub col: usize,
}

/// Vectorized patches, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    patch_height: usize,
    patch_width: usize,
    columns: DMatrix<f64>,
    origins: Option<Vec<PatchOrigin>>,
}

impl PatchSet {
    pub fn new(
        patch_height: usize,
        patch_width: usize,
        columns: DMatrix<f64>,
        origins: Option<Vec<PatchOrigin>>,
    ) -> Result<Self> {
        if columns.nrows() != patch_height * patch_width {
            return Err(Error::dims(format!(
                "{} rows do not match {patch_height}x{patch_width} patches",
                columns.nrows()
            )));
        }
        if let Some(o) = &origins {
            if o.len() != columns.ncols() {
                return Err(Error::dims(format!(
                    "{} origins for {} patches",
                    o.len(),
                    columns.ncols()
                )));
            }
        }
        Ok(Self {
            patch_height,
            patch_width,
            columns,
            origins,
        })
    }

    /// Square patches without origin information.
    pub fn from_columns(side: usize, columns: DMatrix<f64>) -> Result<Self> {
        Self::new(side, side, columns, None)
    }

    pub fn patch_height(&self) -> usize {
        self.patch_height
    }

    pub fn patch_width(&self) -> usize {
        self.patch_width
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn into_columns(self) -> DMatrix<f64> {
        self.columns
    }

    pub fn origins(&self) -> Option<&[PatchOrigin]> {
        self.origins.as_deref()
    }

    /// Patch `index` as an image.
    pub fn patch(&self, index: usize) -> Image {
        devectorize_patch(
            self.columns.column(index).as_slice(),
            self.patch_height,
            self.patch_width,
        )
    }

    /// Randomly permuted copy with origins dropped, which removes any
    /// pairing with another set.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let columns = DMatrix::from_fn(self.dim(), self.len(), |r, c| self.columns[(r, order[c])]);
        Self {
            patch_height: self.patch_height,
            patch_width: self.patch_width,
            columns,
            origins: None,
        }
    }
}

/// Row-major vector of the `height x width` window at `(row, col)`.
pub fn vectorize_patch(img: &Image, row: usize, col: usize, height: usize, width: usize) -> DVector<f64> {
    let mut v = DVector::zeros(height * width);
    for i in 0..height {
        let start = (row + i) * img.width() + col;
        v.as_mut_slice()[i * width..(i + 1) * width]
            .copy_from_slice(&img.data()[start..start + width]);
    }
    v
}

pub fn devectorize_patch(values: &[f64], height: usize, width: usize) -> Image {
    assert_eq!(values.len(), height * width, "patch length mismatch");
    Image::from_fn(height, width, |r, c| values[r * width + c])
}

fn check_pair_geometry(hr: &Image, lr: &Image, p: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::param("kernel side must be at least 1"));
    }
    if lr.height() + k - 1 != hr.height() || lr.width() + k - 1 != hr.width() {
        return Err(Error::dims(format!(
            "LR image {}x{} is not HR {}x{} shrunk by k-1 = {}",
            lr.height(),
            lr.width(),
            hr.height(),
            hr.width(),
            k - 1
        )));
    }
    if p < k {
        return Err(Error::param(format!(
            "patch side {p} smaller than kernel side {k} leaves an empty LR patch"
        )));
    }
    if p > hr.height() || p > hr.width() {
        return Err(Error::dims(format!(
            "patch side {p} exceeds HR image {}x{}",
            hr.height(),
            hr.width()
        )));
    }
    Ok(())
}

/// Samples `n` co-located HR/LR patch pairs from one image pair.
///
/// HR patches are `p x p`; the LR patch at the same top-left corner is
/// `(p - k + 1)` square, so `y_lr = B y_hr` holds exactly for noiseless data.
pub fn extract_patch_pairs(
    hr: &Image,
    lr: &Image,
    p: usize,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<(PatchSet, PatchSet)> {
    sample_patch_pairs(&[(hr.clone(), lr.clone())], p, k, n, seed)
}

/// Multi-image version of [`extract_patch_pairs`]: each sample picks an image
/// pair uniformly, then a location uniformly.
pub fn sample_patch_pairs(
    pairs: &[(Image, Image)],
    p: usize,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<(PatchSet, PatchSet)> {
    if pairs.is_empty() {
        return Err(Error::param("no image pairs to sample from"));
    }
    if n == 0 {
        return Err(Error::param("patch count must be at least 1"));
    }
    for (hr, lr) in pairs {
        check_pair_geometry(hr, lr, p, k)?;
    }
    let q = p - k + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hr_cols = DMatrix::zeros(p * p, n);
    let mut lr_cols = DMatrix::zeros(q * q, n);
    let mut origins = Vec::with_capacity(n);
    for s in 0..n {
        let image = rng.random_range(0..pairs.len());
        let (hr, lr) = &pairs[image];
        let row = rng.random_range(0..=hr.height() - p);
        let col = rng.random_range(0..=hr.width() - p);
        hr_cols.set_column(s, &vectorize_patch(hr, row, col, p, p));
        lr_cols.set_column(s, &vectorize_patch(lr, row, col, q, q));
        origins.push(PatchOrigin { image, row, col });
    }
    Ok((
        PatchSet::new(p, p, hr_cols, Some(origins.clone()))?,
        PatchSet::new(q, q, lr_cols, Some(origins))?,
    ))
}

/// Samples `n` square patches of side `side` from a list of images.
pub fn sample_patches(images: &[Image], side: usize, n: usize, seed: u64) -> Result<PatchSet> {
    if images.is_empty() {
        return Err(Error::param("no images to sample from"));
    }
    if n == 0 || side == 0 {
        return Err(Error::param("patch count and side must be at least 1"));
    }
    if let Some(small) = images.iter().find(|i| i.height() < side || i.width() < side) {
        return Err(Error::dims(format!(
            "patch side {side} exceeds image {}x{}",
            small.height(),
            small.width()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = DMatrix::zeros(side * side, n);
    let mut origins = Vec::with_capacity(n);
    for s in 0..n {
        let image = rng.random_range(0..images.len());
        let img = &images[image];
        let row = rng.random_range(0..=img.height() - side);
        let col = rng.random_range(0..=img.width() - side);
        cols.set_column(s, &vectorize_patch(img, row, col, side, side));
        origins.push(PatchOrigin { image, row, col });
    }
    PatchSet::new(side, side, cols, Some(origins))
}
