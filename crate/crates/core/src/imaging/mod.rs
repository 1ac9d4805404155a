//! Single-channel images, narrow convolution, patch handling and synthetic
//! blurred-dataset generation.
//!
//! All images are luminance grids with intensities in `[0, 1]`. Patch
//! vectorization is row-major everywhere in the crate, so a `p x p` patch at
//! `(r, c)` maps to a column whose entry `i * p + j` is pixel `(r + i, c + j)`.

mod dataset;
mod io;
mod patches;
pub mod synthetic;

pub use dataset::{generate_blurred_dataset, Manifest, ManifestRecord};
pub use io::{load_image, save_image};
pub use patches::{
    devectorize_patch, extract_patch_pairs, sample_patch_pairs, sample_patches, vectorize_patch,
    PatchOrigin, PatchSet,
};

use crate::error::{Error, Result};

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dims(format!(
                "image must be non-empty, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::dims(format!(
                "expected {} pixels for {height}x{width}, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pixel value {bad}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image must be non-empty");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::from_fn(height, width, |_, _| value)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Clamps every pixel into `[0, 1]`.
    pub fn clamped(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Sub-image with top-left corner `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || row + height > self.height || col + width > self.width {
            return Err(Error::dims(format!(
                "crop {height}x{width} at ({row}, {col}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(height, width, |r, c| self.get(row + r, col + c)))
    }

    /// Crop that removes an equal margin from each side; the size differences
    /// must be even.
    pub fn center_crop(&self, height: usize, width: usize) -> Result<Self> {
        if height > self.height || width > self.width {
            return Err(Error::dims(format!(
                "center crop {height}x{width} larger than {}x{}",
                self.height, self.width
            )));
        }
        let (dh, dw) = (self.height - height, self.width - width);
        if dh % 2 != 0 || dw % 2 != 0 {
            return Err(Error::dims(format!(
                "center crop from {}x{} to {height}x{width} is not symmetric",
                self.height, self.width
            )));
        }
        self.crop(dh / 2, dw / 2, height, width)
    }

    /// Grows the image by `margin` pixels on every side, replicating edges.
    pub fn pad_replicate(&self, margin: usize) -> Self {
        let (h, w) = (self.height, self.width);
        Self::from_fn(h + 2 * margin, w + 2 * margin, |r, c| {
            let rr = r.saturating_sub(margin).min(h - 1);
            let cc = c.saturating_sub(margin).min(w - 1);
            self.get(rr, cc)
        })
    }
}

/// Square filter kernel stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, taps: Vec<f64>) -> Result<Self> {
        if size == 0 {
            return Err(Error::param("kernel side must be at least 1"));
        }
        if taps.len() != size * size {
            return Err(Error::dims(format!(
                "kernel of side {size} needs {} taps, got {}",
                size * size,
                taps.len()
            )));
        }
        Ok(Self { size, taps })
    }

    pub fn identity() -> Self {
        Self {
            size: 1,
            taps: vec![1.0],
        }
    }

    /// Flat kernel with every tap equal to `1 / k^2`.
    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "kernel side must be at least 1");
        let w = 1.0 / (size * size) as f64;
        Self {
            size,
            taps: vec![w; size * size],
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.taps[u * self.size + v]
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Embeds the kernel in a larger odd-sized frame, zero-padding equally on
    /// all sides.
    pub fn zero_padded(&self, size: usize) -> Result<Self> {
        if size < self.size || (size - self.size) % 2 != 0 {
            return Err(Error::param(format!(
                "cannot pad kernel of side {} to side {size}",
                self.size
            )));
        }
        let off = (size - self.size) / 2;
        let mut taps = vec![0.0; size * size];
        for u in 0..self.size {
            for v in 0..self.size {
                taps[(u + off) * size + v + off] = self.get(u, v);
            }
        }
        Ok(Self { size, taps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernelSpec {
    pub k: usize,
    pub sigma: f64,
}

impl GaussianKernelSpec {
    pub fn new(k: usize, sigma: f64) -> Self {
        Self { k, sigma }
    }
}

/// Sampled isotropic Gaussian on a `k x k` integer grid, normalized to sum 1.
pub fn gaussian_kernel(spec: GaussianKernelSpec) -> Result<Kernel> {
    let GaussianKernelSpec { k, sigma } = spec;
    if k == 0 || k % 2 == 0 {
        return Err(Error::param(format!("kernel side must be odd, got {k}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    let center = (k as f64 - 1.0) / 2.0;
    let denom = 2.0 * sigma * sigma;
    let mut taps = Vec::with_capacity(k * k);
    for u in 0..k {
        for v in 0..k {
            let (x, y) = (u as f64 - center, v as f64 - center);
            taps.push((-(x * x + y * y) / denom).exp());
        }
    }
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    Kernel::new(k, taps)
}

/// Valid-region correlation: `out[i, j] = sum_{u,v} kernel[u, v] * img[i + u, j + v]`.
///
/// The kernel is not flipped; output is `(H - k + 1) x (W - k + 1)`.
pub fn narrow_convolve(img: &Image, kernel: &Kernel) -> Result<Image> {
    let k = kernel.size();
    if k > img.height() || k > img.width() {
        return Err(Error::dims(format!(
            "kernel of side {k} does not fit in {}x{} image",
            img.height(),
            img.width()
        )));
    }
    let (oh, ow) = (img.height() - k + 1, img.width() - k + 1);
    let mut out = vec![0.0; oh * ow];
    let w = img.width();
    let src = img.data();
    for i in 0..oh {
        let row_out = &mut out[i * ow..(i + 1) * ow];
        for u in 0..k {
            let src_row = &src[(i + u) * w..(i + u + 1) * w];
            for v in 0..k {
                let t = kernel.get(u, v);
                if t == 0.0 {
                    continue;
                }
                for (o, s) in row_out.iter_mut().zip(&src_row[v..v + ow]) {
                    *o += t * s;
                }
            }
        }
    }
    Ok(Image {
        height: oh,
        width: ow,
        data: out,
    })
}

/// Crops an HR/LR pair so that `lr` is exactly `hr` shrunk by `k - 1`,
/// removing symmetric margins from whichever side is too large.
///
/// Used when a model's kernel side differs from the one that produced the
/// data; both images stay centered on the same scene point.
pub fn align_pair(hr: &Image, lr: &Image, k: usize) -> Result<(Image, Image)> {
    let shrink = k.checked_sub(1).ok_or_else(|| Error::param("k must be >= 1"))?;
    let fit = |hr_len: usize, lr_len: usize| -> Result<(usize, usize)> {
        if lr_len + shrink <= hr_len {
            Ok((lr_len + shrink, lr_len))
        } else if hr_len > shrink {
            Ok((hr_len, hr_len - shrink))
        } else {
            Err(Error::dims(format!(
                "image side {hr_len} too small for kernel side {k}"
            )))
        }
    };
    let (hh, lh) = fit(hr.height(), lr.height())?;
    let (hw, lw) = fit(hr.width(), lr.width())?;
    Ok((hr.center_crop(hh, hw)?, lr.center_crop(lh, lw)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_conv(img: &Image, ker: &Kernel) -> Vec<f64> {
        let k = ker.size();
        let (oh, ow) = (img.height() - k + 1, img.width() - k + 1);
        let mut out = vec![0.0; oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0;
                for u in 0..k {
                    for v in 0..k {
                        acc += ker.get(u, v) * img.get(i + u, j + v);
                    }
                }
                out[i * ow + j] = acc;
            }
        }
        out
    }

    #[test]
    fn identity_kernel_is_noop() {
        let img = Image::from_fn(4, 6, |r, c| (r * 6 + c) as f64 / 24.0);
        assert_eq!(narrow_convolve(&img, &Kernel::identity()).unwrap(), img);
    }

    #[test]
    fn averaging_constant_image() {
        let img = Image::filled(3, 3, 1.0);
        let ker = Kernel::new(2, vec![0.25; 4]).unwrap();
        let out = narrow_convolve(&img, &ker).unwrap();
        assert_eq!(out.dims(), (2, 2));
        assert!(out.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = Image::from_fn(5, 5, |_, _| rng.random());
        let ker = Kernel::new(3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let out = narrow_convolve(&img, &ker).unwrap();
        for (a, b) in out.data().iter().zip(brute_conv(&img, &ker)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_larger_than_image_rejected() {
        let img = Image::filled(2, 5, 0.5);
        assert!(narrow_convolve(&img, &Kernel::uniform(3)).is_err());
    }

    #[test]
    fn gaussian_single_tap() {
        let k = gaussian_kernel(GaussianKernelSpec::new(1, 0.7)).unwrap();
        assert_eq!(k.taps(), &[1.0]);
    }

    #[test]
    fn gaussian_three_by_three_by_hand() {
        // Weights on the 3x3 grid are e^0, e^{-1/(2s^2)} (x4), e^{-2/(2s^2)} (x4).
        let s: f64 = 1.2;
        let edge = (-1.0 / (2.0 * s * s)).exp();
        let corner = (-2.0 / (2.0 * s * s)).exp();
        let total = 1.0 + 4.0 * edge + 4.0 * corner;
        let k = gaussian_kernel(GaussianKernelSpec::new(3, s)).unwrap();
        assert!((k.get(1, 1) - 1.0 / total).abs() < 1e-15);
        assert!((k.get(0, 1) - edge / total).abs() < 1e-15);
        assert!((k.get(2, 2) - corner / total).abs() < 1e-15);
    }

    #[test]
    fn gaussian_seven_normalized_and_symmetric() {
        let k = gaussian_kernel(GaussianKernelSpec::new(7, 1.2)).unwrap();
        let sum: f64 = k.taps().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for u in 0..7 {
            for v in 0..7 {
                assert_eq!(k.get(u, v), k.get(6 - u, v));
                assert_eq!(k.get(u, v), k.get(u, 6 - v));
                assert_eq!(k.get(u, v), k.get(v, 6 - u));
                assert!(k.get(u, v) > 0.0);
            }
        }
    }

    #[test]
    fn gaussian_rejects_bad_specs() {
        assert!(gaussian_kernel(GaussianKernelSpec::new(4, 1.0)).is_err());
        assert!(gaussian_kernel(GaussianKernelSpec::new(0, 1.0)).is_err());
        assert!(gaussian_kernel(GaussianKernelSpec::new(3, 0.0)).is_err());
        assert!(gaussian_kernel(GaussianKernelSpec::new(3, -2.0)).is_err());
    }

    #[test]
    fn image_validation() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn align_pair_crops_the_larger_side() {
        let hr = Image::filled(20, 20, 0.5);
        let lr = Image::filled(16, 16, 0.5);
        let (h, l) = align_pair(&hr, &lr, 7).unwrap();
        assert_eq!((h.dims(), l.dims()), ((20, 20), (14, 14)));
        let (h, l) = align_pair(&hr, &lr, 3).unwrap();
        assert_eq!((h.dims(), l.dims()), ((18, 18), (16, 16)));
        let (h, l) = align_pair(&hr, &lr, 5).unwrap();
        assert_eq!((h.dims(), l.dims()), ((20, 20), (16, 16)));
    }

    #[test]
    fn padded_kernel_gives_cropped_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Image::from_fn(12, 12, |_, _| rng.random());
        let small = gaussian_kernel(GaussianKernelSpec::new(3, 0.8)).unwrap();
        let big = small.zero_padded(5).unwrap();
        let a = narrow_convolve(&img, &small).unwrap().center_crop(8, 8).unwrap();
        let b = narrow_convolve(&img, &big).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn pad_replicate_edges() {
        let img = Image::from_fn(2, 2, |r, c| (r * 2 + c) as f64);
        let p = img.pad_replicate(1);
        assert_eq!(p.dims(), (4, 4));
        assert_eq!(p.get(0, 0), 0.0);
        assert_eq!(p.get(3, 3), 3.0);
        assert_eq!(p.get(1, 2), 1.0);
    }

    mod props {
        use super::{gaussian_kernel, narrow_convolve, ChaCha8Rng, GaussianKernelSpec, Image, Kernel, SeedableRng};
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn convolution_is_linear(seed in 0u64..1000, h in 3usize..10, w in 3usize..10, k in 1usize..4,
                                     alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = Image::from_fn(h, w, |_, _| rng.random());
                let b = Image::from_fn(h, w, |_, _| rng.random());
                let ker = Kernel::new(k, (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                let mix = Image::from_fn(h, w, |r, c| alpha * a.get(r, c) + beta * b.get(r, c));
                let lhs = narrow_convolve(&mix, &ker).unwrap();
                let ca = narrow_convolve(&a, &ker).unwrap();
                let cb = narrow_convolve(&b, &ker).unwrap();
                prop_assert_eq!(lhs.dims(), (h - k + 1, w - k + 1));
                for i in 0..lhs.data().len() {
                    let rhs = alpha * ca.data()[i] + beta * cb.data()[i];
                    prop_assert!((lhs.data()[i] - rhs).abs() < 1e-10);
                }
            }

            #[test]
            fn gaussian_is_flip_invariant(half in 0usize..6, sigma in 0.3f64..4.0) {
                let k = 2 * half + 1;
                let ker = gaussian_kernel(GaussianKernelSpec::new(k, sigma)).unwrap();
                let sum: f64 = ker.taps().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                for u in 0..k {
                    for v in 0..k {
                        prop_assert!((ker.get(u, v) - ker.get(k - 1 - u, v)).abs() < 1e-16);
                        prop_assert!((ker.get(u, v) - ker.get(u, k - 1 - v)).abs() < 1e-16);
                    }
                }
            }
        }
    }
}
