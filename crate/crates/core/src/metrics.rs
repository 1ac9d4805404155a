//! Image quality and blur-estimation metrics.
//!
//! PSNR and SSIM assume intensities in `[0, 1]`. The two sharpness scores
//! need no reference and are computed on the `[0, 255]` scale over interior
//! pixels.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::imaging::{gaussian_kernel, narrow_convolve, GaussianKernelSpec, Image};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dims(format!(
            "images differ in size: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

pub fn mse(reference: &Image, test: &Image) -> Result<f64> {
    same_dims(reference, test)?;
    let n = reference.data().len() as f64;
    Ok(reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio in dB with peak 1. Identical images give `+inf`.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    let m = mse(reference, test)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

/// Mean SSIM over all valid `11 x 11` Gaussian windows.
pub fn ssim(reference: &Image, test: &Image) -> Result<f64> {
    same_dims(reference, test)?;
    let (h, w) = reference.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::dims(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let g = gaussian_kernel(GaussianKernelSpec::new(SSIM_WINDOW, SSIM_SIGMA))?;
    let product = |f: &dyn Fn(f64, f64) -> f64| {
        let data = reference.data().iter().zip(test.data()).map(|(&a, &b)| f(a, b)).collect();
        Image::new(h, w, data).expect("same size")
    };
    let mu_x = narrow_convolve(reference, &g)?;
    let mu_y = narrow_convolve(test, &g)?;
    let xx = narrow_convolve(&product(&|a, _| a * a), &g)?;
    let yy = narrow_convolve(&product(&|_, b| b * b), &g)?;
    let xy = narrow_convolve(&product(&|a, b| a * b), &g)?;
    let n = mu_x.data().len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x.data()[i], mu_y.data()[i]);
        let vx = xx.data()[i] - mx * mx;
        let vy = yy.data()[i] - my * my;
        let cxy = xy.data()[i] - mx * my;
        total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
            / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok(total / n as f64)
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn interior(img: &Image) -> Result<(usize, usize)> {
    let (h, w) = img.dims();
    if h < 3 || w < 3 {
        return Err(Error::dims(format!("sharpness needs at least 3x3 pixels, got {h}x{w}")));
    }
    Ok((h, w))
}

/// Variance of the Sobel gradient magnitude.
pub fn sobel_variance(img: &Image) -> Result<f64> {
    let (h, w) = interior(img)?;
    let px = |r: usize, c: usize| 255.0 * img.get(r, c);
    let mut mags = Vec::with_capacity((h - 2) * (w - 2));
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let gx = (px(r - 1, c + 1) + 2.0 * px(r, c + 1) + px(r + 1, c + 1))
                - (px(r - 1, c - 1) + 2.0 * px(r, c - 1) + px(r + 1, c - 1));
            let gy = (px(r + 1, c - 1) + 2.0 * px(r + 1, c) + px(r + 1, c + 1))
                - (px(r - 1, c - 1) + 2.0 * px(r - 1, c) + px(r - 1, c + 1));
            mags.push(gx.hypot(gy));
        }
    }
    Ok(variance(&mags))
}

/// Variance of the signed 4-neighbour Laplacian.
pub fn laplace_variance(img: &Image) -> Result<f64> {
    let (h, w) = interior(img)?;
    let px = |r: usize, c: usize| 255.0 * img.get(r, c);
    let mut resp = Vec::with_capacity((h - 2) * (w - 2));
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            resp.push(px(r - 1, c) + px(r + 1, c) + px(r, c - 1) + px(r, c + 1) - 4.0 * px(r, c));
        }
    }
    Ok(variance(&resp))
}

/// Relative Frobenius error of a blur estimate in dB; an exact estimate
/// gives `-inf`.
pub fn blur_error_db(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::dims(format!(
            "blur shapes differ: {:?} vs {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::Degenerate("reference blur is zero".into()));
    }
    Ok(20.0 * ((estimate - truth).norm() / denom).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub sobel_var: f64,
    pub laplace_var: f64,
    pub b_error_db: Option<f64>,
}

impl MetricReport {
    /// Sharpness scores always; PSNR and SSIM only with a reference.
    pub fn compute(img: &Image, reference: Option<&Image>) -> Result<Self> {
        let (psnr, ssim) = match reference {
            Some(r) => (Some(psnr(r, img)?), Some(ssim(r, img)?)),
            None => (None, None),
        };
        Ok(Self {
            psnr,
            ssim,
            sobel_var: sobel_variance(img)?,
            laplace_var: laplace_variance(img)?,
            b_error_db: None,
        })
    }

    pub fn with_blur_error(mut self, estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Self> {
        self.b_error_db = Some(blur_error_db(estimate, truth)?);
        Ok(self)
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn image(h: usize, w: usize) -> impl Strategy<Value = Image> {
        proptest::collection::vec(0.0..1.0f64, h * w).prop_map(move |d| Image::new(h, w, d).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn psnr_is_symmetric(a in image(6, 7), b in image(6, 7)) {
            prop_assert_eq!(psnr(&a, &b).unwrap().to_bits(), psnr(&b, &a).unwrap().to_bits());
        }

        #[test]
        fn ssim_self_is_one(a in image(12, 13)) {
            prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn sharpness_ignores_constant_offset(a in image(8, 8), off in -0.5..0.5f64) {
            let b = Image::from_fn(8, 8, |r, c| a.get(r, c) + off);
            let (s1, s2) = (sobel_variance(&a).unwrap(), sobel_variance(&b).unwrap());
            let (l1, l2) = (laplace_variance(&a).unwrap(), laplace_variance(&b).unwrap());
            prop_assert!((s1 - s2).abs() <= 1e-8 * s1.max(1.0));
            prop_assert!((l1 - l2).abs() <= 1e-8 * l1.max(1.0));
        }
    }
}
