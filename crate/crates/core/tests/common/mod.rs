#![allow(dead_code)]

use std::path::{Path, PathBuf};

use blurdict::imaging::{gaussian_kernel, narrow_convolve, save_image, synthetic, GaussianKernelSpec, Image, Kernel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gaussian(k: usize, sigma: f64) -> Kernel {
    gaussian_kernel(GaussianKernelSpec::new(k, sigma)).unwrap()
}

pub fn blurred_pairs(seeds: std::ops::Range<u64>, side: usize, kernel: &Kernel) -> Vec<(Image, Image)> {
    seeds
        .map(|s| {
            let hr = synthetic::scene(side, side, s);
            let lr = narrow_convolve(&hr, kernel).unwrap();
            (hr, lr)
        })
        .collect()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Writes `n` synthetic scenes as PGM files and returns their paths.
pub fn write_scenes(dir: &Path, n: usize, side: usize, seed: u64) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    (0..n)
        .map(|i| {
            let path = dir.join(format!("scene{i}.pgm"));
            save_image(&path, &synthetic::scene(side, side, seed + i as u64)).unwrap();
            path
        })
        .collect()
}
