//! Builds the patch blur matrix for a Gaussian kernel and checks it against
//! direct convolution.

use blurdict::blur::{build_basis_matrices, build_blur_matrix};
use blurdict::imaging::{gaussian_kernel, narrow_convolve, synthetic, GaussianKernelSpec, Image};
use nalgebra::DVector;

fn main() -> blurdict::Result<()> {
    let (k, p) = (7, 15);
    let kernel = gaussian_kernel(GaussianKernelSpec::new(k, 1.6))?;
    let blur = build_blur_matrix(&kernel, p)?;
    let b = blur.to_dense();
    println!("B is {}x{} for k={k}, p={p}", b.nrows(), b.ncols());

    let patch = synthetic::scene(p, p, 1);
    let via_matrix = &b * DVector::from_column_slice(patch.data());
    let via_conv = narrow_convolve(&patch, &kernel)?;
    let diff = via_matrix.iter().zip(via_conv.data()).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    println!("max |B x - conv(x)| = {diff:.2e}");

    let basis = build_basis_matrices(k, p)?;
    let rebuilt = basis.combine(kernel.taps())?;
    println!("basis matrices: {}, rebuild error {:.2e}", basis.len(), (&rebuilt - &b).amax());

    let q = p - k + 1;
    let lr = Image::new(q, q, via_matrix.as_slice().to_vec())?;
    println!("LR patch is {}x{}", lr.height(), lr.width());
    Ok(())
}
