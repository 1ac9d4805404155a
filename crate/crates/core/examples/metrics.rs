//! Full-reference and blind quality scores of a scene under repeated blur.

use blurdict::imaging::{gaussian_kernel, narrow_convolve, synthetic, GaussianKernelSpec};
use blurdict::metrics::MetricReport;

fn main() -> blurdict::Result<()> {
    let kernel = gaussian_kernel(GaussianKernelSpec::new(5, 1.0))?;
    let sharp = synthetic::scene(96, 96, 7);
    let mut img = sharp.clone();
    println!("{:>5} {:>8} {:>7} {:>10} {:>12}", "pass", "psnr", "ssim", "sobel_var", "laplace_var");
    for pass in 0..4 {
        let reference = sharp.center_crop(img.height(), img.width())?;
        let r = MetricReport::compute(&img, Some(&reference))?;
        println!(
            "{pass:>5} {:>8.2} {:>7.4} {:>10.1} {:>12.1}",
            r.psnr.unwrap(),
            r.ssim.unwrap(),
            r.sobel_var,
            r.laplace_var
        );
        img = narrow_convolve(&img, &kernel)?;
    }
    Ok(())
}
