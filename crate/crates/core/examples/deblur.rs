//! Trains a small paired model, restores held-out blurred images and reports
//! PSNR/SSIM against the blurred input.

use blurdict::imaging::{gaussian_kernel, narrow_convolve, synthetic, GaussianKernelSpec, Image};
use blurdict::inference::{deblur, DeblurRequest};
use blurdict::metrics::{psnr, ssim};
use blurdict::training::{train, TrainConfig, UnpairedScenario};

fn pair(kernel: &blurdict::imaging::Kernel, seed: u64) -> blurdict::Result<(Image, Image)> {
    let hr = synthetic::scene(48, 48, seed);
    narrow_convolve(&hr, kernel).map(|lr| (hr, lr))
}

fn main() -> blurdict::Result<()> {
    let k = 5;
    let kernel = gaussian_kernel(GaussianKernelSpec::new(k, 1.0))?;
    let pairs = (0..4).map(|s| pair(&kernel, s)).collect::<blurdict::Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        patch: 11,
        k,
        atoms: 64,
        n_patches: 800,
        outer_iters: 10,
        lambda: 0.2,
        fista_max_iters: 100,
        ..Default::default()
    };
    let model = train(&cfg, &pairs, UnpairedScenario::Disjoint)?;
    for seed in 100..102 {
        let (hr, lr) = pair(&kernel, seed)?;
        let mut req = DeblurRequest::new(&lr, &model);
        req.lambda = cfg.lambda / 100.0;
        req.stride = 2;
        let out = deblur(&req)?;
        let baseline = lr.pad_replicate((k - 1) / 2);
        println!(
            "scene {seed}: restored {:.2} dB / {:.3}, blurred {:.2} dB / {:.3}",
            psnr(&hr, &out)?,
            ssim(&hr, &out)?,
            psnr(&hr, &baseline)?,
            ssim(&hr, &baseline)?
        );
    }
    Ok(())
}
