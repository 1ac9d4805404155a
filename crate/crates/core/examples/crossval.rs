//! Kernel-size selection: trains one model per candidate `k` and scores the
//! restorations of validation images.

use blurdict::cli::{cross_validate, CrossValSample, SelectionMetric};
use blurdict::imaging::{align_pair, gaussian_kernel, narrow_convolve, synthetic, GaussianKernelSpec};
use blurdict::training::{train, TrainConfig, UnpairedScenario};

fn main() -> blurdict::Result<()> {
    let kernel = gaussian_kernel(GaussianKernelSpec::new(5, 1.0))?;
    let make = |seed| {
        let hr = synthetic::scene(48, 48, seed);
        narrow_convolve(&hr, &kernel).map(|lr| (hr, lr))
    };
    let pairs = (0..4).map(make).collect::<blurdict::Result<Vec<_>>>()?;
    let models = [3, 5, 7]
        .iter()
        .map(|&k| {
            let cfg = TrainConfig {
                patch: 11,
                k,
                atoms: 48,
                n_patches: 600,
                outer_iters: 8,
                lambda: 0.2,
                fista_max_iters: 100,
                ..Default::default()
            };
            let aligned = pairs.iter().map(|(h, l)| align_pair(h, l, k)).collect::<blurdict::Result<Vec<_>>>()?;
            let mut model = train(&cfg, &aligned, UnpairedScenario::Disjoint)?;
            model.config.lambda = cfg.lambda / 100.0;
            Ok(model)
        })
        .collect::<blurdict::Result<Vec<_>>>()?;
    let samples = (100..102)
        .map(|s| {
            let (hr, lr) = make(s)?;
            Ok(CrossValSample {
                name: format!("val{s}"),
                lr,
                gt: Some(hr),
            })
        })
        .collect::<blurdict::Result<Vec<_>>>()?;
    for metric in [SelectionMetric::Psnr, SelectionMetric::SobelVar] {
        let report = cross_validate(&models, &samples, metric, 2)?;
        for c in &report.candidates {
            println!("{metric:?} k={} mean {:.3}", c.k, c.mean);
        }
        println!("{metric:?} selects k={}", report.selected_k);
    }
    Ok(())
}
