//! Training without correspondence: sharp patches and blurred patches come
//! from different images.

use blurdict::blur::build_blur_matrix;
use blurdict::imaging::{gaussian_kernel, narrow_convolve, synthetic, GaussianKernelSpec};
use blurdict::metrics::blur_error_db;
use blurdict::training::{train, BmeKind, TrainConfig, TrainMode, UnpairedScenario};

fn main() -> blurdict::Result<()> {
    let kernel = gaussian_kernel(GaussianKernelSpec::new(3, 1.0))?;
    let pairs = (0..6)
        .map(|s| {
            let hr = synthetic::scene(64, 64, s);
            narrow_convolve(&hr, &kernel).map(|lr| (hr, lr))
        })
        .collect::<blurdict::Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        mode: TrainMode::NoCorrespondence,
        bme: BmeKind::Sr,
        patch: 8,
        k: 3,
        atoms: 48,
        n_patches: 600,
        outer_iters: 10,
        ..Default::default()
    };
    let truth = build_blur_matrix(&kernel, cfg.patch)?.to_dense();
    for scenario in [UnpairedScenario::Disjoint, UnpairedScenario::Shuffled] {
        let model = train(&cfg, &pairs, scenario)?;
        println!(
            "{scenario:?}: loss {:.3} -> {:.3}, blur error {:.1} dB",
            model.trace.total[0],
            model.trace.total.last().unwrap(),
            blur_error_db(&model.blur.to_dense(), &truth)?
        );
    }
    Ok(())
}
