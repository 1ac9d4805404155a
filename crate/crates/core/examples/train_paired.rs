//! Paired training: learns the HR dictionary and the blur taps from
//! co-located sharp and blurred patches, then compares the taps with the
//! kernel that made the data.

use blurdict::blur::build_blur_matrix;
use blurdict::imaging::{gaussian_kernel, narrow_convolve, synthetic, GaussianKernelSpec};
use blurdict::metrics::blur_error_db;
use blurdict::training::{train, BmeKind, TrainConfig, TrainMode, UnpairedScenario};

fn main() -> blurdict::Result<()> {
    let kernel = gaussian_kernel(GaussianKernelSpec::new(3, 1.0))?;
    let pairs = (0..4)
        .map(|s| {
            let hr = synthetic::scene(64, 64, s);
            narrow_convolve(&hr, &kernel).map(|lr| (hr, lr))
        })
        .collect::<blurdict::Result<Vec<_>>>()?;
    let truth = build_blur_matrix(&kernel, 8)?.to_dense();
    for bme in [BmeKind::Sr, BmeKind::Gr] {
        let cfg = TrainConfig {
            mode: TrainMode::Paired,
            bme,
            patch: 8,
            k: 3,
            atoms: 64,
            n_patches: 1000,
            outer_iters: 15,
            ..Default::default()
        };
        let model = train(&cfg, &pairs, UnpairedScenario::Disjoint)?;
        let err = blur_error_db(&model.blur.to_dense(), &truth)?;
        println!(
            "{bme}: final loss {:.3}, blur error {err:.1} dB",
            model.trace.total.last().unwrap()
        );
        let taps: Vec<String> = model.theta().iter().map(|t| format!("{t:.3}")).collect();
        println!("  taps {}", taps.join(" "));
    }
    println!("  true {}", kernel.taps().iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>().join(" "));
    Ok(())
}
