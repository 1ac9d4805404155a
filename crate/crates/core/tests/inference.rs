mod common;

use blurdict::blur::build_blur_matrix;
use blurdict::dictionary::Dictionary;
use blurdict::imaging::{synthetic, Image, Kernel};
use blurdict::inference::{deblur, patch_offsets, AggregationBuffer, DeblurRequest};
use blurdict::training::{load_checkpoint, save_checkpoint, train, LossTrace, ModelCheckpoint, TrainConfig, UnpairedScenario};
use nalgebra::DMatrix;

use common::{blurred_pairs, gaussian};

fn identity_model(p: usize) -> ModelCheckpoint {
    ModelCheckpoint {
        config: TrainConfig {
            k: 1,
            patch: p,
            atoms: p * p,
            lambda: 1e-9,
            ..Default::default()
        },
        dictionary: Dictionary::new(DMatrix::identity(p * p, p * p)).unwrap(),
        blur: build_blur_matrix(&Kernel::identity(), p).unwrap(),
        trace: LossTrace::default(),
    }
}

#[test]
fn identity_model_reproduces_the_input() {
    let model = identity_model(5);
    let img = synthetic::scene(23, 17, 3);
    for stride in [1, 2, 4] {
        let mut req = DeblurRequest::new(&img, &model);
        req.stride = stride;
        let out = deblur(&req).unwrap();
        assert_eq!(out.dims(), img.dims());
        let err = out.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "stride {stride}: {err}");
    }
}

#[test]
fn constant_patches_average_to_the_constant() {
    for (h, w, side, stride) in [(20, 20, 6, 1), (17, 23, 5, 3), (9, 9, 9, 2), (30, 11, 4, 3)] {
        let mut buf = AggregationBuffer::new(h, w);
        for &r in &patch_offsets(h, side, stride) {
            for &c in &patch_offsets(w, side, stride) {
                buf.add_patch(r, c, side, &vec![0.375; side * side]);
            }
        }
        let out = buf.finish().unwrap();
        assert!(out.data().iter().all(|v| (v - 0.375).abs() < 1e-10));
    }
}

#[test]
fn output_grows_by_kernel_margin_and_stays_in_range() {
    let kernel = gaussian(3, 0.9);
    let pairs = blurred_pairs(0..4, 28, &kernel);
    let cfg = TrainConfig {
        patch: 6,
        k: 3,
        atoms: 16,
        n_patches: 200,
        outer_iters: 4,
        lambda: 0.05,
        ..Default::default()
    };
    let model = train(&cfg, &pairs, UnpairedScenario::Disjoint).unwrap();
    let out = deblur(&DeblurRequest::new(&pairs[0].1, &model)).unwrap();
    assert_eq!(out.dims(), (28, 28));
    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &model).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(deblur(&DeblurRequest::new(&pairs[0].1, &loaded)).unwrap(), out);
}

#[test]
fn input_smaller_than_a_patch_is_rejected() {
    let model = identity_model(5);
    let img = Image::filled(4, 10, 0.5);
    assert!(deblur(&DeblurRequest::new(&img, &model)).is_err());
}
