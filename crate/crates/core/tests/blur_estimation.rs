mod common;

use blurdict::blur::{bme_gr, bme_sr, build_basis_matrices, build_blur_matrix, AdamState, StructuredObjective};
use blurdict::dictionary::Dictionary;
use blurdict::imaging::sample_patch_pairs;
use blurdict::metrics::blur_error_db;
use blurdict::sparse::SparseCodes;
use nalgebra::DMatrix;

use common::{blurred_pairs, gaussian, random_matrix};

/// HR patches coded exactly by an identity dictionary.
fn exact_codes(p: usize, k: usize, n: usize) -> (blurdict::imaging::PatchSet, Dictionary, SparseCodes) {
    let pairs = blurred_pairs(0..3, 40, &gaussian(k, 1.0));
    let (yh, yl) = sample_patch_pairs(&pairs, p, k, n, 5).unwrap();
    let dict = Dictionary::new(DMatrix::identity(p * p, p * p)).unwrap();
    (yl, dict, SparseCodes::new(yh.columns().clone()).unwrap())
}

#[test]
fn sr_recovers_taps_from_exact_codes() {
    let (p, k) = (6, 3);
    let (yl, dict, codes) = exact_codes(p, k, 600);
    let basis = build_basis_matrices(k, p).unwrap();
    let mut adam = AdamState::new(k * k, 0.01);
    let theta0 = vec![1.0 / (k * k) as f64; k * k];
    let out = bme_sr(&yl, &dict, &codes, &basis, &theta0, &mut adam, 3000).unwrap();
    let truth = build_blur_matrix(&gaussian(k, 1.0), p).unwrap().to_dense();
    let err = blur_error_db(&out.blur.to_dense(), &truth).unwrap();
    assert!(err < -30.0, "blur error {err} dB");
    assert!(out.objective.last().unwrap() < &(out.objective[0] * 1e-3));
}

#[test]
fn sr_gradient_matches_finite_differences() {
    let (k, p) = (3, 5);
    let basis = build_basis_matrices(k, p).unwrap();
    let y = random_matrix(9, 12, 1);
    let z = random_matrix(25, 12, 2);
    let obj = StructuredObjective::new(&basis, &y, &z).unwrap();
    let theta: Vec<f64> = random_matrix(9, 1, 3).as_slice().to_vec();
    let grad = obj.gradient(&theta);
    let h = 1e-6;
    for i in 0..theta.len() {
        let mut up = theta.clone();
        let mut down = theta.clone();
        up[i] += h;
        down[i] -= h;
        let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
        assert!((fd - grad[i]).abs() <= 1e-5 * grad[i].abs().max(1.0), "tap {i}: {fd} vs {}", grad[i]);
    }
}

#[test]
fn sr_objective_matches_dense_residual() {
    let (k, p) = (3, 5);
    let basis = build_basis_matrices(k, p).unwrap();
    let y = random_matrix(9, 7, 4);
    let z = random_matrix(25, 7, 5);
    let theta: Vec<f64> = random_matrix(9, 1, 6).as_slice().to_vec();
    let b = basis.combine(&theta).unwrap();
    let direct = (&y - b * &z).norm_squared();
    let got = StructuredObjective::new(&basis, &y, &z).unwrap().value(&theta);
    assert!((direct - got).abs() <= 1e-10 * direct);
}

#[test]
fn gr_recovers_blur_from_exact_codes() {
    let (p, k) = (6, 3);
    let (yl, dict, codes) = exact_codes(p, k, 600);
    let est = bme_gr(&yl, &dict, &codes, k).unwrap();
    let truth = build_blur_matrix(&gaussian(k, 1.0), p).unwrap().to_dense();
    let err = blur_error_db(&est.to_dense(), &truth).unwrap();
    assert!(err < -100.0, "blur error {err} dB");
    assert!(!est.is_structured());
}

#[test]
fn gr_rejects_inconsistent_shapes() {
    let (p, k) = (6, 3);
    let (yl, dict, codes) = exact_codes(p, k, 50);
    assert!(bme_gr(&yl, &dict, &codes, 5).is_err());
}
