//! Sparse coding with FISTA: sparsity against the regularization weight.

use blurdict::sparse::{fista_solve, LassoProblem};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> blurdict::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (m, n_atoms, n_signals) = (64, 128, 50);
    let mut dict = DMatrix::from_fn(m, n_atoms, |_, _| rng.random_range(-1.0..1.0));
    for mut col in dict.column_iter_mut() {
        col.normalize_mut();
    }
    let mut truth = DMatrix::zeros(n_atoms, n_signals);
    for j in 0..n_signals {
        for _ in 0..4 {
            truth[(rng.random_range(0..n_atoms), j)] = rng.random_range(-1.0..1.0);
        }
    }
    let signals = &dict * &truth;

    println!("{:>8} {:>10} {:>12}", "lambda", "mean nnz", "rel. error");
    for lambda in [0.001, 0.01, 0.05, 0.2, 1.0] {
        let codes = fista_solve(&LassoProblem::new(&dict, &signals, lambda), 1000, 1e-8)?;
        let nnz = codes.nonzeros_per_column().iter().sum::<usize>() as f64 / n_signals as f64;
        let err = (&signals - &dict * codes.coeffs()).norm() / signals.norm();
        println!("{lambda:>8} {nnz:>10.1} {err:>12.2e}");
    }
    Ok(())
}
