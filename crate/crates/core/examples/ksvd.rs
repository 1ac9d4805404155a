//! Learns a patch dictionary with alternating FISTA and K-SVD sweeps.

use blurdict::dictionary::{init_dictionary, ksvd_update_paired};
use blurdict::imaging::{sample_patches, synthetic};
use blurdict::sparse::{fista_solve, LassoProblem};

fn main() -> blurdict::Result<()> {
    let images: Vec<_> = (0..4).map(|s| synthetic::scene(64, 64, s)).collect();
    let patches = sample_patches(&images, 8, 1500, 1)?;
    let mut dict = init_dictionary(&patches, 64, 2)?;
    let lambda = 0.05;
    for it in 0..10 {
        let codes = fista_solve(&LassoProblem::new(dict.atoms(), patches.columns(), lambda), 200, 1e-6)?;
        let (next, codes) = ksvd_update_paired(&patches, &dict, &codes)?;
        dict = next;
        let fit = (patches.columns() - dict.atoms() * codes.coeffs()).norm_squared();
        println!("sweep {it:>2}: fit {fit:9.3}, l1 {:9.3}", codes.l1_norm());
    }
    Ok(())
}
