//! Seeded random states and operators for unit tests.

use crate::qmat::{cr, c, CMat, CVec, DensityMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    let a = random_complex_matrix(rng, d, d);
    (&a + a.adjoint()).scale(0.5)
}

pub fn random_ket(rng: &mut ChaCha8Rng, d: usize) -> CVec {
    let v = CVec::from_fn(d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let n = v.norm();
    v.scale(1.0 / n)
}

/// Full-rank random state via the Ginibre construction X X† / Tr.
pub fn random_density(rng: &mut ChaCha8Rng, d: usize) -> DensityMatrix {
    let x = random_complex_matrix(rng, d, d);
    let m = &x * x.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(m.scale(1.0 / tr), vec![d]).expect("Ginibre state is valid")
}

/// Random bipartite state on dims (da, db), generally entangled.
pub fn random_bipartite_density(rng: &mut ChaCha8Rng, da: usize, db: usize) -> DensityMatrix {
    let x = random_complex_matrix(rng, da * db, da * db);
    let m = &x * x.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(m.scale(1.0 / tr), vec![da, db]).expect("Ginibre state is valid")
}

pub fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tol,
        "{what}: {actual} vs {expected} (tol {tol})"
    );
}

#[allow(unused)]
pub fn zero() -> num_complex::Complex64 {
    cr(0.0)
}
