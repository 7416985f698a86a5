//! Random fixtures for unit tests.

use crate::C64;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn cn<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| cn(rng))
}

pub fn random_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<C64> {
    DVector::from_fn(len, |_, _| cn(rng))
}

pub fn random_hermitian_psd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<C64> {
    let a = random_matrix(rng, n, n);
    &a * a.adjoint()
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
