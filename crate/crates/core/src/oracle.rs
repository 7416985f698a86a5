//! Brute-force reference evaluators.
//!
//! Everything here is computed the slow, obvious way: explicit steering
//! vectors, explicit matrix products, explicit inverses. The fast estimators
//! are checked against these, and the acceptance suite uses them at run time,
//! so they live in the library rather than in test code.

use crate::numerics::SearchGrid;
use crate::C64;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::{PI, TAU};

/// `1_M ⊗ a(τ)` for an `n`-row snapshot with `k` subcarriers.
fn to_modulation(n: usize, k: usize, delta_f: f64, tau: f64) -> DVector<C64> {
    DVector::from_fn(n, |i, _| C64::from_polar(1.0, -TAU * (i % k) as f64 * delta_f * tau))
}

fn grid_delta_f(grid: &SearchGrid) -> f64 {
    1.0 / grid.period()
}

/// `x† P x` with `x = conj(1_M ⊗ a(τ)) ⊙ h`.
pub fn to_objective(h: &DVector<C64>, kernel: &DMatrix<C64>, k: usize, delta_f: f64, tau: f64) -> f64 {
    let a = to_modulation(h.len(), k, delta_f, tau);
    let x = a.map(|z| z.conj()).component_mul(h);
    (x.adjoint() * kernel * &x)[(0, 0)].re
}

/// [`to_objective`] at every point of `grid`.
pub fn to_objective_grid(h: &DVector<C64>, kernel: &DMatrix<C64>, grid: &SearchGrid) -> Vec<f64> {
    let df = grid_delta_f(grid);
    grid.delays()
        .into_iter()
        .map(|t| to_objective(h, kernel, grid.subcarriers(), df, t))
        .collect()
}

/// Sum of [`to_objective`] over the columns of `columns`.
pub fn to_objective_sum_grid(columns: &DMatrix<C64>, kernel: &DMatrix<C64>, grid: &SearchGrid) -> Vec<f64> {
    let df = grid_delta_f(grid);
    grid.delays()
        .into_iter()
        .map(|t| {
            columns
                .column_iter()
                .map(|c| to_objective(&c.into_owned(), kernel, grid.subcarriers(), df, t))
                .sum()
        })
        .collect()
}

/// Profile log-likelihood of a snapshot under the deterministic-gain model
/// with known shifted response matrix `A`: gains and noise power replaced by
/// their least-squares estimates.
pub fn profile_log_likelihood(h: &DVector<C64>, a: &DMatrix<C64>, k: usize, delta_f: f64, tau: f64) -> f64 {
    let n = h.len();
    let m = to_modulation(n, k, delta_f, tau);
    let y = m.map(|z| z.conj()).component_mul(h);
    let gram = a.adjoint() * a;
    let rhs = a.adjoint() * &y;
    let b = gram.lu().solve(&rhs).expect("response matrix has full column rank");
    let resid = &y - a * b;
    let f = resid.norm_squared();
    -(n as f64) * (PI * std::f64::consts::E).ln() - (f / n as f64).ln()
}

/// Log-likelihood of a snapshot drawn from `CN(0, D R D†)`, `D = diag(1_M ⊗ a(τ))`.
pub fn gaussian_log_likelihood(h: &DVector<C64>, cov: &DMatrix<C64>, k: usize, delta_f: f64, tau: f64) -> f64 {
    let n = h.len();
    let m = to_modulation(n, k, delta_f, tau);
    let x = m.map(|z| z.conj()).component_mul(h);
    let lu = cov.clone().lu();
    let det = lu.determinant();
    let inv = lu.try_inverse().expect("covariance is invertible");
    let quad = (x.adjoint() * inv * &x)[(0, 0)].re;
    -(n as f64) * PI.ln() - det.re.ln() - quad
}

/// `a^M(θ, τ)† P a^M(θ, τ)` with an explicit joint steering vector.
pub fn steering_form(kernel: &DMatrix<C64>, spatial: &[C64], k: usize, delta_f: f64, tau: f64) -> f64 {
    let a = DVector::from_fn(spatial.len() * k, |i, _| {
        spatial[i / k] * C64::from_polar(1.0, -TAU * (i % k) as f64 * delta_f * tau)
    });
    (a.adjoint() * kernel * &a)[(0, 0)].re
}
