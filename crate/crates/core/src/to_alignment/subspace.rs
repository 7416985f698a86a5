//! Window covariance, MDL order selection and the two kernels.

use crate::numerics::hermitian_evd;
use crate::{Error, Result, C64};
use nalgebra::DMatrix;

/// Signal-subspace dimension by minimum description length.
///
/// `F(d) = T_w(n−d)·ln(AM/GM of λ_{d+1..n}) + ½d(2n−d)·ln T_w`, minimized
/// over `d ∈ [1, n−1]`; ties go to the smaller `d`. Only the first
/// `min(len, T_w)` eigenvalues enter: a window with fewer columns than rows
/// has structurally zero trailing eigenvalues. Eigenvalues are floored at
/// `len·ε·λ_1` so a noiseless window selects its numerical rank.
pub fn mdl_dimension(eigenvalues: &[f64], window_len: usize) -> Result<usize> {
    if eigenvalues.is_empty() || window_len == 0 {
        return Err(Error::DegenerateWindow("no eigenvalues".into()));
    }
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("MDL eigenvalues"));
    }
    let lmax = eigenvalues[0];
    if !(lmax > 0.0) {
        return Err(Error::DegenerateWindow("all eigenvalues are zero".into()));
    }
    let n = eigenvalues.len().min(window_len);
    if n < 2 {
        return Ok(1);
    }
    // Numerical-rank tolerance: anything below is rounding noise of the EVD.
    let floor = eigenvalues.len() as f64 * f64::EPSILON * lmax;
    let lam: Vec<f64> = eigenvalues[..n].iter().map(|&l| l.max(floor)).collect();
    let tw = window_len as f64;
    let mut best = (f64::INFINITY, 1);
    for d in 1..n {
        let tail = &lam[d..];
        let m = tail.len() as f64;
        let am = tail.iter().sum::<f64>() / m;
        let log_gm = tail.iter().map(|l| l.ln()).sum::<f64>() / m;
        let fit = tw * m * (am.ln() - log_gm).max(0.0);
        let penalty = 0.5 * d as f64 * (2.0 * n as f64 - d as f64) * tw.ln();
        let f = fit + penalty;
        if f < best.0 {
            best = (f, d);
        }
    }
    Ok(best.1)
}

/// EVD of a window covariance split into signal and noise subspaces.
#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    /// `d̂`.
    pub dimension: usize,
    /// Eigenvalues of `H_w H_w†`, descending.
    pub eigenvalues: Vec<f64>,
    /// Full eigenbasis; the first `d̂` columns span the signal subspace.
    pub basis: DMatrix<C64>,
    /// `σ̂²` per sample.
    pub noise_power: f64,
    /// Columns in the window, `T_w`.
    pub window_len: usize,
}

impl SubspaceEstimate {
    pub fn rows(&self) -> usize {
        self.basis.nrows()
    }

    /// `U_S`.
    pub fn signal_basis(&self) -> DMatrix<C64> {
        self.basis.columns(0, self.dimension).into_owned()
    }

    /// `U_N`.
    pub fn noise_basis(&self) -> DMatrix<C64> {
        self.basis.columns(self.dimension, self.rows() - self.dimension).into_owned()
    }

    /// `P_n = U_N U_N†`, formed as `I − U_S U_S†` (same matrix, fewer flops).
    pub fn noise_projector(&self) -> DMatrix<C64> {
        let us = self.basis.columns(0, self.dimension);
        DMatrix::identity(self.rows(), self.rows()) - &us * us.adjoint()
    }

    /// Eigenvalues of the adjusted covariance `R_w/T_w + σ̂²I`.
    fn adjusted_eigenvalues(&self) -> Result<Vec<f64>> {
        let tw = self.window_len as f64;
        let vals: Vec<f64> = (0..self.rows())
            .map(|i| self.eigenvalues[i].max(0.0) / tw + self.noise_power)
            .collect();
        if vals.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(vals)
    }

    /// `F = U·diag((λ/T_w + σ̂²)^{−1/2})`, so `F F† = (R_w/T_w + σ̂²I)^{−1}`.
    pub fn covariance_factor(&self) -> Result<DMatrix<C64>> {
        let vals = self.adjusted_eigenvalues()?;
        let mut f = self.basis.clone();
        for (mut col, v) in f.column_iter_mut().zip(vals) {
            col *= C64::new(v.powf(-0.5), 0.0);
        }
        Ok(f)
    }

    /// `(R_w/T_w + σ̂²I)^{−1}`.
    pub fn inverse_covariance(&self) -> Result<DMatrix<C64>> {
        let f = self.covariance_factor()?;
        Ok(&f * f.adjoint())
    }
}

/// Estimates the (shifted) signal subspace of a window of aligned snapshots.
pub fn subspace_projector(window: &DMatrix<C64>) -> Result<SubspaceEstimate> {
    let (n, tw) = window.shape();
    if n < 2 || tw == 0 {
        return Err(Error::DegenerateWindow(format!("window is {n}x{tw}")));
    }
    let r = window * window.adjoint();
    let evd = hermitian_evd(&r)?;
    let dimension = mdl_dimension(&evd.values, tw)?.min(n - 1);
    let used = n.min(tw);
    let tail = &evd.values[dimension.min(used)..used];
    let lmax = evd.values[0];
    let mean_tail = if tail.is_empty() {
        0.0
    } else {
        tail.iter().map(|l| l.max(0.0)).sum::<f64>() / tail.len() as f64
    };
    // Same rank tolerance as MDL; keeps the adjusted covariance invertible
    // for noiseless windows.
    let floor = n as f64 * f64::EPSILON * lmax;
    let noise_power = mean_tail.max(floor) / tw as f64;
    Ok(SubspaceEstimate {
        dimension,
        eigenvalues: evd.values,
        basis: evd.vectors,
        noise_power,
        window_len: tw,
    })
}
