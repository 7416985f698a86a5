//! Linear-algebra and grid-search primitives shared by every estimator.
//!
//! Dense factorizations come from `nalgebra`; this module pins the
//! conventions the rest of the crate relies on (descending order, thin vs.
//! full bases, rank tolerances).

mod circular;
mod spectral;

pub use circular::{circular_distance, circular_mean, wrap_positive, wrap_symmetric};
pub use spectral::{
    argmax, argmin, fft_spectrum, lag_transform, parabolic_offset, quadratic_form_lags,
    polish_lag_min, refine_max_log, refine_min, steering_form_lags, SearchGrid, SteeringLags,
};

pub(crate) use spectral::with_fft;

use crate::{Error, Result, C64};
use nalgebra::DMatrix;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EvdResult {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors; column `i` pairs with `values[i]`.
    pub vectors: DMatrix<C64>,
}

fn check_finite(m: &DMatrix<C64>, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Hermitian EVD. The input is symmetrized as `(R + R†)/2` first.
pub fn hermitian_evd(r: &DMatrix<C64>) -> Result<EvdResult> {
    if !r.is_square() {
        return Err(Error::dim(format!(
            "EVD needs a square matrix, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    check_finite(r, "hermitian_evd input")?;
    let n = r.nrows();
    if n == 0 {
        return Ok(EvdResult {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let sym = (r + r.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |row, col| eig.eigenvectors[(row, order[col])]);
    Ok(EvdResult { values, vectors })
}

/// Thin SVD `A = U diag(s) V†` with singular values descending.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DMatrix<C64>,
    pub singular_values: Vec<f64>,
    /// `V†`, one right singular vector per row.
    pub v_adjoint: DMatrix<C64>,
}

pub fn svd(a: &DMatrix<C64>) -> Result<SvdResult> {
    check_finite(a, "svd input")?;
    let k = a.nrows().min(a.ncols());
    let dec = a.clone().svd(true, true);
    let (u, vt) = match (dec.u, dec.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::NonFinite("svd factors")),
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| dec.singular_values[y].total_cmp(&dec.singular_values[x]));
    Ok(SvdResult {
        u: DMatrix::from_fn(a.nrows(), k, |r, c| u[(r, order[c])]),
        singular_values: order.iter().map(|&i| dec.singular_values[i]).collect(),
        v_adjoint: DMatrix::from_fn(k, a.ncols(), |r, c| vt[(order[r], c)]),
    })
}

/// Moore-Penrose pseudo-inverse with conditioning diagnostics.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<C64>,
    /// Ratio of largest to smallest singular value (infinite when singular).
    pub condition: f64,
    /// Some singular value fell below `max(m, n)·ε·σ_max` and was dropped.
    pub rank_deficient: bool,
}

pub fn pseudo_inverse(a: &DMatrix<C64>) -> Result<PseudoInverse> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::dim("pseudo-inverse of an empty matrix"));
    }
    let s = svd(a)?;
    let smax = s.singular_values[0];
    let smin = *s.singular_values.last().unwrap();
    let tol = m.max(n) as f64 * f64::EPSILON * smax;
    let mut rank_deficient = false;
    // A⁺ = V diag(1/s) U†
    let mut pinv = DMatrix::<C64>::zeros(n, m);
    for (i, &sv) in s.singular_values.iter().enumerate() {
        if sv <= tol {
            rank_deficient = true;
            continue;
        }
        let inv = 1.0 / sv;
        for c in 0..m {
            let uc = s.u[(c, i)].conj() * inv;
            for r in 0..n {
                pinv[(r, c)] += s.v_adjoint[(i, r)].conj() * uc;
            }
        }
    }
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    Ok(PseudoInverse {
        matrix: pinv,
        condition,
        rank_deficient,
    })
}

/// Orthonormal basis `N` (m × (m−n)) of the orthogonal complement of the
/// column space of `A`, so that `N†A = 0`.
pub fn orthonormal_nullspace(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let (m, n) = a.shape();
    if n == 0 || m <= n {
        return Err(Error::dim(format!(
            "nullspace needs a tall matrix, got {m}x{n}"
        )));
    }
    let s = svd(a)?;
    if s.singular_values[n - 1] <= 1e-10 * s.singular_values[0] {
        return Err(Error::RankDeficient(format!(
            "singular values {:?}",
            s.singular_values
        )));
    }
    // The complement projector I − UU† has eigenvalue 1 with multiplicity
    // m − n and 0 elsewhere; the unit gap keeps its eigenvectors accurate.
    let complement = DMatrix::<C64>::identity(m, m) - &s.u * s.u.adjoint();
    let evd = hermitian_evd(&complement)?;
    Ok(evd.vectors.columns(0, m - n).into_owned())
}

#[cfg(test)]
mod tests;
