//! Recursive relative-TO alignment within a CPI.
//!
//! The first snapshot is the reference and passes through untouched.
//! Snapshots `2..=K` are aligned against Hankel-smoothed forms of the aligned
//! prefix; later ones against a sliding window of the last `T_w` aligned
//! snapshots. Each step minimizes `x(τ)† P x(τ)` with
//! `x(τ) = conj(1_M ⊗ a(τ)) ⊙ h`, where `P` is either the window's noise
//! projector (subspace method) or its inverse adjusted covariance
//! (covariance method).

mod subspace;

pub use subspace::{mdl_dimension, subspace_projector, SubspaceEstimate};

use crate::numerics::{
    argmin, lag_transform, polish_lag_min, quadratic_form_lags, refine_min, wrap_symmetric, SearchGrid,
};
use crate::signal_model::{compensate_delay, CsiMatrix, Stage, SystemConfig};
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Relative objective spread below which a spectrum counts as flat.
const FLAT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMethod {
    Subspace,
    Covariance,
}

/// One relative-TO estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToEstimate {
    /// Relative TO in `[−1/(2Δf), 1/(2Δf))`, s.
    pub delay: f64,
    /// The snapshot carried no energy or the objective was flat; `delay` is 0.
    pub degenerate: bool,
}

impl ToEstimate {
    fn degenerate() -> Self {
        Self {
            delay: 0.0,
            degenerate: true,
        }
    }
}

/// `Σ_c x_c(τ_n)† P x_c(τ_n)` over the grid for the columns of `columns`.
///
/// Row `i` of `columns` is subcarrier `i mod grid.subcarriers()`.
pub fn objective_spectrum(columns: &DMatrix<C64>, kernel: &DMatrix<C64>, grid: &SearchGrid) -> Result<Vec<f64>> {
    let lags = quadratic_form_lags(columns, kernel, grid.subcarriers())?;
    lag_transform(&lags, grid)
}

/// Grid argmin of [`objective_spectrum`], parabolic-refined and then
/// Newton-polished on the exact objective.
pub fn estimate_relative_to_kernel(columns: &DMatrix<C64>, kernel: &DMatrix<C64>, grid: &SearchGrid) -> Result<ToEstimate> {
    if columns.iter().all(|z| z.norm_sqr() == 0.0) {
        return Ok(ToEstimate::degenerate());
    }
    let lags = quadratic_form_lags(columns, kernel, grid.subcarriers())?;
    minimize_lags(&lags, grid)
}

/// Minimizes the trigonometric polynomial given by lag coefficients (see
/// [`lag_transform`]): grid argmin, parabolic refinement, Newton polish.
/// A flat objective gives a degenerate estimate.
pub fn minimize_lags(lags: &[C64], grid: &SearchGrid) -> Result<ToEstimate> {
    let s = lag_transform(lags, grid)?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("TO objective"));
    }
    let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= FLAT_TOLERANCE * hi.abs().max(lo.abs()) {
        return Ok(ToEstimate::degenerate());
    }
    let idx = argmin(&s);
    let coarse = grid.delay(refine_min(&s, idx));
    Ok(ToEstimate {
        delay: wrap_symmetric(polish_lag_min(lags, grid, coarse), grid.period()),
        degenerate: false,
    })
}

fn single_column(snapshot: &DVector<C64>) -> DMatrix<C64> {
    DMatrix::from_column_slice(snapshot.len(), 1, snapshot.as_slice())
}

/// Subspace-based relative TO: minimizes the projection onto the window's
/// noise subspace.
pub fn estimate_relative_to_subspace(snapshot: &DVector<C64>, est: &SubspaceEstimate, grid: &SearchGrid) -> Result<ToEstimate> {
    if snapshot.len() != est.rows() {
        return Err(Error::dim(format!(
            "snapshot has {} rows, subspace has {}",
            snapshot.len(),
            est.rows()
        )));
    }
    estimate_relative_to_kernel(&single_column(snapshot), &est.noise_projector(), grid)
}

/// Covariance-based relative TO: minimizes the snapshot's Mahalanobis
/// energy under the adjusted window covariance `R_w/T_w + σ̂²I`.
pub fn estimate_relative_to_covariance(snapshot: &DVector<C64>, est: &SubspaceEstimate, grid: &SearchGrid) -> Result<ToEstimate> {
    if snapshot.len() != est.rows() {
        return Err(Error::dim(format!(
            "snapshot has {} rows, covariance has {}",
            snapshot.len(),
            est.rows()
        )));
    }
    estimate_relative_to_kernel(&single_column(snapshot), &est.inverse_covariance()?, grid)
}

fn kernel_for(method: AlignMethod, est: &SubspaceEstimate) -> Result<DMatrix<C64>> {
    match method {
        AlignMethod::Subspace => Ok(est.noise_projector()),
        AlignMethod::Covariance => est.inverse_covariance(),
    }
}

/// Subarray length of the smoothing step that aligns snapshot `t` (1-based).
pub fn hankel_subarray(subcarriers: usize, t: usize) -> usize {
    (subcarriers + 1) * (t - 1) / t
}

/// Smoothed form of `snapshots`: one column per (subarray offset, snapshot),
/// each the stack over antennas of `s` consecutive subcarriers.
pub fn hankel_stack(snapshots: &DMatrix<C64>, antennas: usize, subcarriers: usize, s: usize) -> Result<DMatrix<C64>> {
    if snapshots.nrows() != antennas * subcarriers {
        return Err(Error::dim(format!(
            "{} rows for M = {antennas}, K = {subcarriers}",
            snapshots.nrows()
        )));
    }
    if s == 0 || s > subcarriers {
        return Err(Error::dim(format!("subarray length {s} for K = {subcarriers}")));
    }
    let offsets = subcarriers - s + 1;
    let cols = snapshots.ncols();
    let mut out = DMatrix::zeros(antennas * s, offsets * cols);
    for off in 0..offsets {
        for c in 0..cols {
            for m in 0..antennas {
                for i in 0..s {
                    out[(m * s + i, off * cols + c)] = snapshots[(m * subcarriers + off + i, c)];
                }
            }
        }
    }
    Ok(out)
}

/// Sliding-window alignment of one snapshot stream.
#[derive(Debug, Clone)]
pub struct AlignmentState {
    method: AlignMethod,
    window_len: usize,
    grid: SearchGrid,
    antennas: usize,
    subcarriers: usize,
    delta_f: f64,
    /// Aligned snapshots used for the next estimate, oldest first. Holds the
    /// whole prefix while `t ≤ K` so the smoothing step can see it.
    window: VecDeque<DVector<C64>>,
    relative_to: Vec<f64>,
    degenerate: Vec<bool>,
}

impl AlignmentState {
    pub fn new(cfg: &SystemConfig, method: AlignMethod, window_len: usize, grid: SearchGrid) -> Result<Self> {
        cfg.validate()?;
        if window_len < 2 {
            return Err(Error::InvalidConfig(format!("window length {window_len}")));
        }
        if grid.subcarriers() != cfg.subcarriers || (grid.period() * cfg.subcarrier_spacing_hz - 1.0).abs() > 1e-9 {
            return Err(Error::dim("search grid does not match the configuration"));
        }
        Ok(Self {
            method,
            window_len,
            grid,
            antennas: cfg.antennas,
            subcarriers: cfg.subcarriers,
            delta_f: cfg.subcarrier_spacing_hz,
            window: VecDeque::with_capacity(window_len.max(cfg.subcarriers)),
            relative_to: Vec::new(),
            degenerate: Vec::new(),
        })
    }

    pub fn method(&self) -> AlignMethod {
        self.method
    }

    /// Snapshots processed so far.
    pub fn processed(&self) -> usize {
        self.relative_to.len()
    }

    /// `Δτ̂_t` per processed snapshot; the first is 0 by construction.
    pub fn relative_tos(&self) -> &[f64] {
        &self.relative_to
    }

    pub fn degenerate_flags(&self) -> &[bool] {
        &self.degenerate
    }

    /// The current window as a matrix, oldest column first.
    pub fn window_matrix(&self) -> DMatrix<C64> {
        let n = self.antennas * self.subcarriers;
        let start = self.window.len().saturating_sub(self.window_len);
        let cols: Vec<&DVector<C64>> = self.window.iter().skip(start).collect();
        DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r])
    }

    fn estimate(&self, snapshot: &DVector<C64>) -> Result<ToEstimate> {
        let t = self.processed() + 1;
        if t <= self.subcarriers {
            let s = hankel_subarray(self.subcarriers, t);
            let prefix = self.window_matrix();
            let h_prefix = hankel_stack(&prefix, self.antennas, self.subcarriers, s)?;
            let h_new = hankel_stack(&single_column(snapshot), self.antennas, self.subcarriers, s)?;
            if s < 2 {
                return Ok(ToEstimate::degenerate());
            }
            let grid = SearchGrid::new(self.grid.period(), self.grid.size(), s)?;
            let est = subspace_projector(&h_prefix)?;
            estimate_relative_to_kernel(&h_new, &kernel_for(self.method, &est)?, &grid)
        } else {
            let est = subspace_projector(&self.window_matrix())?;
            estimate_relative_to_kernel(&single_column(snapshot), &kernel_for(self.method, &est)?, &self.grid)
        }
    }

    /// Aligns the next snapshot of the stream and pushes it into the window.
    pub fn align_snapshot(&mut self, snapshot: &DVector<C64>) -> Result<DVector<C64>> {
        let n = self.antennas * self.subcarriers;
        if snapshot.len() != n {
            return Err(Error::dim(format!("snapshot has {} rows, expected {n}", snapshot.len())));
        }
        let est = if self.processed() == 0 {
            ToEstimate {
                delay: 0.0,
                degenerate: false,
            }
        } else {
            self.estimate(snapshot)?
        };
        let mut col = single_column(snapshot);
        compensate_delay(&mut col, self.subcarriers, self.delta_f, est.delay);
        let aligned = DVector::from_column_slice(col.as_slice());
        self.window.push_back(aligned.clone());
        let keep = self.window_len.max(self.subcarriers);
        while self.window.len() > keep {
            self.window.pop_front();
        }
        self.relative_to.push(est.delay);
        self.degenerate.push(est.degenerate);
        Ok(aligned)
    }
}

/// Output of [`align_stream`].
#[derive(Debug, Clone)]
pub struct AlignedStream {
    pub csi: CsiMatrix,
    pub relative_to: Vec<f64>,
    pub degenerate: Vec<bool>,
}

/// Runs the whole alignment recursion over a raw CPI.
pub fn align_stream(csi: &CsiMatrix, cfg: &SystemConfig, method: AlignMethod, window_len: usize, grid: &SearchGrid) -> Result<AlignedStream> {
    csi.require(Stage::Raw)?;
    if csi.antennas() != cfg.antennas || csi.subcarriers() != cfg.subcarriers {
        return Err(Error::dim("CSI shape does not match the configuration"));
    }
    let mut state = AlignmentState::new(cfg, method, window_len, *grid)?;
    let data = csi.data();
    let mut out = DMatrix::zeros(data.nrows(), data.ncols());
    for t in 0..data.ncols() {
        let aligned = state.align_snapshot(&data.column(t).into_owned())?;
        out.set_column(t, &aligned);
    }
    Ok(AlignedStream {
        csi: csi.advance(out, Stage::Aligned)?,
        relative_to: state.relative_to,
        degenerate: state.degenerate,
    })
}

/// Aligns the first `min(T_w, T)` snapshots: the reference, the smoothed
/// steps for `t ≤ K`, then standard steps on the growing prefix.
pub fn initial_align(snapshots: &DMatrix<C64>, cfg: &SystemConfig, method: AlignMethod, window_len: usize, grid: &SearchGrid) -> Result<DMatrix<C64>> {
    let mut state = AlignmentState::new(cfg, method, window_len, *grid)?;
    let count = window_len.min(snapshots.ncols());
    let mut out = DMatrix::zeros(snapshots.nrows(), count);
    for t in 0..count {
        out.set_column(t, &state.align_snapshot(&snapshots.column(t).into_owned())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
