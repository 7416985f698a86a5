//! Reference static response and TO-residual compensation.
//!
//! An aligned CPI still carries one unknown delay shift, the TO of its first
//! snapshot. A calibration-time estimate of the merged static response with
//! absolute delay, `h_ref ∝ h_s`, fixes it: `h_s` always lies in the signal
//! subspace, so the residual is the shift that moves `h_ref` out of the
//! CPI's noise subspace.
//!
//! The reference comes from bidirectional exchanges. Each side aligns its
//! own snapshots and keeps the dominant eigenvector; timestamps then give
//! the residual of each side up to the mean clock error `Δτ_C`, which is
//! found by channel reciprocity.

mod blob;

use crate::numerics::{argmax, circular_mean, hermitian_evd, quadratic_form_lags, wrap_positive, SearchGrid};
use crate::signal_model::{compensate_delay, BidirectionalTrace, CsiMatrix, Stage, SystemConfig};
use crate::to_alignment::{minimize_lags, subspace_projector, AlignMethod, AlignmentState, SubspaceEstimate};
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Relative peak prominence below which the similarity objective is flat.
const FLAT_SIMILARITY: f64 = 1e-3;
/// Second-to-first eigenvalue ratio above which a static-only CPI is rejected.
const CONTAMINATION_RATIO: f64 = 0.1;

/// How the reference was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceOrigin {
    /// Bidirectional calibration; delays downstream are absolute.
    Calibrated {
        /// `Δτ̂_C`, s.
        clock_error: f64,
    },
    /// Dominant eigenvector of one aligned static-only CPI. Carries that
    /// CPI's unknown initial TO, so downstream delays are relative.
    Alternative,
}

/// `h_ref`, unit norm, plus acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStaticResponse {
    response: DVector<C64>,
    antennas: usize,
    subcarriers: usize,
    /// Snapshots the estimate was built from (`T_s`, or `T` for the alternative).
    pub exchanges: usize,
    pub timestamp_noise_std: f64,
    pub origin: ReferenceOrigin,
}

impl ReferenceStaticResponse {
    /// Wraps a response, normalizing it and anchoring entry 0 to a
    /// non-negative real phase.
    pub fn new(response: DVector<C64>, antennas: usize, subcarriers: usize, origin: ReferenceOrigin) -> Result<Self> {
        if response.len() != antennas * subcarriers || antennas == 0 {
            return Err(Error::dim(format!(
                "reference of length {} for M = {antennas}, K = {subcarriers}",
                response.len()
            )));
        }
        let norm = response.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonFinite("reference response norm"));
        }
        let anchor = match response.iter().find(|z| z.norm() > 0.0) {
            Some(z) => z.conj() / z.norm(),
            None => C64::new(1.0, 0.0),
        };
        Ok(Self {
            response: response * (anchor / norm),
            antennas,
            subcarriers,
            exchanges: 0,
            timestamp_noise_std: 0.0,
            origin,
        })
    }

    pub fn response(&self) -> &DVector<C64> {
        &self.response
    }
    pub fn antennas(&self) -> usize {
        self.antennas
    }
    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    /// `Δτ̂_C` for a calibrated reference.
    pub fn clock_error(&self) -> Option<f64> {
        match self.origin {
            ReferenceOrigin::Calibrated { clock_error } => Some(clock_error),
            ReferenceOrigin::Alternative => None,
        }
    }

    pub fn is_alternative(&self) -> bool {
        self.origin == ReferenceOrigin::Alternative
    }
}

/// Knobs of the calibration procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    pub method: AlignMethod,
    /// Alignment window `T_w`.
    pub window_len: usize,
    /// `Δτ_C` is searched on `[−range, range]`, s. Values past a quarter of
    /// the alias period alias onto each other.
    pub clock_error_range_s: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            method: AlignMethod::Subspace,
            window_len: 48,
            clock_error_range_s: 100e-9,
        }
    }
}

/// Intermediate quantities of one acquisition, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub reference: ReferenceStaticResponse,
    /// `h_s^{r,BS}`, unit norm.
    pub bs_response: DVector<C64>,
    /// `h_s^{r,UE}`, unit norm.
    pub ue_response: DVector<C64>,
    /// `τ̂_o^{r,BS}(Δτ̂_C)`, s, in `[0, 1/Δf)`.
    pub bs_residual: f64,
    /// `τ̂_o^{r,UE}(Δτ̂_C)`, s, in `[0, 1/Δf)`.
    pub ue_residual: f64,
    /// Similarity objective on the search grid, with its clock-error axis.
    pub similarity_axis: Vec<f64>,
    pub similarity: Vec<f64>,
}

fn align_all(snapshots: &DMatrix<C64>, cfg: &SystemConfig, opts: &CalibrationOptions, grid: &SearchGrid) -> Result<(DMatrix<C64>, Vec<f64>)> {
    let mut state = AlignmentState::new(cfg, opts.method, opts.window_len, *grid)?;
    let mut out = DMatrix::zeros(snapshots.nrows(), snapshots.ncols());
    for t in 0..snapshots.ncols() {
        out.set_column(t, &state.align_snapshot(&snapshots.column(t).into_owned())?);
    }
    Ok((out, state.relative_tos().to_vec()))
}

/// Dominant eigenvector of `H H†` and the two largest eigenvalues.
fn dominant(h: &DMatrix<C64>) -> Result<(DVector<C64>, f64, f64)> {
    let evd = hermitian_evd(&(h * h.adjoint()))?;
    if !(evd.values[0] > 0.0) {
        return Err(Error::DegenerateWindow("snapshots carry no energy".into()));
    }
    let second = evd.values.get(1).copied().unwrap_or(0.0).max(0.0);
    Ok((evd.vectors.column(0).into_owned(), evd.values[0], second))
}

/// `|Σ_k conj(u_k) b_k e^{−j2πkΔf x}|`.
fn similarity_at(prod: &[C64], delta_f: f64, x: f64) -> f64 {
    prod.iter()
        .enumerate()
        .map(|(k, p)| p * C64::from_polar(1.0, -TAU * k as f64 * delta_f * x))
        .sum::<C64>()
        .norm()
}

/// Golden-section maximization of a unimodal `f` on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    // 0.618^80 shrinks the bracket far below f64 resolution of the delay.
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Acquires `h_ref` from a dynamic-free bidirectional trace.
///
/// `grid` is the TO search grid of `cfg`; the clock-error search uses its
/// step. For `M > 1` reciprocity is checked on BS antenna 0, the antenna
/// the UE exchanged with.
pub fn acquire_reference(trace: &BidirectionalTrace, cfg: &SystemConfig, grid: &SearchGrid, opts: &CalibrationOptions) -> Result<Acquisition> {
    cfg.validate()?;
    let k = cfg.subcarriers;
    if trace.len() < k {
        return Err(Error::TraceTooShort { got: trace.len(), need: k });
    }
    if trace.antennas != cfg.antennas
        || trace.subcarriers != k
        || trace.bs_snapshots.shape() != (cfg.rows(), trace.len())
        || trace.ue_snapshots.shape() != (k, trace.len())
    {
        return Err(Error::dim("trace shape does not match the configuration"));
    }
    if !(opts.clock_error_range_s > 0.0 && opts.clock_error_range_s.is_finite()) {
        return Err(Error::InvalidConfig(format!("clock-error range {}", opts.clock_error_range_s)));
    }
    let period = cfg.alias_period();
    let df = cfg.subcarrier_spacing_hz;

    let (bs_aligned, bs_rel) = align_all(&trace.bs_snapshots, cfg, opts, grid)?;
    let ue_cfg = SystemConfig {
        antennas: 1,
        ..cfg.clone()
    };
    let (ue_aligned, ue_rel) = align_all(&trace.ue_snapshots, &ue_cfg, opts, grid)?;
    let (h_bs, _, _) = dominant(&bs_aligned)?;
    let (h_ue, _, _) = dominant(&ue_aligned)?;

    // Residuals at Δτ_C = 0; the clock error enters as −Δτ_C (BS), +Δτ_C (UE).
    let bs_terms: Vec<f64> = trace
        .exchanges
        .iter()
        .zip(&bs_rel)
        .map(|(e, d)| e.bs_rx - e.ue_tx - d)
        .collect();
    let ue_terms: Vec<f64> = trace
        .exchanges
        .iter()
        .zip(&ue_rel)
        .map(|(e, d)| e.ue_rx - e.bs_tx - d)
        .collect();
    let c_bs = circular_mean(&bs_terms, period);
    let c_ue = circular_mean(&ue_terms, period);

    // |h_ue† diag(a(c_ue + Δ)) diag(a*(c_bs − Δ)) h_bs| = |Σ conj(u_k) b_k e^{−jωk(c_ue − c_bs + 2Δ)}|
    let prod: Vec<C64> = (0..k).map(|kk| h_ue[kk].conj() * h_bs[kk]).collect();
    let objective = |dc: f64| similarity_at(&prod, df, c_ue - c_bs + 2.0 * dc);
    let step = grid.step();
    let half = (opts.clock_error_range_s / step).ceil() as i64;
    let axis: Vec<f64> = (-half..=half).map(|n| n as f64 * step).collect();
    let values: Vec<f64> = axis.iter().map(|&x| objective(x)).collect();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if !(max > 0.0) || (max - mean) / max < FLAT_SIMILARITY {
        return Err(Error::FlatSimilarity);
    }
    let best = argmax(&values);
    let dc = golden_max(&objective, axis[best] - step, axis[best] + step);

    let bs_residual = wrap_positive(c_bs - dc, period);
    let ue_residual = wrap_positive(c_ue + dc, period);
    let mut col = DMatrix::from_column_slice(h_bs.len(), 1, h_bs.as_slice());
    compensate_delay(&mut col, k, df, bs_residual);
    let mut reference = ReferenceStaticResponse::new(
        DVector::from_column_slice(col.as_slice()),
        cfg.antennas,
        k,
        ReferenceOrigin::Calibrated { clock_error: dc },
    )?;
    reference.exchanges = trace.len();
    reference.timestamp_noise_std = trace.timestamp_noise_std;
    Ok(Acquisition {
        reference,
        bs_response: h_bs,
        ue_response: h_ue,
        bs_residual,
        ue_residual,
        similarity_axis: axis,
        similarity: values,
    })
}

/// Reference from one aligned CPI known to contain no dynamic paths.
pub fn alternative_reference(aligned: &CsiMatrix) -> Result<ReferenceStaticResponse> {
    aligned.require(Stage::Aligned)?;
    let (h, l1, l2) = dominant(aligned.data())?;
    let ratio = l2 / l1;
    if ratio > CONTAMINATION_RATIO {
        return Err(Error::Contaminated { ratio });
    }
    let mut r = ReferenceStaticResponse::new(h, aligned.antennas(), aligned.subcarriers(), ReferenceOrigin::Alternative)?;
    r.exchanges = aligned.snapshots();
    Ok(r)
}

/// A CPI with its TO residual removed.
#[derive(Debug, Clone)]
pub struct CompensatedCpi {
    pub csi: CsiMatrix,
    /// `τ̂_o^r` in `[0, 1/Δf)`, s.
    pub residual_to: f64,
    /// Subspace of `H_C`: the aligned CPI's estimate with its basis
    /// shifted by `−τ̂_o^r`.
    pub subspace: SubspaceEstimate,
}

/// Objective `(a(τ) ⊙ h_ref)† P̂_n^r (a(τ) ⊙ h_ref)` as lag coefficients.
///
/// Its zero sits at `τ = τ_o^r` because `P̂_n^r` annihilates
/// `diag(1_M ⊗ a(τ_o^r)) h_s`.
pub fn residual_objective_lags(reference: &ReferenceStaticResponse, noise_projector: &DMatrix<C64>) -> Result<Vec<C64>> {
    let h = DMatrix::from_column_slice(reference.response.len(), 1, reference.response.as_slice());
    let mut lags = quadratic_form_lags(&h, noise_projector, reference.subcarriers)?;
    // quadratic_form_lags builds the form for a*(τ) ⊙ h; lag reversal maps τ → −τ.
    lags.reverse();
    Ok(lags)
}

/// Estimates `τ_o^r` for one aligned CPI and removes it.
pub fn estimate_to_residual(aligned: &CsiMatrix, reference: &ReferenceStaticResponse, grid: &SearchGrid) -> Result<CompensatedCpi> {
    aligned.require(Stage::Aligned)?;
    if aligned.antennas() != reference.antennas || aligned.subcarriers() != reference.subcarriers {
        return Err(Error::dim("reference and CPI have different shapes"));
    }
    if grid.subcarriers() != aligned.subcarriers() {
        return Err(Error::dim("search grid does not match the CPI"));
    }
    let est = subspace_projector(aligned.data())?;
    let lags = residual_objective_lags(reference, &est.noise_projector())?;
    let min = minimize_lags(&lags, grid)?;
    if min.degenerate {
        return Err(Error::DegenerateWindow("flat TO-residual objective".into()));
    }
    let period = grid.period();
    let residual_to = wrap_positive(min.delay, period);
    let df = 1.0 / period;
    let k = aligned.subcarriers();
    let mut data = aligned.data().clone();
    compensate_delay(&mut data, k, df, residual_to);
    let mut basis = est.basis.clone();
    compensate_delay(&mut basis, k, df, residual_to);
    Ok(CompensatedCpi {
        csi: aligned.advance(data, Stage::Compensated)?,
        residual_to,
        subspace: SubspaceEstimate { basis, ..est },
    })
}

#[cfg(test)]
mod tests;
