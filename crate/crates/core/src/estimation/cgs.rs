//! PO compensation and CGS recovery.
//!
//! `[Â⁺; N†]·H_C` splits a compensated CPI into one row per target (CGS
//! times the per-snapshot PO, plus a constant leak of `h_s`) and a block
//! where the targets are nulled and only `N† h_s · e^{jφ}ᵀ` remains. That
//! block is rank one; its leading right singular vector carries the PO.

use super::{joint_steering, Peak};
use crate::numerics::{orthonormal_nullspace, pseudo_inverse, svd};
use crate::signal_model::{ArrayGeometry, CsiMatrix, Stage, SystemConfig};
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use std::f64::consts::TAU;

/// Condition number of `Â_d` above which the separation is flagged.
pub const CONDITION_LIMIT: f64 = 1e6;
/// Condition number treated as numerically singular (coincident peaks).
pub const SINGULAR_LIMIT: f64 = 1e10;
/// Nulled-block energy, relative to the CPI, below which the PO is unobservable.
const PO_ENERGY_FLOOR: f64 = 1e-9;
/// γ_β reported for an error-free estimate, dB.
pub const GAMMA_CAP_DB: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetEstimate {
    pub delay: f64,
    pub aoa: f64,
    /// `β̂_l`, length `T`.
    pub cgs: Vec<C64>,
    /// Height of the spectrum peak the target came from.
    pub peak_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetEstimates {
    /// In peak order (highest first).
    pub targets: Vec<TargetEstimate>,
    /// `φ̂_o` per snapshot, rad; the first entry is 0.
    pub po: Vec<f64>,
    pub condition: f64,
    /// Condition number of `Â_d` exceeded [`CONDITION_LIMIT`].
    pub ill_conditioned: bool,
    /// The nulled block carried static energy. When it does not (no static
    /// paths), the PO is unobservable and left uncompensated (`φ̂ = 0`).
    pub po_observable: bool,
}

/// Separates the targets of a compensated CPI and removes the PO.
///
/// Fails with [`Error::RankDeficient`] when the peaks give numerically
/// dependent responses (coincident peaks) and with [`Error::Dimension`]
/// when there are no rows left for the nulled block.
pub fn estimate_cgs(csi: &CsiMatrix, peaks: &[Peak], geom: &ArrayGeometry, cfg: &SystemConfig) -> Result<TargetEstimates> {
    csi.require(Stage::Compensated)?;
    if peaks.is_empty() {
        return Err(Error::InvalidConfig("no peaks to separate".into()));
    }
    let (n, t) = csi.data().shape();
    let k = csi.subcarriers();
    if geom.elements != csi.antennas() {
        return Err(Error::dim("array does not match the CPI"));
    }
    if peaks.len() >= n {
        return Err(Error::dim(format!("{} targets leave no nulled rows out of {n}", peaks.len())));
    }
    let a = DMatrix::from_columns(
        &peaks
            .iter()
            .map(|p| joint_steering(geom, k, cfg.subcarrier_spacing_hz, p.aoa, p.delay))
            .collect::<Vec<_>>(),
    );
    let pinv = pseudo_inverse(&a)?;
    if pinv.rank_deficient || !(pinv.condition < SINGULAR_LIMIT) {
        return Err(Error::RankDeficient(format!("condition number {:.3e}", pinv.condition)));
    }
    // N with N†Â = 0: N† annihilates every column of Â.
    let null = orthonormal_nullspace(&a)?;
    let separated = &pinv.matrix * csi.data();
    let projected = null.adjoint() * csi.data();
    let s = svd(&projected)?;
    let po_observable = s.singular_values[0] > PO_ENERGY_FLOOR * csi.data().norm();
    let po: Vec<f64> = if po_observable {
        // H_proj ≈ σ u v†, so row 0 of V† is ∝ e^{jφ}ᵀ.
        let lead = s.v_adjoint.row(0);
        let anchor = lead[0].arg();
        (0..t).map(|c| lead[c].arg() - anchor).collect()
    } else {
        vec![0.0; t]
    };
    let derot: Vec<C64> = po.iter().map(|&p| C64::from_polar(1.0, -p)).collect();
    let targets = peaks
        .iter()
        .enumerate()
        .map(|(l, p)| TargetEstimate {
            delay: p.delay,
            aoa: p.aoa,
            cgs: (0..t).map(|c| separated[(l, c)] * derot[c]).collect(),
            peak_value: p.value,
        })
        .collect();
    Ok(TargetEstimates {
        targets,
        po: po.iter().map(|&p| crate::numerics::wrap_symmetric(p, TAU)).collect(),
        condition: pinv.condition,
        ill_conditioned: pinv.condition > CONDITION_LIMIT,
        po_observable,
    })
}

/// Best rotation and translation of `estimate` onto `truth`:
/// `e^{jc}·estimate + b` minimizing the squared error.
///
/// Given `c` the optimal `b` is the mean residual; substituting it leaves a
/// rotation of the centred sequences, solved by the phase of their inner
/// product. The joint optimum is therefore closed-form.
pub fn align_cgs(estimate: &[C64], truth: &[C64]) -> Result<Vec<C64>> {
    if estimate.len() != truth.len() || truth.is_empty() {
        return Err(Error::dim(format!("CGS lengths {} and {}", estimate.len(), truth.len())));
    }
    let t = truth.len() as f64;
    let mx = estimate.iter().sum::<C64>() / t;
    let my = truth.iter().sum::<C64>() / t;
    let inner: C64 = estimate.iter().zip(truth).map(|(x, y)| (x - mx).conj() * (y - my)).sum();
    let rot = if inner.norm() > 0.0 {
        inner / inner.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let b = my - rot * mx;
    Ok(estimate.iter().map(|x| rot * x + b).collect())
}

/// `10·log10(‖β‖² / ‖aligned − β‖²)`, capped at [`GAMMA_CAP_DB`].
pub fn gamma_beta(estimate: &[C64], truth: &[C64]) -> Result<f64> {
    let power: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
    if !(power > 0.0) {
        return Err(Error::ZeroTruth);
    }
    let aligned = align_cgs(estimate, truth)?;
    let err: f64 = aligned.iter().zip(truth).map(|(a, y)| (a - y).norm_sqr()).sum();
    if !err.is_finite() {
        return Err(Error::NonFinite("CGS estimate"));
    }
    Ok((10.0 * (power / err).log10()).min(GAMMA_CAP_DB))
}

/// Dominant Doppler velocity of a CGS, m/s: the peak of the zero-padded
/// periodogram (8× oversampled) times the carrier wavelength.
///
/// A CGS phase advancing as `e^{j2πνtΔt}` reads as `ν·λ`.
pub fn doppler_readout(cgs: &[C64], cfg: &SystemConfig) -> Result<f64> {
    if cgs.len() < 8 {
        return Err(Error::dim(format!("Doppler readout needs at least 8 snapshots, got {}", cgs.len())));
    }
    let n = (8 * cgs.len()).next_power_of_two();
    let mut buf = vec![C64::new(0.0, 0.0); n];
    buf[..cgs.len()].copy_from_slice(cgs);
    crate::numerics::with_fft(n, false, |fft| fft.process(&mut buf));
    let power: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
    let idx = crate::numerics::argmax(&power);
    // Bin i sums x_t e^{−j2πit/n}, matching ν = i/(nΔt) up to wrapping.
    let bin = if idx >= n / 2 { idx as f64 - n as f64 } else { idx as f64 };
    let nu = bin / (n as f64 * cfg.snapshot_interval_s);
    Ok(nu * cfg.wavelength())
}
