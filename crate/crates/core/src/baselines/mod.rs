//! Literature-style alignment baselines.
//!
//! Each one follows the principle of a known family of methods rather than
//! any full system, and produces the same [`AlignedStream`] as the proposed
//! aligners so the downstream estimation is shared. All three search the
//! same delay grid as the proposed methods.
//!
//! - [`BaselineKind::Similarity`]: recursive TO grid search maximizing the
//!   inner product with the previous aligned snapshot, PO from its phase.
//! - [`BaselineKind::Envelope`]: circular cross-correlation of the delay
//!   envelope with a running mean envelope; TO only.
//! - [`BaselineKind::IfftPeak`]: moves the strongest delay-profile peak onto
//!   the first snapshot's peak; PO from the phase at the peak.

use crate::numerics::{argmax, refine_max_log, wrap_symmetric, SearchGrid};
use crate::signal_model::{compensate_delay, CsiMatrix, Stage, SystemConfig};
use crate::to_alignment::AlignedStream;
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Similarity,
    Envelope,
    IfftPeak,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Similarity, BaselineKind::Envelope, BaselineKind::IfftPeak];

    /// Method label used in configs and output tables.
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Similarity => "simil",
            BaselineKind::Envelope => "evlp",
            BaselineKind::IfftPeak => "ifft",
        }
    }
}

/// Aligns a raw CPI with the chosen baseline.
pub fn align_baseline(kind: BaselineKind, csi: &CsiMatrix, cfg: &SystemConfig, grid: &SearchGrid) -> Result<AlignedStream> {
    match kind {
        BaselineKind::Similarity => align_similarity(csi, cfg, grid),
        BaselineKind::Envelope => align_envelope(csi, cfg, grid),
        BaselineKind::IfftPeak => align_ifft_peak(csi, cfg, grid),
    }
}

fn check(csi: &CsiMatrix, cfg: &SystemConfig, grid: &SearchGrid) -> Result<()> {
    csi.require(Stage::Raw)?;
    cfg.validate()?;
    if csi.antennas() != cfg.antennas || csi.subcarriers() != cfg.subcarriers {
        return Err(Error::dim("CSI shape does not match the configuration"));
    }
    if grid.subcarriers() != cfg.subcarriers || (grid.period() * cfg.subcarrier_spacing_hz - 1.0).abs() > 1e-9 {
        return Err(Error::dim("search grid does not match the configuration"));
    }
    Ok(())
}

/// `Σ_k c_k e^{j2πkΔfτ_n}` at every grid delay, by one inverse FFT.
fn lag_sum(c: &[C64], grid: &SearchGrid) -> Vec<C64> {
    let n = grid.size();
    // Grid delays are origin + n·step with step·Δf = 1/N.
    let w = TAU * grid.origin() / grid.period();
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for (k, &v) in c.iter().enumerate() {
        buf[k % n] += v * C64::from_polar(1.0, w * k as f64);
    }
    crate::numerics::with_fft(n, true, |fft| fft.process(&mut buf));
    buf
}

/// `Σ_k c_k e^{j2πkΔfτ}` at one delay.
fn lag_sum_at(c: &[C64], grid: &SearchGrid, tau: f64) -> C64 {
    let w = TAU * tau / grid.period();
    c.iter().enumerate().map(|(k, &v)| v * C64::from_polar(1.0, w * k as f64)).sum()
}

/// Delay profile power `Σ_m |Σ_k h_{m,k} e^{j2πkΔfτ_n}|²` over the grid.
fn profile_power(col: &DVector<C64>, k: usize, grid: &SearchGrid) -> Vec<f64> {
    let mut power = vec![0.0; grid.size()];
    for block in col.as_slice().chunks(k) {
        for (p, z) in power.iter_mut().zip(lag_sum(block, grid)) {
            *p += z.norm_sqr();
        }
    }
    power
}

/// Antenna-folded coefficients `Σ_m conj(y_{m,k}) x_{m,k}`.
fn folded_inner(x: &DVector<C64>, y: &DVector<C64>, k: usize) -> Vec<C64> {
    let mut c = vec![C64::new(0.0, 0.0); k];
    for (i, (a, b)) in x.iter().zip(y.iter()).enumerate() {
        c[i % k] += b.conj() * a;
    }
    c
}

fn rotate(col: &mut DMatrix<C64>, phase: f64) {
    let r = C64::from_polar(1.0, -phase);
    col.iter_mut().for_each(|z| *z *= r);
}

fn finish(csi: &CsiMatrix, out: DMatrix<C64>, relative_to: Vec<f64>) -> Result<AlignedStream> {
    let n = relative_to.len();
    Ok(AlignedStream {
        csi: csi.advance(out, Stage::Aligned)?,
        relative_to,
        degenerate: vec![false; n],
    })
}

/// Similarity baseline: per snapshot, the TO maximizing
/// `|⟨compensated snapshot, previous aligned snapshot⟩|` on the grid, then
/// the PO as the phase of that inner product.
pub fn align_similarity(csi: &CsiMatrix, cfg: &SystemConfig, grid: &SearchGrid) -> Result<AlignedStream> {
    check(csi, cfg, grid)?;
    let k = cfg.subcarriers;
    let data = csi.data();
    let mut out = DMatrix::zeros(data.nrows(), data.ncols());
    let mut relative_to = Vec::with_capacity(data.ncols());
    let mut prev: Option<DVector<C64>> = None;
    for t in 0..data.ncols() {
        let mut col = data.columns(t, 1).into_owned();
        let tau = match &prev {
            None => 0.0,
            Some(p) => {
                let x = DVector::from_column_slice(col.as_slice());
                let c = folded_inner(&x, p, k);
                let mag: Vec<f64> = lag_sum(&c, grid).iter().map(|z| z.norm_sqr()).collect();
                let idx = argmax(&mag);
                let tau = wrap_symmetric(grid.delay(refine_max_log(&mag, idx)), grid.period());
                let phase = lag_sum_at(&c, grid, tau).arg();
                compensate_delay(&mut col, k, cfg.subcarrier_spacing_hz, tau);
                rotate(&mut col, phase);
                tau
            }
        };
        prev = Some(DVector::from_column_slice(col.as_slice()));
        out.set_column(t, &col.column(0));
        relative_to.push(tau);
    }
    finish(csi, out, relative_to)
}

/// Envelope baseline: per snapshot, the circular lag maximizing the
/// cross-correlation of its delay envelope with the running mean envelope
/// of the snapshots aligned so far. TO only.
pub fn align_envelope(csi: &CsiMatrix, cfg: &SystemConfig, grid: &SearchGrid) -> Result<AlignedStream> {
    check(csi, cfg, grid)?;
    let k = cfg.subcarriers;
    let n = grid.size();
    let data = csi.data();
    let mut out = DMatrix::zeros(data.nrows(), data.ncols());
    let mut relative_to = Vec::with_capacity(data.ncols());
    let mut reference = vec![0.0; n];
    let envelope = |col: &DMatrix<C64>| -> Vec<f64> {
        profile_power(&DVector::from_column_slice(col.as_slice()), k, grid)
            .into_iter()
            .map(f64::sqrt)
            .collect()
    };
    let spectrum = |v: &[f64]| -> Vec<C64> {
        let mut buf: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
        crate::numerics::with_fft(n, false, |fft| fft.process(&mut buf));
        buf
    };
    for t in 0..data.ncols() {
        let mut col = data.columns(t, 1).into_owned();
        let tau = if t == 0 {
            0.0
        } else {
            // xcorr[l] = Σ_i E(i) R(i − l): E is R delayed by l bins.
            let e = spectrum(&envelope(&col));
            let r = spectrum(&reference);
            let mut buf: Vec<C64> = e.iter().zip(&r).map(|(a, b)| a * b.conj()).collect();
            crate::numerics::with_fft(n, true, |fft| fft.process(&mut buf));
            let xcorr: Vec<f64> = buf.iter().map(|z| z.re.max(0.0)).collect();
            let idx = argmax(&xcorr);
            let tau = wrap_symmetric(refine_max_log(&xcorr, idx) * grid.step(), grid.period());
            compensate_delay(&mut col, k, cfg.subcarrier_spacing_hz, tau);
            tau
        };
        let env = envelope(&col);
        let w = 1.0 / (t + 1) as f64;
        for (r, e) in reference.iter_mut().zip(env) {
            *r += (e - *r) * w;
        }
        out.set_column(t, &col.column(0));
        relative_to.push(tau);
    }
    finish(csi, out, relative_to)
}

/// IFFT-peak baseline: shifts each snapshot's strongest delay-profile peak
/// onto the first snapshot's, then removes the phase difference at that
/// delay.
pub fn align_ifft_peak(csi: &CsiMatrix, cfg: &SystemConfig, grid: &SearchGrid) -> Result<AlignedStream> {
    check(csi, cfg, grid)?;
    let k = cfg.subcarriers;
    let data = csi.data();
    let mut out = DMatrix::zeros(data.nrows(), data.ncols());
    let mut relative_to = Vec::with_capacity(data.ncols());
    let peak = |col: &DMatrix<C64>| -> f64 {
        let power = profile_power(&DVector::from_column_slice(col.as_slice()), k, grid);
        grid.delay(refine_max_log(&power, argmax(&power)))
    };
    // Antenna blocks summed coherently; their relative phases are static.
    let phase_at = |col: &DMatrix<C64>, tau: f64| -> f64 {
        let mut c = vec![C64::new(0.0, 0.0); k];
        for (i, z) in col.iter().enumerate() {
            c[i % k] += z;
        }
        lag_sum_at(&c, grid, tau).arg()
    };
    let mut anchor = (0.0, 0.0);
    for t in 0..data.ncols() {
        let mut col = data.columns(t, 1).into_owned();
        let tau = if t == 0 {
            let p = peak(&col);
            anchor = (p, phase_at(&col, p));
            0.0
        } else {
            let tau = wrap_symmetric(peak(&col) - anchor.0, grid.period());
            compensate_delay(&mut col, k, cfg.subcarrier_spacing_hz, tau);
            let phase = phase_at(&col, anchor.0) - anchor.1;
            rotate(&mut col, phase);
            tau
        };
        out.set_column(t, &col.column(0));
        relative_to.push(tau);
    }
    finish(csi, out, relative_to)
}

#[cfg(test)]
mod tests;
