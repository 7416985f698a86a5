//! Static-clutter-suppressed MUSIC and complex-gain-sequence recovery.
//!
//! The signal subspace of a compensated CPI contains the merged static
//! response next to the target responses, so plain MUSIC shows a peak for
//! the static clutter. Dividing by the distance to the reference static
//! direction removes it:
//!
//! ```text
//! S(θ, τ) = a†(I − h_ref h_ref†) a / (a† P_n a + ε),   a = a^M(θ, τ)
//! ```
//!
//! With a unit-norm `h_ref` the numerator is `MK − |h_ref† a|²`.

mod cgs;

pub use cgs::{align_cgs, doppler_readout, estimate_cgs, gamma_beta, TargetEstimate, TargetEstimates, GAMMA_CAP_DB};

use crate::numerics::{fft_spectrum, lag_transform, refine_max_log, parabolic_offset, SearchGrid, SteeringLags};
use crate::residual::ReferenceStaticResponse;
use crate::signal_model::{ArrayGeometry, CsiMatrix, Stage};
use crate::to_alignment::{subspace_projector, SubspaceEstimate};
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};

/// Denominator regularization, relative to `MK`.
const REGULARIZATION: f64 = 1e-12;
/// Peaks closer than this many bins (per axis) are merged.
pub const MIN_PEAK_SEPARATION: usize = 5;

/// A delay spectrum, or a delay-by-angle spectrum when `aoas.len() > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Row-major, one row of `grid.size()` delays per angle.
    pub values: Vec<f64>,
    pub grid: SearchGrid,
    /// AoA axis, rad; `[0.0]` for a delay-only spectrum.
    pub aoas: Vec<f64>,
}

impl Spectrum {
    pub fn is_2d(&self) -> bool {
        self.aoas.len() > 1
    }

    pub fn row(&self, aoa_index: usize) -> &[f64] {
        let n = self.grid.size();
        &self.values[aoa_index * n..(aoa_index + 1) * n]
    }

    pub fn at(&self, aoa_index: usize, delay_index: usize) -> f64 {
        self.values[aoa_index * self.grid.size() + delay_index]
    }
}

/// Uniform AoA axis on `[−span, span]`.
pub fn aoa_axis(points: usize, span: f64) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -span + 2.0 * span * i as f64 / (points - 1) as f64)
        .collect()
}

fn check_inputs(csi: &CsiMatrix, geom: &ArrayGeometry, grid: &SearchGrid) -> Result<()> {
    csi.require(Stage::Compensated)?;
    if geom.elements != csi.antennas() {
        return Err(Error::dim(format!(
            "array has {} elements, CPI has M = {}",
            geom.elements,
            csi.antennas()
        )));
    }
    if grid.subcarriers() != csi.subcarriers() {
        return Err(Error::dim("search grid does not match the CPI"));
    }
    Ok(())
}

/// `1 / (a† P_n a + ε)` over the grid for every angle.
fn denominators(est: &SubspaceEstimate, geom: &ArrayGeometry, aoas: &[f64], grid: &SearchGrid) -> Result<Vec<Vec<f64>>> {
    let m = geom.elements;
    let k = grid.subcarriers();
    let eps = REGULARIZATION * (m * k) as f64;
    let lags = SteeringLags::new(&est.noise_projector(), m, k)?;
    aoas.iter()
        .map(|&theta| {
            let d = lag_transform(&lags.lags(&geom.spatial_response(theta)), grid)?;
            Ok(d.into_iter().map(|v| v.max(0.0) + eps).collect())
        })
        .collect()
}

/// Plain MUSIC pseudo-spectrum `1/(a† P_n a + ε)` of a compensated CPI.
pub fn music_spectrum(csi: &CsiMatrix, geom: &ArrayGeometry, aoas: &[f64], grid: &SearchGrid) -> Result<Spectrum> {
    check_inputs(csi, geom, grid)?;
    let est = subspace_projector(csi.data())?;
    let den = denominators(&est, geom, aoas, grid)?;
    Ok(Spectrum {
        values: den.into_iter().flatten().map(|d| 1.0 / d).collect(),
        grid: *grid,
        aoas: aoas.to_vec(),
    })
}

/// Modified MUSIC spectrum of a compensated CPI.
///
/// `P_n` comes from [`subspace_projector`] on the CPI itself. Pass a
/// single angle (`[0.0]`) for the delay-only spectrum.
pub fn modified_music_spectrum(
    csi: &CsiMatrix,
    reference: &ReferenceStaticResponse,
    geom: &ArrayGeometry,
    aoas: &[f64],
    grid: &SearchGrid,
) -> Result<Spectrum> {
    check_inputs(csi, geom, grid)?;
    if reference.antennas() != csi.antennas() || reference.subcarriers() != csi.subcarriers() {
        return Err(Error::dim("reference and CPI have different shapes"));
    }
    if aoas.is_empty() {
        return Err(Error::InvalidConfig("empty AoA axis".into()));
    }
    let est = subspace_projector(csi.data())?;
    let den = denominators(&est, geom, aoas, grid)?;
    let (m, k) = (geom.elements, grid.subcarriers());
    let mk = (m * k) as f64;
    let h = reference.response();
    let norm2 = h.norm_squared();
    let mut values = Vec::with_capacity(aoas.len() * grid.size());
    for (&theta, d) in aoas.iter().zip(den) {
        let s = geom.spatial_response(theta);
        let factor = DMatrix::from_fn(m * k, 1, |i, _| s[i / k]);
        // |h† a(θ, τ)|² for every delay.
        let proj = fft_spectrum(h, &factor, grid)?;
        values.extend(proj.into_iter().zip(d).map(|(p, d)| (mk - p / norm2).max(0.0) / d));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("modified MUSIC spectrum"));
    }
    Ok(Spectrum {
        values,
        grid: *grid,
        aoas: aoas.to_vec(),
    })
}

/// One spectrum peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Refined delay, s.
    pub delay: f64,
    /// Refined AoA, rad (0 for a delay-only spectrum).
    pub aoa: f64,
    pub value: f64,
    pub delay_index: usize,
    pub aoa_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakSet {
    /// Highest first.
    pub peaks: Vec<Peak>,
    /// Fewer separated local maxima than requested.
    pub shortfall: bool,
}

/// The `count` highest local maxima at least [`MIN_PEAK_SEPARATION`] bins
/// apart, each refined by a log-parabola per axis.
///
/// The delay axis is circular. On a 2-D spectrum two maxima are distinct
/// when they are separated on either axis.
pub fn pick_peaks(spec: &Spectrum, count: usize) -> Result<PeakSet> {
    if count == 0 {
        return Err(Error::InvalidConfig("peak count must be at least 1".into()));
    }
    let n = spec.grid.size();
    let na = spec.aoas.len();
    let mut candidates = Vec::new();
    for a in 0..na {
        let row = spec.row(a);
        for i in 0..n {
            let v = row[i];
            let left = row[(i + n - 1) % n];
            let right = row[(i + 1) % n];
            if !(v > left && v >= right) {
                continue;
            }
            let up = a.checked_sub(1).map(|u| spec.at(u, i));
            let down = (a + 1 < na).then(|| spec.at(a + 1, i));
            // Plateaus resolve toward the lower angle index, like the delay axis.
            if up.is_some_and(|u| u >= v) || down.is_some_and(|d| d > v) {
                continue;
            }
            candidates.push((v, a, i));
        }
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let sep = MIN_PEAK_SEPARATION;
    let mut chosen: Vec<(f64, usize, usize)> = Vec::new();
    for c in candidates {
        if chosen.len() == count {
            break;
        }
        let clash = chosen.iter().any(|&(_, a, i)| {
            let di = {
                let d = c.2.abs_diff(i);
                d.min(n - d)
            };
            let da = c.1.abs_diff(a);
            di < sep && (na == 1 || da < sep)
        });
        if !clash {
            chosen.push(c);
        }
    }
    let shortfall = chosen.len() < count;
    let peaks = chosen
        .into_iter()
        .map(|(value, a, i)| {
            let delay = spec.grid.delay(refine_max_log(spec.row(a), i));
            let aoa = if na > 2 && a > 0 && a + 1 < na {
                let l = |v: f64| v.max(f64::MIN_POSITIVE).ln();
                let off = parabolic_offset(l(spec.at(a - 1, i)), l(value), l(spec.at(a + 1, i)));
                spec.aoas[a] + off * (spec.aoas[a + 1] - spec.aoas[a])
            } else {
                spec.aoas[a]
            };
            Peak {
                delay,
                aoa,
                value,
                delay_index: i,
                aoa_index: a,
            }
        })
        .collect();
    Ok(PeakSet { peaks, shortfall })
}

/// MDL-based target count `d̂ − 1` of a compensated CPI (at least 1).
pub fn estimate_target_count(csi: &CsiMatrix) -> Result<usize> {
    Ok(subspace_projector(csi.data())?.dimension.saturating_sub(1).max(1))
}

/// Assignment of estimates to true targets minimizing the summed `cost`.
///
/// Entry `j` of the result is the estimate index matched to truth `j`, or
/// `None` when there are fewer estimates than targets. Exhaustive over
/// permutations, so meant for a handful of targets.
pub fn match_targets(estimates: usize, truths: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    fn walk(
        j: usize,
        truths: usize,
        estimates: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        acc: f64,
        best: &mut (f64, Vec<Option<usize>>),
        cost: &dyn Fn(usize, usize) -> f64,
    ) {
        if acc >= best.0 {
            return;
        }
        if j == truths {
            *best = (acc, cur.clone());
            return;
        }
        let free = used.iter().filter(|u| !**u).count();
        // Leave truth j unmatched only when estimates run short.
        if free < truths - j {
            cur.push(None);
            walk(j + 1, truths, estimates, used, cur, acc, best, cost);
            cur.pop();
        }
        for i in 0..estimates {
            if used[i] {
                continue;
            }
            used[i] = true;
            cur.push(Some(i));
            walk(j + 1, truths, estimates, used, cur, acc + cost(i, j), best, cost);
            cur.pop();
            used[i] = false;
        }
    }
    let mut best = (f64::INFINITY, vec![None; truths]);
    walk(0, truths, estimates, &mut vec![false; estimates], &mut Vec::new(), 0.0, &mut best, &cost);
    best.1
}

/// `a^M(θ, τ)` for the given array.
pub(crate) fn joint_steering(geom: &ArrayGeometry, k: usize, delta_f: f64, theta: f64, tau: f64) -> DVector<C64> {
    crate::signal_model::kron_steering(&geom.spatial_response(theta), k, delta_f, tau)
}
