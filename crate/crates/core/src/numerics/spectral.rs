//! Grid evaluation of delay-domain quadratic forms.
//!
//! Two exact routes are provided:
//!
//! * [`fft_spectrum`] evaluates `Σ_c |F_c† x(τ)|²` with one zero-padded FFT
//!   per factor column, where `x(τ) = a*(τ) ⊙ h`.
//! * [`lag_transform`] evaluates any Hermitian form `x(τ)† P x(τ)` from its
//!   `2K − 1` subcarrier-lag coefficients with a single FFT. The estimators
//!   use this route; both are checked against direct evaluation.

use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::f64::consts::TAU;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Runs `f` with a cached plan of the given length and direction.
pub(crate) fn with_fft<R>(len: usize, inverse: bool, f: impl FnOnce(&Arc<dyn Fft<f64>>) -> R) -> R {
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    });
    f(&plan)
}

/// Uniform delay grid covering one alias period.
///
/// Point `n` sits at `origin + n·step` with `step = period / size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchGrid {
    size: usize,
    step: f64,
    origin: f64,
    subcarriers: usize,
}

impl SearchGrid {
    /// `size` must be a power of two and at least `8·subcarriers`.
    pub fn new(period: f64, size: usize, subcarriers: usize) -> Result<Self> {
        if !size.is_power_of_two() {
            return Err(Error::GridNotPowerOfTwo(size));
        }
        if subcarriers < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 2 subcarriers, got {subcarriers}"
            )));
        }
        if size < 8 * subcarriers {
            return Err(Error::InvalidConfig(format!(
                "grid size {size} is below 8·K = {}",
                8 * subcarriers
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidConfig(format!("alias period {period} s")));
        }
        Ok(Self {
            size,
            step: period / size as f64,
            origin: 0.0,
            subcarriers,
        })
    }

    pub fn with_origin(mut self, origin: f64) -> Self {
        self.origin = origin;
        self
    }

    pub fn size(&self) -> usize {
        self.size
    }
    pub fn step(&self) -> f64 {
        self.step
    }
    pub fn origin(&self) -> f64 {
        self.origin
    }
    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }
    pub fn period(&self) -> f64 {
        self.step * self.size as f64
    }

    /// Delay at a (possibly fractional) grid index.
    pub fn delay(&self, index: f64) -> f64 {
        self.origin + index * self.step
    }

    pub fn delays(&self) -> Vec<f64> {
        (0..self.size).map(|n| self.delay(n as f64)).collect()
    }
}

fn check_rows(len: usize, grid: &SearchGrid) -> Result<usize> {
    let k = grid.subcarriers();
    if len == 0 || len % k != 0 {
        return Err(Error::dim(format!(
            "vector length {len} is not a multiple of K = {k}"
        )));
    }
    Ok(len / k)
}

/// `Σ_c |FFT_N(conj(h) ⊙ F[:, c])[n]|²` at every grid point.
///
/// Equals `x(τ_n)† F F† x(τ_n)` with `x(τ) = a*(τ) ⊙ h`. For `MK`-long
/// inputs the antenna blocks are folded before the transform, which matches
/// the TO-only modulation `1_M ⊗ a(τ)`.
pub fn fft_spectrum(h: &DVector<C64>, factor: &DMatrix<C64>, grid: &SearchGrid) -> Result<Vec<f64>> {
    let k = grid.subcarriers();
    let m = check_rows(h.len(), grid)?;
    if factor.nrows() != h.len() {
        return Err(Error::dim(format!(
            "factor has {} rows, snapshot has {}",
            factor.nrows(),
            h.len()
        )));
    }
    let n = grid.size();
    let twiddle: Vec<C64> = (0..k)
        .map(|kk| C64::from_polar(1.0, -TAU * kk as f64 * grid.origin() / grid.period()))
        .collect();
    let mut out = vec![0.0; n];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    with_fft(n, false, |fft| {
        for c in 0..factor.ncols() {
            buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
            for mm in 0..m {
                for kk in 0..k {
                    let i = mm * k + kk;
                    buf[kk] += h[i].conj() * factor[(i, c)];
                }
            }
            for kk in 0..k {
                buf[kk] *= twiddle[kk];
            }
            fft.process(&mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b.norm_sqr();
            }
        }
    });
    Ok(out)
}

/// `Re Σ_ℓ c_ℓ e^{−j2πℓΔf τ_n}` for lags `ℓ ∈ (−K, K)` stored at `ℓ + K − 1`.
pub fn lag_transform(coeffs: &[C64], grid: &SearchGrid) -> Result<Vec<f64>> {
    let k = grid.subcarriers();
    if coeffs.len() != 2 * k - 1 {
        return Err(Error::dim(format!(
            "expected {} lag coefficients, got {}",
            2 * k - 1,
            coeffs.len()
        )));
    }
    let n = grid.size();
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for (idx, &c) in coeffs.iter().enumerate() {
        let lag = idx as isize - (k as isize - 1);
        let phase = -TAU * lag as f64 * grid.origin() / grid.period();
        buf[lag.rem_euclid(n as isize) as usize] = c * C64::from_polar(1.0, phase);
    }
    with_fft(n, false, |fft| fft.process(&mut buf));
    Ok(buf.into_iter().map(|z| z.re).collect())
}

/// Lag coefficients of `S(τ) = Σ_c x_c(τ)† P x_c(τ)`, `x_c(τ) = a*(τ) ⊙ H[:, c]`.
///
/// Rows are indexed `m·K + k`; only the subcarrier index carries delay
/// phase. Feed the result to [`lag_transform`].
pub fn quadratic_form_lags(columns: &DMatrix<C64>, kernel: &DMatrix<C64>, subcarriers: usize) -> Result<Vec<C64>> {
    let n = columns.nrows();
    if kernel.shape() != (n, n) {
        return Err(Error::dim(format!(
            "kernel is {}x{}, snapshots have {n} rows",
            kernel.nrows(),
            kernel.ncols()
        )));
    }
    if n % subcarriers != 0 {
        return Err(Error::dim(format!("{n} rows is not a multiple of K = {subcarriers}")));
    }
    // W_ij = Σ_c conj(h_ci) h_cj
    let gram = columns * columns.adjoint();
    let k = subcarriers;
    let mut lags = vec![C64::new(0.0, 0.0); 2 * k - 1];
    for j in 0..n {
        let kj = j % k;
        for i in 0..n {
            let ki = i % k;
            lags[ki + k - 1 - kj] += kernel[(i, j)] * gram[(i, j)].conj();
        }
    }
    Ok(lags)
}

/// Lag coefficients of `a^M(θ, τ)† P a^M(θ, τ)` for a fixed spatial factor.
///
/// Precomputes per-antenna-pair lag blocks once so many angles are cheap.
#[derive(Debug, Clone)]
pub struct SteeringLags {
    blocks: Vec<C64>,
    antennas: usize,
    subcarriers: usize,
}

impl SteeringLags {
    pub fn new(kernel: &DMatrix<C64>, antennas: usize, subcarriers: usize) -> Result<Self> {
        let n = antennas * subcarriers;
        if kernel.shape() != (n, n) {
            return Err(Error::dim(format!(
                "kernel is {}x{}, expected {n}x{n}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        let k = subcarriers;
        let width = 2 * k - 1;
        let mut blocks = vec![C64::new(0.0, 0.0); antennas * antennas * width];
        for j in 0..n {
            let (mj, kj) = (j / k, j % k);
            for i in 0..n {
                let (mi, ki) = (i / k, i % k);
                // lag ℓ = k_j − k_i
                blocks[(mi * antennas + mj) * width + kj + k - 1 - ki] += kernel[(i, j)];
            }
        }
        Ok(Self {
            blocks,
            antennas,
            subcarriers,
        })
    }

    /// Coefficients for spatial factor `s = e^{j p(θ)}`.
    pub fn lags(&self, spatial: &[C64]) -> Vec<C64> {
        let width = 2 * self.subcarriers - 1;
        let mut out = vec![C64::new(0.0, 0.0); width];
        for mi in 0..self.antennas {
            for mj in 0..self.antennas {
                let w = spatial[mi].conj() * spatial[mj];
                let block = &self.blocks[(mi * self.antennas + mj) * width..][..width];
                for (o, b) in out.iter_mut().zip(block) {
                    *o += w * b;
                }
            }
        }
        out
    }
}

/// Lag coefficients of `a(τ)† P a(τ)` for a single-antenna kernel or with a
/// given spatial factor.
pub fn steering_form_lags(kernel: &DMatrix<C64>, spatial: &[C64], subcarriers: usize) -> Result<Vec<C64>> {
    Ok(SteeringLags::new(kernel, spatial.len(), subcarriers)?.lags(spatial))
}

/// Index of the first minimum.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Vertex of the parabola through `(−1, y0), (0, y1), (1, y2)`, in `[−½, ½]`.
pub fn parabolic_offset(y0: f64, y1: f64, y2: f64) -> f64 {
    let den = y0 - 2.0 * y1 + y2;
    if !den.is_finite() || den.abs() <= f64::MIN_POSITIVE {
        return 0.0;
    }
    (0.5 * (y0 - y2) / den).clamp(-0.5, 0.5)
}

fn neighbours(values: &[f64], idx: usize) -> (f64, f64, f64) {
    let n = values.len();
    (values[(idx + n - 1) % n], values[idx], values[(idx + 1) % n])
}

/// Fractional index of a minimum of a circular grid function.
///
/// Works on linear values: the objectives minimized here are locally
/// quadratic and may touch zero, where a logarithm would be unusable.
pub fn refine_min(values: &[f64], idx: usize) -> f64 {
    let (a, b, c) = neighbours(values, idx);
    idx as f64 + parabolic_offset(a, b, c)
}

/// Fractional index of a peak of a circular grid function, fitted in log
/// magnitude.
pub fn refine_max_log(values: &[f64], idx: usize) -> f64 {
    let (a, b, c) = neighbours(values, idx);
    let l = |v: f64| v.max(f64::MIN_POSITIVE).ln();
    idx as f64 + parabolic_offset(l(a), l(b), l(c))
}

/// Newton polish of a minimum of `S(τ) = Re Σ_ℓ c_ℓ e^{−j2πℓτ/P}` (the
/// [`lag_transform`] objective) starting from `tau`.
///
/// The objective is a trigonometric polynomial, so its derivatives are
/// exact. Steps that leave `±step` around the start or meet non-positive
/// curvature are rejected and the start is kept.
pub fn polish_lag_min(coeffs: &[C64], grid: &SearchGrid, tau: f64) -> f64 {
    let k = (coeffs.len() + 1) / 2;
    let w = TAU / grid.period();
    let eval = |t: f64| {
        let (mut d1, mut d2) = (0.0, 0.0);
        for (idx, &c) in coeffs.iter().enumerate() {
            let l = idx as f64 - (k as f64 - 1.0);
            let z = c * C64::from_polar(1.0, -w * l * t);
            // d/dτ e^{−jwlτ} = −jwl e^{−jwlτ}
            d1 += (z * C64::new(0.0, -w * l)).re;
            d2 += -(w * l) * (w * l) * z.re;
        }
        (d1, d2)
    };
    let limit = grid.step();
    let mut t = tau;
    for _ in 0..4 {
        let (d1, d2) = eval(t);
        if !(d2 > 0.0) {
            return tau;
        }
        let next = t - d1 / d2;
        if !next.is_finite() || (next - tau).abs() > limit {
            return tau;
        }
        if (next - t).abs() <= 1e-9 * limit {
            return next;
        }
        t = next;
    }
    t
}
