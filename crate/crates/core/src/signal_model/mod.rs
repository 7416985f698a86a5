//! Domain types and CSI synthesis.
//!
//! A snapshot is an `M·K` complex vector, antenna-major (`row = m·K + k`).
//! The clock asynchronism of snapshot `t` multiplies it by
//! `e^{jφ_t}·(1_M ⊗ a(τ_t))`, so time offsets are only observable modulo the
//! alias period `1/Δf`.

mod bidirectional;
mod scenario;

pub use bidirectional::{synthesize_bidirectional, BidirectionalExchange, BidirectionalTrace, ClockErrorLaw};
pub use scenario::{random_scenario, OffsetLaw, Scenario, ScenarioSpec};

use crate::rng::rng_from_seed;
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Propagation speed used for every range/delay conversion, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts a path length in meters to a delay in seconds.
pub fn range_to_delay(range_m: f64) -> f64 {
    range_m / SPEED_OF_LIGHT
}

/// Converts a delay in seconds to a path length in meters.
pub fn delay_to_range(delay_s: f64) -> f64 {
    delay_s * SPEED_OF_LIGHT
}

/// OFDM grid and snapshot timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Subcarrier count `K`.
    pub subcarriers: usize,
    /// Subcarrier spacing `Δf`, Hz.
    pub subcarrier_spacing_hz: f64,
    /// Snapshots per CPI `T`.
    pub snapshots: usize,
    /// Snapshot interval `Δt`, s.
    pub snapshot_interval_s: f64,
    /// Receive antennas `M`.
    pub antennas: usize,
    /// Carrier frequency, Hz. Only the array phase map and Doppler readout use it.
    pub carrier_freq_hz: f64,
    /// Noise power `σ²` per complex sample.
    pub noise_power: f64,
    /// Coherence time of dynamic-path delays, s. A CPI must fit inside it.
    pub coherence_time_s: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            subcarriers: 32,
            subcarrier_spacing_hz: 2.5e6,
            snapshots: 100,
            snapshot_interval_s: 4e-3,
            antennas: 1,
            carrier_freq_hz: 5.5e9,
            noise_power: 1.0,
            coherence_time_s: 1.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.subcarriers < 2 {
            return bad(format!("K = {} (need ≥ 2)", self.subcarriers));
        }
        if !(self.subcarrier_spacing_hz.is_finite() && self.subcarrier_spacing_hz > 0.0) {
            return bad(format!("Δf = {}", self.subcarrier_spacing_hz));
        }
        if self.snapshots < 1 {
            return bad("T = 0".into());
        }
        if self.antennas < 1 {
            return bad("M = 0".into());
        }
        if !(self.snapshot_interval_s.is_finite() && self.snapshot_interval_s > 0.0) {
            return bad(format!("Δt = {}", self.snapshot_interval_s));
        }
        if !(self.noise_power.is_finite() && self.noise_power >= 0.0) {
            return bad(format!("σ² = {}", self.noise_power));
        }
        if !(self.carrier_freq_hz.is_finite() && self.carrier_freq_hz > 0.0) {
            return bad(format!("carrier {}", self.carrier_freq_hz));
        }
        if self.snapshots as f64 * self.snapshot_interval_s > self.coherence_time_s {
            return bad(format!(
                "CPI of {} s exceeds the coherence time {} s",
                self.snapshots as f64 * self.snapshot_interval_s,
                self.coherence_time_s
            ));
        }
        Ok(())
    }

    /// Alias period `1/Δf`, s.
    pub fn alias_period(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    /// Snapshot length `M·K`.
    pub fn rows(&self) -> usize {
        self.antennas * self.subcarriers
    }

    /// Occupied bandwidth `K·Δf`, Hz.
    pub fn bandwidth(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing_hz
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayKind {
    Single,
    UniformLinear,
}

/// Receive array; defines the per-antenna phase map `p(θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub kind: ArrayKind,
    pub elements: usize,
    /// Element spacing, m.
    pub element_spacing: f64,
    /// Carrier wavelength, m.
    pub wavelength: f64,
}

impl ArrayGeometry {
    pub fn single() -> Self {
        Self {
            kind: ArrayKind::Single,
            elements: 1,
            element_spacing: 0.0,
            wavelength: 1.0,
        }
    }

    pub fn uniform_linear(elements: usize, element_spacing: f64, wavelength: f64) -> Result<Self> {
        if elements < 1 || !(element_spacing > 0.0) || !(wavelength > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ULA with {elements} elements, spacing {element_spacing} m, wavelength {wavelength} m"
            )));
        }
        Ok(Self {
            kind: ArrayKind::UniformLinear,
            elements,
            element_spacing,
            wavelength,
        })
    }

    /// Half-wavelength ULA matching `cfg.antennas`, or a single antenna when `M = 1`.
    pub fn for_config(cfg: &SystemConfig) -> Self {
        if cfg.antennas == 1 {
            Self::single()
        } else {
            let lambda = cfg.wavelength();
            Self {
                kind: ArrayKind::UniformLinear,
                elements: cfg.antennas,
                element_spacing: 0.5 * lambda,
                wavelength: lambda,
            }
        }
    }

    pub fn check(&self, cfg: &SystemConfig) -> Result<()> {
        let ok = match self.kind {
            ArrayKind::Single => self.elements == 1 && cfg.antennas == 1,
            ArrayKind::UniformLinear => self.elements == cfg.antennas,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "array has {} elements ({:?}), config has M = {}",
                self.elements, self.kind, cfg.antennas
            )))
        }
    }

    /// `p(θ)`: phase of element `m` relative to element 0, rad.
    pub fn phases(&self, theta: f64) -> Vec<f64> {
        match self.kind {
            ArrayKind::Single => vec![0.0],
            ArrayKind::UniformLinear => {
                let u = TAU * self.element_spacing * theta.sin() / self.wavelength;
                (0..self.elements).map(|m| m as f64 * u).collect()
            }
        }
    }

    /// `e^{j p(θ)}`.
    pub fn spatial_response(&self, theta: f64) -> Vec<C64> {
        self.phases(theta).into_iter().map(|p| C64::from_polar(1.0, p)).collect()
    }
}

/// `a(τ)`: entry `k` is `e^{−j2πkΔfτ}`.
pub fn steering_vector(cfg: &SystemConfig, tau: f64) -> DVector<C64> {
    DVector::from_fn(cfg.subcarriers, |k, _| {
        C64::from_polar(1.0, -TAU * k as f64 * cfg.subcarrier_spacing_hz * tau)
    })
}

/// `a^M(θ, τ) = e^{j p(θ)} ⊗ a(τ)`.
pub fn steering_vector_mimo(cfg: &SystemConfig, geom: &ArrayGeometry, theta: f64, tau: f64) -> Result<DVector<C64>> {
    geom.check(cfg)?;
    Ok(kron_steering(&geom.spatial_response(theta), cfg.subcarriers, cfg.subcarrier_spacing_hz, tau))
}

pub(crate) fn kron_steering(spatial: &[C64], k: usize, delta_f: f64, tau: f64) -> DVector<C64> {
    let a: Vec<C64> = (0..k)
        .map(|kk| C64::from_polar(1.0, -TAU * kk as f64 * delta_f * tau))
        .collect();
    DVector::from_fn(spatial.len() * k, |i, _| spatial[i / k] * a[i % k])
}

/// Multiplies every column of `data` by `conj(1_M ⊗ a(τ))`, removing a time
/// offset `τ`. Negative `τ` applies one.
pub fn compensate_delay(data: &mut DMatrix<C64>, subcarriers: usize, delta_f: f64, tau: f64) {
    let rot: Vec<C64> = (0..subcarriers)
        .map(|k| C64::from_polar(1.0, TAU * k as f64 * delta_f * tau))
        .collect();
    for mut col in data.column_iter_mut() {
        for (i, z) in col.iter_mut().enumerate() {
            *z *= rot[i % subcarriers];
        }
    }
}

/// Static paths; their sum is the merged static response `h_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticPathSet {
    /// Delays, s.
    pub delays: Vec<f64>,
    pub gains: Vec<C64>,
    /// Angles of arrival, rad. `None` means broadside for every path.
    pub aoas: Option<Vec<f64>>,
}

impl StaticPathSet {
    pub fn validate(&self) -> Result<()> {
        if self.delays.is_empty() {
            return Err(Error::InvalidConfig("a static path set needs at least one path".into()));
        }
        if self.gains.len() != self.delays.len() || self.aoas.as_ref().is_some_and(|a| a.len() != self.delays.len()) {
            return Err(Error::dim("static path fields have different lengths"));
        }
        if self.delays.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::InvalidConfig("static delays must be non-negative".into()));
        }
        Ok(())
    }

    /// `h_s = Σ_l β_s,l a^M(θ_s,l, τ_s,l)`.
    pub fn merged_response(&self, cfg: &SystemConfig, geom: &ArrayGeometry) -> Result<DVector<C64>> {
        self.validate()?;
        geom.check(cfg)?;
        let mut h = DVector::zeros(cfg.rows());
        for (l, (&tau, &g)) in self.delays.iter().zip(&self.gains).enumerate() {
            let theta = self.aoas.as_ref().map_or(0.0, |a| a[l]);
            h += kron_steering(&geom.spatial_response(theta), cfg.subcarriers, cfg.subcarrier_spacing_hz, tau) * g;
        }
        Ok(h)
    }
}

/// One target-reflected path within a CPI.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicPath {
    /// Delay at the CPI start, s. Frozen for the whole CPI.
    pub delay: f64,
    /// Delay change rate, s/s.
    pub delay_rate: f64,
    /// Angle of arrival, rad.
    pub aoa: f64,
    /// Complex gain per snapshot, length `T`.
    pub cgs: Vec<C64>,
}

impl DynamicPath {
    /// Delay after `elapsed` seconds of piecewise-linear motion.
    pub fn delay_at(&self, elapsed: f64) -> f64 {
        self.delay + self.delay_rate * elapsed
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DynamicPathSet {
    pub paths: Vec<DynamicPath>,
}

impl DynamicPathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn delays(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.delay).collect()
    }
}

/// Per-snapshot clock offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSequence {
    /// Time offsets in `[0, 1/Δf)`, s.
    pub to: Vec<f64>,
    /// Phase offsets in `[−π, π)`, rad.
    pub po: Vec<f64>,
}

impl OffsetSequence {
    pub fn zeros(snapshots: usize) -> Self {
        Self {
            to: vec![0.0; snapshots],
            po: vec![0.0; snapshots],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Raw,
    Aligned,
    Compensated,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Aligned => "aligned",
            Stage::Compensated => "compensated",
        }
    }
}

/// Snapshot matrix (`M·K × T`) tagged with its processing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    data: DMatrix<C64>,
    stage: Stage,
    cpi_index: usize,
    antennas: usize,
    subcarriers: usize,
}

impl CsiMatrix {
    /// Wraps raw measurements.
    pub fn raw(data: DMatrix<C64>, antennas: usize, subcarriers: usize) -> Result<Self> {
        if antennas == 0 || subcarriers == 0 || data.nrows() != antennas * subcarriers {
            return Err(Error::dim(format!(
                "{} rows for M = {antennas}, K = {subcarriers}",
                data.nrows()
            )));
        }
        Ok(Self {
            data,
            stage: Stage::Raw,
            cpi_index: 0,
            antennas,
            subcarriers,
        })
    }

    pub fn with_cpi_index(mut self, q: usize) -> Self {
        self.cpi_index = q;
        self
    }

    pub fn data(&self) -> &DMatrix<C64> {
        &self.data
    }
    pub fn into_data(self) -> DMatrix<C64> {
        self.data
    }
    pub fn stage(&self) -> Stage {
        self.stage
    }
    pub fn cpi_index(&self) -> usize {
        self.cpi_index
    }
    pub fn antennas(&self) -> usize {
        self.antennas
    }
    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }
    pub fn snapshots(&self) -> usize {
        self.data.ncols()
    }

    pub fn require(&self, stage: Stage) -> Result<()> {
        if self.stage == stage {
            Ok(())
        } else {
            Err(Error::Stage {
                expected: stage.name(),
                found: self.stage.name(),
            })
        }
    }

    /// Replaces the data and moves one stage forward. Only
    /// raw → aligned → compensated is allowed.
    pub fn advance(&self, data: DMatrix<C64>, to: Stage) -> Result<Self> {
        let ok = matches!((self.stage, to), (Stage::Raw, Stage::Aligned) | (Stage::Aligned, Stage::Compensated));
        if !ok {
            return Err(Error::Stage {
                expected: match to {
                    Stage::Aligned => "raw",
                    Stage::Compensated => "aligned",
                    Stage::Raw => "nothing",
                },
                found: self.stage.name(),
            });
        }
        if data.nrows() != self.data.nrows() {
            return Err(Error::dim("stage transition changed the row count"));
        }
        Ok(Self {
            data,
            stage: to,
            cpi_index: self.cpi_index,
            antennas: self.antennas,
            subcarriers: self.subcarriers,
        })
    }

    /// Declares raw data from a synchronized system as compensated, skipping
    /// alignment. Used by the synchronized oracle pipeline only.
    pub fn assume_synchronized(mut self) -> Self {
        self.stage = Stage::Compensated;
        self
    }
}

/// Synthesizes one CPI.
///
/// Column `t` is `(h_s + Σ_l β_l,t a^M(θ_l, τ_l)) ⊙ e^{jφ_t} a^M(0, τ_t) + z`
/// with `z` circular Gaussian of power `σ²` per sample drawn from `seed`.
pub fn synthesize_cpi(
    cfg: &SystemConfig,
    geom: &ArrayGeometry,
    statics: &StaticPathSet,
    dynamics: &DynamicPathSet,
    offsets: &OffsetSequence,
    seed: u64,
) -> Result<CsiMatrix> {
    cfg.validate()?;
    let t_len = cfg.snapshots;
    if offsets.to.len() != t_len || offsets.po.len() != t_len {
        return Err(Error::dim(format!("offset sequences must have T = {t_len} entries")));
    }
    for p in &dynamics.paths {
        if p.cgs.len() != t_len {
            return Err(Error::dim(format!("CGS of length {} for T = {t_len}", p.cgs.len())));
        }
    }
    let (k, df) = (cfg.subcarriers, cfg.subcarrier_spacing_hz);
    let hs = statics.merged_response(cfg, geom)?;
    let responses: Vec<DVector<C64>> = dynamics
        .paths
        .iter()
        .map(|p| kron_steering(&geom.spatial_response(p.aoa), k, df, p.delay))
        .collect();
    let mut rng = rng_from_seed(seed);
    let noise_amp = (cfg.noise_power / 2.0).sqrt();
    let mut data = DMatrix::<C64>::zeros(cfg.rows(), t_len);
    for t in 0..t_len {
        let mut col = hs.clone();
        for (p, a) in dynamics.paths.iter().zip(&responses) {
            col.axpy(p.cgs[t], a, C64::new(1.0, 0.0));
        }
        let po = C64::from_polar(1.0, offsets.po[t]);
        for i in 0..cfg.rows() {
            let ph = C64::from_polar(1.0, -TAU * (i % k) as f64 * df * offsets.to[t]);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            data[(i, t)] = col[i] * po * ph + C64::new(re, im) * noise_amp;
        }
    }
    CsiMatrix::raw(data, cfg.antennas, k)
}
