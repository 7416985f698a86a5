//! Random scenario generation.

use super::{
    range_to_delay, ArrayGeometry, DynamicPath, DynamicPathSet, OffsetSequence, StaticPathSet, SystemConfig,
};
use crate::numerics::{wrap_positive, wrap_symmetric};
use crate::rng::rng_from_seed;
use crate::{Error, Result, C64};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

/// How per-snapshot clock offsets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum OffsetLaw {
    /// TO uniform on `[0, 1/Δf)`, PO uniform on `[−π, π)`, independent per snapshot.
    Uniform,
    /// Random walk from a uniform start with Gaussian increments.
    Drift { to_step_s: f64, po_step_rad: f64 },
    /// No asynchronism.
    Zero,
}

/// Parameters of the random scenario generator. Ranges are path lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub static_paths: usize,
    pub dynamic_paths: usize,
    pub snr_db: f64,
    /// Share of signal power carried by dynamic paths, in `(0, 1)`.
    pub dyn_proportion: f64,
    /// Mean of the Rayleigh static range distribution, m.
    pub static_mean_range_m: f64,
    /// Static ranges below this are redrawn, m.
    pub min_static_range_m: f64,
    pub dynamic_range_m: (f64, f64),
    /// Largest range rate magnitude, m/s.
    pub max_range_rate_mps: f64,
    /// AoAs are uniform on `[−span, span]`, rad. Ignored for one antenna.
    pub aoa_span_rad: f64,
    /// When set, exactly two targets are placed this far apart in range, m.
    pub target_separation_m: Option<f64>,
    /// When set with two targets, their AoAs are fixed to these values, rad.
    pub target_aoas_rad: Option<(f64, f64)>,
    pub offsets: OffsetLaw,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            static_paths: 7,
            dynamic_paths: 3,
            snr_db: 25.0,
            dyn_proportion: 0.3,
            static_mean_range_m: 12.0,
            min_static_range_m: 2.0,
            dynamic_range_m: (8.0, 20.0),
            max_range_rate_mps: 2.0,
            aoa_span_rad: PI / 3.0,
            target_separation_m: None,
            target_aoas_rad: None,
            offsets: OffsetLaw::Uniform,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleScenario(m));
        if !(self.dyn_proportion > 0.0 && self.dyn_proportion < 1.0) {
            return bad(format!("dynamic power proportion {} is outside (0, 1)", self.dyn_proportion));
        }
        if self.static_paths == 0 {
            return bad("at least one static path is required".into());
        }
        if !self.snr_db.is_finite() {
            return bad(format!("SNR {} dB", self.snr_db));
        }
        let (lo, hi) = self.dynamic_range_m;
        if !(lo > 0.0 && hi > lo) {
            return bad(format!("dynamic range interval ({lo}, {hi})"));
        }
        if !(self.static_mean_range_m > 0.0) || self.min_static_range_m < 0.0 {
            return bad("static range parameters".into());
        }
        if self.min_static_range_m >= 3.0 * self.static_mean_range_m {
            return bad("minimum static range is unreachable".into());
        }
        if let Some(sep) = self.target_separation_m {
            if !(sep > 0.0 && sep < hi - lo) {
                return bad(format!("target separation {sep} m does not fit in ({lo}, {hi})"));
            }
        }
        if let OffsetLaw::Drift { to_step_s, po_step_rad } = self.offsets {
            if !(to_step_s >= 0.0 && po_step_rad >= 0.0) {
                return bad("drift steps must be non-negative".into());
            }
        }
        Ok(())
    }

    /// Number of dynamic paths actually generated.
    pub fn target_count(&self) -> usize {
        if self.target_separation_m.is_some() {
            2
        } else {
            self.dynamic_paths
        }
    }
}

/// Ground truth of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub statics: StaticPathSet,
    pub dynamics: DynamicPathSet,
    pub offsets: OffsetSequence,
}

fn cn<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * FRAC_1_SQRT_2
}

/// Draws a scenario: Rayleigh static ranges, uniform target ranges and range
/// rates, path power proportional to `1/τ²`, Gaussian gains, then rescales
/// so the signal power is `SNR·σ²` per sample with the requested dynamic
/// share.
pub fn random_scenario(cfg: &SystemConfig, geom: &ArrayGeometry, spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    spec.validate()?;
    geom.check(cfg)?;
    let mut rng = rng_from_seed(seed);
    let t_len = cfg.snapshots;
    let mimo = cfg.antennas > 1;
    let aoa = |rng: &mut rand_chacha::ChaCha12Rng| {
        if mimo {
            rng.random_range(-spec.aoa_span_rad..=spec.aoa_span_rad)
        } else {
            0.0
        }
    };

    // Rayleigh with mean μ has scale μ/√(π/2).
    let scale = spec.static_mean_range_m / (PI / 2.0).sqrt();
    let mut static_ranges = Vec::with_capacity(spec.static_paths);
    while static_ranges.len() < spec.static_paths {
        let u: f64 = rng.random();
        let r = scale * (-2.0 * (1.0 - u).ln()).sqrt();
        if r >= spec.min_static_range_m {
            static_ranges.push(r);
        }
    }
    let mut static_gains: Vec<C64> = static_ranges.iter().map(|r| cn(&mut rng) / *r).collect();
    let static_aoas: Option<Vec<f64>> = mimo.then(|| static_ranges.iter().map(|_| aoa(&mut rng)).collect());

    let (lo, hi) = spec.dynamic_range_m;
    let dyn_ranges: Vec<f64> = match spec.target_separation_m {
        Some(sep) => {
            let r1 = rng.random_range(lo..hi - sep);
            vec![r1, r1 + sep]
        }
        None => (0..spec.dynamic_paths).map(|_| rng.random_range(lo..hi)).collect(),
    };
    let mut paths = Vec::with_capacity(dyn_ranges.len());
    for (l, &r) in dyn_ranges.iter().enumerate() {
        let rate = rng.random_range(0.0..=spec.max_range_rate_mps) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let theta = match spec.target_aoas_rad {
            Some((a, b)) if dyn_ranges.len() == 2 => {
                if l == 0 {
                    a
                } else {
                    b
                }
            }
            _ => aoa(&mut rng),
        };
        let amp = 1.0 / r;
        let cgs = (0..t_len).map(|_| cn(&mut rng) * amp).collect();
        paths.push(DynamicPath {
            delay: range_to_delay(r),
            delay_rate: rate / super::SPEED_OF_LIGHT,
            aoa: theta,
            cgs,
        });
    }

    // Power rescaling. Each steering vector has unit-modulus entries, so a
    // path's contribution to the per-sample power is |gain|².
    let p_sig = 10f64.powf(spec.snr_db / 10.0) * cfg.noise_power;
    let mut statics = StaticPathSet {
        delays: static_ranges.iter().map(|&r| range_to_delay(r)).collect(),
        gains: static_gains.clone(),
        aoas: static_aoas,
    };
    let hs = statics.merged_response(cfg, geom)?;
    let hs_power = hs.norm_squared() / cfg.rows() as f64;
    let s_static = ((1.0 - spec.dyn_proportion) * p_sig / hs_power).sqrt();
    static_gains.iter_mut().for_each(|g| *g *= s_static);
    statics.gains = static_gains;

    if !paths.is_empty() {
        let dyn_power: f64 = paths
            .iter()
            .map(|p| p.cgs.iter().map(|b| b.norm_sqr()).sum::<f64>() / t_len as f64)
            .sum();
        let s_dyn = (spec.dyn_proportion * p_sig / dyn_power).sqrt();
        for p in &mut paths {
            p.cgs.iter_mut().for_each(|b| *b *= s_dyn);
        }
    }

    let period = cfg.alias_period();
    let offsets = match spec.offsets {
        OffsetLaw::Zero => OffsetSequence::zeros(t_len),
        OffsetLaw::Uniform => OffsetSequence {
            to: (0..t_len).map(|_| rng.random_range(0.0..period)).collect(),
            po: (0..t_len).map(|_| rng.random_range(-PI..PI)).collect(),
        },
        OffsetLaw::Drift { to_step_s, po_step_rad } => {
            let to_n = Normal::new(0.0, to_step_s).map_err(|e| Error::InfeasibleScenario(e.to_string()))?;
            let po_n = Normal::new(0.0, po_step_rad).map_err(|e| Error::InfeasibleScenario(e.to_string()))?;
            let mut to = vec![rng.random_range(0.0..period)];
            let mut po = vec![rng.random_range(-PI..PI)];
            for t in 1..t_len {
                to.push(wrap_positive(to[t - 1] + to_n.sample(&mut rng), period));
                po.push(wrap_symmetric(po[t - 1] + po_n.sample(&mut rng), TAU));
            }
            OffsetSequence { to, po }
        }
    };

    Ok(Scenario {
        statics,
        dynamics: DynamicPathSet { paths },
        offsets,
    })
}
