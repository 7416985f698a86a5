//! Experiment configuration.
//!
//! A TOML file with every field optional; missing fields take the desk-scale
//! defaults below. Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//! trials = 200
//! methods = ["prop_sub", "prop_cov", "simil", "evlp", "ifft", "synchronized"]
//! snr_db = [5, 10, 15, 20, 25, 30, 35]
//! dyn_proportion = [0.3]
//! tau_sep_m = []            # empty: the scenario's own target layout
//!
//! [system]
//! subcarriers = 32
//!
//! [scenario]
//! static_paths = 7
//! ```

use crate::baselines::BaselineKind;
use crate::residual::CalibrationOptions;
use crate::signal_model::{ScenarioSpec, SystemConfig};
use crate::to_alignment::AlignMethod;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// One processing chain compared in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PropSub,
    PropCov,
    Simil,
    Evlp,
    Ifft,
    /// Same scenario and noise without clock offsets, the true static
    /// response as reference, no alignment or residual step.
    Synchronized,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::PropSub,
        Method::PropCov,
        Method::Simil,
        Method::Evlp,
        Method::Ifft,
        Method::Synchronized,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::PropSub => "prop_sub",
            Method::PropCov => "prop_cov",
            Method::Simil => "simil",
            Method::Evlp => "evlp",
            Method::Ifft => "ifft",
            Method::Synchronized => "synchronized",
        }
    }

    pub fn is_proposed(self) -> bool {
        matches!(self, Method::PropSub | Method::PropCov)
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Method::Simil => Some(BaselineKind::Similarity),
            Method::Evlp => Some(BaselineKind::Envelope),
            Method::Ifft => Some(BaselineKind::IfftPeak),
            _ => None,
        }
    }

    pub fn align_method(self) -> Option<AlignMethod> {
        match self {
            Method::PropSub => Some(AlignMethod::Subspace),
            Method::PropCov => Some(AlignMethod::Covariance),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Where the number of peaks to pick comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetCount {
    /// The true number of dynamic paths.
    Truth,
    /// MDL on the compensated CPI, `d̂ − 1`.
    Mdl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub methods: Vec<Method>,
    /// Sweep axes; the points are their Cartesian product.
    pub snr_db: Vec<f64>,
    pub dyn_proportion: Vec<f64>,
    /// Two-target separations, m. Empty keeps the scenario's layout.
    pub tau_sep_m: Vec<f64>,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Alignment window `T_w`.
    pub window_len: usize,
    /// Snapshots streamed through every aligner before the evaluated CPI.
    /// The aligners are recursive over an unbounded stream; without a
    /// warm-up the CPI would contain the coarse Hankel-smoothed start.
    pub warmup_snapshots: usize,
    /// Delay grid size `N_g`.
    pub grid_size: usize,
    /// AoA grid points on `[−span, span]` for arrays; ignored for one antenna.
    pub aoa_points: usize,
    pub target_count: TargetCount,
    /// Calibration exchanges `T_s`.
    pub calibration_exchanges: usize,
    pub timestamp_noise_std_s: f64,
    /// `Δτ_C` is drawn uniformly on `[−max, max]` per trial.
    pub clock_error_max_s: f64,
    pub calibration: CalibrationOptions,
    pub system: SystemConfig,
    pub scenario: ScenarioSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 200,
            methods: Method::ALL.to_vec(),
            snr_db: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0],
            dyn_proportion: vec![0.3],
            tau_sep_m: Vec::new(),
            workers: 0,
            window_len: 48,
            warmup_snapshots: 48,
            grid_size: 4096,
            aoa_points: 91,
            target_count: TargetCount::Truth,
            calibration_exchanges: 100,
            timestamp_noise_std_s: 2.5e-9,
            clock_error_max_s: 50e-9,
            calibration: CalibrationOptions::default(),
            system: SystemConfig::default(),
            scenario: ScenarioSpec::default(),
        }
    }
}

/// One point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub snr_db: f64,
    pub dyn_proportion: f64,
    pub tau_sep_m: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    /// The fully resolved configuration as TOML, for run logs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.snr_db.is_empty() || self.dyn_proportion.is_empty() {
            return bad("empty SNR or dynamic-proportion axis".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("duplicate method".into());
        }
        self.system.validate()?;
        self.stream_config().validate()?;
        if self.system.snapshots + self.warmup_snapshots < self.window_len.min(self.system.subcarriers) {
            return bad("fewer snapshots than the initial alignment needs".into());
        }
        if self.calibration_exchanges < self.system.subcarriers {
            return Err(Error::TraceTooShort {
                got: self.calibration_exchanges,
                need: self.system.subcarriers,
            });
        }
        if !(self.clock_error_max_s >= 0.0 && self.clock_error_max_s <= self.calibration.clock_error_range_s) {
            return bad(format!(
                "clock error bound {} s lies outside the calibration search range",
                self.clock_error_max_s
            ));
        }
        crate::numerics::SearchGrid::new(self.system.alias_period(), self.grid_size, self.system.subcarriers)?;
        for p in self.points() {
            self.spec_for(&p).validate()?;
        }
        Ok(())
    }

    /// The system seen by the aligners: warm-up plus one CPI.
    pub fn stream_config(&self) -> SystemConfig {
        SystemConfig {
            snapshots: self.system.snapshots + self.warmup_snapshots,
            ..self.system.clone()
        }
    }

    /// Sweep points in canonical order (SNR outermost, separation innermost).
    pub fn points(&self) -> Vec<SweepPoint> {
        let seps: Vec<Option<f64>> = if self.tau_sep_m.is_empty() {
            vec![None]
        } else {
            self.tau_sep_m.iter().map(|&s| Some(s)).collect()
        };
        let mut out = Vec::new();
        for &snr_db in &self.snr_db {
            for &dyn_proportion in &self.dyn_proportion {
                for &tau_sep_m in &seps {
                    out.push(SweepPoint {
                        index: out.len(),
                        snr_db,
                        dyn_proportion,
                        tau_sep_m,
                    });
                }
            }
        }
        out
    }

    /// Scenario generator parameters at one point.
    pub fn spec_for(&self, p: &SweepPoint) -> ScenarioSpec {
        ScenarioSpec {
            snr_db: p.snr_db,
            dyn_proportion: p.dyn_proportion,
            target_separation_m: p.tau_sep_m.or(self.scenario.target_separation_m),
            ..self.scenario.clone()
        }
    }
}
