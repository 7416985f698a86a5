//! Monte Carlo harness.
//!
//! Every (point, trial) draws one scenario and one noise realization over a
//! stream of `warmup_snapshots + T` snapshots; all methods process the
//! byte-identical stream, share one calibrated reference and are scored on
//! its last `T` snapshots. The synchronized oracle reuses the scenario and
//! the noise seed with the clock offsets set to zero.
//!
//! Results are flat rows (one per trial and method, one per target) so that
//! every aggregate is a pure function of the tidy tables. Runtimes live in
//! their own table to keep the tidy ones bit-reproducible.

mod config;
mod output;
mod pipeline;
mod stats;

pub use config::{ExperimentConfig, Method, SweepPoint, TargetCount};
pub use output::{emit_outputs, read_table, OutputPaths};
use pipeline::tail_columns;
pub use pipeline::{align_and_compensate, aoa_grid, run_pipeline, PipelineOutput, Processed};
pub use stats::{aggregate, quantile, AggregateRow, Quartiles};

use crate::estimation::{
    estimate_cgs, estimate_target_count, gamma_beta, match_targets, modified_music_spectrum, pick_peaks, PeakSet,
};
use crate::numerics::{circular_distance, circular_mean, wrap_symmetric, SearchGrid};
use crate::residual::{acquire_reference, Acquisition, ReferenceOrigin, ReferenceStaticResponse};
use crate::rng::{rng_from_seed, stream_seed, Stream};
use crate::signal_model::{
    delay_to_range, random_scenario, synthesize_bidirectional, synthesize_cpi, ArrayGeometry, ClockErrorLaw, CsiMatrix,
    OffsetSequence, Scenario, SystemConfig,
};
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// One row per (point, trial, method).
///
/// TO errors are circular medians over the CPI's snapshots in metres;
/// `None` where the method has no TO estimate (synchronized oracle) and
/// `inf` when the method failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub point: usize,
    pub trial: usize,
    pub method: Method,
    pub snr_db: f64,
    pub dyn_proportion: f64,
    pub tau_sep_m: Option<f64>,
    pub targets: usize,
    /// Peaks actually picked.
    pub detected: usize,
    /// Alignment error: deviation of the aligned columns' TOs
    /// `τ_t − Δτ̂_t` from their circular mean `τ̄`.
    pub rel_to_err_m: Option<f64>,
    /// Absolute TO `Δτ̂_t + τ̂_r` against `τ_t`.
    pub abs_to_err_m: Option<f64>,
    /// Signed residual-step error `τ̄ − τ̂_r`, m.
    pub residual_err_m: Option<f64>,
    /// Two-target resolution success; `None` without a separation.
    pub resolved: Option<bool>,
    pub condition: Option<f64>,
    /// `;`-separated markers: `shortfall`, `ill_conditioned`,
    /// `po_unobservable`, `degenerate_steps=N`, `error=...`.
    pub flags: String,
}

/// One row per (point, trial, method, true target).
///
/// Misses carry `inf` delay errors and `-inf` γ_β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub point: usize,
    pub trial: usize,
    pub method: Method,
    pub target: usize,
    pub true_delay_s: f64,
    pub true_aoa_rad: f64,
    pub est_delay_s: Option<f64>,
    pub est_aoa_rad: Option<f64>,
    /// Delay error after removing the CPI's common TO-residual error, m.
    pub rel_delay_err_m: f64,
    pub abs_delay_err_m: f64,
    pub gamma_beta_db: f64,
    /// `M·K·mean|β_t|² / σ²` in dB.
    pub gamma_ideal_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub point: usize,
    pub trial: usize,
    /// A method label, or `calibration` for the shared reference.
    pub stage: String,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    pub trials: Vec<TrialRow>,
    pub targets: Vec<TargetRow>,
    pub timings: Vec<TimingRow>,
}

impl MetricTable {
    /// Canonical order: (point, trial, method[, target]).
    pub fn canonicalize(&mut self) {
        self.trials.sort_by_key(|r| (r.point, r.trial, r.method));
        self.targets.sort_by_key(|r| (r.point, r.trial, r.method, r.target));
        self.timings.sort_by(|a, b| (a.point, a.trial, &a.stage).cmp(&(b.point, b.trial, &b.stage)));
    }

    pub fn trials_for(&self, method: Method) -> impl Iterator<Item = &TrialRow> {
        self.trials.iter().filter(move |r| r.method == method)
    }

    pub fn targets_for(&self, method: Method) -> impl Iterator<Item = &TargetRow> {
        self.targets.iter().filter(move |r| r.method == method)
    }
}

/// Strict two-target success rule: no shortfall and every relative delay
/// error below half the separation.
pub fn is_resolved(rel_errors_m: &[f64], tau_sep_m: f64, shortfall: bool) -> bool {
    !shortfall && !rel_errors_m.is_empty() && rel_errors_m.iter().all(|&e| e < tau_sep_m / 2.0)
}

/// Fraction of resolved trials among rows at separation `tau_sep_m`.
pub fn resolution_probability<'a>(rows: impl IntoIterator<Item = &'a TrialRow>, tau_sep_m: f64) -> Result<f64> {
    let (mut hits, mut n) = (0usize, 0usize);
    for r in rows {
        if r.tau_sep_m != Some(tau_sep_m) {
            continue;
        }
        if let Some(ok) = r.resolved {
            n += 1;
            hits += ok as usize;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRecords);
    }
    Ok(hits as f64 / n as f64)
}

/// `γ_β^ideal = M·K·(‖β‖²/T)/σ²` in dB.
pub fn gamma_ideal_db(cgs: &[crate::C64], cfg: &SystemConfig) -> f64 {
    let mean = cgs.iter().map(|b| b.norm_sqr()).sum::<f64>() / cgs.len() as f64;
    10.0 * ((cfg.rows() as f64) * mean / cfg.noise_power).log10()
}

fn tail_scenario(s: &Scenario, n: usize) -> Scenario {
    let tail = |v: &[f64]| v[v.len() - n..].to_vec();
    let mut dynamics = s.dynamics.clone();
    for p in &mut dynamics.paths {
        p.cgs = p.cgs[p.cgs.len() - n..].to_vec();
    }
    Scenario {
        statics: s.statics.clone(),
        dynamics,
        offsets: OffsetSequence {
            to: tail(&s.offsets.to),
            po: tail(&s.offsets.po),
        },
    }
}

/// Everything one trial needs, shared by its methods.
pub struct TrialInput {
    pub point: SweepPoint,
    pub trial: usize,
    /// The CPI's system (`T` snapshots).
    pub cfg: SystemConfig,
    pub geom: ArrayGeometry,
    pub grid: SearchGrid,
    pub aoas: Vec<f64>,
    /// Ground truth of the whole stream.
    pub stream_scenario: Scenario,
    /// Ground truth restricted to the evaluated CPI.
    pub scenario: Scenario,
    /// Raw warm-up plus CPI.
    pub stream: CsiMatrix,
    pub noise_seed: u64,
}

impl TrialInput {
    pub fn new(config: &ExperimentConfig, point: SweepPoint, trial: usize) -> Result<Self> {
        let cfg = config.system.clone();
        let stream_cfg = config.stream_config();
        let geom = ArrayGeometry::for_config(&cfg);
        let grid = SearchGrid::new(cfg.alias_period(), config.grid_size, cfg.subcarriers)?;
        let aoas = aoa_grid(config);
        let spec = config.spec_for(&point);
        let stream_scenario = random_scenario(
            &stream_cfg,
            &geom,
            &spec,
            stream_seed(config.seed, point.index, trial, Stream::Scenario),
        )?;
        let noise_seed = stream_seed(config.seed, point.index, trial, Stream::Noise);
        let s = &stream_scenario;
        let stream = synthesize_cpi(&stream_cfg, &geom, &s.statics, &s.dynamics, &s.offsets, noise_seed)?;
        let scenario = tail_scenario(s, cfg.snapshots);
        Ok(Self {
            point,
            trial,
            cfg,
            geom,
            grid,
            aoas,
            stream_scenario,
            scenario,
            stream,
            noise_seed,
        })
    }

    /// Calibration of this trial: a fresh clock error `Δτ_C` and a
    /// static-only bidirectional trace over the trial's static paths.
    /// Returns the true `Δτ_C` with the acquisition.
    pub fn acquire(&self, config: &ExperimentConfig) -> Result<(f64, Acquisition)> {
        let mut rng = rng_from_seed(stream_seed(config.seed, self.point.index, self.trial, Stream::Calibration));
        let m = config.clock_error_max_s;
        let offset_s = if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        let trace = synthesize_bidirectional(
            &self.cfg,
            &self.geom,
            &self.scenario.statics,
            config.calibration_exchanges,
            config.timestamp_noise_std_s,
            ClockErrorLaw::Constant { offset_s },
            stream_seed(config.seed, self.point.index, self.trial, Stream::CalibrationNoise),
        )?;
        Ok((offset_s, acquire_reference(&trace, &self.cfg, &self.grid, &config.calibration)?))
    }

    /// The calibrated reference of this trial.
    pub fn calibrate(&self, config: &ExperimentConfig) -> Result<ReferenceStaticResponse> {
        Ok(self.acquire(config)?.1.reference)
    }

    /// Snapshots before the evaluated CPI.
    pub fn warmup(&self) -> usize {
        self.stream.snapshots() - self.cfg.snapshots
    }

    /// The evaluated CPI of the raw stream.
    pub fn raw_cpi(&self) -> Result<CsiMatrix> {
        CsiMatrix::raw(tail_columns(self.stream.data(), self.cfg.snapshots), self.cfg.antennas, self.cfg.subcarriers)
    }

    /// The same CPI and noise without clock offsets, declared compensated.
    pub fn synchronized_csi(&self) -> Result<CsiMatrix> {
        let s = &self.stream_scenario;
        let stream_cfg = SystemConfig {
            snapshots: self.stream.snapshots(),
            ..self.cfg.clone()
        };
        let zero = OffsetSequence::zeros(stream_cfg.snapshots);
        let full = synthesize_cpi(&stream_cfg, &self.geom, &s.statics, &s.dynamics, &zero, self.noise_seed)?;
        Ok(CsiMatrix::raw(tail_columns(full.data(), self.cfg.snapshots), self.cfg.antennas, self.cfg.subcarriers)?.assume_synchronized())
    }

    pub fn true_reference(&self) -> Result<ReferenceStaticResponse> {
        let hs = self.scenario.statics.merged_response(&self.cfg, &self.geom)?;
        ReferenceStaticResponse::new(hs, self.cfg.antennas, self.cfg.subcarriers, ReferenceOrigin::Calibrated { clock_error: 0.0 })
    }
}

/// Alignment and residual compensation for one method.
pub fn process(
    method: Method,
    input: &TrialInput,
    config: &ExperimentConfig,
    reference: &ReferenceStaticResponse,
) -> Result<Processed> {
    if method == Method::Synchronized {
        return Ok(Processed {
            csi: input.synchronized_csi()?,
            tos: None,
            degenerate_steps: 0,
        });
    }
    align_and_compensate(&input.stream, &input.cfg, method, config.window_len, &input.grid, reference)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5).unwrap_or(f64::NAN)
}

/// Runs one method on one trial and scores it.
pub fn evaluate(
    method: Method,
    input: &TrialInput,
    config: &ExperimentConfig,
    reference: std::result::Result<&ReferenceStaticResponse, &Error>,
) -> (TrialRow, Vec<TargetRow>) {
    let truth = &input.scenario.dynamics.paths;
    let period = input.cfg.alias_period();
    let mut row = TrialRow {
        point: input.point.index,
        trial: input.trial,
        method,
        snr_db: input.point.snr_db,
        dyn_proportion: input.point.dyn_proportion,
        tau_sep_m: input.point.tau_sep_m,
        targets: truth.len(),
        detected: 0,
        rel_to_err_m: None,
        abs_to_err_m: None,
        residual_err_m: None,
        resolved: input.point.tau_sep_m.map(|_| false),
        condition: None,
        flags: String::new(),
    };
    let mut targets: Vec<TargetRow> = truth
        .iter()
        .enumerate()
        .map(|(l, p)| TargetRow {
            point: input.point.index,
            trial: input.trial,
            method,
            target: l,
            true_delay_s: p.delay,
            true_aoa_rad: p.aoa,
            est_delay_s: None,
            est_aoa_rad: None,
            rel_delay_err_m: f64::INFINITY,
            abs_delay_err_m: f64::INFINITY,
            gamma_beta_db: f64::NEG_INFINITY,
            gamma_ideal_db: gamma_ideal_db(&p.cgs, &input.cfg),
        })
        .collect();
    let mut flags = Vec::new();
    let fail = |row: &mut TrialRow, flags: &mut Vec<String>, e: &Error| {
        if method != Method::Synchronized {
            row.rel_to_err_m.get_or_insert(f64::INFINITY);
            row.abs_to_err_m.get_or_insert(f64::INFINITY);
        }
        flags.push(format!("error={e}"));
        row.flags = flags.join(";");
    };

    let true_ref;
    let reference = if method == Method::Synchronized {
        match input.true_reference() {
            Ok(r) => {
                true_ref = r;
                &true_ref
            }
            Err(e) => {
                fail(&mut row, &mut flags, &e);
                return (row, targets);
            }
        }
    } else {
        match reference {
            Ok(r) => r,
            Err(e) => {
                fail(&mut row, &mut flags, e);
                return (row, targets);
            }
        }
    };
    let processed = match process(method, input, config, reference) {
        Ok(p) => p,
        Err(e) => {
            fail(&mut row, &mut flags, &e);
            return (row, targets);
        }
    };
    if processed.degenerate_steps > 0 {
        flags.push(format!("degenerate_steps={}", processed.degenerate_steps));
    }

    // The aligned columns carry true TOs `τ_t − Δτ̂_t`; their circular mean
    // is the CPI's common TO. Relative metrics measure deviations from it,
    // absolute metrics include the residual step's error as well.
    let to_true = &input.scenario.offsets.to;
    let mut shift = 0.0;
    if let Some((rel, residual)) = &processed.tos {
        let carried: Vec<f64> = (0..rel.len()).map(|t| to_true[t] - rel[t]).collect();
        let common = circular_mean(&carried, period);
        let rel_err: Vec<f64> = carried.iter().map(|&c| circular_distance(c, common, period)).collect();
        let abs_err: Vec<f64> = (0..rel.len())
            .map(|t| circular_distance(rel[t] + residual, to_true[t], period))
            .collect();
        shift = wrap_symmetric(common - residual, period);
        row.rel_to_err_m = Some(delay_to_range(median(rel_err)));
        row.abs_to_err_m = Some(delay_to_range(median(abs_err)));
        row.residual_err_m = Some(delay_to_range(shift));
    }

    let count = match config.target_count {
        TargetCount::Truth => truth.len(),
        TargetCount::Mdl => match estimate_target_count(&processed.csi) {
            Ok(n) => n,
            Err(e) => {
                fail(&mut row, &mut flags, &e);
                return (row, targets);
            }
        },
    };
    let peaks: PeakSet = match modified_music_spectrum(&processed.csi, reference, &input.geom, &input.aoas, &input.grid)
        .and_then(|s| pick_peaks(&s, count.max(1)))
    {
        Ok(p) => p,
        Err(e) => {
            fail(&mut row, &mut flags, &e);
            return (row, targets);
        }
    };
    if peaks.shortfall {
        flags.push("shortfall".into());
    }
    row.detected = peaks.peaks.len();

    // Matching cost in resolution cells: delay over 1/B, AoA over 2/M rad.
    let delay_cell = 1.0 / input.cfg.bandwidth();
    let aoa_cell = 2.0 / input.cfg.antennas as f64;
    let rel_delay_err = |i: usize, l: usize| circular_distance(peaks.peaks[i].delay - shift, truth[l].delay, period);
    let cost = |i: usize, l: usize| {
        let d = rel_delay_err(i, l) / delay_cell;
        let a = if input.cfg.antennas > 1 {
            (peaks.peaks[i].aoa - truth[l].aoa) / aoa_cell
        } else {
            0.0
        };
        d * d + a * a
    };
    let matched = match_targets(peaks.peaks.len(), truth.len(), cost);

    let cgs = estimate_cgs(&processed.csi, &peaks.peaks, &input.geom, &input.cfg);
    match &cgs {
        Ok(est) => {
            row.condition = Some(est.condition);
            if est.ill_conditioned {
                flags.push("ill_conditioned".into());
            }
            if !est.po_observable {
                flags.push("po_unobservable".into());
            }
        }
        Err(e) => flags.push(format!("cgs_error={e}")),
    }
    for (l, m) in matched.iter().enumerate() {
        let Some(i) = *m else { continue };
        let p = &peaks.peaks[i];
        let t = &mut targets[l];
        t.est_delay_s = Some(p.delay);
        t.est_aoa_rad = Some(p.aoa);
        t.rel_delay_err_m = delay_to_range(rel_delay_err(i, l));
        t.abs_delay_err_m = delay_to_range(circular_distance(p.delay, truth[l].delay, period));
        if let Ok(est) = &cgs {
            t.gamma_beta_db = gamma_beta(&est.targets[i].cgs, &truth[l].cgs).unwrap_or(f64::NEG_INFINITY);
        }
    }
    if let Some(sep) = input.point.tau_sep_m {
        let errs: Vec<f64> = targets.iter().map(|t| t.rel_delay_err_m).collect();
        row.resolved = Some(is_resolved(&errs, sep, peaks.shortfall));
    }
    row.flags = flags.join(";");
    (row, targets)
}

/// All methods of one trial. Scenario failures flag every method's row.
pub fn run_trial(config: &ExperimentConfig, point: SweepPoint, trial: usize) -> MetricTable {
    let mut table = MetricTable::default();
    let input = match TrialInput::new(config, point, trial) {
        Ok(i) => i,
        Err(e) => {
            for &method in &config.methods {
                table.trials.push(TrialRow {
                    point: point.index,
                    trial,
                    method,
                    snr_db: point.snr_db,
                    dyn_proportion: point.dyn_proportion,
                    tau_sep_m: point.tau_sep_m,
                    targets: 0,
                    detected: 0,
                    rel_to_err_m: None,
                    abs_to_err_m: None,
                    residual_err_m: None,
                    resolved: point.tau_sep_m.map(|_| false),
                    condition: None,
                    flags: format!("error={e}"),
                });
            }
            return table;
        }
    };
    let needs_reference = config.methods.iter().any(|m| *m != Method::Synchronized);
    let start = Instant::now();
    let reference = if needs_reference {
        input.calibrate(config)
    } else {
        Err(Error::InvalidConfig("no reference needed".into()))
    };
    if needs_reference {
        table.timings.push(TimingRow {
            point: point.index,
            trial,
            stage: "calibration".into(),
            runtime_s: start.elapsed().as_secs_f64(),
        });
    }
    for &method in &config.methods {
        let start = Instant::now();
        let (row, targets) = evaluate(method, &input, config, reference.as_ref());
        table.timings.push(TimingRow {
            point: point.index,
            trial,
            stage: method.label().into(),
            runtime_s: start.elapsed().as_secs_f64(),
        });
        table.trials.push(row);
        table.targets.extend(targets);
    }
    table
}

/// Runs every (point, trial) on a pool of `config.workers` threads and
/// returns the canonically ordered table.
pub fn run_sweep(config: &ExperimentConfig) -> Result<MetricTable> {
    config.validate()?;
    let jobs: Vec<(SweepPoint, usize)> = config
        .points()
        .into_iter()
        .flat_map(|p| (0..config.trials).map(move |t| (p, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let parts: Vec<MetricTable> = pool.install(|| jobs.par_iter().map(|&(p, t)| run_trial(config, p, t)).collect());
    let mut table = MetricTable::default();
    for part in parts {
        table.trials.extend(part.trials);
        table.targets.extend(part.targets);
        table.timings.extend(part.timings);
    }
    table.canonicalize();
    Ok(table)
}
