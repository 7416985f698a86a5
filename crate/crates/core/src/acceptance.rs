//! Acceptance suite, one check per criterion.
//!
//! Shared by the `acceptance` test target and the CLI `check` command.
//! Tolerances are the constants below; Monte Carlo criteria run the harness
//! at [`AcceptanceOptions::trials`] trials per point.

use crate::baselines::{align_baseline, BaselineKind};
use crate::estimation::{aoa_axis, estimate_cgs, align_cgs, modified_music_spectrum, pick_peaks, Peak};
use crate::harness::{aggregate, emit_outputs, run_sweep, AggregateRow, ExperimentConfig, Method, MetricTable};
use crate::numerics::{argmax, argmin, circular_distance, fft_spectrum, SearchGrid};
use crate::oracle;
use crate::residual::{ReferenceOrigin, ReferenceStaticResponse};
use crate::rng::rng_from_seed;
use crate::signal_model::{
    random_scenario, range_to_delay, steering_vector, steering_vector_mimo, synthesize_cpi, ArrayGeometry, CsiMatrix,
    DynamicPathSet, OffsetLaw, OffsetSequence, ScenarioSpec, SystemConfig, SPEED_OF_LIGHT,
};
use crate::to_alignment::{align_stream, mdl_dimension, objective_spectrum, subspace_projector, AlignMethod};
use crate::{Result, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

/// Criterion 1: FFT spectra against direct quadratic forms.
pub const SPECTRUM_REL_TOL: f64 = 1e-9;
/// Pointwise relative errors use `max(|direct|, floor · max|direct|)`.
pub const SPECTRUM_REL_FLOOR: f64 = 1e-12;
pub const TOY_INSTANCES: usize = 100;
pub const TOY_GRID: usize = 256;

/// Criterion 2, metres.
pub const REL_TO_15_DB_M: f64 = 0.1;
pub const REL_TO_25_DB_M: f64 = 0.05;
pub const BASELINE_REL_TO_MIN_M: f64 = 0.3;

/// Criterion 3, metres.
pub const ABS_TO_PENALTY_M: f64 = 0.2;

/// Criterion 4: 3 dB plus 1 dB Monte Carlo slack.
pub const DELAY_POWER_GAP_DB: f64 = 4.0;
pub const DYN_08_DELAY_M: f64 = 0.15;

/// Criterion 5.
pub const SYNC_RESOLUTION_MIN: f64 = 0.85;
pub const PROPOSED_RESOLUTION_MIN: f64 = 0.85;
pub const BASELINE_RESOLUTION_MAX: f64 = 0.5;
pub const RESOLVED_LEVEL: f64 = 0.9;
pub const CLASSICAL_SEPARATION_M: f64 = 3.0;
/// Separations probed for the baselines' first crossing of [`RESOLVED_LEVEL`], m.
pub const BASELINE_SEPARATIONS_M: [f64; 9] = [1.2, 1.5, 1.8, 2.1, 2.4, 2.7, 3.0, 3.3, 3.6];

/// Criterion 6, dB.
pub const CGS_GAP_DB: f64 = 5.0;
pub const SYNC_IDEAL_GAP_DB: (f64, f64) = (1.0, 12.0);

/// Criterion 8.
pub const MIMO_RESOLUTION_MIN: f64 = 0.9;
/// SNRs of the MIMO smoke; 100 dB stands in for noiseless (the generator
/// scales signal power against `σ²`, which must stay positive).
pub const MIMO_SNR_DB: [f64; 4] = [25.0, 40.0, 60.0, 100.0];
pub const MIMO_TARGET_AOAS_RAD: (f64, f64) = (-0.5, 0.5);
/// Range separation of the two MIMO targets: far below the delay
/// resolution, so only the angle separates them.
pub const MIMO_SEPARATION_M: f64 = 0.1;

/// Wall-clock budgets, s.
pub const BUDGET_S: [f64; 8] = [10.0, 600.0, f64::INFINITY, f64::INFINITY, 900.0, f64::INFINITY, 60.0, f64::INFINITY];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceOptions {
    pub seed: u64,
    /// Trials per point for criteria 2 to 6.
    pub trials: usize,
    /// Trials of criterion 8, split evenly over [`MIMO_SNR_DB`].
    pub mimo_trials: usize,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 200,
            mimo_trials: 100,
            workers: 0,
        }
    }
}

/// One measured quantity against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub ok: bool,
}

impl Check {
    fn new(ok: bool, label: impl Into<String>) -> Self {
        Self { label: label.into(), ok }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: usize,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub runtime_s: f64,
    pub budget_s: f64,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.ok) && self.runtime_s < self.budget_s
    }
}

impl fmt::Display for CriterionReport {
    /// `PASS 2 title [12.3 s / 600 s] check; check; …`, failing checks marked `✗`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let budget = if self.budget_s.is_finite() {
            format!("{:.1} s / {:.0} s", self.runtime_s, self.budget_s)
        } else {
            format!("{:.1} s", self.runtime_s)
        };
        let checks: Vec<String> = self
            .checks
            .iter()
            .map(|c| if c.ok { c.label.clone() } else { format!("✗ {}", c.label) })
            .collect();
        write!(f, "{verdict} {} {} [{budget}] {}", self.id, self.title, checks.join("; "))
    }
}

fn report(id: usize, title: &'static str, start: Instant, checks: Vec<Check>) -> CriterionReport {
    CriterionReport {
        id,
        title,
        checks,
        runtime_s: start.elapsed().as_secs_f64(),
        budget_s: BUDGET_S[id - 1],
    }
}

fn failed(id: usize, title: &'static str, start: Instant, what: &str, e: crate::Error) -> CriterionReport {
    report(id, title, start, vec![Check::new(false, format!("{what}: {e}"))])
}

fn cn<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| cn(rng))
}

fn random_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<C64> {
    DVector::from_fn(len, |_, _| cn(rng))
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn max_rel_err(fast: &[f64], direct: &[f64]) -> f64 {
    let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    fast.iter()
        .zip(direct)
        .map(|(a, b)| (a - b).abs() / b.abs().max(SPECTRUM_REL_FLOOR * scale))
        .fold(0.0, f64::max)
}

fn toy_cfg(k: usize) -> SystemConfig {
    SystemConfig {
        subcarriers: k,
        ..SystemConfig::default()
    }
}

/// Criterion 1: the FFT and lag routes of the subspace and covariance TO
/// objectives against exhaustive direct evaluation on toy instances.
pub fn criterion_1(opts: &AcceptanceOptions) -> CriterionReport {
    const TITLE: &str = "oracle equivalence of FFT-accelerated TO objectives";
    let start = Instant::now();
    let mut rng = rng_from_seed(opts.seed ^ 0xC1);
    let (mut argmin_mismatch, mut worst_fft, mut worst_lag) = (0usize, 0.0f64, 0.0f64);
    for i in 0..TOY_INSTANCES {
        let k = 2 + i % 3;
        let tw = 2 + (i / 3) % 7;
        let cfg = toy_cfg(k);
        let grid = match SearchGrid::new(cfg.alias_period(), TOY_GRID, k) {
            Ok(g) => g,
            Err(e) => return failed(1, TITLE, start, "grid", e),
        };
        let w = random_matrix(&mut rng, k, tw);
        let h = random_vector(&mut rng, k);
        let est = match subspace_projector(&w) {
            Ok(e) => e,
            Err(e) => return failed(1, TITLE, start, "subspace", e),
        };
        let factors = match est.covariance_factor() {
            Ok(cov) => [est.noise_basis(), cov],
            Err(e) => return failed(1, TITLE, start, "covariance", e),
        };
        for factor in factors {
            let kernel = &factor * factor.adjoint();
            let direct = oracle::to_objective_grid(&h, &kernel, &grid);
            let (fft, lag) = match (
                fft_spectrum(&h, &factor, &grid),
                objective_spectrum(&DMatrix::from_column_slice(k, 1, h.as_slice()), &kernel, &grid),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return failed(1, TITLE, start, "spectrum", e),
            };
            if argmin(&fft) != argmin(&direct) || argmin(&lag) != argmin(&direct) {
                argmin_mismatch += 1;
            }
            worst_fft = worst_fft.max(max_rel_err(&fft, &direct));
            worst_lag = worst_lag.max(max_rel_err(&lag, &direct));
        }
    }
    let checks = vec![
        Check::new(
            argmin_mismatch == 0,
            format!("grid argmin mismatches {argmin_mismatch} of {} objectives", 2 * TOY_INSTANCES),
        ),
        Check::new(
            worst_fft <= SPECTRUM_REL_TOL,
            format!("FFT route max rel err {worst_fft:.1e} <= {SPECTRUM_REL_TOL:.0e}"),
        ),
        Check::new(
            worst_lag <= SPECTRUM_REL_TOL,
            format!("lag route max rel err {worst_lag:.1e} <= {SPECTRUM_REL_TOL:.0e}"),
        ),
    ];
    report(1, TITLE, start, checks)
}

/// Sweep shared by criteria 2, 3, 4 and 6.
pub struct AccuracySweep {
    pub rows: Vec<AggregateRow>,
    pub runtime_s: f64,
}

pub fn accuracy_config(opts: &AcceptanceOptions) -> ExperimentConfig {
    ExperimentConfig {
        seed: opts.seed,
        trials: opts.trials,
        workers: opts.workers,
        snr_db: vec![15.0, 25.0, 35.0],
        dyn_proportion: vec![0.3, 0.8],
        ..ExperimentConfig::default()
    }
}

pub fn accuracy_sweep(opts: &AcceptanceOptions) -> Result<AccuracySweep> {
    let start = Instant::now();
    let table = run_sweep(&accuracy_config(opts))?;
    Ok(AccuracySweep {
        rows: aggregate(&table),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

fn cell(rows: &[AggregateRow], method: Method, snr: f64, dyn_p: f64, sep: Option<f64>) -> Option<&AggregateRow> {
    rows.iter()
        .find(|r| r.method == method && r.snr_db == snr && r.dyn_proportion == dyn_p && r.tau_sep_m == sep)
}

fn missing(what: String) -> Check {
    Check::new(false, format!("{what}: no data"))
}

fn sweep_report(id: usize, title: &'static str, sweep: &Result<AccuracySweep>, charge_runtime: bool, body: impl Fn(&[AggregateRow]) -> Vec<Check>) -> CriterionReport {
    let start = Instant::now();
    match sweep {
        Ok(s) => {
            let mut r = report(id, title, start, body(&s.rows));
            if charge_runtime {
                r.runtime_s = s.runtime_s;
            }
            r
        }
        Err(e) => report(id, title, start, vec![Check::new(false, format!("sweep failed: {e}"))]),
    }
}

/// Criterion 2: relative-TO accuracy of the proposed methods and the
/// baselines. Charged with the runtime of the shared sweep.
pub fn criterion_2(sweep: &Result<AccuracySweep>) -> CriterionReport {
    sweep_report(2, "TO alignment accuracy", sweep, true, |rows| {
        let mut checks = Vec::new();
        for m in [Method::PropSub, Method::PropCov] {
            for (snr, limit) in [(15.0, REL_TO_15_DB_M), (25.0, REL_TO_25_DB_M)] {
                let what = format!("{m} {snr} dB rel TO");
                checks.push(match cell(rows, m, snr, 0.3, None).and_then(|r| r.rel_to_err_m.median) {
                    Some(v) => Check::new(v <= limit, format!("{what} {v:.3} m <= {limit}")),
                    None => missing(what),
                });
            }
        }
        for m in [Method::Simil, Method::Evlp, Method::Ifft] {
            let what = format!("{m} 25 dB rel TO");
            checks.push(match cell(rows, m, 25.0, 0.3, None).and_then(|r| r.rel_to_err_m.median) {
                Some(v) => Check::new(v > BASELINE_REL_TO_MIN_M, format!("{what} {v:.3} m > {BASELINE_REL_TO_MIN_M}")),
                None => missing(what),
            });
        }
        checks
    })
}

/// Criterion 3: absolute-TO penalty at 25 dB.
pub fn criterion_3(sweep: &Result<AccuracySweep>) -> CriterionReport {
    sweep_report(3, "absolute-TO penalty", sweep, false, |rows| {
        [Method::PropSub, Method::PropCov]
            .into_iter()
            .map(|m| {
                let what = format!("{m} 25 dB abs - rel TO");
                match cell(rows, m, 25.0, 0.3, None).and_then(|r| Some((r.abs_to_err_m.median?, r.rel_to_err_m.median?))) {
                    Some((a, r)) => Check::new(a - r <= ABS_TO_PENALTY_M, format!("{what} {:.3} m <= {ABS_TO_PENALTY_M}", a - r)),
                    None => missing(what),
                }
            })
            .collect()
    })
}

/// Criterion 4: relative delay-error power of the proposed methods against
/// the synchronized pipeline, and the dynamics-dominated accuracy.
pub fn criterion_4(sweep: &Result<AccuracySweep>) -> CriterionReport {
    sweep_report(4, "delay accuracy gap vs synchronized", sweep, false, |rows| {
        let mut checks = Vec::new();
        for snr in [15.0, 25.0, 35.0] {
            for dyn_p in [0.3, 0.8] {
                let sync = cell(rows, Method::Synchronized, snr, dyn_p, None).and_then(|r| r.rel_delay_err_m.median);
                for m in [Method::PropSub, Method::PropCov] {
                    let what = format!("{m} {snr} dB dyn {dyn_p} power gap");
                    let prop = cell(rows, m, snr, dyn_p, None).and_then(|r| r.rel_delay_err_m.median);
                    checks.push(match (prop, sync) {
                        (Some(p), Some(s)) => {
                            let gap = 20.0 * (p / s).log10();
                            Check::new(gap.abs() <= DELAY_POWER_GAP_DB, format!("{what} {gap:+.2} dB within {DELAY_POWER_GAP_DB}"))
                        }
                        _ => missing(what),
                    });
                }
            }
        }
        for m in [Method::PropSub, Method::PropCov] {
            let what = format!("{m} 25 dB dyn 0.8 rel delay");
            checks.push(match cell(rows, m, 25.0, 0.8, None).and_then(|r| r.rel_delay_err_m.median) {
                Some(v) => Check::new(v <= DYN_08_DELAY_M, format!("{what} {v:.3} m <= {DYN_08_DELAY_M}")),
                None => missing(what),
            });
        }
        checks
    })
}

/// Criterion 6: CGS quality of the proposed methods against the
/// synchronized pipeline, and of the synchronized pipeline against the ideal.
pub fn criterion_6(sweep: &Result<AccuracySweep>) -> CriterionReport {
    sweep_report(6, "CGS quality gap", sweep, false, |rows| {
        let mut checks = Vec::new();
        let sync = cell(rows, Method::Synchronized, 25.0, 0.3, None);
        let sync_gamma = sync.and_then(|r| r.gamma_beta_db.median);
        for m in [Method::PropSub, Method::PropCov] {
            let what = format!("{m} gamma_beta gap");
            checks.push(match (cell(rows, m, 25.0, 0.3, None).and_then(|r| r.gamma_beta_db.median), sync_gamma) {
                (Some(p), Some(s)) => Check::new((s - p).abs() <= CGS_GAP_DB, format!("{what} {:+.2} dB within {CGS_GAP_DB}", s - p)),
                _ => missing(what),
            });
        }
        let what = "synchronized below ideal".to_string();
        checks.push(match (sync_gamma, sync.and_then(|r| r.gamma_ideal_db.median)) {
            (Some(s), Some(i)) => {
                let (lo, hi) = SYNC_IDEAL_GAP_DB;
                Check::new((lo..=hi).contains(&(i - s)), format!("{what} {:.2} dB in [{lo}, {hi}]", i - s))
            }
            _ => missing(what),
        });
        checks
    })
}

pub fn resolution_configs(opts: &AcceptanceOptions) -> [ExperimentConfig; 2] {
    let base = ExperimentConfig {
        seed: opts.seed,
        trials: opts.trials,
        workers: opts.workers,
        snr_db: vec![25.0],
        dyn_proportion: vec![0.3],
        ..ExperimentConfig::default()
    };
    [
        ExperimentConfig {
            tau_sep_m: vec![0.7, 0.9],
            ..base.clone()
        },
        ExperimentConfig {
            seed: opts.seed.wrapping_add(1),
            methods: vec![Method::Simil, Method::Evlp, Method::Ifft],
            tau_sep_m: BASELINE_SEPARATIONS_M.to_vec(),
            ..base
        },
    ]
}

/// Criterion 5 checks on aggregates of 25 dB, dyn 0.3 resolution sweeps.
pub fn resolution_checks(rows: &[AggregateRow]) -> Vec<Check> {
    let prob = |m: Method, sep: f64| cell(rows, m, 25.0, 0.3, Some(sep)).and_then(|r| r.resolution_probability);
    let mut checks = Vec::new();
    let at_least = |m: Method, sep: f64, min: f64| {
        let what = format!("{m} P_res at {sep} m");
        match prob(m, sep) {
            Some(p) => Check::new(p >= min, format!("{what} {p:.3} >= {min}")),
            None => missing(what),
        }
    };
    checks.push(at_least(Method::Synchronized, 0.7, SYNC_RESOLUTION_MIN));
    checks.push(at_least(Method::PropSub, 0.9, PROPOSED_RESOLUTION_MIN));
    checks.push(at_least(Method::PropCov, 0.9, PROPOSED_RESOLUTION_MIN));
    for m in [Method::Simil, Method::Evlp, Method::Ifft] {
        let what = format!("{m} P_res at 0.9 m");
        checks.push(match prob(m, 0.9) {
            Some(p) => Check::new(p <= BASELINE_RESOLUTION_MAX, format!("{what} {p:.3} <= {BASELINE_RESOLUTION_MAX}")),
            None => missing(what),
        });
        // "Reaches 0.9 only at ≥ 3 m": no tested separation below 3 m does.
        let seps: Vec<f64> = [0.7, 0.9].into_iter().chain(BASELINE_SEPARATIONS_M).collect();
        let first = seps.iter().copied().find(|&s| prob(m, s).is_some_and(|p| p >= RESOLVED_LEVEL));
        let label = match first {
            Some(s) => format!("{m} first reaches {RESOLVED_LEVEL} at {s} m (need >= {CLASSICAL_SEPARATION_M})"),
            None => format!("{m} stays below {RESOLVED_LEVEL} up to {} m", seps[seps.len() - 1]),
        };
        let complete = seps.iter().all(|&s| prob(m, s).is_some());
        checks.push(Check::new(complete && first.is_none_or(|s| s >= CLASSICAL_SEPARATION_M), label));
    }
    checks
}

/// Criterion 5: two-target resolution probabilities.
pub fn criterion_5(opts: &AcceptanceOptions) -> CriterionReport {
    const TITLE: &str = "super-resolution";
    let start = Instant::now();
    let mut rows = Vec::new();
    for cfg in resolution_configs(opts) {
        match run_sweep(&cfg) {
            Ok(t) => rows.extend(aggregate(&t)),
            Err(e) => return failed(5, TITLE, start, "sweep", e),
        }
    }
    report(5, TITLE, start, resolution_checks(&rows))
}

/// Noiseless static-only stream with random offsets.
fn static_stream(cfg: &SystemConfig, seed: u64, offsets: &OffsetSequence) -> Result<CsiMatrix> {
    let geom = ArrayGeometry::for_config(cfg);
    let loud = SystemConfig {
        noise_power: 1.0,
        ..cfg.clone()
    };
    let sc = random_scenario(&loud, &geom, &ScenarioSpec::default(), seed)?;
    let quiet = SystemConfig {
        noise_power: 0.0,
        ..cfg.clone()
    };
    synthesize_cpi(&quiet, &geom, &sc.statics, &DynamicPathSet::default(), offsets, seed)
}

fn random_offsets(cfg: &SystemConfig, seed: u64) -> Result<OffsetSequence> {
    let geom = ArrayGeometry::for_config(cfg);
    let spec = ScenarioSpec {
        offsets: OffsetLaw::Uniform,
        ..ScenarioSpec::default()
    };
    let loud = SystemConfig {
        noise_power: 1.0,
        ..cfg.clone()
    };
    Ok(random_scenario(&loud, &geom, &spec, seed)?.offsets)
}

fn shift_column(data: &mut DMatrix<C64>, col: usize, cfg: &SystemConfig, delta: f64) {
    let a = steering_vector(cfg, delta);
    let k = cfg.subcarriers;
    for i in 0..data.nrows() {
        data[(i, col)] *= a[i % k];
    }
}

/// Every aligner on a static-only stream: an extra TO `δ` on snapshot 3
/// moves its relative-TO estimate by `δ` (within one grid step).
fn check_shift_equivariance(seed: u64) -> Result<Check> {
    let cfg = SystemConfig {
        snapshots: 6,
        ..SystemConfig::default()
    };
    let grid = SearchGrid::new(cfg.alias_period(), 4096, cfg.subcarriers)?;
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for case in 0..8u64 {
        let offsets = random_offsets(&cfg, seed + case)?;
        let a = static_stream(&cfg, seed + 100 + case, &offsets)?;
        let delta = rng.random_range(-150e-9..150e-9);
        let mut shifted = a.data().clone();
        shift_column(&mut shifted, 3, &cfg, delta);
        let b = CsiMatrix::raw(shifted, cfg.antennas, cfg.subcarriers)?;
        let run = |csi: &CsiMatrix, which: usize| -> Result<Vec<f64>> {
            Ok(match which {
                0 => align_stream(csi, &cfg, AlignMethod::Subspace, 48, &grid)?.relative_to,
                1 => align_stream(csi, &cfg, AlignMethod::Covariance, 48, &grid)?.relative_to,
                n => align_baseline(BaselineKind::ALL[n - 2], csi, &cfg, &grid)?.relative_to,
            })
        };
        for which in 0..5 {
            let (ra, rb) = (run(&a, which)?, run(&b, which)?);
            worst = worst.max(circular_distance(rb[3] - ra[3], delta, cfg.alias_period()) / grid.step());
        }
    }
    Ok(Check::new(worst <= 1.0, format!("aligner shift equivariance worst {worst:.2} grid steps <= 1")))
}

fn check_projectors(seed: u64) -> Result<Check> {
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..12);
        let tw = rng.random_range(2..20);
        let p = subspace_projector(&random_matrix(&mut rng, n, tw))?.noise_projector();
        worst = worst.max(max_abs(&(&p * &p - &p))).max(max_abs(&(p.adjoint() - &p)));
    }
    Ok(Check::new(worst < 1e-9, format!("projector idempotency/Hermitian err {worst:.1e} < 1e-9")))
}

fn check_mdl(seed: u64) -> Result<Check> {
    let mut rng = rng_from_seed(seed);
    let mut ok = true;
    for d in 1..5 {
        let w = random_matrix(&mut rng, 8, d) * random_matrix(&mut rng, d, 16);
        ok &= subspace_projector(&w)?.dimension == d;
    }
    // White eigenvalues: nothing to explain, the smallest order wins.
    ok &= mdl_dimension(&[1.0; 8], 16)? == 1;
    ok &= mdl_dimension(&[5.0, 0.0], 4)? == 1;
    Ok(Check::new(ok, "MDL noiseless rank and white cases"))
}

/// Profile likelihood (Gaussian gains marginalized out) and Gaussian
/// covariance likelihood pick the same grid point as the projection and
/// Mahalanobis objectives.
fn check_likelihood_oracles(seed: u64) -> Result<Check> {
    let mut rng = rng_from_seed(seed);
    let k = 4;
    let cfg = toy_cfg(k);
    let df = cfg.subcarrier_spacing_hz;
    let grid = SearchGrid::new(cfg.alias_period(), 64, k)?;
    let mut mismatches = 0;
    for _ in 0..50 {
        let a = DMatrix::from_fn(k, 2, |r, c| {
            let tau = if c == 0 { 15e-9 } else { 140e-9 };
            C64::from_polar(1.0, -std::f64::consts::TAU * r as f64 * df * tau)
        });
        let tau = rng.random_range(0.0..cfg.alias_period());
        let h0 = &a * random_vector(&mut rng, 2);
        let mut h = h0.clone();
        for (i, z) in h.iter_mut().enumerate() {
            *z = *z * steering_vector(&cfg, tau)[i] + cn(&mut rng) * 0.05;
        }
        let p = DMatrix::identity(k, k) - &a * (a.adjoint() * &a).try_inverse().expect("full column rank") * a.adjoint();
        let s = objective_spectrum(&DMatrix::from_column_slice(k, 1, h.as_slice()), &p, &grid)?;
        let ll: Vec<f64> = grid.delays().iter().map(|&t| oracle::profile_log_likelihood(&h, &a, k, df, t)).collect();
        mismatches += (argmin(&s) != argmax(&ll)) as usize;

        let f = random_matrix(&mut rng, k, k);
        let cov = &f * f.adjoint() + DMatrix::identity(k, k) * C64::new(0.1, 0.0);
        let inv = cov.clone().try_inverse().expect("positive definite");
        let s = objective_spectrum(&DMatrix::from_column_slice(k, 1, h.as_slice()), &inv, &grid)?;
        let ll: Vec<f64> = grid.delays().iter().map(|&t| oracle::gaussian_log_likelihood(&h, &cov, k, df, t)).collect();
        mismatches += (argmin(&s) != argmax(&ll)) as usize;
    }
    Ok(Check::new(mismatches == 0, format!("likelihood oracle argmax mismatches {mismatches} of 100")))
}

fn synchronized_cpi(cfg: &SystemConfig, seed: u64, po: bool) -> Result<(CsiMatrix, ReferenceStaticResponse, crate::signal_model::Scenario)> {
    let geom = ArrayGeometry::for_config(cfg);
    let loud = SystemConfig {
        noise_power: 1.0,
        ..cfg.clone()
    };
    let sc = random_scenario(&loud, &geom, &ScenarioSpec::default(), seed)?;
    let offsets = OffsetSequence {
        to: vec![0.0; cfg.snapshots],
        po: if po { sc.offsets.po.clone() } else { vec![0.0; cfg.snapshots] },
    };
    let csi = synthesize_cpi(cfg, &geom, &sc.statics, &sc.dynamics, &offsets, seed)?.assume_synchronized();
    let hs = sc.statics.merged_response(cfg, &geom)?;
    let r = ReferenceStaticResponse::new(hs, cfg.antennas, cfg.subcarriers, ReferenceOrigin::Calibrated { clock_error: 0.0 })?;
    Ok((csi, r, sc))
}

fn true_peaks(sc: &crate::signal_model::Scenario) -> Vec<Peak> {
    sc.dynamics
        .paths
        .iter()
        .map(|p| Peak {
            delay: p.delay,
            aoa: p.aoa,
            value: 1.0,
            delay_index: 0,
            aoa_index: 0,
        })
        .collect()
}

/// Noiseless CPI with random PO: after rotation and translation the CGS
/// estimates equal the truth.
fn check_cgs_structure(seed: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for (m, case) in [(1, 0), (1, 1), (1, 2), (3, 3)] {
        let cfg = SystemConfig {
            antennas: m,
            noise_power: 0.0,
            ..SystemConfig::default()
        };
        let geom = ArrayGeometry::for_config(&cfg);
        let (csi, _, sc) = synchronized_cpi(&cfg, seed + case, true)?;
        let est = estimate_cgs(&csi, &true_peaks(&sc), &geom, &cfg)?;
        for (e, p) in est.targets.iter().zip(&sc.dynamics.paths) {
            let aligned = align_cgs(&e.cgs, &p.cgs)?;
            let err: f64 = aligned.iter().zip(&p.cgs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let norm: f64 = p.cgs.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(err / norm);
        }
    }
    Ok(Check::new(worst <= 1e-6, format!("CGS rotation+translation residual {worst:.1e} <= 1e-6")))
}

fn check_po_invariance(seed: u64) -> Result<Check> {
    let cfg = SystemConfig::default();
    let geom = ArrayGeometry::single();
    let grid = SearchGrid::new(cfg.alias_period(), 4096, cfg.subcarriers)?;
    let (csi, r, _) = synchronized_cpi(&cfg, seed, false)?;
    let base = modified_music_spectrum(&csi, &r, &geom, &[0.0], &grid)?;
    let mut rng = rng_from_seed(seed);
    let phases = DVector::from_fn(cfg.snapshots, |_, _| C64::from_polar(1.0, rng.random_range(-PI..PI)));
    let other = CsiMatrix::raw(csi.data() * DMatrix::from_diagonal(&phases), 1, cfg.subcarriers)?.assume_synchronized();
    let s = modified_music_spectrum(&other, &r, &geom, &[0.0], &grid)?;
    let max = base.values.iter().cloned().fold(0.0, f64::max);
    let diff = s.values.iter().zip(&base.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / max;
    Ok(Check::new(diff <= 1e-9, format!("spectrum PO invariance rel diff {diff:.1e} <= 1e-9")))
}

/// With one antenna the array paths collapse to the delay-only ones.
fn check_single_antenna_reduction(seed: u64) -> Result<Check> {
    let cfg = SystemConfig::default();
    let geom = ArrayGeometry::single();
    let grid = SearchGrid::new(cfg.alias_period(), 4096, cfg.subcarriers)?;
    let (csi, r, sc) = synchronized_cpi(&cfg, seed, true)?;
    let one = modified_music_spectrum(&csi, &r, &geom, &[0.0], &grid)?;
    let axis = aoa_axis(7, 1.0);
    let two = modified_music_spectrum(&csi, &r, &geom, &axis, &grid)?;
    let mut ok = (0..axis.len()).all(|a| two.row(a) == one.values.as_slice());
    ok &= pick_peaks(&one, 1)?.peaks[0].delay == pick_peaks(&two, 1)?.peaks[0].delay;
    ok &= [-1.0, 0.0, 0.7].iter().all(|&th| steering_vector_mimo(&cfg, &geom, th, 37e-9).is_ok_and(|v| v == steering_vector(&cfg, 37e-9)));
    let flat = estimate_cgs(&csi, &true_peaks(&sc), &geom, &cfg)?;
    let turned: Vec<Peak> = true_peaks(&sc).into_iter().map(|p| Peak { aoa: 0.9, ..p }).collect();
    let tilted = estimate_cgs(&csi, &turned, &geom, &cfg)?;
    ok &= flat.targets.iter().zip(&tilted.targets).all(|(a, b)| a.cgs == b.cgs);
    Ok(Check::new(ok, "M = 1 reduction of spectrum, steering and CGS"))
}

fn check_determinism(seed: u64) -> Result<Check> {
    let cfg = ExperimentConfig {
        seed,
        trials: 2,
        snr_db: vec![20.0],
        tau_sep_m: vec![1.5],
        system: SystemConfig {
            snapshots: 40,
            ..SystemConfig::default()
        },
        warmup_snapshots: 16,
        ..ExperimentConfig::default()
    };
    let base = std::env::temp_dir().join(format!("ascsense-determinism-{}-{seed}", std::process::id()));
    let mut files = Vec::new();
    for workers in [1, 2] {
        let table: MetricTable = run_sweep(&ExperimentConfig { workers, ..cfg.clone() })?;
        let dir = base.join(workers.to_string());
        let p = emit_outputs(&table, &dir)?;
        let read = |path: &std::path::Path| std::fs::read(path).map_err(|e| crate::Error::io(path, e));
        files.push([read(&p.trials)?, read(&p.targets)?, read(&p.delay_error)?, read(&p.cgs)?]);
    }
    let _ = std::fs::remove_dir_all(&base);
    Ok(Check::new(files[0] == files[1], "same seed gives byte-identical CSV (1 vs 2 workers)"))
}

/// Criterion 7: the always-on property suite.
pub fn criterion_7(opts: &AcceptanceOptions) -> CriterionReport {
    let start = Instant::now();
    let s = opts.seed ^ 0xC7;
    let checks = [
        check_shift_equivariance(s),
        check_projectors(s + 1),
        check_mdl(s + 2),
        check_likelihood_oracles(s + 3),
        check_cgs_structure(s + 4),
        check_po_invariance(s + 5),
        check_single_antenna_reduction(s + 6),
        check_determinism(s + 7),
    ]
    .into_iter()
    .map(|c| c.unwrap_or_else(|e| Check::new(false, format!("error: {e}"))))
    .collect();
    report(7, "property suite", start, checks)
}

pub fn mimo_config(opts: &AcceptanceOptions) -> ExperimentConfig {
    let per_snr = opts.mimo_trials.div_ceil(MIMO_SNR_DB.len()).max(1);
    let mut cfg = ExperimentConfig {
        seed: opts.seed,
        trials: per_snr,
        workers: opts.workers,
        methods: vec![Method::PropSub],
        snr_db: MIMO_SNR_DB.to_vec(),
        tau_sep_m: vec![MIMO_SEPARATION_M],
        ..ExperimentConfig::default()
    };
    cfg.system.antennas = 3;
    cfg.scenario.target_aoas_rad = Some(MIMO_TARGET_AOAS_RAD);
    cfg
}

/// Per-axis resolution of two targets that share a delay cell: each target
/// needs a matched estimate within half the AoA separation in angle and
/// within half the delay resolution `c/(2B)` in relative range.
pub fn mimo_resolved(table: &MetricTable, cfg: &ExperimentConfig) -> Vec<bool> {
    let (a, b) = MIMO_TARGET_AOAS_RAD;
    let half_aoa = 0.5 * (b - a).abs();
    let half_cell_m = 0.5 * SPEED_OF_LIGHT / cfg.system.bandwidth();
    table
        .trials
        .iter()
        .map(|row| {
            let targets: Vec<_> = table
                .targets
                .iter()
                .filter(|t| t.point == row.point && t.trial == row.trial && t.method == row.method)
                .collect();
            targets.len() == 2
                && !row.flags.contains("shortfall")
                && targets.iter().all(|t| {
                    t.est_aoa_rad.is_some_and(|e| (e - t.true_aoa_rad).abs() < half_aoa) && t.rel_delay_err_m < half_cell_m
                })
        })
        .collect()
}

/// Criterion 8: a three-element array separates two targets at (nearly)
/// the same delay by angle.
pub fn criterion_8(opts: &AcceptanceOptions) -> CriterionReport {
    const TITLE: &str = "MIMO joint delay-AoA smoke";
    let start = Instant::now();
    let cfg = mimo_config(opts);
    debug_assert!(range_to_delay(MIMO_SEPARATION_M) < 1.0 / cfg.system.bandwidth());
    let table = match run_sweep(&cfg) {
        Ok(t) => t,
        Err(e) => return failed(8, TITLE, start, "sweep", e),
    };
    let resolved = mimo_resolved(&table, &cfg);
    let p = resolved.iter().filter(|r| **r).count() as f64 / resolved.len().max(1) as f64;
    let checks = vec![Check::new(
        !resolved.is_empty() && p >= MIMO_RESOLUTION_MIN,
        format!("{} P_res {p:.3} over {} trials >= {MIMO_RESOLUTION_MIN}", Method::PropSub, resolved.len()),
    )];
    report(8, TITLE, start, checks)
}

/// Runs every criterion in order.
pub fn run_all(opts: &AcceptanceOptions) -> Vec<CriterionReport> {
    let first = criterion_1(opts);
    let sweep = accuracy_sweep(opts);
    vec![
        first,
        criterion_2(&sweep),
        criterion_3(&sweep),
        criterion_4(&sweep),
        criterion_5(opts),
        criterion_6(&sweep),
        criterion_7(opts),
        criterion_8(opts),
    ]
}
