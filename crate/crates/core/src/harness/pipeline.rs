//! The estimation chain without ground truth, as run on a recorded stream.

use super::{ExperimentConfig, Method};
use crate::baselines::align_baseline;
use crate::estimation::{aoa_axis, estimate_cgs, estimate_target_count, modified_music_spectrum, pick_peaks, Peak, TargetEstimates};
use crate::numerics::SearchGrid;
use crate::residual::{estimate_to_residual, ReferenceStaticResponse};
use crate::signal_model::{ArrayGeometry, CsiMatrix, Stage, SystemConfig};
use crate::to_alignment::align_stream;
use crate::{Error, Result, C64};
use nalgebra::DMatrix;

/// Last `n` columns.
pub(crate) fn tail_columns(m: &DMatrix<C64>, n: usize) -> DMatrix<C64> {
    m.columns(m.ncols() - n, n).into_owned()
}

/// AoA search axis of an experiment: `[0]` for one antenna, otherwise wide
/// enough to hold pinned target angles.
pub fn aoa_grid(config: &ExperimentConfig) -> Vec<f64> {
    if config.system.antennas > 1 {
        let fixed = config.scenario.target_aoas_rad.map_or(0.0, |(a, b)| a.abs().max(b.abs()));
        aoa_axis(config.aoa_points, config.scenario.aoa_span_rad.max(fixed))
    } else {
        vec![0.0]
    }
}

/// Compensated CPI of one method plus its TO estimates.
pub struct Processed {
    pub csi: CsiMatrix,
    /// `Δτ̂_t` over the CPI and `τ̂_r`; `None` for the synchronized oracle.
    pub tos: Option<(Vec<f64>, f64)>,
    pub degenerate_steps: usize,
}

/// Aligns the whole raw `stream` with an asynchronous method and
/// compensates the TO residual of its last `cfg.snapshots` columns.
pub fn align_and_compensate(
    stream: &CsiMatrix,
    cfg: &SystemConfig,
    method: Method,
    window_len: usize,
    grid: &SearchGrid,
    reference: &ReferenceStaticResponse,
) -> Result<Processed> {
    let t = cfg.snapshots;
    if stream.snapshots() < t {
        return Err(Error::dim(format!("stream has {} snapshots, the CPI needs {t}", stream.snapshots())));
    }
    let stream_cfg = SystemConfig {
        snapshots: stream.snapshots(),
        ..cfg.clone()
    };
    let aligned = match (method.align_method(), method.baseline()) {
        (Some(m), _) => align_stream(stream, &stream_cfg, m, window_len, grid)?,
        (_, Some(b)) => align_baseline(b, stream, &stream_cfg, grid)?,
        _ => return Err(Error::InvalidConfig(format!("{method} has no alignment step"))),
    };
    let skip = stream.snapshots() - t;
    let raw = CsiMatrix::raw(tail_columns(stream.data(), t), cfg.antennas, cfg.subcarriers)?;
    let cpi = raw.advance(tail_columns(aligned.csi.data(), t), Stage::Aligned)?;
    let comp = estimate_to_residual(&cpi, reference, grid)?;
    Ok(Processed {
        csi: comp.csi,
        tos: Some((aligned.relative_to[skip..].to_vec(), comp.residual_to)),
        degenerate_steps: aligned.degenerate[skip..].iter().filter(|d| **d).count(),
    })
}

/// Estimates of one method on one stream.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub method: Method,
    /// `Δτ̂_t` over the CPI, s.
    pub relative_to: Vec<f64>,
    /// `τ̂_r`, s.
    pub residual_to: f64,
    pub peaks: Vec<Peak>,
    pub shortfall: bool,
    pub cgs: TargetEstimates,
}

/// Runs alignment, residual compensation, the modified MUSIC spectrum,
/// peak picking and CGS recovery on a raw stream whose last
/// `config.system.snapshots` columns are the CPI. `targets = None` selects
/// the target count by MDL.
pub fn run_pipeline(
    stream: &CsiMatrix,
    config: &ExperimentConfig,
    method: Method,
    reference: &ReferenceStaticResponse,
    targets: Option<usize>,
) -> Result<PipelineOutput> {
    let cfg = &config.system;
    let geom = ArrayGeometry::for_config(cfg);
    let grid = SearchGrid::new(cfg.alias_period(), config.grid_size, cfg.subcarriers)?;
    let p = align_and_compensate(stream, cfg, method, config.window_len, &grid, reference)?;
    let count = match targets {
        Some(n) => n,
        None => estimate_target_count(&p.csi)?,
    };
    let spectrum = modified_music_spectrum(&p.csi, reference, &geom, &aoa_grid(config), &grid)?;
    let peaks = pick_peaks(&spectrum, count.max(1))?;
    let cgs = estimate_cgs(&p.csi, &peaks.peaks, &geom, cfg)?;
    let (relative_to, residual_to) = p.tos.expect("asynchronous methods estimate TOs");
    Ok(PipelineOutput {
        method,
        relative_to,
        residual_to,
        peaks: peaks.peaks,
        shortfall: peaks.shortfall,
        cgs,
    })
}
