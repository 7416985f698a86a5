use super::*;
use crate::numerics::circular_distance;
use crate::rng::rng_from_seed;
use crate::signal_model::{
    random_scenario, synthesize_bidirectional, synthesize_cpi, ArrayGeometry, ClockErrorLaw, DynamicPath,
    DynamicPathSet, OffsetSequence, ScenarioSpec, StaticPathSet,
};
use crate::testutil::cn;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::PI;

fn cfg(noise_power: f64) -> SystemConfig {
    SystemConfig {
        noise_power,
        ..SystemConfig::default()
    }
}

fn grid(cfg: &SystemConfig) -> SearchGrid {
    SearchGrid::new(cfg.alias_period(), 4096, cfg.subcarriers).unwrap()
}

fn statics() -> StaticPathSet {
    StaticPathSet {
        delays: vec![20e-9, 46e-9, 83e-9],
        gains: vec![C64::new(3.0, 1.0), C64::new(-1.0, 1.5), C64::new(0.4, -0.8)],
        aoas: None,
    }
}

fn hs(cfg: &SystemConfig) -> DVector<C64> {
    statics().merged_response(cfg, &ArrayGeometry::for_config(cfg)).unwrap()
}

fn alignment(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    a.dotc(b).norm() / (a.norm() * b.norm())
}

/// Delay `δ` with `r ∝ diag(a(δ)) h`, by maximizing the correlation.
fn delay_between(cfg: &SystemConfig, h: &DVector<C64>, r: &DVector<C64>) -> f64 {
    let k = cfg.subcarriers;
    let prod: Vec<C64> = (0..h.len()).map(|i| h[i] * r[i].conj()).collect();
    let folded: Vec<C64> = (0..k).map(|kk| prod.iter().skip(kk).step_by(k).sum()).collect();
    let f = |d: f64| similarity_at(&folded, cfg.subcarrier_spacing_hz, -d);
    let step = cfg.alias_period() / 4096.0;
    let vals: Vec<f64> = (0..4096).map(|n| f(n as f64 * step)).collect();
    let best = argmax(&vals) as f64 * step;
    crate::numerics::wrap_symmetric(golden_max(f, best - step, best + step), cfg.alias_period())
}

fn aligned_cpi(cfg: &SystemConfig, dynamics: &DynamicPathSet, residual: f64, seed: u64) -> CsiMatrix {
    let mut rng = rng_from_seed(seed);
    let offsets = OffsetSequence {
        to: vec![residual; cfg.snapshots],
        po: (0..cfg.snapshots).map(|_| rng.random_range(-PI..PI)).collect(),
    };
    let raw = synthesize_cpi(cfg, &ArrayGeometry::for_config(cfg), &statics(), dynamics, &offsets, seed).unwrap();
    let data = raw.data().clone();
    raw.advance(data, Stage::Aligned).unwrap()
}

fn one_target(cfg: &SystemConfig, seed: u64) -> DynamicPathSet {
    let mut rng = rng_from_seed(seed);
    DynamicPathSet {
        paths: vec![DynamicPath {
            delay: 55e-9,
            delay_rate: 0.0,
            aoa: 0.0,
            cgs: (0..cfg.snapshots).map(|_| cn(&mut rng) * 2.0).collect(),
        }],
    }
}

fn true_reference(cfg: &SystemConfig) -> ReferenceStaticResponse {
    ReferenceStaticResponse::new(hs(cfg), cfg.antennas, cfg.subcarriers, ReferenceOrigin::Calibrated { clock_error: 0.0 }).unwrap()
}

#[test]
fn noiseless_calibration_is_ideal() {
    let c = cfg(0.0);
    let trace = synthesize_bidirectional(&c, &ArrayGeometry::single(), &statics(), 40, 0.0, ClockErrorLaw::Constant { offset_s: 0.0 }, 5).unwrap();
    let acq = acquire_reference(&trace, &c, &grid(&c), &CalibrationOptions::default()).unwrap();
    let a = alignment(acq.reference.response(), &hs(&c));
    assert!(a >= 1.0 - 1e-9, "alignment {a}");
    assert!((acq.reference.response().norm() - 1.0).abs() < 1e-12);
    assert!(acq.reference.clock_error().unwrap().abs() < 1e-12);
}

#[test]
fn recovers_injected_clock_error() {
    let c = cfg(0.0);
    let trace = synthesize_bidirectional(&c, &ArrayGeometry::single(), &statics(), 40, 0.0, ClockErrorLaw::Constant { offset_s: 5e-9 }, 6).unwrap();
    let acq = acquire_reference(&trace, &c, &grid(&c), &CalibrationOptions::default()).unwrap();
    let dc = acq.reference.clock_error().unwrap();
    assert!((dc - 5e-9).abs() < 0.05e-9, "Δτ̂_C = {dc}");
    assert!(alignment(acq.reference.response(), &hs(&c)) >= 1.0 - 1e-9);
}

#[test]
fn mimo_calibration_uses_all_antennas() {
    let c = SystemConfig {
        antennas: 3,
        noise_power: 0.0,
        ..SystemConfig::default()
    };
    let geom = ArrayGeometry::for_config(&c);
    let st = StaticPathSet {
        aoas: Some(vec![0.2, -0.5, 0.9]),
        ..statics()
    };
    let trace = synthesize_bidirectional(&c, &geom, &st, 40, 0.0, ClockErrorLaw::Constant { offset_s: -12e-9 }, 8).unwrap();
    let acq = acquire_reference(&trace, &c, &grid(&c), &CalibrationOptions::default()).unwrap();
    assert_eq!(acq.reference.response().len(), 96);
    let truth = st.merged_response(&c, &geom).unwrap();
    assert!(alignment(acq.reference.response(), &truth) >= 1.0 - 1e-9);
    assert!((acq.reference.clock_error().unwrap() + 12e-9).abs() < 0.05e-9);
}

#[test]
fn swapping_sides_gives_the_same_reference() {
    let c = cfg(0.0);
    let trace = synthesize_bidirectional(&c, &ArrayGeometry::single(), &statics(), 40, 0.0, ClockErrorLaw::Constant { offset_s: 3e-9 }, 9).unwrap();
    let g = grid(&c);
    let opts = CalibrationOptions::default();
    let a = acquire_reference(&trace, &c, &g, &opts).unwrap();
    let b = acquire_reference(&trace.swapped().unwrap(), &c, &g, &opts).unwrap();
    assert!(alignment(a.reference.response(), b.reference.response()) >= 1.0 - 1e-9);
    assert!((a.reference.clock_error().unwrap() + b.reference.clock_error().unwrap()).abs() < 0.01e-9);
}

#[test]
fn timestamp_noise_costs_centimeters() {
    let c = cfg(1.0);
    let geom = ArrayGeometry::single();
    // Dynamic-free: all signal power goes to the statics.
    let spec = ScenarioSpec {
        dynamic_paths: 0,
        dyn_proportion: 1e-6,
        snr_db: 25.0,
        ..ScenarioSpec::default()
    };
    let g = grid(&c);
    let mut errs = Vec::new();
    for trial in 0..60u64 {
        let sc = random_scenario(&c, &geom, &spec, trial).unwrap();
        let trace = synthesize_bidirectional(&c, &geom, &sc.statics, 100, 2.5e-9, ClockErrorLaw::Constant { offset_s: 20e-9 }, 1000 + trial).unwrap();
        let acq = acquire_reference(&trace, &c, &g, &CalibrationOptions::default()).unwrap();
        let truth = sc.statics.merged_response(&c, &geom).unwrap();
        errs.push(delay_between(&c, &truth, acq.reference.response()).abs());
    }
    errs.sort_by(f64::total_cmp);
    let median_m = crate::signal_model::delay_to_range(errs[errs.len() / 2]);
    assert!(median_m <= 0.1, "median reference delay error {median_m} m");
}

#[test]
fn rejects_short_and_non_reciprocal_traces() {
    let c = cfg(0.0);
    let g = grid(&c);
    let opts = CalibrationOptions::default();
    let mut trace = synthesize_bidirectional(&c, &ArrayGeometry::single(), &statics(), 40, 0.0, ClockErrorLaw::Constant { offset_s: 0.0 }, 1).unwrap();
    let mut short = trace.clone();
    short.exchanges.truncate(10);
    assert!(matches!(acquire_reference(&short, &c, &g, &opts), Err(Error::TraceTooShort { got: 10, need: 32 })));
    // Energy on one subcarrier only: the reciprocity product has no delay dependence.
    trace.ue_snapshots.fill(C64::new(0.0, 0.0));
    trace.ue_snapshots.row_mut(0).fill(C64::new(1.0, 0.0));
    assert!(matches!(acquire_reference(&trace, &c, &g, &opts), Err(Error::FlatSimilarity)));
}

#[test]
fn residual_zero_and_seven_ns() {
    let c = cfg(0.0);
    let g = grid(&c);
    let reference = true_reference(&c);
    for (residual, tol) in [(0.0, g.step()), (7e-9, 0.05e-9)] {
        let cpi = aligned_cpi(&c, &one_target(&c, 3), residual, 11);
        let out = estimate_to_residual(&cpi, &reference, &g).unwrap();
        let err = circular_distance(out.residual_to, residual, c.alias_period());
        assert!(err <= tol, "residual {residual}: got {} (err {err})", out.residual_to);
        assert_eq!(out.csi.stage(), Stage::Compensated);
        assert!(out.residual_to >= 0.0 && out.residual_to < c.alias_period());
        // The compensated static component is h_s again: P_n of H_C kills it.
        let p = out.subspace.noise_projector();
        assert!((p * hs(&c)).norm() < 1e-6 * hs(&c).norm());
    }
}

#[test]
fn compensated_cpis_share_the_reference_delay() {
    let c = cfg(1.0);
    let g = grid(&c);
    let spec = ScenarioSpec::default();
    let geom = ArrayGeometry::single();
    let sc = random_scenario(&c, &geom, &spec, 77).unwrap();
    let reference = ReferenceStaticResponse::new(
        sc.statics.merged_response(&c, &geom).unwrap(),
        1,
        c.subcarriers,
        ReferenceOrigin::Calibrated { clock_error: 0.0 },
    )
    .unwrap();
    let mut errs = Vec::new();
    for (i, residual) in [12e-9, 301e-9].into_iter().enumerate() {
        let offsets = OffsetSequence {
            to: vec![residual; c.snapshots],
            po: vec![0.3; c.snapshots],
        };
        let raw = synthesize_cpi(&c, &geom, &sc.statics, &sc.dynamics, &offsets, 500 + i as u64).unwrap();
        let data = raw.data().clone();
        let out = estimate_to_residual(&raw.advance(data, Stage::Aligned).unwrap(), &reference, &g).unwrap();
        errs.push(crate::numerics::wrap_symmetric(out.residual_to - residual, c.alias_period()));
    }
    assert!((errs[0] - errs[1]).abs() <= 2.0 * g.step(), "{errs:?}");
}

#[test]
fn alternative_reference_is_shifted_static_response() {
    let c = cfg(0.0);
    let cpi = aligned_cpi(&c, &DynamicPathSet::default(), 33e-9, 4);
    let alt = alternative_reference(&cpi).unwrap();
    assert!(alt.is_alternative());
    let shifted = {
        let mut m = DMatrix::from_column_slice(32, 1, hs(&c).as_slice());
        compensate_delay(&mut m, 32, c.subcarrier_spacing_hz, -33e-9);
        DVector::from_column_slice(m.as_slice())
    };
    assert!(alignment(alt.response(), &shifted) >= 1.0 - 1e-9);

    // Residuals against it are relative to the calibration CPI's shift.
    let g = grid(&c);
    let later = aligned_cpi(&c, &one_target(&c, 2), 90e-9, 5);
    let out = estimate_to_residual(&later, &alt, &g).unwrap();
    assert!(circular_distance(out.residual_to, 57e-9, c.alias_period()) < 0.05e-9, "{}", out.residual_to);
}

#[test]
fn alternative_reference_rejects_dynamic_paths() {
    let c = cfg(0.0);
    let mut dynamics = one_target(&c, 6);
    for b in &mut dynamics.paths[0].cgs {
        *b *= 3.0;
    }
    let cpi = aligned_cpi(&c, &dynamics, 0.0, 6);
    assert!(matches!(alternative_reference(&cpi), Err(Error::Contaminated { .. })));
    let raw = synthesize_cpi(&c, &ArrayGeometry::single(), &statics(), &DynamicPathSet::default(), &OffsetSequence::zeros(100), 1).unwrap();
    assert!(matches!(alternative_reference(&raw), Err(Error::Stage { .. })));
}

#[test]
fn blob_round_trip() {
    let c = cfg(0.0);
    let mut r = true_reference(&c);
    r.exchanges = 100;
    r.timestamp_noise_std = 2.5e-9;
    r.origin = ReferenceOrigin::Calibrated { clock_error: 4.2e-9 };
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ref.bin");
    r.save(&p).unwrap();
    assert_eq!(ReferenceStaticResponse::load(&p).unwrap(), r);
    let alt = ReferenceStaticResponse { origin: ReferenceOrigin::Alternative, ..r };
    let bytes = alt.encode().unwrap();
    assert_eq!(&bytes[..4], b"ASRF");
    assert_eq!(ReferenceStaticResponse::decode(&bytes, &p).unwrap(), alt);
    assert!(matches!(ReferenceStaticResponse::decode(&bytes[..20], &p), Err(Error::Format { .. })));
}

#[test]
fn mismatched_shapes_are_rejected() {
    let c = cfg(0.0);
    let cpi = aligned_cpi(&c, &DynamicPathSet::default(), 0.0, 1);
    let r = ReferenceStaticResponse::new(DVector::from_element(64, C64::new(1.0, 0.0)), 2, 32, ReferenceOrigin::Alternative).unwrap();
    assert!(matches!(estimate_to_residual(&cpi, &r, &grid(&c)), Err(Error::Dimension(_))));
    let data = cpi.data().clone();
    let comp = cpi.advance(data, Stage::Compensated).unwrap();
    assert!(matches!(estimate_to_residual(&comp, &true_reference(&c), &grid(&c)), Err(Error::Stage { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn residual_is_shift_equivariant(delta in 0.0f64..400e-9, seed in 0u64..1000) {
        let c = cfg(1.0);
        let g = grid(&c);
        let geom = ArrayGeometry::single();
        let sc = random_scenario(&c, &geom, &ScenarioSpec { snr_db: 30.0, ..ScenarioSpec::default() }, seed).unwrap();
        let reference = ReferenceStaticResponse::new(
            sc.statics.merged_response(&c, &geom).unwrap(), 1, 32, ReferenceOrigin::Calibrated { clock_error: 0.0 }).unwrap();
        let base = 10e-9;
        let offsets = OffsetSequence { to: vec![base; 100], po: vec![0.0; 100] };
        let raw = synthesize_cpi(&c, &geom, &sc.statics, &sc.dynamics, &offsets, seed).unwrap();
        let a = raw.advance(raw.data().clone(), Stage::Aligned).unwrap();
        let mut shifted = raw.data().clone();
        compensate_delay(&mut shifted, 32, c.subcarrier_spacing_hz, -delta);
        let b = raw.advance(shifted, Stage::Aligned).unwrap();
        let ra = estimate_to_residual(&a, &reference, &g).unwrap().residual_to;
        let rb = estimate_to_residual(&b, &reference, &g).unwrap().residual_to;
        let d = circular_distance(rb - ra, delta, c.alias_period());
        prop_assert!(d <= g.step(), "shift {delta}: {ra} -> {rb}");
    }
}
