use super::*;
use crate::numerics::circular_distance;
use crate::signal_model::{
    random_scenario, synthesize_cpi, ArrayGeometry, DynamicPathSet, OffsetLaw, OffsetSequence, ScenarioSpec, StaticPathSet,
};
use proptest::prelude::*;

fn grid(c: &SystemConfig) -> SearchGrid {
    SearchGrid::new(c.alias_period(), 4096, c.subcarriers).unwrap()
}

/// Noiseless static-only CPI with the given offsets.
fn static_stream(c: &SystemConfig, seed: u64, offsets: &OffsetSequence) -> (CsiMatrix, StaticPathSet) {
    let geom = ArrayGeometry::for_config(c);
    let loud = SystemConfig { noise_power: 1.0, ..c.clone() };
    let sc = random_scenario(&loud, &geom, &ScenarioSpec::default(), seed).unwrap();
    let quiet = SystemConfig { noise_power: 0.0, ..c.clone() };
    let csi = synthesize_cpi(&quiet, &geom, &sc.statics, &DynamicPathSet::default(), offsets, seed).unwrap();
    (csi, sc.statics)
}

fn offsets(c: &SystemConfig, seed: u64) -> OffsetSequence {
    let geom = ArrayGeometry::for_config(c);
    let spec = ScenarioSpec {
        offsets: OffsetLaw::Uniform,
        ..ScenarioSpec::default()
    };
    let loud = SystemConfig { noise_power: 1.0, ..c.clone() };
    random_scenario(&loud, &geom, &spec, seed ^ 0x55).unwrap().offsets
}

fn small(antennas: usize) -> SystemConfig {
    SystemConfig {
        antennas,
        snapshots: 20,
        ..SystemConfig::default()
    }
}

#[test]
fn zero_offsets_give_identity() {
    let c = small(1);
    let g = grid(&c);
    let (csi, _) = static_stream(&c, 1, &OffsetSequence::zeros(c.snapshots));
    for kind in BaselineKind::ALL {
        let out = align_baseline(kind, &csi, &c, &g).unwrap();
        assert!(out.relative_to.iter().all(|t| t.abs() <= g.step()), "{kind:?}: {:?}", out.relative_to);
        assert_eq!(out.csi.stage(), Stage::Aligned);
    }
}

#[test]
fn static_only_offsets_are_recovered() {
    for m in [1, 3] {
        let c = small(m);
        let g = grid(&c);
        let o = offsets(&c, 2);
        let (csi, _) = static_stream(&c, 3, &o);
        for kind in BaselineKind::ALL {
            let out = align_baseline(kind, &csi, &c, &g).unwrap();
            for t in 0..c.snapshots {
                let want = o.to[t] - o.to[0];
                let err = circular_distance(out.relative_to[t], want, c.alias_period());
                assert!(err <= g.step(), "{kind:?} M={m} t={t}: {err:e}");
            }
        }
    }
}

#[test]
fn phase_removing_baselines_leave_identical_columns() {
    let c = small(1);
    let g = grid(&c);
    let o = offsets(&c, 4);
    let (csi, _) = static_stream(&c, 5, &o);
    for kind in [BaselineKind::Similarity, BaselineKind::IfftPeak] {
        let out = align_baseline(kind, &csi, &c, &g).unwrap();
        let d = out.csi.data();
        let first = d.column(0);
        let worst = (1..c.snapshots).map(|t| (d.column(t) - first).norm() / first.norm()).fold(0.0, f64::max);
        // One grid step of TO leaves a phase ramp of at most 2π·K/N_g.
        assert!(worst < 0.06, "{kind:?}: {worst}");
    }
}

#[test]
fn wrong_stage_is_rejected() {
    let c = small(1);
    let g = grid(&c);
    let (csi, _) = static_stream(&c, 1, &OffsetSequence::zeros(c.snapshots));
    let synced = csi.assume_synchronized();
    assert!(matches!(align_similarity(&synced, &c, &g), Err(Error::Stage { .. })));
}

#[test]
fn labels_are_distinct() {
    let labels: Vec<&str> = BaselineKind::ALL.iter().map(|k| k.label()).collect();
    assert_eq!(labels, ["simil", "evlp", "ifft"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// An extra TO on one snapshot of a static-only stream moves that
    /// snapshot's estimate by the same amount.
    #[test]
    fn shift_equivariance(seed in 0u64..1000, delta in -150e-9f64..150e-9, kind in 0usize..3) {
        let c = SystemConfig { snapshots: 6, ..SystemConfig::default() };
        let g = grid(&c);
        let o = offsets(&c, seed);
        let mut shifted = o.clone();
        shifted.to[3] += delta;
        let (a, _) = static_stream(&c, seed, &o);
        let (b, _) = static_stream(&c, seed, &shifted);
        let kind = BaselineKind::ALL[kind];
        let ra = align_baseline(kind, &a, &c, &g).unwrap().relative_to;
        let rb = align_baseline(kind, &b, &c, &g).unwrap().relative_to;
        prop_assert!(circular_distance(rb[3] - ra[3], delta, c.alias_period()) <= g.step());
    }
}
