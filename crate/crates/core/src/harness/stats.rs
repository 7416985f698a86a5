//! Aggregates over the tidy tables.

use super::{Method, MetricTable};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Quantile `p` of ascending `sorted` values, linear between order
/// statistics. Infinite values (failures) sort last and propagate.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        return Some(a);
    }
    // Strictly between two order statistics an infinite end dominates.
    if a.is_infinite() {
        return Some(a);
    }
    if b.is_infinite() {
        return Some(b);
    }
    Some(a + (b - a) * (pos - lo as f64))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
}

impl Quartiles {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        v.sort_by(f64::total_cmp);
        Self {
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
        }
    }
}

/// Statistics of one (point, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub point: usize,
    pub method: Method,
    pub snr_db: f64,
    pub dyn_proportion: f64,
    pub tau_sep_m: Option<f64>,
    pub trials: usize,
    /// Rows whose flags carry an `error=` marker.
    pub failures: usize,
    pub rel_to_err_m: Quartiles,
    pub abs_to_err_m: Quartiles,
    /// Pooled over targets.
    pub rel_delay_err_m: Quartiles,
    pub abs_delay_err_m: Quartiles,
    pub gamma_beta_db: Quartiles,
    pub gamma_ideal_db: Quartiles,
    pub resolution_probability: Option<f64>,
}

/// One row per (point, method) present in the table, in canonical order.
pub fn aggregate(table: &MetricTable) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<(usize, Method), AggregateRow> = BTreeMap::new();
    let mut to: BTreeMap<(usize, Method), (Vec<f64>, Vec<f64>, usize, usize)> = BTreeMap::new();
    for r in &table.trials {
        let key = (r.point, r.method);
        let cell = cells.entry(key).or_insert_with(|| AggregateRow {
            point: r.point,
            method: r.method,
            snr_db: r.snr_db,
            dyn_proportion: r.dyn_proportion,
            tau_sep_m: r.tau_sep_m,
            trials: 0,
            failures: 0,
            rel_to_err_m: Quartiles::default(),
            abs_to_err_m: Quartiles::default(),
            rel_delay_err_m: Quartiles::default(),
            abs_delay_err_m: Quartiles::default(),
            gamma_beta_db: Quartiles::default(),
            gamma_ideal_db: Quartiles::default(),
            resolution_probability: None,
        });
        cell.trials += 1;
        if r.flags.split(';').any(|f| f.starts_with("error=")) {
            cell.failures += 1;
        }
        let acc = to.entry(key).or_default();
        acc.0.extend(r.rel_to_err_m);
        acc.1.extend(r.abs_to_err_m);
        if let Some(ok) = r.resolved {
            acc.2 += ok as usize;
            acc.3 += 1;
        }
    }
    let mut per_target: BTreeMap<(usize, Method), [Vec<f64>; 4]> = BTreeMap::new();
    for t in &table.targets {
        let acc = per_target.entry((t.point, t.method)).or_default();
        acc[0].push(t.rel_delay_err_m);
        acc[1].push(t.abs_delay_err_m);
        acc[2].push(t.gamma_beta_db);
        acc[3].push(t.gamma_ideal_db);
    }
    for (key, cell) in cells.iter_mut() {
        if let Some((rel, abs, hits, judged)) = to.remove(key) {
            cell.rel_to_err_m = Quartiles::of(rel);
            cell.abs_to_err_m = Quartiles::of(abs);
            if judged > 0 {
                cell.resolution_probability = Some(hits as f64 / judged as f64);
            }
        }
        if let Some([rel, abs, gb, gi]) = per_target.remove(key) {
            cell.rel_delay_err_m = Quartiles::of(rel);
            cell.abs_delay_err_m = Quartiles::of(abs);
            cell.gamma_beta_db = Quartiles::of(gb);
            cell.gamma_ideal_db = Quartiles::of(gi);
        }
    }
    cells.into_values().collect()
}
