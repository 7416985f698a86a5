//! Arithmetic on the delay circle `[0, period)`.
//!
//! A time offset is only observable modulo the alias period `1/Δf`, so every
//! comparison between delays goes through these helpers.

use std::f64::consts::TAU;

/// Maps `x` into `[0, period)`.
pub fn wrap_positive(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    // rem_euclid can round up to exactly `period` for tiny negative inputs.
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Maps `x` into `[−period/2, period/2)`.
pub fn wrap_symmetric(x: f64, period: f64) -> f64 {
    let r = wrap_positive(x + 0.5 * period, period) - 0.5 * period;
    if r >= 0.5 * period {
        r - period
    } else {
        r
    }
}

/// Shortest distance between two points on the circle, in `[0, period/2]`.
pub fn circular_distance(a: f64, b: f64, period: f64) -> f64 {
    wrap_symmetric(a - b, period).abs()
}

/// Mean direction of `values` on the circle, in `[0, period)`.
///
/// Returns 0 for an empty slice or a resultant of zero length.
pub fn circular_mean(values: &[f64], period: f64) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for &v in values {
        let ang = TAU * v / period;
        s += ang.sin();
        c += ang.cos();
    }
    if s == 0.0 && c == 0.0 {
        return 0.0;
    }
    wrap_positive(s.atan2(c) / TAU * period, period)
}
