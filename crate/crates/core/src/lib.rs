//! Bi-static OFDM sensing with unsynchronized clocks.
//!
//! The pipeline removes per-snapshot timing offsets by subspace alignment
//! ([`to_alignment`]), pins the remaining common offset with a calibrated
//! static response ([`residual`]), then estimates target delays, angles and
//! complex gain sequences with a static-suppressing MUSIC ([`estimation`]).
//! [`harness`] runs Monte Carlo sweeps against the [`baselines`] and a
//! synchronized oracle; [`acceptance`] holds the pinned acceptance checks.
//!
//! The guide in `book/` walks through each stage; its code blocks are
//! compiled and run as doctests of this crate.

pub use nalgebra::Complex;

/// Complex baseband sample.
pub type C64 = Complex<f64>;

pub mod acceptance;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod estimation;
pub mod io;
pub mod numerics;
pub mod oracle;
pub mod residual;
pub mod rng;
pub mod signal_model;
pub mod to_alignment;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

/// Chapters of the guide, compiled as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/signal-model.md")]
    pub struct SignalModel;
    #[doc = include_str!("../../../book/src/to-alignment.md")]
    pub struct ToAlignment;
    #[doc = include_str!("../../../book/src/residual.md")]
    pub struct Residual;
    #[doc = include_str!("../../../book/src/estimation.md")]
    pub struct Estimation;
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub struct Baselines;
    #[doc = include_str!("../../../book/src/harness.md")]
    pub struct Harness;
    #[doc = include_str!("../../../book/src/acceptance.md")]
    pub struct Acceptance;
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
}
