//! Bidirectional calibration exchanges between the BS and the UE.
//!
//! The BS clock is the time reference; the UE clock reads `true − Δτ_C`.
//! In exchange `t` the BS transmits, the UE detects the packet boundary
//! `d_UE` seconds later and measures `h_UE`; after a turnaround the UE
//! transmits and the BS detects it `d_BS` seconds later and measures `h_BS`.
//! The detection delays are the true time offsets of the two snapshots:
//!
//! ```text
//! τ_o^BS = τ^{BS,R} − τ^{UE,T} − Δτ_C = d_BS
//! τ_o^UE = τ^{UE,R} − τ^{BS,T} + Δτ_C = d_UE
//! ```

use super::{kron_steering, ArrayGeometry, StaticPathSet, SystemConfig};
use crate::rng::rng_from_seed;
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// UE turnaround between receiving and transmitting, s (UE clock).
const TURNAROUND_S: f64 = 100e-6;

/// Evolution of the clock error `Δτ_C,t` across exchanges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ClockErrorLaw {
    Constant { offset_s: f64 },
    /// `offset_s + rate·t·Δt`.
    Drift { offset_s: f64, rate: f64 },
}

impl ClockErrorLaw {
    pub fn at(&self, elapsed: f64) -> f64 {
        match *self {
            ClockErrorLaw::Constant { offset_s } => offset_s,
            ClockErrorLaw::Drift { offset_s, rate } => offset_s + rate * elapsed,
        }
    }
}

/// Recorded timestamps (with reading noise) and ground truth of one exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidirectionalExchange {
    pub bs_tx: f64,
    pub bs_rx: f64,
    pub ue_tx: f64,
    pub ue_rx: f64,
    /// True clock error of this exchange, s.
    pub clock_error: f64,
    /// True TO of the BS-side snapshot, s.
    pub to_bs: f64,
    /// True TO of the UE-side snapshot, s.
    pub to_ue: f64,
}

/// A calibration trace: exchanges plus the snapshots both sides measured.
#[derive(Debug, Clone, PartialEq)]
pub struct BidirectionalTrace {
    pub exchanges: Vec<BidirectionalExchange>,
    /// BS-side snapshots, `M·K × T_s`.
    pub bs_snapshots: DMatrix<C64>,
    /// UE-side snapshots (one antenna), `K × T_s`.
    pub ue_snapshots: DMatrix<C64>,
    pub timestamp_noise_std: f64,
    pub antennas: usize,
    pub subcarriers: usize,
}

impl BidirectionalTrace {
    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }

    /// Average true clock error over the trace.
    pub fn mean_clock_error(&self) -> f64 {
        self.exchanges.iter().map(|e| e.clock_error).sum::<f64>() / self.len().max(1) as f64
    }

    /// The same trace seen with the roles of the two devices exchanged.
    ///
    /// Only meaningful for a single BS antenna. The swapped trace has clock
    /// error `−Δτ_C`.
    pub fn swapped(&self) -> Result<Self> {
        if self.antennas != 1 {
            return Err(Error::dim("only single-antenna traces can be swapped"));
        }
        Ok(Self {
            exchanges: self
                .exchanges
                .iter()
                .map(|e| BidirectionalExchange {
                    bs_tx: e.ue_tx,
                    bs_rx: e.ue_rx,
                    ue_tx: e.bs_tx,
                    ue_rx: e.bs_rx,
                    clock_error: -e.clock_error,
                    to_bs: e.to_ue,
                    to_ue: e.to_bs,
                })
                .collect(),
            bs_snapshots: self.ue_snapshots.clone(),
            ue_snapshots: self.bs_snapshots.clone(),
            ..self.clone()
        })
    }
}

/// Simulates `exchanges` calibration rounds over a dynamic-free channel.
///
/// The UE sees the reciprocal of BS antenna 0's static response up to a
/// fixed complex scale. Both snapshot sets get independent random POs and
/// noise of power `cfg.noise_power`; timestamps get Gaussian reading noise.
pub fn synthesize_bidirectional(
    cfg: &SystemConfig,
    geom: &ArrayGeometry,
    statics: &StaticPathSet,
    exchanges: usize,
    timestamp_noise_std: f64,
    clock: ClockErrorLaw,
    seed: u64,
) -> Result<BidirectionalTrace> {
    cfg.validate()?;
    let k = cfg.subcarriers;
    if exchanges < k {
        return Err(Error::TraceTooShort { got: exchanges, need: k });
    }
    if !(timestamp_noise_std >= 0.0) {
        return Err(Error::InvalidConfig(format!("timestamp noise std {timestamp_noise_std}")));
    }
    let hs = statics.merged_response(cfg, geom)?;
    let hs_ue: DVector<C64> = hs.rows(0, k).into_owned();
    let df = cfg.subcarrier_spacing_hz;
    let period = cfg.alias_period();
    let mut rng = rng_from_seed(seed);
    let gauss = |rng: &mut rand_chacha::ChaCha12Rng| -> f64 { rng.sample(StandardNormal) };
    let ue_scale = C64::from_polar(1.0, rng.random_range(-PI..PI));
    let noise_amp = (cfg.noise_power / 2.0).sqrt();

    let mut bs = DMatrix::<C64>::zeros(cfg.rows(), exchanges);
    let mut ue = DMatrix::<C64>::zeros(k, exchanges);
    let mut records = Vec::with_capacity(exchanges);
    for t in 0..exchanges {
        let start = t as f64 * cfg.snapshot_interval_s;
        let dc = clock.at(start);
        let d_ue = rng.random_range(0.0..period);
        let d_bs = rng.random_range(0.0..period);
        // True instants.
        let bs_tx_true = start;
        let ue_rx_true = bs_tx_true + d_ue;
        let ue_tx_true = ue_rx_true + TURNAROUND_S;
        let bs_rx_true = ue_tx_true + d_bs;
        let ts = timestamp_noise_std;
        records.push(BidirectionalExchange {
            bs_tx: bs_tx_true + ts * gauss(&mut rng),
            ue_rx: ue_rx_true - dc + ts * gauss(&mut rng),
            ue_tx: ue_tx_true - dc + ts * gauss(&mut rng),
            bs_rx: bs_rx_true + ts * gauss(&mut rng),
            clock_error: dc,
            to_bs: d_bs,
            to_ue: d_ue,
        });

        let a_bs = kron_steering(&vec![C64::new(1.0, 0.0); cfg.antennas], k, df, d_bs);
        let po_bs = C64::from_polar(1.0, rng.random_range(-PI..PI));
        for i in 0..cfg.rows() {
            let z = C64::new(gauss(&mut rng), gauss(&mut rng)) * noise_amp;
            bs[(i, t)] = hs[i] * a_bs[i] * po_bs + z;
        }
        let po_ue = C64::from_polar(1.0, rng.random_range(-PI..PI));
        for kk in 0..k {
            let a = C64::from_polar(1.0, -TAU * kk as f64 * df * d_ue);
            let z = C64::new(gauss(&mut rng), gauss(&mut rng)) * noise_amp;
            ue[(kk, t)] = hs_ue[kk] * ue_scale * a * po_ue + z;
        }
    }
    Ok(BidirectionalTrace {
        exchanges: records,
        bs_snapshots: bs,
        ue_snapshots: ue,
        timestamp_noise_std,
        antennas: cfg.antennas,
        subcarriers: k,
    })
}
