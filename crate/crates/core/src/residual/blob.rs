//! Reference blob, little-endian like the CSI dump:
//!
//! ```text
//! magic "ASRF", version u16 (1), M u16, K u32, T_s u32,
//! origin u8 (0 calibrated, 1 alternative), Δτ̂_C f64 (0 if alternative),
//! timestamp noise std f64, then M·K (re, im) f64 pairs
//! ```

use super::{ReferenceOrigin, ReferenceStaticResponse};
use crate::io::{ByteReader, ByteWriter};
use crate::{Error, Result};
use nalgebra::DVector;
use std::path::Path;

pub const REFERENCE_MAGIC: &[u8; 4] = b"ASRF";
const VERSION: u16 = 1;

impl ReferenceStaticResponse {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let m = u16::try_from(self.antennas).map_err(|_| Error::dim("more than 65535 antennas"))?;
        let mut w = ByteWriter::new(REFERENCE_MAGIC);
        w.u16(VERSION);
        w.u16(m);
        w.u32(self.subcarriers as u32);
        w.u32(self.exchanges as u32);
        match self.origin {
            ReferenceOrigin::Calibrated { clock_error } => {
                w.u8(0);
                w.f64(clock_error);
            }
            ReferenceOrigin::Alternative => {
                w.u8(1);
                w.f64(0.0);
            }
        }
        w.f64(self.timestamp_noise_std);
        for &z in self.response.iter() {
            w.complex(z);
        }
        Ok(w.0)
    }

    /// Parses a blob; `path` only labels errors. The stored response is
    /// taken as is, without renormalization.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, REFERENCE_MAGIC, path)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(r.malformed(format!("unsupported version {version}")));
        }
        let m = r.u16()? as usize;
        let k = r.u32()? as usize;
        let exchanges = r.u32()? as usize;
        let origin = match (r.u8()?, r.f64()?) {
            (0, clock_error) => ReferenceOrigin::Calibrated { clock_error },
            (1, _) => ReferenceOrigin::Alternative,
            (tag, _) => return Err(r.malformed(format!("unknown origin tag {tag}"))),
        };
        let timestamp_noise_std = r.f64()?;
        if m == 0 || k == 0 {
            return Err(r.malformed(format!("M = {m}, K = {k}")));
        }
        let mut vals = Vec::with_capacity(m * k);
        for _ in 0..m * k {
            vals.push(r.complex()?);
        }
        r.finish()?;
        let response = DVector::from_vec(vals);
        if !(response.norm() > 0.0 && response.norm().is_finite()) {
            return Err(r.malformed("reference response has no energy"));
        }
        Ok(Self {
            response,
            antennas: m,
            subcarriers: k,
            exchanges,
            timestamp_noise_std,
            origin,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }
}
