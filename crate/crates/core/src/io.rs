//! Binary CSI dumps.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic  "ASCS"
//! version u16   (1)
//! M       u16
//! K       u32
//! T       u32
//! Δf      f64   Hz
//! Δt      f64   s
//! T columns of M·K (re, im) f64 pairs, row index m·K + k
//! ```
//!
//! The reference blob written by [`crate::residual`] uses the same
//! conventions with its own magic.

use crate::signal_model::CsiMatrix;
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use std::path::Path;

pub const CSI_MAGIC: &[u8; 4] = b"ASCS";
pub const CSI_VERSION: u16 = 1;

/// A raw CPI read back from disk together with its grid parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiDump {
    pub csi: CsiMatrix,
    pub subcarrier_spacing_hz: f64,
    pub snapshot_interval_s: f64,
}

pub(crate) struct ByteWriter(pub Vec<u8>);

impl ByteWriter {
    pub fn new(magic: &[u8; 4]) -> Self {
        Self(magic.to_vec())
    }
    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    pub fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn complex(&mut self, z: C64) {
        self.f64(z.re);
        self.f64(z.im);
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    /// Checks the magic and positions the reader after it.
    pub fn new(buf: &'a [u8], magic: &[u8; 4], path: &'a Path) -> Result<Self> {
        let mut r = Self { buf, pos: 0, path };
        if r.take(4)? != magic {
            return Err(r.malformed(format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
        }
        Ok(r)
    }

    pub fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("truncated at byte {}", self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn complex(&mut self) -> Result<C64> {
        Ok(C64::new(self.f64()?, self.f64()?))
    }

    /// Fails unless every byte has been consumed.
    pub fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(self.malformed(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

/// Serializes a CPI in the dump layout.
pub fn encode_csi(csi: &CsiMatrix, subcarrier_spacing_hz: f64, snapshot_interval_s: f64) -> Result<Vec<u8>> {
    let m = u16::try_from(csi.antennas()).map_err(|_| Error::dim("more than 65535 antennas"))?;
    let k = u32::try_from(csi.subcarriers()).map_err(|_| Error::dim("too many subcarriers"))?;
    let t = u32::try_from(csi.snapshots()).map_err(|_| Error::dim("too many snapshots"))?;
    let mut w = ByteWriter::new(CSI_MAGIC);
    w.u16(CSI_VERSION);
    w.u16(m);
    w.u32(k);
    w.u32(t);
    w.f64(subcarrier_spacing_hz);
    w.f64(snapshot_interval_s);
    // nalgebra storage is column-major, which is the file order.
    for &z in csi.data().iter() {
        w.complex(z);
    }
    Ok(w.0)
}

/// Parses a dump; `path` only labels errors.
pub fn decode_csi(bytes: &[u8], path: &Path) -> Result<CsiDump> {
    let mut r = ByteReader::new(bytes, CSI_MAGIC, path)?;
    let version = r.u16()?;
    if version != CSI_VERSION {
        return Err(r.malformed(format!("unsupported version {version}")));
    }
    let m = r.u16()? as usize;
    let k = r.u32()? as usize;
    let t = r.u32()? as usize;
    let df = r.f64()?;
    let dt = r.f64()?;
    if m == 0 || k == 0 {
        return Err(r.malformed(format!("M = {m}, K = {k}")));
    }
    let n = m * k;
    let expected = 32 + 16 * n * t;
    if bytes.len() != expected {
        return Err(r.malformed(format!("{} bytes, header implies {expected}", bytes.len())));
    }
    let mut vals = Vec::with_capacity(n * t);
    for _ in 0..n * t {
        vals.push(r.complex()?);
    }
    r.finish()?;
    Ok(CsiDump {
        csi: CsiMatrix::raw(DMatrix::from_vec(n, t, vals), m, k)?,
        subcarrier_spacing_hz: df,
        snapshot_interval_s: dt,
    })
}

pub fn write_csi_dump(path: &Path, csi: &CsiMatrix, subcarrier_spacing_hz: f64, snapshot_interval_s: f64) -> Result<()> {
    let bytes = encode_csi(csi, subcarrier_spacing_hz, snapshot_interval_s)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_csi_dump(path: &Path) -> Result<CsiDump> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_csi(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::testutil::random_matrix;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = rng_from_seed(3);
        let csi = CsiMatrix::raw(random_matrix(&mut rng, 6, 5), 2, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ascs");
        write_csi_dump(&p, &csi, 2.5e6, 4e-3).unwrap();
        let back = read_csi_dump(&p).unwrap();
        assert_eq!(back.csi, csi);
        assert_eq!(back.subcarrier_spacing_hz, 2.5e6);
        assert_eq!(back.snapshot_interval_s, 4e-3);
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 32 + 16 * 30);
    }

    #[test]
    fn rejects_damage() {
        let mut rng = rng_from_seed(4);
        let csi = CsiMatrix::raw(random_matrix(&mut rng, 4, 2), 1, 4).unwrap();
        let bytes = encode_csi(&csi, 1.0, 1.0).unwrap();
        let p = Path::new("mem");
        assert!(matches!(decode_csi(&bytes[..bytes.len() - 1], p), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_csi(&bad, p), Err(Error::Format { .. })));
        let mut ver = bytes;
        ver[4] = 9;
        assert!(matches!(decode_csi(&ver, p), Err(Error::Format { .. })));
        let missing = read_csi_dump(Path::new("/nonexistent/x.ascs"));
        assert!(matches!(missing, Err(Error::Io { .. })));
    }
}
