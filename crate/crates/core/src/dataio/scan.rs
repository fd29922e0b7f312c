//! `LidarScan` and its WVLS container.
//!
//! Layout (little-endian): magic `WVLS`, u32 version (1), u32 n_beams,
//! u32 n_gates, f64 elevation_min, elevation_max, range_min, range_max,
//! f32 vr[n_beams * n_gates] beam-major, u8 n_truth, then per truth vortex
//! u8 class (1 = port, 2 = starboard) and f64 y, z, circulation,
//! core_radius, and finally u64 seed.

use std::path::Path;

use super::bytes::{put_f32s, put_f64, put_u32, put_u64, ByteReader};
use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::synthgen::{VortexClass, VortexSpec};

pub const SCAN_MAGIC: &[u8; 4] = b"WVLS";
pub const SCAN_VERSION: u32 = 1;

/// Radial velocities on a polar grid plus the vortices known to be in it.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    geom: ScanGeometry,
    vr: Vec<f32>,
    truth: Vec<VortexSpec>,
    seed: u64,
}

impl LidarScan {
    pub fn new(geom: ScanGeometry, vr: Vec<f32>, truth: Vec<VortexSpec>, seed: u64) -> Result<Self> {
        geom.validate()?;
        if vr.len() != geom.n_cells() {
            return Err(Error::shape(format!(
                "{} velocities for a {}x{} grid",
                vr.len(),
                geom.n_beams,
                geom.n_gates
            )));
        }
        if let Some(i) = vr.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite radial velocity at cell {i}")));
        }
        if truth.len() > u8::MAX as usize {
            return Err(Error::invalid("too many truth vortices"));
        }
        Ok(Self {
            geom,
            vr,
            truth,
            seed,
        })
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geom
    }

    /// Radial velocities in m/s, beam-major.
    pub fn vr(&self) -> &[f32] {
        &self.vr
    }

    pub fn truth(&self) -> &[VortexSpec] {
        &self.truth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same scan with a replaced velocity grid.
    pub fn with_vr(&self, vr: Vec<f32>) -> Result<Self> {
        Self::new(self.geom, vr, self.truth.clone(), self.seed)
    }

    /// Scan-wide mean radial velocity, accumulated in f64.
    pub fn mean_vr(&self) -> f64 {
        self.vr.iter().map(|&v| v as f64).sum::<f64>() / self.vr.len() as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + 4 * self.vr.len() + 33 * self.truth.len() + 9);
        out.extend_from_slice(SCAN_MAGIC);
        put_u32(&mut out, SCAN_VERSION);
        put_u32(&mut out, self.geom.n_beams as u32);
        put_u32(&mut out, self.geom.n_gates as u32);
        put_f64(&mut out, self.geom.elevation_min);
        put_f64(&mut out, self.geom.elevation_max);
        put_f64(&mut out, self.geom.range_min);
        put_f64(&mut out, self.geom.range_max);
        put_f32s(&mut out, &self.vr);
        out.push(self.truth.len() as u8);
        for v in &self.truth {
            out.push(v.class.id());
            put_f64(&mut out, v.center.0);
            put_f64(&mut out, v.center.1);
            put_f64(&mut out, v.circulation);
            put_f64(&mut out, v.core_radius);
        }
        put_u64(&mut out, self.seed);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        r.magic(SCAN_MAGIC)?;
        let version = r.u32()?;
        if version != SCAN_VERSION {
            return Err(Error::UnsupportedVersion {
                expected: SCAN_VERSION,
                found: version,
            });
        }
        let geom = ScanGeometry {
            n_beams: r.u32()? as usize,
            n_gates: r.u32()? as usize,
            elevation_min: r.f64()?,
            elevation_max: r.f64()?,
            range_min: r.f64()?,
            range_max: r.f64()?,
        };
        geom.validate()
            .map_err(|e| Error::Malformed(format!("scan geometry: {e}")))?;
        let vr = r.f32_vec(geom.n_cells())?;
        let n_truth = r.u8()?;
        let mut truth = Vec::with_capacity(n_truth as usize);
        for _ in 0..n_truth {
            let id = r.u8()?;
            let class = VortexClass::from_id(id)
                .ok_or_else(|| Error::Malformed(format!("unknown vortex class id {id}")))?;
            truth.push(VortexSpec {
                class,
                center: (r.f64()?, r.f64()?),
                circulation: r.f64()?,
                core_radius: r.f64()?,
            });
        }
        let seed = r.u64()?;
        r.finish()?;
        Self::new(geom, vr, truth, seed).map_err(|e| match e {
            Error::InvalidInput(msg) | Error::ShapeMismatch(msg) => Error::Malformed(msg),
            other => other,
        })
    }
}

pub fn write_scan(scan: &LidarScan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scan.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_scan(path: impl AsRef<Path>) -> Result<LidarScan> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    LidarScan::from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_scan() -> LidarScan {
        let geom = ScanGeometry {
            n_beams: 3,
            n_gates: 4,
            ..ScanGeometry::default()
        };
        let vr = (0..12).map(|i| i as f32 * 0.5 - 2.0).collect();
        let truth = vec![VortexSpec {
            class: VortexClass::Starboard,
            center: (300.0, 90.0),
            circulation: 320.5,
            core_radius: 3.25,
        }];
        LidarScan::new(geom, vr, truth, 0xDEAD_BEEF).unwrap()
    }

    #[test]
    fn layout_is_stable() {
        let bytes = sample_scan().to_bytes();
        assert_eq!(&bytes[..4], b"WVLS");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &4u32.to_le_bytes());
        assert_eq!(&bytes[16..24], &0.0f64.to_le_bytes());
        assert_eq!(&bytes[48..52], &(-2.0f32).to_le_bytes());
        let truth_at = 48 + 12 * 4;
        assert_eq!(bytes[truth_at], 1);
        assert_eq!(bytes[truth_at + 1], 2);
        assert_eq!(bytes.len(), truth_at + 1 + 33 + 8);
        assert_eq!(&bytes[bytes.len() - 8..], &0xDEAD_BEEFu64.to_le_bytes());
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wvls");
        let scan = sample_scan();
        write_scan(&scan, &path).unwrap();
        assert_eq!(read_scan(&path).unwrap(), scan);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = sample_scan().to_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(LidarScan::from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = sample_scan().to_bytes();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            LidarScan::from_bytes(&bytes),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
    }

    #[test]
    fn truncated_mid_array() {
        let bytes = sample_scan().to_bytes();
        assert!(matches!(
            LidarScan::from_bytes(&bytes[..60]),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = sample_scan().to_bytes();
        bytes.push(0);
        assert!(matches!(LidarScan::from_bytes(&bytes), Err(Error::TrailingBytes(1))));
    }

    #[test]
    fn rejects_wrong_dimensions_and_nan() {
        let geom = ScanGeometry {
            n_beams: 2,
            n_gates: 2,
            ..ScanGeometry::default()
        };
        assert!(LidarScan::new(geom, vec![0.0; 3], vec![], 0).is_err());
        assert!(LidarScan::new(geom, vec![0.0, 1.0, f32::NAN, 2.0], vec![], 0).is_err());
    }
}
