//! Capture-record file: a stream of quantized feedback reports.
//!
//! ```text
//! "C2IANG01" | u16 M | u16 N | u16 n_subcarriers | u8 b_phi | u8 b_psi
//! frame*:  u64 timestamp_us | per subcarrier: φ indices then ψ indices, one byte each
//! ```
//! All integers little-endian; frames run to end of file.

use std::path::Path;

use super::angles::{AntennaConfig, Codebook, QuantizedAngleRecord};
use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const CAPTURE_MAGIC: &[u8; 8] = b"C2IANG01";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureFrame {
    pub timestamp_us: u64,
    pub subcarriers: Vec<QuantizedAngleRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureFile {
    pub cfg: AntennaConfig,
    pub codebook: Codebook,
    pub frames: Vec<CaptureFrame>,
}

impl CaptureFile {
    pub fn encode(&self) -> Result<Vec<u8>> {
        self.cfg.validate()?;
        let per_kind = self.cfg.angles_per_kind();
        let mut w = ByteWriter::default();
        w.bytes(CAPTURE_MAGIC);
        w.u16(self.cfg.n_rx as u16);
        w.u16(self.cfg.n_tx as u16);
        w.u16(self.cfg.n_subcarriers as u16);
        w.u8(self.codebook.b_phi);
        w.u8(self.codebook.b_psi);
        for (fi, frame) in self.frames.iter().enumerate() {
            if frame.subcarriers.len() != self.cfg.n_subcarriers {
                return Err(Error::invalid(format!(
                    "frame {fi} has {} subcarriers, header says {}",
                    frame.subcarriers.len(),
                    self.cfg.n_subcarriers
                )));
            }
            w.u64(frame.timestamp_us);
            for rec in &frame.subcarriers {
                if rec.phi_indices.len() != per_kind
                    || rec.psi_indices.len() != per_kind
                    || rec.codebook != self.codebook
                {
                    return Err(Error::invalid(format!(
                        "frame {fi}: angle record does not match header"
                    )));
                }
                w.bytes(&rec.phi_indices);
                w.bytes(&rec.psi_indices);
            }
        }
        Ok(w.buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(CAPTURE_MAGIC)?;
        let n_rx = r.u16("M")? as usize;
        let n_tx = r.u16("N")? as usize;
        let n_subcarriers = r.u16("n_subcarriers")? as usize;
        let cfg = AntennaConfig {
            n_tx,
            n_rx,
            n_subcarriers,
        };
        let at = r.offset();
        cfg.validate().map_err(|e| Error::Format {
            offset: at,
            message: e.to_string(),
        })?;
        let at = r.offset();
        let b_phi = r.u8("b_phi")?;
        let b_psi = r.u8("b_psi")?;
        let codebook = Codebook::new(b_phi, b_psi).map_err(|e| Error::Format {
            offset: at,
            message: e.to_string(),
        })?;
        let per_kind = cfg.angles_per_kind();
        let mut frames = Vec::new();
        while !r.is_empty() {
            let timestamp_us = r.u64("frame timestamp")?;
            let mut subcarriers = Vec::with_capacity(n_subcarriers);
            for _ in 0..n_subcarriers {
                let at = r.offset();
                let phi = r.bytes(per_kind, "phi indices")?.to_vec();
                let psi = r.bytes(per_kind, "psi indices")?.to_vec();
                if phi.iter().any(|&i| i as u32 >= 1 << b_phi)
                    || psi.iter().any(|&i| i as u32 >= 1 << b_psi)
                {
                    return Err(Error::Format {
                        offset: at,
                        message: "quantizer index exceeds bit width".into(),
                    });
                }
                subcarriers.push(QuantizedAngleRecord {
                    phi_indices: phi,
                    psi_indices: psi,
                    codebook,
                });
            }
            frames.push(CaptureFrame {
                timestamp_us,
                subcarriers,
            });
        }
        Ok(Self {
            cfg,
            codebook,
            frames,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CaptureFile {
        let cfg = AntennaConfig {
            n_tx: 2,
            n_rx: 3,
            n_subcarriers: 2,
        };
        let cb = Codebook::default();
        let rec = |a: u8| QuantizedAngleRecord {
            phi_indices: vec![a, a + 1, 63],
            psi_indices: vec![0, 15, a % 16],
            codebook: cb,
        };
        CaptureFile {
            cfg,
            codebook: cb,
            frames: vec![
                CaptureFrame {
                    timestamp_us: 1,
                    subcarriers: vec![rec(3), rec(7)],
                },
                CaptureFrame {
                    timestamp_us: u64::MAX,
                    subcarriers: vec![rec(0), rec(40)],
                },
            ],
        }
    }

    #[test]
    fn layout_is_bit_exact() {
        let bytes = sample().encode().unwrap();
        assert_eq!(&bytes[..8], b"C2IANG01");
        assert_eq!(&bytes[8..16], &[3, 0, 2, 0, 2, 0, 6, 4]);
        assert_eq!(&bytes[16..24], &1u64.to_le_bytes());
        assert_eq!(&bytes[24..30], &[3, 4, 63, 0, 15, 3]);
        assert_eq!(bytes.len(), 16 + 2 * (8 + 2 * 6));
        assert_eq!(CaptureFile::decode(&bytes).unwrap(), sample());
    }

    #[test]
    fn truncated_frame_reports_offset() {
        let bytes = sample().encode().unwrap();
        let err = CaptureFile::decode(&bytes[..bytes.len() - 1]).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 16 + 20 + 8 + 6 + 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn index_out_of_range() {
        let mut bytes = sample().encode().unwrap();
        bytes[24] = 64;
        assert!(matches!(
            CaptureFile::decode(&bytes),
            Err(Error::Format { offset: 24, .. })
        ));
    }
}
