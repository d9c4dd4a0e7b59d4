//! Angle inventory and the φ/ψ quantizer codebooks of 802.11ac compressed feedback.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};

/// Antenna and subcarrier layout of one feedback report.
///
/// `n_rx` is the number of rows (M) of the steering matrix and `n_tx` its
/// number of columns (N).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AntennaConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_subcarriers: usize,
}

impl Default for AntennaConfig {
    fn default() -> Self {
        Self {
            n_tx: 2,
            n_rx: 3,
            n_subcarriers: 52,
        }
    }
}

/// Largest M supported by the codec.
pub const MAX_RX: usize = 4;

impl AntennaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx < 1 {
            return Err(Error::invalid("n_tx must be at least 1"));
        }
        if self.n_rx < self.n_tx {
            return Err(Error::invalid(format!(
                "n_rx ({}) must be >= n_tx ({})",
                self.n_rx, self.n_tx
            )));
        }
        if self.n_rx < 2 || self.n_rx > MAX_RX {
            return Err(Error::invalid(format!(
                "n_rx must lie in 2..={MAX_RX}, got {}",
                self.n_rx
            )));
        }
        if self.n_subcarriers == 0 {
            return Err(Error::invalid("n_subcarriers must be at least 1"));
        }
        Ok(())
    }

    /// Number of k-stages in the Givens product, min(N, M − 1).
    pub fn stages(&self) -> usize {
        self.n_tx.min(self.n_rx - 1)
    }

    /// Number of φ angles per subcarrier (equal to the number of ψ angles).
    pub fn angles_per_kind(&self) -> usize {
        (1..=self.stages()).map(|k| self.n_rx - k).sum()
    }

    /// Length of the network input vector: re/im of every entry of the first column,
    /// for every subcarrier.
    pub fn feature_len(&self) -> usize {
        self.n_subcarriers * self.n_rx * 2
    }
}

/// Quantizer resolution for one report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Codebook {
    pub b_phi: u8,
    pub b_psi: u8,
}

impl Default for Codebook {
    fn default() -> Self {
        Self { b_phi: 6, b_psi: 4 }
    }
}

impl Codebook {
    pub fn new(b_phi: u8, b_psi: u8) -> Result<Self> {
        match (b_phi, b_psi) {
            (4, 2) | (6, 4) => Ok(Self { b_phi, b_psi }),
            _ => Err(Error::invalid(format!(
                "unsupported codebook (b_phi={b_phi}, b_psi={b_psi}); expected (4,2) or (6,4)"
            ))),
        }
    }
}

fn check_phi_bits(b_phi: u8) -> Result<()> {
    if matches!(b_phi, 4 | 6) {
        Ok(())
    } else {
        Err(Error::invalid(format!("unsupported b_phi {b_phi}")))
    }
}

fn check_psi_bits(b_psi: u8) -> Result<()> {
    if matches!(b_psi, 2 | 4) {
        Ok(())
    } else {
        Err(Error::invalid(format!("unsupported b_psi {b_psi}")))
    }
}

fn phi_codeword(index: u32, b_phi: u8) -> f64 {
    index as f64 * PI / (1u32 << (b_phi - 1)) as f64 + PI / (1u32 << b_phi) as f64
}

fn psi_codeword(index: u32, b_psi: u8) -> f64 {
    index as f64 * PI / (1u32 << (b_psi + 1)) as f64 + PI / (1u32 << (b_psi + 2)) as f64
}

/// φ = k·π/2^(b−1) + π/2^b.
pub fn dequantize_phi(index: u32, b_phi: u8) -> Result<f64> {
    check_phi_bits(b_phi)?;
    if index >= 1 << b_phi {
        return Err(Error::invalid(format!(
            "phi index {index} out of range for {b_phi} bits"
        )));
    }
    Ok(phi_codeword(index, b_phi))
}

/// ψ = k·π/2^(b+1) + π/2^(b+2).
pub fn dequantize_psi(index: u32, b_psi: u8) -> Result<f64> {
    check_psi_bits(b_psi)?;
    if index >= 1 << b_psi {
        return Err(Error::invalid(format!(
            "psi index {index} out of range for {b_psi} bits"
        )));
    }
    Ok(psi_codeword(index, b_psi))
}

/// Nearest φ codeword under circular distance; ties go to the lower index.
pub fn quantize_phi(angle: f64, b_phi: u8) -> Result<u32> {
    check_phi_bits(b_phi)?;
    if !angle.is_finite() {
        return Err(Error::invalid("phi angle must be finite"));
    }
    // measure in codeword units so that bin-boundary ties compare exactly
    let levels = 1u32 << b_phi;
    let pos = angle.rem_euclid(TAU) / (TAU / levels as f64) - 0.5;
    let mut best = (0u32, f64::INFINITY);
    for k in 0..levels {
        let d = (pos - k as f64).rem_euclid(levels as f64);
        let d = d.min(levels as f64 - d);
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok(best.0)
}

/// Nearest ψ codeword after clamping to [0, π/2]; ties go to the lower index.
pub fn quantize_psi(angle: f64, b_psi: u8) -> Result<u32> {
    check_psi_bits(b_psi)?;
    if !angle.is_finite() {
        return Err(Error::invalid("psi angle must be finite"));
    }
    let levels = 1u32 << b_psi;
    let pos = angle.clamp(0.0, FRAC_PI_2) / (FRAC_PI_2 / levels as f64) - 0.5;
    let mut best = (0u32, f64::INFINITY);
    for k in 0..levels {
        let d = (pos - k as f64).abs();
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok(best.0)
}

/// Givens angles of one subcarrier.
///
/// `phi` is ordered (φ_{k,k}, …, φ_{M−1,k}) for k = 1, 2, …, and `psi` is ordered
/// (ψ_{k+1,k}, …, ψ_{M,k}) per k.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub codebook: Codebook,
}

impl AngleSet {
    pub fn check_counts(&self, cfg: &AntennaConfig) -> Result<()> {
        let want = cfg.angles_per_kind();
        if self.phi.len() != want || self.psi.len() != want {
            return Err(Error::invalid(format!(
                "expected {want} phi and {want} psi angles for M={}, N={}, got {} and {}",
                cfg.n_rx,
                cfg.n_tx,
                self.phi.len(),
                self.psi.len()
            )));
        }
        Ok(())
    }

    pub fn quantize(&self) -> Result<QuantizedAngleRecord> {
        let cb = self.codebook;
        Ok(QuantizedAngleRecord {
            phi_indices: self
                .phi
                .iter()
                .map(|&a| quantize_phi(a, cb.b_phi).map(|i| i as u8))
                .collect::<Result<_>>()?,
            psi_indices: self
                .psi
                .iter()
                .map(|&a| quantize_psi(a, cb.b_psi).map(|i| i as u8))
                .collect::<Result<_>>()?,
            codebook: cb,
        })
    }
}

/// Wire form of an [`AngleSet`]: one quantizer index per angle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedAngleRecord {
    pub phi_indices: Vec<u8>,
    pub psi_indices: Vec<u8>,
    pub codebook: Codebook,
}

impl QuantizedAngleRecord {
    pub fn dequantize(&self) -> Result<AngleSet> {
        let cb = self.codebook;
        Ok(AngleSet {
            phi: self
                .phi_indices
                .iter()
                .map(|&i| dequantize_phi(i as u32, cb.b_phi))
                .collect::<Result<_>>()?,
            psi: self
                .psi_indices
                .iter()
                .map(|&i| dequantize_psi(i as u32, cb.b_psi))
                .collect::<Result<_>>()?,
            codebook: cb,
        })
    }
}
