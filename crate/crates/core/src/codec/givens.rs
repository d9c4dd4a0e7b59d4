//! Steering-matrix reconstruction from Givens angles and its inverse.
//!
//! The reconstruction is
//!
//! ```text
//! V = ∏_{k=1}^{min(N,M−1)} [ D_k ∏_{l=k+1}^{M} G_{l,k}ᵀ(ψ_{l,k}) ] · Ĩ_{M×N}
//! ```
//!
//! with both products expanded left to right in increasing index. `D_k` puts
//! `e^{jφ_{i,k}}` on diagonal entries k..M−1 and `G_{l,k}` is the real rotation
//! in the (k, l) plane. The rotation angle inside the inner product is indexed
//! by the loop variable l (one ψ per rotation), which is what makes the angle
//! count match the feedback report.

use std::f64::consts::TAU;

use num_complex::Complex64;

use super::angles::{AngleSet, AntennaConfig, Codebook, QuantizedAngleRecord};
use super::matrix::CMatrix;
use crate::error::{Error, Result};

/// Tolerance on ‖VᴴV − I‖_F accepted by [`decompose_v`].
pub const DECOMPOSE_GRAM_TOL: f64 = 1e-4;

/// M×N matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrix(CMatrix);

impl SteeringMatrix {
    /// Wraps `m` after checking the columns are orthonormal within `tol`.
    pub fn new(m: CMatrix, tol: f64) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::invalid("steering matrix has non-finite entries"));
        }
        if m.rows() < m.cols() {
            return Err(Error::invalid("steering matrix must have rows >= cols"));
        }
        let dev = m.gram_deviation();
        if dev > tol {
            return Err(Error::invalid(format!(
                "columns are not orthonormal (gram deviation {dev:.3e} > {tol:.1e})"
            )));
        }
        Ok(Self(m))
    }

    /// Ĩ_{M×N}.
    pub fn padded_identity(m: usize, n: usize) -> Self {
        Self(CMatrix::padded_identity(m, n))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    /// Scales each column by a unit phase so the last row is real and nonnegative.
    pub fn phase_normalized(&self) -> Self {
        let mut m = self.0.clone();
        let last = m.rows() - 1;
        for c in 0..m.cols() {
            let z = m[(last, c)];
            if z.norm() == 0.0 {
                continue;
            }
            let rot = Complex64::from_polar(1.0, -z.arg());
            for r in 0..m.rows() {
                m[(r, c)] *= rot;
            }
            m[(last, c)] = Complex64::new(m[(last, c)].norm(), 0.0);
        }
        Self(m)
    }
}

// A ← A·D_k
fn apply_d(acc: &mut CMatrix, k: usize, phis: &[f64]) {
    for (offset, &phi) in phis.iter().enumerate() {
        let col = k + offset;
        let rot = Complex64::from_polar(1.0, phi);
        for r in 0..acc.rows() {
            acc[(r, col)] *= rot;
        }
    }
}

// A ← A·G_{l,k}ᵀ(ψ)
fn apply_givens_t(acc: &mut CMatrix, k: usize, l: usize, psi: f64) {
    let (s, c) = psi.sin_cos();
    for r in 0..acc.rows() {
        let a = acc[(r, k)];
        let b = acc[(r, l)];
        acc[(r, k)] = a * c + b * s;
        acc[(r, l)] = b * c - a * s;
    }
}

/// Rebuilds V from its Givens angles.
pub fn reconstruct_v(angles: &AngleSet, cfg: &AntennaConfig) -> Result<SteeringMatrix> {
    cfg.validate()?;
    angles.check_counts(cfg)?;
    let m = cfg.n_rx;
    let mut acc = CMatrix::identity(m);
    let mut phi_pos = 0;
    let mut psi_pos = 0;
    for k in 0..cfg.stages() {
        // rows k..M−2 (0-based) carry a phase, the last row does not
        let n_phi = m - 1 - k;
        apply_d(&mut acc, k, &angles.phi[phi_pos..phi_pos + n_phi]);
        phi_pos += n_phi;
        for l in (k + 1)..m {
            apply_givens_t(&mut acc, k, l, angles.psi[psi_pos]);
            psi_pos += 1;
        }
    }
    Ok(SteeringMatrix(acc.leading_columns(cfg.n_tx)))
}

/// Continuous (unquantized) Givens angles of `v`, after phase normalization.
pub fn decompose_angles(v: &SteeringMatrix, codebook: Codebook) -> Result<AngleSet> {
    let dev = v.matrix().gram_deviation();
    if !(dev <= DECOMPOSE_GRAM_TOL) {
        return Err(Error::invalid(format!(
            "decompose_v needs orthonormal columns (gram deviation {dev:.3e})"
        )));
    }
    let m = v.rows();
    let n = v.cols();
    if m < 2 {
        return Err(Error::invalid("decompose_v needs at least two rows"));
    }
    let mut work = v.phase_normalized().into_matrix();
    let mut phi = Vec::new();
    let mut psi = Vec::new();
    for k in 0..n.min(m - 1) {
        // D_kᴴ: strip the phase of rows k..M−2 in column k
        for r in k..m - 1 {
            let angle = work[(r, k)].arg().rem_euclid(TAU);
            phi.push(angle);
            let rot = Complex64::from_polar(1.0, -angle);
            for c in 0..n {
                work[(r, c)] *= rot;
            }
        }
        // G_{l,k}: rotate the pivot onto row k, zeroing row l of column k
        for l in (k + 1)..m {
            let a = work[(k, k)].re;
            let b = work[(l, k)].norm().copysign(work[(l, k)].re);
            let angle = b.atan2(a);
            psi.push(angle);
            let (s, c) = angle.sin_cos();
            for col in 0..n {
                let x = work[(k, col)];
                let y = work[(l, col)];
                work[(k, col)] = x * c + y * s;
                work[(l, col)] = y * c - x * s;
            }
        }
    }
    Ok(AngleSet { phi, psi, codebook })
}

/// Quantized Givens decomposition of `v` (the compressed feedback of one subcarrier).
pub fn decompose_v(v: &SteeringMatrix, codebook: Codebook) -> Result<QuantizedAngleRecord> {
    decompose_angles(v, codebook)?.quantize()
}
