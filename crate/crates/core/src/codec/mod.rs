//! Compressed beamforming feedback: quantizers, Givens reconstruction,
//! small complex SVD and the network feature vector.

mod angles;
mod capture;
mod feature;
mod givens;
mod matrix;
mod svd;

pub use angles::{
    dequantize_phi, dequantize_psi, quantize_phi, quantize_psi, AngleSet, AntennaConfig, Codebook,
    QuantizedAngleRecord, MAX_RX,
};
pub use capture::{CaptureFile, CaptureFrame, CAPTURE_MAGIC};
pub use feature::{feature_vector, CsiFeatureVector};
pub use givens::{decompose_angles, decompose_v, reconstruct_v, SteeringMatrix, DECOMPOSE_GRAM_TOL};
pub use matrix::CMatrix;
pub use svd::{svd_small, SvdTriple};
