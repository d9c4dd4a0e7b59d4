use super::angles::AntennaConfig;
use super::givens::SteeringMatrix;
use crate::error::{Error, Result};

/// Network input: first column of V for every subcarrier, as interleaved
/// (re, im) pairs per receive antenna, subcarriers outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFeatureVector(pub Vec<f32>);

impl CsiFeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

pub fn feature_vector(per_subcarrier: &[SteeringMatrix], cfg: &AntennaConfig) -> Result<CsiFeatureVector> {
    if per_subcarrier.len() != cfg.n_subcarriers {
        return Err(Error::invalid(format!(
            "expected {} subcarriers, got {}",
            cfg.n_subcarriers,
            per_subcarrier.len()
        )));
    }
    let mut out = Vec::with_capacity(cfg.feature_len());
    for v in per_subcarrier {
        if v.rows() != cfg.n_rx || v.cols() == 0 {
            return Err(Error::invalid(format!(
                "steering matrix is {}x{}, expected {} rows",
                v.rows(),
                v.cols(),
                cfg.n_rx
            )));
        }
        for z in v.matrix().column(0) {
            // unit column: entries already lie in [-1, 1]; clamp rounding spill
            out.push((z.re as f32).clamp(-1.0, 1.0));
            out.push((z.im as f32).clamp(-1.0, 1.0));
        }
    }
    Ok(CsiFeatureVector(out))
}
