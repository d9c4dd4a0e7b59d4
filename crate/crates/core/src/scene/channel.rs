//! Geometric line-of-sight-plus-scatterer channel model.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::render::{walk_center_x, Occupancy, Scene, SLOT_CENTERS};
use crate::codec::CMatrix;
use crate::error::{Error, Result};

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    /// Angle of arrival at the receive array, degrees from broadside.
    pub aoa_deg: f64,
    /// Angle of departure at the transmit array.
    pub aod_deg: f64,
    /// Delay in units of the inverse band (one unit = one full phase turn across the band).
    pub delay: f64,
    pub gain: f64,
    /// Gain phase, radians.
    pub phase: f64,
}

impl PathParams {
    fn lerp(&self, other: &Self, w: f64) -> Self {
        let l = |a: f64, b: f64| a + (b - a) * w;
        Self {
            aoa_deg: l(self.aoa_deg, other.aoa_deg),
            aod_deg: l(self.aod_deg, other.aod_deg),
            delay: l(self.delay, other.delay),
            gain: l(self.gain, other.gain),
            phase: l(self.phase, other.phase),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub n_rx: usize,
    pub n_tx: usize,
    pub n_subcarriers: usize,
    /// Paths present regardless of who is in the room.
    pub static_paths: Vec<PathParams>,
    /// Scatterer path added by a person standing in slot 1, 2, 3.
    pub slot_paths: [PathParams; 3],
    /// Noise standard deviation relative to the mean path gain.
    pub noise_rel: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        let p = |aoa_deg, aod_deg, delay, gain, phase| PathParams {
            aoa_deg,
            aod_deg,
            delay,
            gain,
            phase,
        };
        Self {
            n_rx: 3,
            n_tx: 2,
            n_subcarriers: 52,
            static_paths: vec![p(0.0, 0.0, 0.0, 1.0, 0.0), p(-60.0, 50.0, 5.0, 0.5, 0.7)],
            slot_paths: [
                p(-45.0, -30.0, 2.0, 0.7, 1.1),
                p(8.0, -15.0, 6.5, 0.7, 2.3),
                p(40.0, 35.0, 11.0, 0.7, -0.4),
            ],
            noise_rel: 0.05,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_rel >= 0.0) {
            return Err(Error::invalid("noise std must be >= 0"));
        }
        if self.n_rx == 0 || self.n_tx == 0 || self.n_subcarriers == 0 {
            return Err(Error::invalid("array sizes and subcarrier count must be positive"));
        }
        let s = &self.slot_paths;
        for i in 0..3 {
            for j in i + 1..3 {
                if s[i].aoa_deg == s[j].aoa_deg || s[i].delay == s[j].delay {
                    return Err(Error::invalid(format!("slot {} and {} paths coincide", i + 1, j + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn mean_path_gain(&self) -> f64 {
        let all: Vec<f64> = self
            .static_paths
            .iter()
            .chain(self.slot_paths.iter())
            .map(|p| p.gain.abs())
            .collect();
        all.iter().sum::<f64>() / all.len().max(1) as f64
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_rel * self.mean_path_gain()
    }

    /// Path of a walker at horizontal position `x`, piecewise-linear between
    /// the slot paths and clamped outside the outer slots.
    pub fn walk_path(&self, x: f64) -> PathParams {
        let c = SLOT_CENTERS.map(|v| v as f64);
        if x <= c[0] {
            return self.slot_paths[0];
        }
        if x >= c[2] {
            return self.slot_paths[2];
        }
        let seg = if x < c[1] { 0 } else { 1 };
        let w = (x - c[seg]) / (c[seg + 1] - c[seg]);
        self.slot_paths[seg].lerp(&self.slot_paths[seg + 1], w)
    }

    fn scene_paths(&self, scene: &Scene) -> Vec<PathParams> {
        match scene.occupancy {
            Occupancy::Slots(_) => scene
                .occupied_slots()
                .iter()
                .map(|&s| self.slot_paths[s as usize - 1])
                .collect(),
            Occupancy::Walk(t) => vec![self.walk_path(walk_center_x(t))],
        }
    }
}

/// Half-wavelength ULA response.
fn steering(n: usize, angle_deg: f64) -> Vec<Complex64> {
    let s = angle_deg.to_radians().sin();
    (0..n)
        .map(|m| Complex64::from_polar(1.0, -std::f64::consts::PI * m as f64 * s))
        .collect()
}

fn add_path(h: &mut CMatrix, p: &PathParams, subcarrier: usize, n_sc: usize) {
    let (n_rx, n_tx) = (h.rows(), h.cols());
    let ar = steering(n_rx, p.aoa_deg);
    let at = steering(n_tx, p.aod_deg);
    let phase = p.phase - 2.0 * std::f64::consts::PI * subcarrier as f64 * p.delay / n_sc as f64;
    let g = Complex64::from_polar(p.gain, phase);
    for r in 0..n_rx {
        for t in 0..n_tx {
            h[(r, t)] += g * ar[r] * at[t].conj();
        }
    }
}

/// Static part of the channel on one subcarrier.
pub fn static_channel(subcarrier: usize, params: &ChannelParams) -> CMatrix {
    let mut h = CMatrix::zeros(params.n_rx, params.n_tx);
    for p in &params.static_paths {
        add_path(&mut h, p, subcarrier, params.n_subcarriers);
    }
    h
}

/// n_rx × n_tx channel matrix of `scene` on one subcarrier.
pub fn synth_channel<R: Rng + ?Sized>(
    scene: &Scene,
    subcarrier: usize,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<CMatrix> {
    if subcarrier >= params.n_subcarriers {
        return Err(Error::invalid(format!(
            "subcarrier {subcarrier} >= {}",
            params.n_subcarriers
        )));
    }
    let mut h = static_channel(subcarrier, params);
    for p in params.scene_paths(scene) {
        add_path(&mut h, &p, subcarrier, params.n_subcarriers);
    }
    let std = params.noise_std();
    if std > 0.0 {
        let s = std / std::f64::consts::SQRT_2;
        for r in 0..h.rows() {
            for t in 0..h.cols() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                h[(r, t)] += Complex64::new(re * s, im * s);
            }
        }
    }
    Ok(h)
}
