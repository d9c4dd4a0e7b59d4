use crate::error::{Error, Result};
use crate::scene::Image;

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const DYNAMIC_RANGE: f64 = 255.0;
/// (255·K1)²
pub const SSIM_C1: f64 = 6.5025;
/// (255·K2)²
pub const SSIM_C2: f64 = 58.5225;

fn channel_ssim(x: &[u8], y: &[u8], channels: usize, c: usize) -> f64 {
    let n = (x.len() / channels) as f64;
    let xs = || x.iter().skip(c).step_by(channels).map(|&v| v as f64);
    let ys = || y.iter().skip(c).step_by(channels).map(|&v| v as f64);
    let mx = xs().sum::<f64>() / n;
    let my = ys().sum::<f64>() / n;
    let vx = xs().map(|a| (a - mx) * (a - mx)).sum::<f64>() / n;
    let vy = ys().map(|b| (b - my) * (b - my)).sum::<f64>() / n;
    let cov = xs().zip(ys()).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

/// Whole-image SSIM of interleaved 8-bit data, averaged over channels and
/// clamped to [0, 1] (anti-correlated images would otherwise go negative).
pub fn ssim_interleaved(x: &[u8], y: &[u8], channels: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("ssim: {} vs {} bytes", x.len(), y.len())));
    }
    if channels == 0 || x.is_empty() || !x.len().is_multiple_of(channels) {
        return Err(Error::invalid("ssim: empty image or ragged channel count"));
    }
    let s: f64 = (0..channels).map(|c| channel_ssim(x, y, channels, c)).sum::<f64>() / channels as f64;
    Ok(s.clamp(0.0, 1.0))
}

pub fn ssim(x: &Image, y: &Image) -> f64 {
    ssim_interleaved(x.pixels(), y.pixels(), 3).expect("images share a shape")
}
