use serde::{Deserialize, Serialize};

use super::detect::{detect_users, position_match};
use super::ssim::ssim;
use crate::error::{Error, Result};
use crate::scene::{Dataset, Image, Split};

/// Aggregate metrics over one split. Means with no contributing samples are
/// reported as 0 and their field name is listed in `undefined_flags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub detection_success_rate: f64,
    pub mean_confidence: f64,
    pub mean_ssim: f64,
    pub position_accuracy: f64,
    pub pixel_error_mean: f64,
    pub pixel_error_max: f64,
    pub n_samples: usize,
    pub split: Split,
    pub undefined_flags: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn summary(&self) -> String {
        format!(
            "{} n={} detection={:.3} confidence={:.3} ssim={:.3} position={:.3} px_err_mean={:.2} px_err_max={:.0}",
            self.split.name(),
            self.n_samples,
            self.detection_success_rate,
            self.mean_confidence,
            self.mean_ssim,
            self.position_accuracy,
            self.pixel_error_mean,
            self.pixel_error_max
        )
    }
}

fn mean_or_flag(sum: f64, n: usize, field: &str, flags: &mut Vec<String>) -> f64 {
    if n == 0 {
        flags.push(field.to_string());
        0.0
    } else {
        sum / n as f64
    }
}

/// Scores `images[i]` against `truth.samples[i]`.
pub fn evaluate(images: &[Image], truth: &Dataset, split: Split) -> Result<MetricsReport> {
    if images.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} generated images for {} samples",
            images.len(),
            truth.len()
        )));
    }
    let mut successes = 0usize;
    let (mut conf_sum, mut conf_n) = (0.0, 0usize);
    let mut ssim_sum = 0.0;
    let (mut pos_hits, mut pos_n) = (0usize, 0usize);
    let (mut px_sum, mut px_max, mut px_n) = (0.0, 0.0f64, 0usize);
    for (img, sample) in images.iter().zip(&truth.samples) {
        let scene = sample.scene()?;
        let boxes = detect_users(img);
        ssim_sum += ssim(img, &sample.image);
        let success = boxes.len() == scene.user_count();
        if success {
            successes += 1;
            for b in &boxes {
                conf_sum += b.confidence;
                conf_n += 1;
            }
        }
        if scene.is_walk() {
            if success {
                let want = scene.boxes()[0].0 as f64;
                let err = (boxes[0].left as f64 - want).abs();
                px_sum += err;
                px_max = px_max.max(err);
                px_n += 1;
            }
        } else {
            pos_n += 1;
            if position_match(&boxes, &scene) {
                pos_hits += 1;
            }
        }
    }
    let n = images.len();
    let mut flags = Vec::new();
    let detection_success_rate = mean_or_flag(successes as f64, n, "detection_success_rate", &mut flags);
    let mean_confidence = mean_or_flag(conf_sum, conf_n, "mean_confidence", &mut flags);
    let mean_ssim = mean_or_flag(ssim_sum, n, "mean_ssim", &mut flags);
    let position_accuracy = mean_or_flag(pos_hits as f64, pos_n, "position_accuracy", &mut flags);
    let pixel_error_mean = mean_or_flag(px_sum, px_n, "pixel_error_mean", &mut flags);
    if px_n == 0 {
        flags.push("pixel_error_max".into());
    }
    Ok(MetricsReport {
        detection_success_rate,
        mean_confidence,
        mean_ssim,
        position_accuracy,
        pixel_error_mean,
        pixel_error_max: px_max,
        n_samples: n,
        split,
        undefined_flags: flags,
    })
}
