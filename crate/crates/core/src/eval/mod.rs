//! Image-quality and detection metrics.

mod detect;
mod report;
mod ssim;

pub use detect::{
    close3x3, detect_users, foreground_mask, position_match, slot_of, DetectionBox, FOREGROUND_DISTANCE,
    MIN_AREA, MIN_CONFIDENCE, SLOT_TOLERANCE,
};
pub use report::{evaluate, MetricsReport};
pub use ssim::{ssim, ssim_interleaved, DYNAMIC_RANGE, SSIM_C1, SSIM_C2, SSIM_K1, SSIM_K2};
