//! Colour-threshold detector co-designed with the scene renderer.

use serde::{Deserialize, Serialize};

use crate::scene::{Image, Occupancy, Scene, IMAGE_SIDE, PERSON, SLOT_CENTERS};

/// Max RGB distance from the person colour for a foreground pixel.
pub const FOREGROUND_DISTANCE: f64 = 60.0;
pub const MIN_AREA: usize = 48;
pub const MIN_CONFIDENCE: f64 = 0.3;
/// Max |box centre − slot centre| for the box to count as that slot.
pub const SLOT_TOLERANCE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub left: usize,
    pub top: usize,
    pub width: usize,
    pub height: usize,
    pub confidence: f64,
}

impl DetectionBox {
    pub fn center_x(&self) -> f64 {
        self.left as f64 + self.width as f64 / 2.0
    }

    pub fn iou(&self, (l, t, w, h): (usize, usize, usize, usize)) -> f64 {
        let ix = (self.left + self.width).min(l + w).saturating_sub(self.left.max(l));
        let iy = (self.top + self.height).min(t + h).saturating_sub(self.top.max(t));
        let inter = (ix * iy) as f64;
        inter / ((self.width * self.height + w * h) as f64 - inter)
    }
}

const N: usize = IMAGE_SIDE;

pub fn foreground_mask(img: &Image) -> Vec<bool> {
    let p = PERSON.map(|v| v as f64);
    img.pixels()
        .chunks_exact(3)
        .map(|c| {
            let d2: f64 = (0..3).map(|k| (c[k] as f64 - p[k]).powi(2)).sum();
            d2 <= FOREGROUND_DISTANCE * FOREGROUND_DISTANCE
        })
        .collect()
}

/// 3×3 neighbourhood reduction; `outside` is the value assumed beyond the border.
fn morph(mask: &[bool], any: bool, outside: bool) -> Vec<bool> {
    let mut out = vec![false; N * N];
    for y in 0..N as isize {
        for x in 0..N as isize {
            let mut acc = !any;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (u, v) = (x + dx, y + dy);
                    let val = if u < 0 || v < 0 || u >= N as isize || v >= N as isize {
                        outside
                    } else {
                        mask[v as usize * N + u as usize]
                    };
                    if any { acc |= val } else { acc &= val }
                }
            }
            out[y as usize * N + x as usize] = acc;
        }
    }
    out
}

/// Morphological closing with a 3×3 square. Erosion treats the outside as
/// foreground so shapes touching the border are not eaten.
pub fn close3x3(mask: &[bool]) -> Vec<bool> {
    morph(&morph(mask, true, false), false, true)
}

pub fn detect_users(img: &Image) -> Vec<DetectionBox> {
    let mask = close3x3(&foreground_mask(img));
    let mut seen = vec![false; N * N];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..N * N {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1, mut area) = (N, N, 0, 0, 0usize);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % N, i / N);
            area += 1;
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < N {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - N);
            }
            if y + 1 < N {
                visit(i + N);
            }
        }
        if area < MIN_AREA {
            continue;
        }
        let (width, height) = (x1 - x0 + 1, y1 - y0 + 1);
        let confidence = area as f64 / (width * height) as f64;
        if confidence >= MIN_CONFIDENCE {
            boxes.push(DetectionBox {
                left: x0,
                top: y0,
                width,
                height,
                confidence,
            });
        }
    }
    boxes.sort_by_key(|b| (b.left, b.top));
    boxes
}

/// Nearest slot (1-based) within the tolerance.
pub fn slot_of(center_x: f64) -> Option<u8> {
    SLOT_CENTERS
        .iter()
        .enumerate()
        .map(|(i, &c)| (i as u8 + 1, (center_x - c as f64).abs()))
        .filter(|&(_, d)| d <= SLOT_TOLERANCE)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(s, _)| s)
}

/// Whether the boxes put users in exactly the truth's slots. Always false for walks.
pub fn position_match(boxes: &[DetectionBox], truth: &Scene) -> bool {
    if let Occupancy::Walk(_) = truth.occupancy {
        return false;
    }
    let want = truth.occupied_slots();
    if boxes.len() != want.len() {
        return false;
    }
    let mut got = Vec::with_capacity(boxes.len());
    for b in boxes {
        match slot_of(b.center_x()) {
            Some(s) => got.push(s),
            None => return false,
        }
    }
    got.sort_unstable();
    got.dedup();
    got == want
}
