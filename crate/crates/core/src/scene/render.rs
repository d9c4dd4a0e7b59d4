//! Scenes and their rendering.

use std::fmt;

use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 64;
pub const IMAGE_BYTES: usize = IMAGE_SIDE * IMAGE_SIDE * 3;

pub const BACKGROUND: [u8; 3] = [200, 200, 200];
/// Person proxy colour (dark red).
pub const PERSON: [u8; 3] = [139, 0, 0];
pub const PERSON_WIDTH: usize = 12;
pub const PERSON_HEIGHT: usize = 28;
pub const PERSON_TOP: usize = 18;
/// Horizontal centres of slots 1, 2, 3.
pub const SLOT_CENTERS: [i32; 3] = [12, 32, 52];
pub const MAX_JITTER: i32 = 2;
pub const MAX_USERS: u32 = 2;
/// Label of every walk-scenario sample; slot scenes use their bitmask.
pub const WALK_LABEL: u16 = 0x100;

/// 64×64 RGB, row-major, 8 bits per channel.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    pixels: Vec<u8>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fg = (0..IMAGE_SIDE * IMAGE_SIDE)
            .filter(|i| self.pixels[i * 3..i * 3 + 3] != BACKGROUND)
            .count();
        write!(f, "Image({IMAGE_SIDE}x{IMAGE_SIDE}, {fg} non-background px)")
    }
}

impl Image {
    pub fn new(pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != IMAGE_BYTES {
            return Err(Error::invalid(format!(
                "image must have {IMAGE_BYTES} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self { pixels })
    }

    pub fn filled(rgb: [u8; 3]) -> Self {
        Self {
            pixels: rgb.repeat(IMAGE_SIDE * IMAGE_SIDE),
        }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * IMAGE_SIDE + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * IMAGE_SIDE + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Content moved `dx` columns right; vacated columns become background.
    pub fn shifted_right(&self, dx: usize) -> Self {
        let mut out = Self::filled(BACKGROUND);
        for y in 0..IMAGE_SIDE {
            for x in dx..IMAGE_SIDE {
                out.set_pixel(x, y, self.pixel(x - dx, y));
            }
        }
        out
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Reads the exact layout written by [`Image::to_ppm`].
    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let header = format!("P6\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n");
        match bytes.strip_prefix(header.as_bytes()) {
            Some(body) => Self::new(body.to_vec()),
            None => Err(Error::Format {
                offset: 0,
                message: format!("expected a {IMAGE_SIDE}x{IMAGE_SIDE} P6 header"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Occupancy {
    /// Bit `s−1` set iff slot `s` is occupied.
    Slots(u8),
    /// One user on the oval path, t ∈ [0, 1).
    Walk(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scene {
    pub occupancy: Occupancy,
    /// Horizontal pixel offset applied to every user.
    pub jitter: i32,
}

/// Box in pixel coordinates: left, top, width, height.
pub type PixelBox = (usize, usize, usize, usize);

/// Projected horizontal position on the walk path. The oval is seen edge-on
/// from the camera, so x(t) is a cosine sweep across the three slots.
pub fn walk_center_x(t: f64) -> f64 {
    32.0 - 20.0 * (2.0 * std::f64::consts::PI * t).cos()
}

impl Scene {
    pub fn empty() -> Self {
        Self {
            occupancy: Occupancy::Slots(0),
            jitter: 0,
        }
    }

    /// `slots` are 1-based.
    pub fn slots(slots: &[u8], jitter: i32) -> Result<Self> {
        let mut mask = 0u8;
        for &s in slots {
            if !(1..=3).contains(&s) {
                return Err(Error::invalid(format!("slot {s} is not in 1..=3")));
            }
            mask |= 1 << (s - 1);
        }
        Self::from_mask(mask, jitter)
    }

    pub fn from_mask(mask: u8, jitter: i32) -> Result<Self> {
        let s = Self {
            occupancy: Occupancy::Slots(mask),
            jitter,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn walk(t: f64, jitter: i32) -> Result<Self> {
        let s = Self {
            occupancy: Occupancy::Walk(t),
            jitter,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.jitter.abs() > MAX_JITTER {
            return Err(Error::invalid(format!("jitter {} outside ±{MAX_JITTER}", self.jitter)));
        }
        match self.occupancy {
            Occupancy::Slots(mask) => {
                if mask & !0b111 != 0 {
                    return Err(Error::invalid(format!("slot mask {mask:#b} names a slot beyond 3")));
                }
                if mask.count_ones() > MAX_USERS {
                    return Err(Error::invalid("at most two occupied slots"));
                }
            }
            Occupancy::Walk(t) => {
                if !(0.0..1.0).contains(&t) {
                    return Err(Error::invalid(format!("walk parameter {t} outside [0, 1)")));
                }
            }
        }
        Ok(())
    }

    /// Rebuilds the scene a dataset label describes (jitter is not stored, so 0).
    pub fn from_label(label: u16, walk_t: Option<f32>) -> Result<Self> {
        match (label, walk_t) {
            (WALK_LABEL, Some(t)) => Self::walk(t as f64, 0),
            (WALK_LABEL, None) => Err(Error::invalid("walk label without walk_t")),
            (l, _) if l <= 0b111 => Self::from_mask(l as u8, 0),
            (l, _) => Err(Error::invalid(format!("unknown label {l:#x}"))),
        }
    }

    pub fn label(&self) -> u16 {
        match self.occupancy {
            Occupancy::Slots(mask) => mask as u16,
            Occupancy::Walk(_) => WALK_LABEL,
        }
    }

    pub fn is_walk(&self) -> bool {
        matches!(self.occupancy, Occupancy::Walk(_))
    }

    /// 1-based occupied slots, ascending; empty for the walk scenario.
    pub fn occupied_slots(&self) -> Vec<u8> {
        match self.occupancy {
            Occupancy::Slots(mask) => (1..=3).filter(|s| mask & (1 << (s - 1)) != 0).collect(),
            Occupancy::Walk(_) => Vec::new(),
        }
    }

    pub fn user_count(&self) -> usize {
        match self.occupancy {
            Occupancy::Slots(mask) => mask.count_ones() as usize,
            Occupancy::Walk(_) => 1,
        }
    }

    /// Horizontal user centres before border clamping.
    pub fn centers(&self) -> Vec<i32> {
        match self.occupancy {
            Occupancy::Slots(_) => self
                .occupied_slots()
                .iter()
                .map(|&s| SLOT_CENTERS[s as usize - 1] + self.jitter)
                .collect(),
            Occupancy::Walk(t) => vec![walk_center_x(t).round() as i32 + self.jitter],
        }
    }

    /// Rendered rectangles, sorted by left edge.
    pub fn boxes(&self) -> Vec<PixelBox> {
        let max_left = (IMAGE_SIDE - PERSON_WIDTH) as i32;
        self.centers()
            .into_iter()
            .map(|cx| {
                let left = (cx - PERSON_WIDTH as i32 / 2).clamp(0, max_left) as usize;
                (left, PERSON_TOP, PERSON_WIDTH, PERSON_HEIGHT)
            })
            .collect()
    }
}

pub fn render_scene(scene: &Scene) -> Image {
    let mut img = Image::filled(BACKGROUND);
    for (left, top, w, h) in scene.boxes() {
        for y in top..top + h {
            for x in left..left + w {
                img.set_pixel(x, y, PERSON);
            }
        }
    }
    img
}
