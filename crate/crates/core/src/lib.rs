//! CSI-to-image pipeline: compressed Wi-Fi channel feedback in, 64×64 RGB
//! scene reconstructions out.

mod binio;
pub mod codec;
pub mod error;
pub mod eval;
pub mod nn;
pub mod scene;
pub mod training;

pub use binio::{read_file, write_atomic};
pub use error::{Error, Result};
