//! Zero-watermark registration, copy retrieval and copyright identification
//! for DIBR 3D video (a 2D stream plus a per-pixel depth stream).

pub mod attack;
pub mod bits;
pub mod corpus;
pub mod dibr;
pub mod error;
pub mod eval;
pub mod feature;
pub mod frame;
pub mod frameio;
pub mod fusion;
pub mod imgproc;
pub mod pipeline;
pub mod pnm;
pub mod registry;
pub mod vss;

pub use error::{Error, Result};
