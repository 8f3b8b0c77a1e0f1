//! Numerical kernels for tri-modal (RGB, surface normal, event camera)
//! object detection: depth-to-normal geometry, event rasterization, the
//! attention-based RGB/normal fusion block, the gated event fusion block,
//! and COCO-style detection metrics.

pub mod error;
pub mod eval;
pub mod events;
pub mod fusion;
pub mod geometry;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Element, Tape, Tensor, Var};
