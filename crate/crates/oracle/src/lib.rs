//! Reference implementations written straight from the defining formulas,
//! with plain loops over `f64` slices. They share no code with the
//! production kernels and exist only to be compared against them.
//!
//! Feature maps are row-major `C×H×W`; matrices are row-major.

pub mod fusion;
pub mod metrics;
