//! Dual-basis power-of-two weight quantization.
//!
//! A weight row is projected onto a power-of-two lattice (`b₁`), the part of
//! the row orthogonal to that projection is matched by a second lattice vector
//! (`b₂`) built from `b₁` by a strided pair swap with sign flips, and two
//! continuous scales per macro-block combine them: `ŵ = c₁b₁ + c₂b₂`. Because
//! `b₁ ⊥ b₂` exactly, the scales have closed forms, and because both bases
//! hold only `0` and `±2^k` entries, inference runs on shifts and adds.
//!
//! Modules, bottom-up:
//!
//! - [`lattice`]: value sets, codes and the shift multiply
//! - [`precondition`]: activation statistics and channel smoothing
//! - [`geometry`]: primary projection, residual, secondary basis search
//! - [`solver`]: GEO and REF scale solves
//! - [`quantizer`]: the per-tensor pipeline and error metrics
//! - [`kernel`]: integer inference and operation counters
//! - [`format`]: model and tensor files
//! - [`oracle`], [`verify`]: brute-force references and the self-check suite

pub mod error;
pub mod format;
pub mod geometry;
pub mod kernel;
pub mod lattice;
pub mod matrix;
pub mod oracle;
pub mod precondition;
pub mod quantizer;
pub mod solver;
pub mod verify;

pub use error::{Error, ErrorClass, Result};
pub use lattice::{LatticeCode, LatticeId, LatticeSpec, Topology};
pub use matrix::Matrix;
pub use quantizer::{dequantize, error_report, quantize_tensor, QuantConfig, QuantizedTensor};
pub use solver::SolveMode;
