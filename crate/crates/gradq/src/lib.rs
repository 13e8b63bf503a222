//! Nonuniform gradient quantization toolkit.
//!
//! The crate is organized around the lifecycle of a compressed gradient:
//!
//! - [`quantizer`] — unbiased stochastic quantization onto a nonuniform
//!   level grid, with closed-form variance and sparsity expectations;
//! - [`codec`] — bit-exact encoding of quantized gradients (Elias recursive
//!   integer codes or sampled Huffman level codes);
//! - [`bounds`] — worst-case variance and code-length guarantees, including
//!   LP/QCQP refinements and level-grid optimization;
//! - [`variance`] — Monte Carlo estimators for validating the closed forms
//!   and comparing normalization schemes;
//! - [`sim`] — deterministic multi-worker SGD simulation where every
//!   exchanged gradient passes through the real codec;
//! - [`rng`] — counter-based random streams that make all of the above
//!   reproducible draw-by-draw.

pub mod bounds;
pub mod codec;
pub mod quantizer;
pub mod rng;
pub mod sim;
pub mod variance;
