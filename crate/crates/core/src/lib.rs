//! bnnx: training and inference for binary (±1) neural networks on the
//! CPU, built around an exact XNOR-popcount matrix kernel.
//!
//! The crate covers the full loop: bit-packed tensors and the binary GEMM
//! (`bits`), im2col convolution lowering (`conv`), layers with
//! straight-through-estimator gradients (`layers`), optimizers and the
//! deterministic training loop (`optim`, `train`), frozen-extractor
//! transfer learning (`transfer`), image preprocessing (`image`), and
//! bit-exact serialization plus dataset parsers (`io`).
//!
//! Determinism is a design rule throughout: given the same seed, config,
//! and data, every training run reproduces bit-identical weights, and
//! every serialized model reproduces bit-identical forward outputs.

pub mod bits;
pub mod conv;
pub mod data;
pub mod error;
pub mod image;
pub mod io;
pub mod layers;
pub mod model;
pub mod optim;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod transfer;

pub use bits::BitMatrix;
pub use error::{Error, Result};
pub use model::Model;
pub use tensor::FloatTensor;
