//! ONNX inference backend for `sigcode-core`, built on tract.
//!
//! [`OnnxProvider`] evaluates a model on CPU and exposes the tensors named by
//! a model profile. [`synth`] builds seeded VGG-style models for tests and
//! for environments without pretrained weights.

mod provider;
pub mod synth;

pub use provider::OnnxProvider;
