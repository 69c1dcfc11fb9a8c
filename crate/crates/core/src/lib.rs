//! Significance-guided image descriptors built from CNN activations.
//!
//! The pipeline runs in stages that each have their own module:
//!
//! * [`tensor`] and [`config`]: activation containers and the network layout
//!   they are validated against.
//! * [`dump`], [`corpus`], [`preprocess`] and [`provider`]: getting
//!   activations for an image, either from a runtime or from dump files.
//! * [`significance`]: thresholding the last block and projecting the
//!   significant neurons back onto the earlier blocks.
//! * [`descriptor`]: per-channel weighted averages and the three descriptor
//!   families (FC neural code, convolutional, combined).
//! * [`index`]: exact top-k search under the dimension-normalised L1 distance.
//! * [`external`]: import of descriptors computed elsewhere.
//! * [`eval`] and [`report`]: colour-histogram assessment of retrieval results.

pub mod codec;
pub mod config;
pub mod corpus;
pub mod descriptor;
pub mod dump;
pub mod error;
pub mod eval;
pub mod external;
pub mod index;
pub mod preprocess;
pub mod provider;
pub mod report;
pub mod significance;
pub mod tensor;

pub use config::{BlockShape, ChannelOrder, InputSpec, Layout, ModelProfile, NetworkConfig};
pub use corpus::{ImageRecord, ImageResolver, Manifest, ManifestEntry};
pub use descriptor::{build_descriptors, Descriptor, DescriptorSet, Family};
pub use error::{Error, FormatError, FormatErrorKind, Result};
pub use index::{l1_norm_distance, top_k, DescriptorIndex, QueryResult};
pub use provider::ActivationProvider;
pub use significance::{SignificanceSet, DEFAULT_Q};
pub use tensor::{validate_shapes, BlockActivations, FeatureMap, NetworkActivations, ShapeReport};

/// Number of retrieved images per query used by default.
pub const DEFAULT_K: usize = 5;
