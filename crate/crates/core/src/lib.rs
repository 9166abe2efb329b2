//! Feature-guided masked autoencoding for multispectral and SAR imagery.
//!
//! A masked-patch ViT autoencoder whose decoder reconstructs engineered
//! image descriptors (HOG, normalized difference indices, Canny edges,
//! dense SIFT) rather than raw pixels. The crate bundles everything needed
//! to pretrain and evaluate such models at desk scale:
//!
//! * [`numerics`]: tensors, reverse-mode autodiff, AdamW, schedules, RNG
//! * [`features`]: the descriptor extractors and per-patch target assembly
//! * [`model`]: patchify, masking, encoder/decoder and the masked L2 loss
//! * [`data`]: tensor container, manifests, synthetic scenes, augmentation
//! * [`pretrain`]: the training loop and checkpoints
//! * [`eval`]: linear probing, fine-tuning, metrics and feature ablations

pub mod error;
pub mod data;
pub mod features;
pub mod model;
pub mod numerics;
pub mod pretrain;
pub mod eval;

pub use error::{Error, ErrorCategory, Result};
pub use numerics::{DType, Scalar, SeedRng, Tape, Tensor, Var};
