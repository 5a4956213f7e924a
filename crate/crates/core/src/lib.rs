//! CMMixer: fuse video frames and audio mel-spectrograms into mixed images,
//! pre-train a masked autoencoder to reconstruct both modalities from the
//! mixture, then fine-tune a two-stream retriever for video/audio matching.
//!
//! The crate is organized along the pipeline:
//!
//! * [`tensor`] — dense tensors with reverse-mode autodiff and Adam
//! * [`signal`] — clip partitioning, mel spectrograms, augmentation, synthetic data
//! * [`mixer`] — coefficient matrices (CutMix / Pixel Mixup / Mixup) and fusion
//! * [`patch`] — patchify/unpatchify, sin-cos positions, random masking
//! * [`model`] — ViT encoder, Solo/Duet decoders, checkpoints, accounting
//! * [`pretrain`] — the fuse-then-separate reconstruction loop
//! * [`retrieval`] — two-stream fine-tuning, InfoNCE, ranking and metrics
//! * [`config`] — the JSON run configuration shared with the CLI

pub mod config;
pub mod error;
pub mod image;
pub mod mixer;
pub mod model;
pub mod patch;
pub mod pretrain;
pub mod retrieval;
pub mod rng;
pub mod signal;
pub mod tensor;

pub use error::{Error, Result};
