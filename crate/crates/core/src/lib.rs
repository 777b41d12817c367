//! Multi-label segmentation of hyperspectral plastic-flake scenes with bitfield labels.
//!
//! Each pixel is labelled with a K-bit vector, one bit per primary polymer
//! (PP, PE, PET). Overlapping flakes switch on several bits at once, so the
//! network only ever predicts K outputs no matter how many overlap
//! combinations exist.
//!
//! * [`numerics`] - tensors, a reverse-mode tape, the layers a small U-net
//!   needs, Adam and a finite-difference gradient checker.
//! * [`encoding`] - bitfields, powerset categories, threshold decoding.
//! * [`model`] - the U-net with either a TanH bitfield head or a softmax head.
//! * [`data`] - synthetic scenes, annotation, slicing and file formats.
//! * [`experiments`] - training, presets, metrics and reports.

pub mod data;
pub mod encoding;
pub mod error;
pub mod experiments;
pub mod kv;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
