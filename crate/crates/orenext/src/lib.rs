//! Desk-scale building blocks for MLP-based instance segmentation.
//!
//! The crate implements, from scratch and in pure Rust:
//!
//! * [`tensor`] — a minimal dense rank-4 tensor with the handful of
//!   operations the rest of the crate needs (channel projections, layer
//!   norm, bilinear sampling, cross-entropy) plus a finite-difference
//!   gradient oracle every backward pass is checked against.
//! * [`backbone`] — the StoneMLP backbone: patch embedding, axial channel
//!   shifts, shift-projection token mixing, residual blocks, and staged
//!   multi-scale feature extraction with an instrumented MAC counter.
//! * [`fpn`] — the SparseFPN neck: three-branch SparseMLP blocks on top of a
//!   standard lateral/top-down pyramid, with receptive-field diagnostics.
//! * [`point_head`] — ground-truth-box RoI extraction, a coarse mask head,
//!   uncertainty-driven point selection, and per-point classification.
//! * [`loss`] — the edge guidance loss: box classification, sorted
//!   point-localization, coarse-mask cross-entropy, and the nearest-match /
//!   smooth-L1 point-matching term.
//! * [`synth`] — a seeded generator of overlapping-ellipse "ore" scenes with
//!   a bit-exact on-disk format (PGM images, plain-text annotations,
//!   checksummed manifest).
//! * [`harness`] — SGD training with a step-decay schedule, AP50 box/mask
//!   evaluation, checkpointing, and the pieces behind the `orenext` CLI.
//! * [`verify`] — the gradient-check suite run by tests and the CLI.
//!
//! Everything is double precision and deterministic: same seeds, same bytes.
//! There is no autograd; each operation carries a hand-written backward pass
//! validated against central differences.

pub mod backbone;
pub mod error;
pub mod fpn;
pub mod geometry;
pub mod harness;
pub mod loss;
pub mod point_head;
pub mod synth;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
