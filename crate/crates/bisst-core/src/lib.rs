//! Core engine for dense event captioning over feature-vector sequences.
//!
//! A video arrives as `T` timesteps of `D`-dimensional features. Two LSTM
//! encoders sweep the sequence (forward and reversed) and densely score `K`
//! anchor lengths at every step; per-interval scores from the two sweeps are
//! fused by multiplication into ranked temporal proposals. Each proposal is
//! then described by a two-layer LSTM decoder whose visual input is built by
//! one of five fusion strategies over the proposal's clip features and the
//! boundary hidden states (context vectors), optionally with temporal dynamic
//! attention and a learned context gate. Everything is trained end to end
//! with reverse-mode autodiff on a tape of tensor primitives.
//!
//! The crate is `no_std`-compatible (with `alloc`); file formats, training
//! orchestration, and the command line live in the companion `bisst-cli`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod decoder;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synth;
pub mod tensor;



pub use decoder::{CaptionedEvent, FusionVariant, Vocabulary};
pub use encoder::ProposalCandidate;
pub use error::CoreError;
pub use geometry::{AnchorSet, Direction, Interval};
pub use graph::{Graph, NodeId};
pub use model::{DirectionMode, Model, ModelConfig};
pub use synth::{EventAnnotation, FeatureSequence, GenConfig};
pub use tensor::{ParamStore, Tensor};
