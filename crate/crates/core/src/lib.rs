//! Multi-view dynamic images for depth-video action recognition.
//!
//! The crate is organised along the processing chain:
//!
//! * [`depthio`] reads and writes 16-bit depth videos, manifests and sidecar
//!   files, builds evaluation splits and renders synthetic datasets.
//! * [`viewsynth`] re-images depth frames from virtual camera viewpoints.
//! * [`rankpool`] turns (segments of) videos into dynamic images by rank
//!   pooling, and provides the depth-motion-map baseline.
//! * [`proposal`] merges per-frame human boxes into a spatio-temporal crop.
//! * [`minicnn`] is a small multi-stream CNN whose convolutional block is
//!   shared by every view-group stream and trained round-robin.
//! * [`features`] holds PCA, the one-vs-rest linear SVM and score fusion.
//! * [`pipeline`] wires everything into end-to-end runs and ablations.

pub mod blockio;
pub mod depthio;
pub mod error;
pub mod features;
pub mod minicnn;
pub mod pipeline;
pub mod proposal;
pub mod rankpool;
pub mod viewsynth;

pub use error::{Error, Result};
