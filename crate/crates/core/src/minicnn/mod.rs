//! Multi-stream CNN with one convolutional stack shared by every
//! view-group stream.
//!
//! Training visits the streams round-robin. Each visit updates the shared
//! stack in place, so stream `i` always starts from the convolutional
//! weights left by stream `i − 1` (and stream 0 from the last stream of the
//! previous round). Keeping a single shared block gives the same parameter
//! sequence as copying the stack from model to model after every visit.

mod arch;
mod checkpoint;
mod layers;
mod model;
mod train;

pub use arch::{Arch, ConvShape, ConvSpec, DenseSpec, DEFAULT_ARCH};
pub use checkpoint::{load_model, model_from_blocks, model_to_blocks, save_model};
pub use layers::{ConvLayer, DenseLayer};
pub use model::{
    gradient_check, init_model, softmax, ConvStack, FcStack, GradCheckReport, Grads,
    MultiStreamModel, StreamView,
};
pub use train::{
    accuracy, sgd_step, train_round_robin, LossRecord, StepEvent, TrainSample, Velocity,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" => Some(Precision::F32),
            "f64" => Some(Precision::F64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Round-robin rounds; each round takes one step per group.
    pub iters: usize,
    pub seed: u64,
    pub dropout: f64,
    /// `F32` rounds parameters to single precision after every update.
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 8,
            iters: 100,
            seed: 0,
            dropout: 0.5,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} {v} must be >= 0")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Nearest-neighbour resize of an 8-bit image to `size × size`, scaled to
/// `[0, 1]`.
pub fn prepare_input(pixels: &[u8], width: usize, height: usize, size: usize) -> Result<Vec<f64>> {
    if pixels.len() != width * height || width == 0 || height == 0 {
        return Err(Error::shape(width * height, pixels.len()));
    }
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let sy = ((y * height) / size).min(height - 1);
        for x in 0..size {
            let sx = ((x * width) / size).min(width - 1);
            out.push(pixels[sy * width + sx] as f64 / 255.0);
        }
    }
    Ok(out)
}
