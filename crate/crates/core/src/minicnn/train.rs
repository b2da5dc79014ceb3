use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Grads, MultiStreamModel};
use super::{Precision, TrainConfig};
use crate::error::{Error, Result};

/// Momentum buffers, one per parameter block. The shared stack has a single
/// buffer that every stream updates, so it travels with the shared weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub shared: Vec<Vec<f64>>,
    pub streams: Vec<Vec<Vec<f64>>>,
}

impl Velocity {
    pub fn zeros(model: &MultiStreamModel) -> Self {
        let shared = model
            .shared
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
            .collect();
        let streams = model
            .streams
            .iter()
            .map(|s| {
                s.layers
                    .iter()
                    .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
                    .collect()
            })
            .collect();
        Self { shared, streams }
    }
}

/// `v ← μv − lr·g; p ← p + v` on the shared stack and stream `grads.group`.
pub fn sgd_step(
    model: &mut MultiStreamModel,
    grads: &Grads,
    cfg: &TrainConfig,
    vel: &mut Velocity,
) -> Result<()> {
    let group = grads.group;
    let params = model.blocks_mut(group)?;
    let vblocks = vel.shared.iter_mut().chain(vel.streams[group].iter_mut());
    let gblocks = grads.shared.iter().chain(&grads.stream);
    if params.len() != grads.shared.len() + grads.stream.len() {
        return Err(Error::shape(
            params.len(),
            grads.shared.len() + grads.stream.len(),
        ));
    }
    for ((p, v), g) in params.into_iter().zip(vblocks).zip(gblocks) {
        if p.len() != g.len() || v.len() != g.len() {
            return Err(Error::shape(p.len(), g.len()));
        }
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = cfg.momentum * *vi - cfg.learning_rate * gi;
            *pi += *vi;
            if cfg.precision == Precision::F32 {
                *vi = *vi as f32 as f64;
                *pi = *pi as f32 as f64;
            }
        }
    }
    Ok(())
}

/// One training example: alternative images of the same sample (e.g. the
/// whole-video and segment dynamic images), one of which is drawn per visit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub variants: Vec<Vec<f64>>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub group: usize,
    pub loss: f64,
}

/// Passed to the observer after every update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    pub iteration: usize,
    pub group: usize,
    pub loss: f64,
}

struct Sampler {
    order: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }
}

/// Round-robin training: every iteration visits groups `0..n` in order and
/// takes one momentum step on a batch from that group's data.
pub fn train_round_robin(
    model: &mut MultiStreamModel,
    datasets: &[Vec<TrainSample>],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&StepEvent, &MultiStreamModel),
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    if datasets.len() != model.num_groups() {
        return Err(Error::shape(
            format!("{} group datasets", model.num_groups()),
            datasets.len(),
        ));
    }
    for (g, ds) in datasets.iter().enumerate() {
        if ds.is_empty() || ds.iter().any(|s| s.variants.is_empty()) {
            return Err(Error::Data(format!("training data for group {g} is empty")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samplers: Vec<Sampler> = datasets
        .iter()
        .map(|ds| Sampler {
            order: (0..ds.len()).collect(),
            cursor: ds.len(),
        })
        .collect();
    let mut vel = Velocity::zeros(model);
    let mut trace = Vec::with_capacity(cfg.iters * datasets.len());
    for iteration in 0..cfg.iters {
        for (group, ds) in datasets.iter().enumerate() {
            let mut images: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
            let mut labels = Vec::with_capacity(cfg.batch_size);
            for _ in 0..cfg.batch_size {
                let s = &ds[samplers[group].next(&mut rng)];
                let v = rng.random_range(0..s.variants.len());
                images.push(&s.variants[v]);
                labels.push(s.label);
            }
            let mask_seed = rng.random::<u64>();
            let (loss, grads) = model.loss_and_grads(group, &images, &labels, cfg, mask_seed)?;
            sgd_step(model, &grads, cfg, &mut vel)?;
            let event = StepEvent {
                iteration,
                group,
                loss,
            };
            observer(&event, model);
            trace.push(LossRecord {
                iteration,
                group,
                loss,
            });
        }
    }
    Ok(trace)
}

/// Fraction of samples whose first variant is classified correctly.
pub fn accuracy(model: &MultiStreamModel, group: usize, data: &[TrainSample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("accuracy of an empty set".into()));
    }
    let mut hits = 0;
    for s in data {
        let (logits, _) = model.forward(group, &s.variants[0])?;
        if super::argmax(&logits) == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
