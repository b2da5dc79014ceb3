use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::arch::Arch;
use super::layers::{ConvCache, ConvLayer, DenseCache, DenseLayer};
use super::TrainConfig;
use crate::error::{Error, Result};

/// Convolutional layers shared by every stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack {
    pub layers: Vec<ConvLayer>,
}

/// Dense layers of one view-group stream; the last layer emits logits.
#[derive(Debug, Clone, PartialEq)]
pub struct FcStack {
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStreamModel {
    pub arch: Arch,
    pub shared: ConvStack,
    pub streams: Vec<FcStack>,
    pub num_classes: usize,
}

/// One stream as seen from outside: the shared stack plus its own dense
/// layers.
#[derive(Debug, Clone, Copy)]
pub struct StreamView<'a> {
    pub conv: &'a ConvStack,
    pub fc: &'a FcStack,
}

impl StreamView<'_> {
    pub fn conv_params(&self) -> Vec<f64> {
        self.conv
            .layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Gradients for the shared stack and a single stream, block-aligned with
/// [`MultiStreamModel::blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub group: usize,
    pub shared: Vec<Vec<f64>>,
    pub stream: Vec<Vec<f64>>,
}

impl Grads {
    pub fn blocks(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.shared.iter().chain(&self.stream)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks().flatten().fold(0.0, |m, g| m.max(g.abs()))
    }
}

pub fn init_model(
    arch: &Arch,
    num_groups: usize,
    num_classes: usize,
    seed: u64,
) -> Result<MultiStreamModel> {
    if num_groups == 0 {
        return Err(Error::InvalidArgument("need at least one stream".into()));
    }
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    let shapes = arch.conv_shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut he = |fan_in: usize, n: usize| -> Vec<f64> {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    };
    let convs = arch
        .convs
        .iter()
        .zip(&shapes)
        .map(|(&spec, &shape)| {
            let fan_in = shape.in_c * spec.kernel * spec.kernel;
            ConvLayer {
                spec,
                shape,
                weights: he(fan_in, spec.filters * fan_in),
                bias: vec![0.0; spec.filters],
            }
        })
        .collect();
    let flat = arch.conv_output_dim()?;
    let mut streams = Vec::with_capacity(num_groups);
    for _ in 0..num_groups {
        let mut layers = Vec::new();
        let mut in_dim = flat;
        for d in &arch.dense {
            layers.push(DenseLayer {
                in_dim,
                out_dim: d.units,
                weights: he(in_dim, d.units * in_dim),
                bias: vec![0.0; d.units],
                relu: true,
                dropout: d.dropout,
            });
            in_dim = d.units;
        }
        layers.push(DenseLayer {
            in_dim,
            out_dim: num_classes,
            weights: he(in_dim, num_classes * in_dim),
            bias: vec![0.0; num_classes],
            relu: false,
            dropout: false,
        });
        streams.push(FcStack { layers });
    }
    Ok(MultiStreamModel {
        arch: arch.clone(),
        shared: ConvStack { layers: convs },
        streams,
        num_classes,
    })
}

struct Trace {
    conv: Vec<ConvCache>,
    dense: Vec<DenseCache>,
    logits: Vec<f64>,
    feature: Vec<f64>,
}

impl MultiStreamModel {
    pub fn num_groups(&self) -> usize {
        self.streams.len()
    }

    pub fn input_len(&self) -> usize {
        self.arch.input * self.arch.input
    }

    pub fn feature_dim(&self) -> usize {
        match self.streams[0].layers.len() {
            1 => self.streams[0].layers[0].in_dim,
            n => self.streams[0].layers[n - 2].out_dim,
        }
    }

    pub fn stream(&self, group: usize) -> Result<StreamView<'_>> {
        let fc = self
            .streams
            .get(group)
            .ok_or_else(|| self.bad_group(group))?;
        Ok(StreamView {
            conv: &self.shared,
            fc,
        })
    }

    fn bad_group(&self, group: usize) -> Error {
        Error::InvalidArgument(format!(
            "group {group} out of range 0..{}",
            self.streams.len()
        ))
    }

    /// Parameter blocks of the shared stack followed by stream `group`,
    /// weights before bias for each layer.
    pub fn blocks(&self, group: usize) -> Result<Vec<&[f64]>> {
        let fc = self
            .streams
            .get(group)
            .ok_or_else(|| self.bad_group(group))?;
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.shared.layers {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        for l in &fc.layers {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        Ok(out)
    }

    pub fn blocks_mut(&mut self, group: usize) -> Result<Vec<&mut [f64]>> {
        if group >= self.streams.len() {
            return Err(self.bad_group(group));
        }
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.shared.layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        for l in &mut self.streams[group].layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        Ok(out)
    }

    /// Every parameter block of the model: shared, then each stream.
    pub fn all_blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.shared.layers {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        for s in &self.streams {
            for l in &s.layers {
                out.push(&l.weights);
                out.push(&l.bias);
            }
        }
        out
    }

    pub fn all_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.shared.layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        for s in &mut self.streams {
            for l in &mut s.layers {
                out.push(&mut l.weights);
                out.push(&mut l.bias);
            }
        }
        out
    }

    fn check_input(&self, group: usize, image: &[f64]) -> Result<()> {
        if group >= self.streams.len() {
            return Err(self.bad_group(group));
        }
        if image.len() != self.input_len() {
            return Err(Error::shape(self.input_len(), image.len()));
        }
        Ok(())
    }

    fn run(
        &self,
        group: usize,
        image: &[f64],
        masks: Option<&mut dyn FnMut(usize) -> Vec<f64>>,
    ) -> Trace {
        let mut x = image.to_vec();
        let mut conv = Vec::with_capacity(self.shared.layers.len());
        for l in &self.shared.layers {
            let (y, c) = l.forward(&x);
            conv.push(c);
            x = y;
        }
        let fc = &self.streams[group];
        let mut dense = Vec::with_capacity(fc.layers.len());
        let mut feature = x.clone();
        let mut masks = masks;
        for (i, l) in fc.layers.iter().enumerate() {
            if i + 1 == fc.layers.len() {
                feature = x.clone();
            }
            let mask = match (&mut masks, l.dropout) {
                (Some(draw), true) => Some(draw(l.out_dim)),
                _ => None,
            };
            let (y, c) = l.forward(&x, mask);
            dense.push(c);
            x = y;
        }
        Trace {
            conv,
            dense,
            logits: x,
            feature,
        }
    }

    /// Inference pass (dropout off). Returns `(logits, feature)`.
    pub fn forward(&self, group: usize, image: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(group, image)?;
        let t = self.run(group, image, None);
        Ok((t.logits, t.feature))
    }

    pub fn extract_feature(&self, group: usize, image: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(group, image)?.1)
    }

    fn weight_penalty(&self, group: usize) -> f64 {
        self.blocks(group)
            .expect("validated group")
            .iter()
            .flat_map(|b| b.iter())
            .map(|p| p * p)
            .sum()
    }

    fn check_batch(&self, group: usize, images: &[&[f64]], labels: &[usize]) -> Result<()> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if images.len() != labels.len() {
            return Err(Error::shape(images.len(), labels.len()));
        }
        for (img, &y) in images.iter().zip(labels) {
            self.check_input(group, img)?;
            if y >= self.num_classes {
                return Err(Error::Data(format!(
                    "label {y} out of range 0..{}",
                    self.num_classes
                )));
            }
        }
        Ok(())
    }

    /// Mean cross-entropy plus the weight-decay term, no dropout.
    pub fn loss(
        &self,
        group: usize,
        images: &[&[f64]],
        labels: &[usize],
        weight_decay: f64,
    ) -> Result<f64> {
        Ok(self.loss_and_pattern(group, images, labels, weight_decay, false)?.0)
    }

    /// Loss plus, when `pattern` is set, every rectifier sign and pooling
    /// winner of the batch.
    fn loss_and_pattern(
        &self,
        group: usize,
        images: &[&[f64]],
        labels: &[usize],
        weight_decay: f64,
        pattern: bool,
    ) -> Result<(f64, Vec<usize>)> {
        self.check_batch(group, images, labels)?;
        let mut ce = 0.0;
        let mut signs = Vec::new();
        for (img, &y) in images.iter().zip(labels) {
            let t = self.run(group, img, None);
            ce += cross_entropy(&t.logits, y).0;
            if pattern {
                for c in &t.conv {
                    signs.extend(c.pre.iter().map(|&v| usize::from(v > 0.0)));
                    signs.extend(&c.argmax);
                }
                for (c, l) in t.dense.iter().zip(&self.streams[group].layers) {
                    if l.relu {
                        signs.extend(c.pre.iter().map(|&v| usize::from(v > 0.0)));
                    }
                }
            }
        }
        let loss = ce / images.len() as f64 + 0.5 * weight_decay * self.weight_penalty(group);
        Ok((loss, signs))
    }

    /// Training-mode loss and gradients for the shared stack and stream
    /// `group`. Dropout masks are drawn from `mask_seed`.
    pub fn loss_and_grads(
        &self,
        group: usize,
        images: &[&[f64]],
        labels: &[usize],
        cfg: &TrainConfig,
        mask_seed: u64,
    ) -> Result<(f64, Grads)> {
        self.check_batch(group, images, labels)?;
        let mut grads = Grads {
            group,
            shared: self
                .shared
                .layers
                .iter()
                .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
                .collect(),
            stream: self.streams[group]
                .layers
                .iter()
                .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
                .collect(),
        };
        let rate = cfg.dropout;
        let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
        let mut draw = |n: usize| -> Vec<f64> {
            let keep = 1.0 / (1.0 - rate);
            (0..n)
                .map(|_| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect()
        };
        let inv_b = 1.0 / images.len() as f64;
        let mut ce = 0.0;
        let fc = &self.streams[group];
        for (img, &y) in images.iter().zip(labels) {
            let trace = if rate > 0.0 {
                self.run(group, img, Some(&mut draw))
            } else {
                self.run(group, img, None)
            };
            let (l, mut g) = cross_entropy(&trace.logits, y);
            ce += l;
            g.iter_mut().for_each(|v| *v *= inv_b);
            for (i, layer) in fc.layers.iter().enumerate().rev() {
                let (gw, rest) = grads.stream[2 * i..].split_at_mut(1);
                g = layer.backward(&trace.dense[i], &g, &mut gw[0], &mut rest[0]);
            }
            for (i, layer) in self.shared.layers.iter().enumerate().rev() {
                let (gw, rest) = grads.shared[2 * i..].split_at_mut(1);
                g = layer.backward(&trace.conv[i], &g, &mut gw[0], &mut rest[0]);
            }
        }
        let wd = cfg.weight_decay;
        if wd != 0.0 {
            let params = self.blocks(group)?;
            let targets = grads.shared.iter_mut().chain(grads.stream.iter_mut());
            for (g, p) in targets.zip(params) {
                g.iter_mut().zip(p).for_each(|(gi, pi)| *gi += wd * pi);
            }
        }
        let loss = ce * inv_b + 0.5 * wd * self.weight_penalty(group);
        if !loss.is_finite() {
            return Err(Error::Numeric("training loss is not finite".into()));
        }
        Ok((loss, grads))
    }
}

/// `(−log softmax(z)[y], softmax(z) − onehot(y))`
fn cross_entropy(logits: &[f64], y: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + m - logits[y];
    let mut g: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    g[y] -= 1.0;
    (loss, g)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    /// Entries whose ±h probes switched a rectifier or pooling winner, so
    /// the difference quotient straddles a kink; excluded from the maximum.
    pub kinked: usize,
    /// Block index (as in [`MultiStreamModel::blocks`]) of the worst entry.
    pub worst_block: usize,
}

/// Central finite differences over every parameter of the shared stack and
/// stream `group`, with dropout off. Entries where both the analytic and
/// numeric gradients are below `1e-8` are skipped, as are entries whose
/// probes land on different sides of a rectifier or pooling kink.
pub fn gradient_check(
    model: &MultiStreamModel,
    group: usize,
    images: &[&[f64]],
    labels: &[usize],
    weight_decay: f64,
    h: f64,
) -> Result<GradCheckReport> {
    let cfg = TrainConfig {
        dropout: 0.0,
        weight_decay,
        ..TrainConfig::default()
    };
    let (_, grads) = model.loss_and_grads(group, images, labels, &cfg, 0)?;
    let analytic: Vec<Vec<f64>> = grads.blocks().cloned().collect();
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        kinked: 0,
        worst_block: 0,
    };
    for (b, block) in analytic.iter().enumerate() {
        for (i, &a) in block.iter().enumerate() {
            let orig = probe.blocks(group)?[b][i];
            probe.blocks_mut(group)?[b][i] = orig + h;
            let (up, up_signs) = probe.loss_and_pattern(group, images, labels, weight_decay, true)?;
            probe.blocks_mut(group)?[b][i] = orig - h;
            let (down, down_signs) = probe.loss_and_pattern(group, images, labels, weight_decay, true)?;
            probe.blocks_mut(group)?[b][i] = orig;
            if up_signs != down_signs {
                report.kinked += 1;
                continue;
            }
            let n = (up - down) / (2.0 * h);
            if a.abs() < 1e-8 && n.abs() < 1e-8 {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            let rel = (a - n).abs() / a.abs().max(n.abs());
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_block = b;
            }
        }
    }
    Ok(report)
}
