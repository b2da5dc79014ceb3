//! Convolution and dense layers with hand-written backward passes.
//! Tensors are flat `Vec<f64>` in channel-major, row-major order.

use super::arch::{ConvShape, ConvSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub shape: ConvShape,
    /// `[filter][in_channel][ky][kx]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    /// For each pooled output, the flat index of the winning activation.
    pub argmax: Vec<usize>,
}

impl ConvLayer {
    pub fn fan_in(&self) -> usize {
        self.shape.in_c * self.spec.kernel * self.spec.kernel
    }

    pub fn output_len(&self) -> usize {
        self.spec.filters * self.shape.out_h * self.shape.out_w
    }

    pub fn forward(&self, input: &[f64]) -> (Vec<f64>, ConvCache) {
        let ConvShape {
            in_c,
            in_h,
            in_w,
            conv_h,
            conv_w,
            out_h,
            out_w,
        } = self.shape;
        let ConvSpec {
            filters,
            kernel: k,
            stride,
            padding,
            pool,
        } = self.spec;
        debug_assert_eq!(input.len(), in_c * in_h * in_w);
        let mut pre = vec![0.0; filters * conv_h * conv_w];
        for f in 0..filters {
            let wf = &self.weights[f * in_c * k * k..(f + 1) * in_c * k * k];
            for oy in 0..conv_h {
                for ox in 0..conv_w {
                    let mut acc = self.bias[f];
                    for c in 0..in_c {
                        for ky in 0..k {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= in_h as isize {
                                continue;
                            }
                            let row = (c * in_h + iy as usize) * in_w;
                            let wrow = (c * k + ky) * k;
                            for kx in 0..k {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix >= 0 && ix < in_w as isize {
                                    acc += wf[wrow + kx] * input[row + ix as usize];
                                }
                            }
                        }
                    }
                    pre[(f * conv_h + oy) * conv_w + ox] = acc;
                }
            }
        }
        let act: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let (out, argmax) = if pool {
            let mut out = vec![0.0; filters * out_h * out_w];
            let mut argmax = vec![0; out.len()];
            for f in 0..filters {
                for py in 0..out_h {
                    for px in 0..out_w {
                        let mut best = usize::MAX;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let idx = (f * conv_h + 2 * py + dy) * conv_w + 2 * px + dx;
                                if best == usize::MAX || act[idx] > act[best] {
                                    best = idx;
                                }
                            }
                        }
                        let o = (f * out_h + py) * out_w + px;
                        out[o] = act[best];
                        argmax[o] = best;
                    }
                }
            }
            (out, argmax)
        } else {
            let n = act.len();
            (act, (0..n).collect())
        };
        (
            out,
            ConvCache {
                input: input.to_vec(),
                pre,
                argmax,
            },
        )
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(
        &self,
        cache: &ConvCache,
        grad_out: &[f64],
        gw: &mut [f64],
        gb: &mut [f64],
    ) -> Vec<f64> {
        let ConvShape {
            in_c,
            in_h,
            in_w,
            conv_h,
            conv_w,
            ..
        } = self.shape;
        let ConvSpec {
            filters,
            kernel: k,
            stride,
            padding,
            ..
        } = self.spec;
        let mut dz = vec![0.0; cache.pre.len()];
        for (g, &idx) in grad_out.iter().zip(&cache.argmax) {
            if cache.pre[idx] > 0.0 {
                dz[idx] += g;
            }
        }
        let mut din = vec![0.0; in_c * in_h * in_w];
        for f in 0..filters {
            let base = f * in_c * k * k;
            for oy in 0..conv_h {
                for ox in 0..conv_w {
                    let d = dz[(f * conv_h + oy) * conv_w + ox];
                    if d == 0.0 {
                        continue;
                    }
                    gb[f] += d;
                    for c in 0..in_c {
                        for ky in 0..k {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= in_h as isize {
                                continue;
                            }
                            let row = (c * in_h + iy as usize) * in_w;
                            let wrow = base + (c * k + ky) * k;
                            for kx in 0..k {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix >= 0 && ix < in_w as isize {
                                    let i = row + ix as usize;
                                    gw[wrow + kx] += d * cache.input[i];
                                    din[i] += d * self.weights[wrow + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        din
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out][in]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Rectifier after the affine map; false only for the logit layer.
    pub relu: bool,
    pub dropout: bool,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    /// Inverted-dropout multipliers, empty when dropout was inactive.
    pub mask: Vec<f64>,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        self.in_dim
    }

    pub fn forward(&self, input: &[f64], mask: Option<Vec<f64>>) -> (Vec<f64>, DenseCache) {
        debug_assert_eq!(input.len(), self.in_dim);
        let pre: Vec<f64> = (0..self.out_dim)
            .map(|o| {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                self.bias[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect();
        let mut out: Vec<f64> = if self.relu {
            pre.iter().map(|&z| z.max(0.0)).collect()
        } else {
            pre.clone()
        };
        let mask = mask.unwrap_or_default();
        if !mask.is_empty() {
            out.iter_mut().zip(&mask).for_each(|(o, m)| *o *= m);
        }
        (
            out,
            DenseCache {
                input: input.to_vec(),
                pre,
                mask,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &DenseCache,
        grad_out: &[f64],
        gw: &mut [f64],
        gb: &mut [f64],
    ) -> Vec<f64> {
        let mut din = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let mut d = grad_out[o];
            if !cache.mask.is_empty() {
                d *= cache.mask[o];
            }
            if self.relu && cache.pre[o] <= 0.0 {
                continue;
            }
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            let row = o * self.in_dim;
            for i in 0..self.in_dim {
                gw[row + i] += d * cache.input[i];
                din[i] += d * self.weights[row + i];
            }
        }
        din
    }
}
