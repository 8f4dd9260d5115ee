//! Feed-forward embedding head: affine layers with ReLU between them and an
//! L2-normalized output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::vector::ZERO_NORM_EPS;

/// One affine map `y = W x + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Per-parameter gradients (or momentum buffers) shaped like a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &EmbeddingModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.as_slice().len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// All entries, layer by layer (weights then bias).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|&g| g == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub layers: Vec<Dense>,
}

/// Intermediate values kept for backpropagation.
pub(crate) struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
    norms: Vec<f64>,
    pub(crate) embeddings: Matrix,
}

impl EmbeddingModel {
    /// Random model with Glorot-uniform weights and zero bias.
    /// `dims` lists every width from input to output, e.g. `[32, 64, 32]`.
    pub fn new_random(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer widths {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Dense {
                    weights: Matrix::from_vec(fan_out, fan_in, data).expect("shape"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() || l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(Error::ShapeMismatch(format!("layer {i} bias/weight shapes disagree")));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::ShapeMismatch(format!("layer {i} input does not match previous output")));
            }
            if !l.weights.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Embeds a batch (one sample per row); every output row has unit norm.
    pub fn forward(&self, features: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(features)?.embeddings)
    }

    pub(crate) fn forward_cached(&self, features: &Matrix) -> Result<ForwardCache> {
        if features.cols() != self.in_dim() {
            return Err(Error::DimMismatch {
                expected: self.in_dim(),
                got: features.cols(),
            });
        }
        if !features.is_finite() {
            return Err(Error::NonFinite);
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = features.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, &current);
            let next = if i < last { relu(&z) } else { z.clone() };
            inputs.push(current);
            pre.push(z);
            current = next;
        }
        let mut norms = Vec::with_capacity(current.rows());
        for r in 0..current.rows() {
            let row = current.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFinite);
            }
            if norm < ZERO_NORM_EPS {
                return Err(Error::DegenerateActivation);
            }
            row.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        Ok(ForwardCache {
            inputs,
            pre,
            norms,
            embeddings: current,
        })
    }

    /// Backpropagates `d loss / d embeddings` to parameter gradients.
    pub(crate) fn backward(&self, cache: &ForwardCache, grad_embeddings: &Matrix) -> Gradients {
        let e = &cache.embeddings;
        // through the L2 normalization: dz = (g - (g.e) e) / |z|
        let mut delta = Matrix::zeros(e.rows(), e.cols());
        for r in 0..e.rows() {
            let (g, er) = (grad_embeddings.row(r), e.row(r));
            let proj: f64 = g.iter().zip(er).map(|(a, b)| a * b).sum();
            for ((d, gi), ei) in delta.row_mut(r).iter_mut().zip(g).zip(er) {
                *d = (gi - proj * ei) / cache.norms[r];
            }
        }

        let mut grads = Gradients::zeros_like(self);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if l + 1 < self.layers.len() {
                // ReLU gate of this layer's output
                for (d, z) in delta.as_mut_slice().iter_mut().zip(cache.pre[l].as_slice()) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.inputs[l];
            let (out, inp) = (layer.out_dim(), layer.in_dim());
            let lg = &mut grads.layers[l];
            for r in 0..delta.rows() {
                let (dr, xr) = (delta.row(r), input.row(r));
                for o in 0..out {
                    let d = dr[o];
                    if d == 0.0 {
                        continue;
                    }
                    lg.bias[o] += d;
                    for (w, x) in lg.weights[o * inp..(o + 1) * inp].iter_mut().zip(xr) {
                        *w += d * x;
                    }
                }
            }
            if l > 0 {
                let mut prev = Matrix::zeros(delta.rows(), inp);
                for r in 0..delta.rows() {
                    let dr = delta.row(r).to_vec();
                    let pr = prev.row_mut(r);
                    for (o, d) in dr.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        for (p, w) in pr.iter_mut().zip(layer.weights.row(o)) {
                            *p += d * w;
                        }
                    }
                }
                delta = prev;
            }
        }
        grads
    }
}

fn affine(layer: &Dense, x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), layer.out_dim());
    for r in 0..x.rows() {
        let xr = x.row(r);
        for (o, y) in out.row_mut(r).iter_mut().enumerate() {
            *y = layer.bias[o]
                + layer
                    .weights
                    .row(o)
                    .iter()
                    .zip(xr)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
        }
    }
    out
}

fn relu(z: &Matrix) -> Matrix {
    let data = z.as_slice().iter().map(|v| v.max(0.0)).collect();
    Matrix::from_vec(z.rows(), z.cols(), data).expect("same shape")
}
