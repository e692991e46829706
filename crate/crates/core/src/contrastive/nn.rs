//! Small fully connected networks with hand-written backpropagation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

/// Affine layers with elementwise activations. Parameters live in one flat
/// vector, layer by layer: the `out x in` row-major weight matrix, then the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub params: Vec<f64>,
}

/// Layer outputs of one forward pass; `values[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub values: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("cache holds the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Weights drawn from `N(0, 1 / fan_in)`, zero biases.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 || sizes.contains(&0) {
            return Err(Error::invalid("network needs >= 2 positive sizes and one activation per layer"));
        }
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let z: f64 = StandardNormal.sample(rng);
                params.push(z * scale);
            }
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Mutable view of the bias of layer `l`.
    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let offset: usize = param_count(&self.sizes[..=l]) + self.sizes[l] * self.sizes[l + 1];
        let n = self.sizes[l + 1];
        &mut self.params[offset..offset + n]
    }

    pub fn forward(&self, x: &[f64]) -> MlpCache {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        let mut values = vec![x.to_vec()];
        let mut offset = 0;
        for (l, act) in self.activations.iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let input = values.last().unwrap();
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let z = b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, c)| a * c).sum::<f64>();
                    match act {
                        Activation::Tanh => z.tanh(),
                        Activation::Identity => z,
                    }
                })
                .collect();
            values.push(out);
            offset += n_in * n_out + n_out;
        }
        MlpCache { values }
    }

    /// Backpropagates `d_out`, accumulating into `grad` (same layout as
    /// `params`). Returns the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer size");
        let mut delta = d_out.to_vec();
        let mut offset = self.params.len();
        for l in (0..self.activations.len()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            offset -= n_in * n_out + n_out;
            let out = &cache.values[l + 1];
            if self.activations[l] == Activation::Tanh {
                for (d, y) in delta.iter_mut().zip(out) {
                    *d *= 1.0 - y * y;
                }
            }
            let input = &cache.values[l];
            let w = &self.params[offset..offset + n_in * n_out];
            let (gw, gb) = grad[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut d_in = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                gb[o] += d;
                let row = o * n_in;
                for i in 0..n_in {
                    gw[row + i] += d * input[i];
                    d_in[i] += d * w[row + i];
                }
            }
            delta = d_in;
        }
        delta
    }
}

/// `x / |x|` and the norm.
pub fn l2_normalize(x: &[f64]) -> (Vec<f64>, f64) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    (x.iter().map(|v| v / n).collect(), n)
}

/// Backward pass of [`l2_normalize`] given its output `y` and input norm.
pub fn l2_normalize_backward(y: &[f64], norm: f64, d_y: &[f64]) -> Vec<f64> {
    let proj: f64 = y.iter().zip(d_y).map(|(a, b)| a * b).sum();
    y.iter().zip(d_y).map(|(yi, di)| (di - yi * proj) / norm).collect()
}

/// Feature encoder on flattened downsampled depth patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoder {
    pub mlp: Mlp,
}

impl ToyEncoder {
    /// `input -> hidden (tanh) -> feature (tanh)` for each hidden size in turn.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let sizes: Vec<usize> = std::iter::once(input).chain(hidden.iter().copied()).collect();
        let acts = vec![Activation::Tanh; sizes.len() - 1];
        Ok(ToyEncoder {
            mlp: Mlp::random(&sizes, &acts, rng)?,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        self.mlp.forward(x).values.pop().unwrap()
    }
}

/// Two-layer head `D -> D (tanh) -> D'` followed by L2 normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    pub mlp: MlpCache,
    pub norm: f64,
    pub output: Vec<f64>,
}

impl ProjectionHead {
    /// The output bias is drawn from `N(0, output_bias_std^2)`; a large value
    /// makes every initial embedding nearly the same direction.
    pub fn new<R: Rng + ?Sized>(dim: usize, out_dim: usize, output_bias_std: f64, rng: &mut R) -> Result<Self> {
        let mut mlp = Mlp::random(&[dim, dim, out_dim], &[Activation::Tanh, Activation::Identity], rng)?;
        for b in mlp.bias_mut(1) {
            let z: f64 = StandardNormal.sample(rng);
            *b = z * output_bias_std;
        }
        Ok(ProjectionHead { mlp })
    }

    pub fn forward(&self, feature: &[f64]) -> HeadCache {
        let mlp = self.mlp.forward(feature);
        let (output, norm) = l2_normalize(mlp.output());
        HeadCache { mlp, norm, output }
    }

    pub fn project(&self, feature: &[f64]) -> Vec<f64> {
        self.forward(feature).output
    }

    pub fn backward(&self, cache: &HeadCache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let d_pre = l2_normalize_backward(&cache.output, cache.norm, d_out);
        self.mlp.backward(&cache.mlp, &d_pre, grad)
    }
}
