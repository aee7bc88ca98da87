use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vector,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vector, activation: Activation) -> Result<Self> {
        if bias.len() != weight.nrows() {
            return Err(Error::DimensionMismatch {
                context: "layer bias",
                expected: weight.nrows(),
                found: bias.len(),
            });
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn pre_activation(&self, x: &Matrix) -> Matrix {
        let mut z = &self.weight * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }
}

/// Layers preceding the zero-bias head. An empty extractor is the identity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub layers: Vec<DenseLayer>,
}

/// Intermediate values kept for back-propagation.
pub(crate) struct ExtractorCache {
    /// `activations[l]` feeds layer `l`; the last entry is the extractor output.
    pub(crate) activations: Vec<Matrix>,
    pub(crate) pre: Vec<Matrix>,
}

impl FeatureExtractor {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::DimensionMismatch {
                    context: "extractor layer chain",
                    expected: pair[0].output_dim(),
                    found: pair[1].input_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform layers with widths `dims[0] → dims[1] → …`.
    pub fn random(
        dims: &[usize],
        activation: Activation,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let weight = Matrix::from_fn(w[1], w[0], |_, _| rng.random_range(-limit..limit));
                DenseLayer::new(weight, Vector::zeros(w[1]), activation)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    /// Input width, or `None` for the identity extractor.
    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(DenseLayer::input_dim)
    }

    /// Output width given the width of its input.
    pub fn output_dim(&self, input_dim: usize) -> usize {
        self.layers.last().map_or(input_dim, DenseLayer::output_dim)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            let act = layer.activation;
            h = layer.pre_activation(&h).map(|z| act.apply(z));
        }
        Ok(h)
    }

    pub(crate) fn forward_cached(&self, x: &Matrix) -> Result<ExtractorCache> {
        self.check_input(x)?;
        let mut activations = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.pre_activation(activations.last().expect("nonempty"));
            let act = layer.activation;
            activations.push(z.map(|v| act.apply(v)));
            pre.push(z);
        }
        Ok(ExtractorCache { activations, pre })
    }

    /// Gradients of every layer given `d_out = ∂L/∂output`.
    pub(crate) fn backward(&self, cache: &ExtractorCache, d_out: Matrix) -> Vec<(Matrix, Vector)> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d_a = d_out;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[l];
            let a = &cache.activations[l + 1];
            let act = layer.activation;
            let d_z = Matrix::from_fn(z.nrows(), z.ncols(), |i, j| {
                d_a[(i, j)] * act.derivative(z[(i, j)], a[(i, j)])
            });
            let d_w = &d_z * cache.activations[l].transpose();
            let d_b = row_sums(&d_z);
            d_a = layer.weight.transpose() * &d_z;
            grads.push((d_w, d_b));
        }
        grads.reverse();
        grads
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        match self.input_dim() {
            Some(d) if d != x.nrows() => Err(Error::DimensionMismatch {
                context: "extractor input rows",
                expected: d,
                found: x.nrows(),
            }),
            _ => Ok(()),
        }
    }
}

pub(crate) fn row_sums(m: &Matrix) -> Vector {
    Vector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}
