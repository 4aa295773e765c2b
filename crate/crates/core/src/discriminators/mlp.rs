use nalgebra::DVector;

use super::{check_param_shapes, column, matrix, Critic};
use crate::diffgraph::{GraphError, Unary, Var};
use crate::error::{Error, Result};
use crate::generators::Layer;
use crate::linalg::{gaussian_matrix, matrix_to_tensor};
use crate::{Rng, Tape, Tensor};

/// Slope of the leaky ReLU between hidden layers.
pub(crate) const HIDDEN_SLOPE: f64 = 0.2;

/// Layers `widths[i] → widths[i+1]` with Gaussian weights of variance
/// `2/fan_in` and zero biases.
pub(crate) fn random_layers(widths: &[usize], rng: &mut Rng) -> Vec<Layer> {
    widths
        .windows(2)
        .map(|w| {
            let scale = (2.0 / w[0] as f64).sqrt();
            Layer::new(
                gaussian_matrix(w[1], w[0], rng) * scale,
                DVector::zeros(w[1]),
            )
        })
        .collect()
}

pub(crate) fn layer_params(layers: &[Layer]) -> Vec<Tensor> {
    layers
        .iter()
        .flat_map(|l| [matrix_to_tensor(&l.weight), Tensor::row(l.bias.as_slice())])
        .collect()
}

pub(crate) fn set_layer_params(layers: &mut [Layer], params: &[Tensor]) {
    for (l, pair) in layers.iter_mut().zip(params.chunks(2)) {
        l.weight = matrix(&pair[0]);
        l.bias = column(&pair[1]);
    }
}

/// Leaky-ReLU network on the rows of `x`; no activation after the last layer.
pub(crate) fn mlp_on_tape(tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, GraphError> {
    let depth = params.len() / 2;
    let mut h = x;
    for i in 0..depth {
        let wt = tape.transpose(params[2 * i])?;
        let m = tape.matmul(h, wt)?;
        h = tape.add_row(m, params[2 * i + 1])?;
        if i + 1 < depth {
            h = tape.unary(h, Unary::LeakyRelu(HIDDEN_SLOPE))?;
        }
    }
    Ok(h)
}

/// Unconstrained leaky-ReLU MLP with scalar output. With `clip` set, the
/// projection clamps every parameter entrywise to `[-clip, clip]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpCritic {
    pub layers: Vec<Layer>,
    pub clip: Option<f64>,
}

impl MlpCritic {
    /// `widths` runs from the input dimension to the output, which must be 1.
    pub fn new(widths: &[usize], clip: Option<f64>, rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 || widths[widths.len() - 1] != 1 {
            return Err(Error::InvalidSpec(format!(
                "critic widths {widths:?} must end in 1"
            )));
        }
        let mut c = Self {
            layers: random_layers(widths, rng),
            clip,
        };
        c.project();
        Ok(c)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weight.ncols()];
        w.extend(self.layers.iter().map(|l| l.weight.nrows()));
        w
    }
}

impl Critic for MlpCritic {
    fn params(&self) -> Vec<Tensor> {
        layer_params(&self.layers)
    }

    fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        check_param_shapes(&self.params(), params)?;
        set_layer_params(&mut self.layers, params);
        Ok(())
    }

    fn build(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, GraphError> {
        mlp_on_tape(tape, params, x)
    }

    fn project(&mut self) {
        if let Some(c) = self.clip {
            for l in &mut self.layers {
                l.weight.apply(|v| *v = v.clamp(-c, c));
                l.bias.apply(|v| *v = v.clamp(-c, c));
            }
        }
    }

    fn randomize(&self, rng: &mut Rng) -> Self {
        let mut c = Self {
            layers: random_layers(&self.widths(), rng),
            clip: self.clip,
        };
        c.project();
        c
    }
}
