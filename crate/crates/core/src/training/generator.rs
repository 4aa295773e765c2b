use nalgebra::DMatrix;

use crate::diffgraph::{GraphError, Var};
use crate::discriminators::mlp::{layer_params, mlp_on_tape, random_layers, set_layer_params};
use crate::error::{Error, Result};
use crate::generators::{standard_normal, InvertibleGeneratorSpec, Layer, Sampler};
use crate::linalg::{clamp_singular_values, matrix_to_tensor, project_ball};
use crate::{Rng, Tape, Tensor};

/// A generator reparameterized as `x = G_θ(z)` with a fixed latent law, so
/// the training loss differentiates through the samples.
pub trait Generator: Sampler + Clone + Send {
    fn params(&self) -> Vec<Tensor>;

    fn set_params(&mut self, params: &[Tensor]) -> Result<()>;

    fn latent_dim(&self) -> usize;

    /// `n` latents, one per row.
    fn sample_latent(&self, n: usize, rng: &mut Rng) -> DMatrix<f64>;

    /// `G_θ` on every row of `z`, with `θ` in [`Generator::params`] order.
    fn build(&self, tape: &mut Tape, params: &[Var], z: Var) -> Result<Var, GraphError>;

    /// Projects onto the generator family after a descent step.
    fn project(&mut self) {}

    /// Draws `n` samples through the tape path; equal to the sampler output
    /// for the same latents.
    fn push_forward(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut tape = Tape::new();
        let params = self
            .params()
            .into_iter()
            .map(|p| tape.constant(p))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let zv = tape.constant(matrix_to_tensor(z))?;
        let x = self.build(&mut tape, &params, zv)?;
        Ok(crate::linalg::tensor_to_matrix(tape.value(x)))
    }
}

impl Generator for InvertibleGeneratorSpec {
    fn params(&self) -> Vec<Tensor> {
        self.parameter_tensors()
    }

    fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        *self = self.with_parameter_tensors(params)?;
        Ok(())
    }

    fn latent_dim(&self) -> usize {
        self.dim()
    }

    fn sample_latent(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        InvertibleGeneratorSpec::sample_latent(self, n, rng)
    }

    fn build(&self, tape: &mut Tape, params: &[Var], z: Var) -> Result<Var, GraphError> {
        self.forward_on_tape(tape, params, z)
    }

    /// Singular values into `[1/R_W, R_W]`, biases into the `R_b` ball.
    fn project(&mut self) {
        let (rw, rb) = (self.constraints.r_w, self.constraints.r_b);
        for l in &mut self.layers {
            l.weight = clamp_singular_values(&l.weight, 1.0 / rw, rw);
            l.bias = project_ball(&l.bias, rb);
        }
    }
}

/// Leaky-ReLU MLP generator with standard normal latents.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGenerator {
    pub layers: Vec<Layer>,
}

impl MlpGenerator {
    /// `widths` runs from the latent dimension to the output dimension.
    pub fn new(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidSpec(format!("generator widths {widths:?}")));
        }
        Ok(Self {
            layers: random_layers(widths, rng),
        })
    }
}

impl Sampler for MlpGenerator {
    fn dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let z = self.sample_latent(n, rng);
        self.push_forward(&z).expect("latent matches first layer")
    }
}

impl Generator for MlpGenerator {
    fn params(&self) -> Vec<Tensor> {
        layer_params(&self.layers)
    }

    fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        crate::discriminators::check_param_shapes(&self.params(), params)?;
        set_layer_params(&mut self.layers, params);
        Ok(())
    }

    fn latent_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    fn sample_latent(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        standard_normal(n, self.latent_dim(), rng)
    }

    fn build(&self, tape: &mut Tape, params: &[Var], z: Var) -> Result<Var, GraphError> {
        mlp_on_tape(tape, params, z)
    }
}
