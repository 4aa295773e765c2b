use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::json::MatrixDto;
use super::{standard_normal, Activation, LogDensity, Sampler};
use crate::diffgraph::{GraphError, Var};
use crate::error::{Error, Result};
use crate::linalg::{
    checked_inverse, gaussian_vector, log_abs_det, matrix_to_tensor, project_ball,
};
use crate::special::LN_2PI;
use crate::{Rng, Tape, Tensor};

/// One affine map `h ↦ W h + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>) -> Self {
        Self { weight, bias }
    }

    /// Applies the map to every row of `h`.
    pub(crate) fn apply_rows(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = h * self.weight.transpose();
        for mut row in out.row_iter_mut() {
            row += self.bias.transpose();
        }
        out
    }
}

/// Parameter bounds for invertible generators.
///
/// `c_sigma` and `beta_sigma` bound `|(σ⁻¹)'|` and the Lipschitz constant of
/// `log (σ⁻¹)'`; they are carried for bookkeeping and not enforced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub r_w: f64,
    pub r_b: f64,
    pub c_sigma: f64,
    pub beta_sigma: f64,
    pub delta: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            r_w: 2.0,
            r_b: 1.0,
            c_sigma: 2.0,
            beta_sigma: 0.0,
            delta: 0.1,
        }
    }
}

/// `x = W_ℓ σ(W_{ℓ-1} σ(⋯ σ(W₁ z + b₁) ⋯) + b_{ℓ-1}) + b_ℓ` with
/// `z ~ N(0, diag(γ²))` and square invertible `W_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InvertibleDto", into = "InvertibleDto")]
pub struct InvertibleGeneratorSpec {
    pub layers: Vec<Layer>,
    pub gamma: DVector<f64>,
    pub activation: Activation,
    pub constraints: Constraints,
}

impl InvertibleGeneratorSpec {
    pub fn new(
        layers: Vec<Layer>,
        gamma: DVector<f64>,
        activation: Activation,
        constraints: Constraints,
    ) -> Result<Self> {
        let spec = Self {
            layers,
            gamma,
            activation,
            constraints,
        };
        spec.check_shapes()?;
        Ok(spec)
    }

    /// Identity weights, zero biases, unit latent scales.
    pub fn identity(d: usize, depth: usize, activation: Activation) -> Self {
        let layers = (0..depth)
            .map(|_| Layer::new(DMatrix::identity(d, d), DVector::zeros(d)))
            .collect();
        Self {
            layers,
            gamma: DVector::from_element(d, 1.0),
            activation,
            constraints: Constraints::default(),
        }
    }

    /// Random weights `U·diag(s)·Vᵀ` with `s` uniform in `[lo, hi]` and biases
    /// `bias_scale·N(0, I)` projected onto the `R_b` ball.
    pub fn random(
        d: usize,
        depth: usize,
        (lo, hi): (f64, f64),
        bias_scale: f64,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let constraints = Constraints::default();
        let layers = (0..depth)
            .map(|_| {
                let w = crate::linalg::random_well_conditioned(d, lo, hi, rng);
                let b = project_ball(&(gaussian_vector(d, rng) * bias_scale), constraints.r_b);
                Layer::new(w, b)
            })
            .collect();
        Self {
            layers,
            gamma: DVector::from_element(d, 1.0),
            activation,
            constraints,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let d = self.dim();
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec(
                "generator needs at least one layer".into(),
            ));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weight.shape() != (d, d) || l.bias.len() != d {
                return Err(Error::InvalidSpec(format!(
                    "layer {i} has weight {:?} and bias {} for dimension {d}",
                    l.weight.shape(),
                    l.bias.len()
                )));
            }
        }
        self.activation.validate()
    }

    /// Checks the operator-norm, bias and latent-scale bounds.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        let c = &self.constraints;
        let tol = 1e-9;
        for (i, l) in self.layers.iter().enumerate() {
            let s = crate::linalg::singular_values(&l.weight);
            let (max, min) = (s.max(), s.min());
            if max > c.r_w * (1.0 + tol) || min * c.r_w < 1.0 - tol {
                return Err(Error::ConstraintViolation(format!(
                    "layer {i}: singular values in [{min}, {max}] violate R_W = {}",
                    c.r_w
                )));
            }
            if l.bias.norm() > c.r_b * (1.0 + tol) {
                return Err(Error::ConstraintViolation(format!(
                    "layer {i}: bias norm {} exceeds R_b = {}",
                    l.bias.norm(),
                    c.r_b
                )));
            }
        }
        if self
            .gamma
            .iter()
            .any(|&g| g < c.delta - tol || g > 1.0 + tol)
        {
            return Err(Error::ConstraintViolation(format!(
                "latent scales must lie in [{}, 1]",
                c.delta
            )));
        }
        Ok(())
    }

    /// Largest of `‖W_i‖_op` and `‖W_i⁻¹‖_op` over all layers.
    pub fn max_weight_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                let s = crate::linalg::singular_values(&l.weight);
                s.max().max(1.0 / s.min())
            })
            .fold(0.0, f64::max)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: n,
            });
        }
        Ok(())
    }

    pub fn forward(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self
            .forward_rows(&crate::linalg::row_matrix(z))?
            .row(0)
            .transpose())
    }

    /// Generator applied to every row of `z`.
    pub fn forward_rows(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(z.ncols())?;
        let last = self.depth() - 1;
        let mut h = z.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply_rows(&h);
            if i < last {
                h.apply(|v| *v = self.activation.apply(*v));
            }
        }
        Ok(h)
    }

    /// `W_i⁻¹` for every layer.
    pub fn inverse_weights(&self) -> Result<Vec<DMatrix<f64>>> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| checked_inverse(&l.weight, i))
            .collect()
    }

    pub fn inverse(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self
            .inverse_rows(&crate::linalg::row_matrix(x))?
            .row(0)
            .transpose())
    }

    pub fn inverse_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.inverse_pass(x, &self.inverse_weights()?)?.0)
    }

    /// Runs the inverse network on rows of `x`; also returns, per row, the
    /// sum of `log (σ⁻¹)'` over all hidden activations.
    fn inverse_pass(
        &self,
        x: &DMatrix<f64>,
        inv: &[DMatrix<f64>],
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.check_dim(x.ncols())?;
        let mut act = DVector::zeros(x.nrows());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            for mut row in h.row_iter_mut() {
                row -= layer.bias.transpose();
            }
            h = &h * inv[i].transpose();
            if i > 0 {
                for (r, row) in h.row_iter_mut().enumerate() {
                    for v in row.iter() {
                        act[r] += self.activation.log_inverse_derivative(*v);
                    }
                }
                h.apply(|v| *v = self.activation.inverse(*v));
            }
        }
        Ok((h, act))
    }

    /// `Σ_i log |det W_i⁻¹|`, the input-independent part of the
    /// log-Jacobian of the inverse.
    pub fn log_det_constant(&self) -> f64 {
        -self
            .layers
            .iter()
            .map(|l| log_abs_det(&l.weight))
            .sum::<f64>()
    }

    /// `log N(z; 0, diag(γ²))`.
    pub fn latent_log_density(&self, z: &DVector<f64>) -> f64 {
        let quad: f64 = z
            .iter()
            .zip(self.gamma.iter())
            .map(|(v, g)| (v / g).powi(2))
            .sum();
        let log_gamma: f64 = self.gamma.iter().map(|g| g.ln()).sum();
        -0.5 * quad - log_gamma - 0.5 * self.dim() as f64 * LN_2PI
    }

    /// Flattened trainable parameters `[W₁, b₁, …, W_ℓ, b_ℓ]`, biases as rows.
    pub fn parameter_tensors(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [matrix_to_tensor(&l.weight), Tensor::row(l.bias.as_slice())])
            .collect()
    }

    /// Copy of `self` with parameters taken from [`Self::parameter_tensors`]
    /// layout.
    pub fn with_parameter_tensors(&self, params: &[Tensor]) -> Result<Self> {
        if params.len() != 2 * self.depth() {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.depth(),
                found: params.len(),
            });
        }
        let mut out = self.clone();
        for (l, pair) in out.layers.iter_mut().zip(params.chunks(2)) {
            l.weight = crate::linalg::tensor_to_matrix(&pair[0]);
            l.bias = DVector::from_row_slice(pair[1].data());
        }
        out.check_shapes()?;
        Ok(out)
    }

    /// Generator on the tape: `z` holds one latent per row and `params`
    /// follows [`Self::parameter_tensors`].
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        params: &[Var],
        z: Var,
    ) -> Result<Var, GraphError> {
        let last = self.depth() - 1;
        let mut h = z;
        for i in 0..self.depth() {
            let wt = tape.transpose(params[2 * i])?;
            let m = tape.matmul(h, wt)?;
            h = tape.add_row(m, params[2 * i + 1])?;
            if i < last {
                h = self.activation.on_tape(tape, h)?;
            }
        }
        Ok(h)
    }

    /// Draws latents `z ~ N(0, diag(γ²))`, one per row.
    pub fn sample_latent(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let mut z = standard_normal(n, self.dim(), rng);
        for mut row in z.row_iter_mut() {
            row.component_mul_assign(&self.gamma.transpose());
        }
        z
    }
}

impl Sampler for InvertibleGeneratorSpec {
    fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let z = self.sample_latent(n, rng);
        self.forward_rows(&z)
            .expect("latent has generator dimension")
    }
}

impl LogDensity for InvertibleGeneratorSpec {
    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.log_density_rows(&crate::linalg::row_matrix(x))?[0])
    }

    fn log_density_rows(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let inv = self.inverse_weights()?;
        let (z, act) = self.inverse_pass(x, &inv)?;
        let c = self.log_det_constant();
        Ok(DVector::from_fn(x.nrows(), |r, _| {
            self.latent_log_density(&z.row(r).transpose()) + c + act[r]
        }))
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDto {
    weight: MatrixDto,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InvertibleDto {
    family: String,
    activation: Activation,
    gamma: Vec<f64>,
    constraints: Constraints,
    layers: Vec<LayerDto>,
}

const FAMILY_TAG: &str = "invertible";

impl From<InvertibleGeneratorSpec> for InvertibleDto {
    fn from(s: InvertibleGeneratorSpec) -> Self {
        Self {
            family: FAMILY_TAG.into(),
            activation: s.activation,
            gamma: s.gamma.as_slice().to_vec(),
            constraints: s.constraints,
            layers: s
                .layers
                .iter()
                .map(|l| LayerDto {
                    weight: (&l.weight).into(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<InvertibleDto> for InvertibleGeneratorSpec {
    type Error = Error;

    fn try_from(dto: InvertibleDto) -> Result<Self> {
        if dto.family != FAMILY_TAG {
            return Err(Error::InvalidSpec(format!(
                "expected family {FAMILY_TAG}, found {}",
                dto.family
            )));
        }
        let layers = dto
            .layers
            .into_iter()
            .map(|l| Ok(Layer::new(l.weight.try_into()?, DVector::from_vec(l.bias))))
            .collect::<Result<Vec<_>>>()?;
        InvertibleGeneratorSpec::new(
            layers,
            DVector::from_vec(dto.gamma),
            dto.activation,
            dto.constraints,
        )
    }
}
