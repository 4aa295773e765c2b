use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::invertible::Layer;
use super::json::MatrixDto;
use super::{standard_normal, Activation, Sampler};
use crate::diffgraph::{GraphError, Var};
use crate::error::{Error, Result};
use crate::linalg::{matrix_to_tensor, min_singular_value, op_norm, random_rectangular};
use crate::{Rng, Tape};

/// Lipschitz-type constants of an injective generator computed from its
/// weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    /// Lower bound `R` in `‖G(z) - G(z')‖ ≥ R‖z - z'‖`.
    pub r: f64,
    /// Upper Lipschitz bound of `G`.
    pub l_g: f64,
    /// Lipschitz constant of `σ⁻¹`.
    pub l_sigma: f64,
}

/// Feedforward `G: ℝᵏ → ℝᵈ`, `k < d`, with latent density proportional to
/// `exp(-‖z‖²)`, i.e. `z ~ N(0, I/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InjectiveDto", into = "InjectiveDto")]
pub struct InjectiveGeneratorSpec {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    /// Whether `σ` is also applied after the last affine map.
    pub activation_on_output: bool,
}

impl InjectiveGeneratorSpec {
    pub fn new(
        layers: Vec<Layer>,
        activation: Activation,
        activation_on_output: bool,
    ) -> Result<Self> {
        let spec = Self {
            layers,
            activation,
            activation_on_output,
        };
        spec.check_shapes()?;
        Ok(spec)
    }

    /// First layer `[I_k; 0]`, later layers `I_d`, zero biases.
    pub fn identity_padded(
        k: usize,
        d: usize,
        depth: usize,
        activation: Activation,
        activation_on_output: bool,
    ) -> Self {
        let layers = (0..depth)
            .map(|i| {
                let w = if i == 0 {
                    DMatrix::identity(d, k)
                } else {
                    DMatrix::identity(d, d)
                };
                Layer::new(w, DVector::zeros(d))
            })
            .collect();
        Self {
            layers,
            activation,
            activation_on_output,
        }
    }

    /// First layer `d×k`, later layers `d×d`, all with singular values
    /// uniform in `[lo, hi]`; biases `bias_scale·N(0, I)`.
    pub fn random(
        k: usize,
        d: usize,
        depth: usize,
        (lo, hi): (f64, f64),
        bias_scale: f64,
        activation: Activation,
        activation_on_output: bool,
        rng: &mut Rng,
    ) -> Self {
        let layers = (0..depth)
            .map(|i| {
                let cols = if i == 0 { k } else { d };
                let w = random_rectangular(d, cols, lo, hi, rng);
                let b = crate::linalg::gaussian_vector(d, rng) * bias_scale;
                Layer::new(w, b)
            })
            .collect();
        Self {
            layers,
            activation,
            activation_on_output,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec(
                "generator needs at least one layer".into(),
            ));
        }
        let mut width = self.layers[0].weight.ncols();
        for (i, l) in self.layers.iter().enumerate() {
            let (r, c) = l.weight.shape();
            if c != width || l.bias.len() != r || r < c {
                return Err(Error::InvalidSpec(format!(
                    "layer {i}: weight {r}x{c} with bias {} after width {width}",
                    l.bias.len()
                )));
            }
            width = r;
        }
        if self.latent_dim() >= self.dim() {
            return Err(Error::InvalidSpec(
                "latent dimension must be below output dimension".into(),
            ));
        }
        self.activation.validate()
    }

    fn activated(&self, i: usize) -> bool {
        i + 1 < self.depth() || self.activation_on_output
    }

    pub fn activation_count(&self) -> usize {
        (0..self.depth()).filter(|&i| self.activated(i)).count()
    }

    pub fn forward(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self
            .forward_rows(&crate::linalg::row_matrix(z))?
            .row(0)
            .transpose())
    }

    pub fn forward_rows(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                found: z.ncols(),
            });
        }
        let mut h = z.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply_rows(&h);
            if self.activated(i) {
                h.apply(|v| *v = self.activation.apply(*v));
            }
        }
        Ok(h)
    }

    /// `G` on the tape with the weights as constants; `z` holds one latent
    /// per row.
    pub fn forward_on_tape(&self, tape: &mut Tape, z: Var) -> Result<Var, GraphError> {
        let mut h = z;
        for (i, layer) in self.layers.iter().enumerate() {
            let wt = tape.constant(matrix_to_tensor(&layer.weight.transpose()))?;
            let b = tape.constant(crate::Tensor::row(layer.bias.as_slice()))?;
            let m = tape.matmul(h, wt)?;
            h = tape.add_row(m, b)?;
            if self.activated(i) {
                h = self.activation.on_tape(tape, h)?;
            }
        }
        Ok(h)
    }

    pub fn regularity(&self) -> Regularity {
        let slope = self.activation.min_slope();
        let acts = self.activation_count() as i32;
        let r = self
            .layers
            .iter()
            .map(|l| min_singular_value(&l.weight))
            .product::<f64>()
            * slope.powi(acts);
        let l_g = self
            .layers
            .iter()
            .map(|l| op_norm(&l.weight))
            .product::<f64>();
        Regularity {
            r,
            l_g,
            l_sigma: 1.0 / slope,
        }
    }

    /// `z ~ N(0, I/2)`, one per row.
    pub fn sample_latent(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        standard_normal(n, self.latent_dim(), rng) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// Latents conditioned on `‖z‖ ≤ radius`, by rejection.
    pub fn sample_latent_truncated(&self, n: usize, radius: f64, rng: &mut Rng) -> DMatrix<f64> {
        let k = self.latent_dim();
        let mut z = DMatrix::zeros(n, k);
        let mut filled = 0;
        while filled < n {
            let batch = self.sample_latent(n - filled, rng);
            for row in batch.row_iter() {
                if row.norm() <= radius {
                    z.row_mut(filled).copy_from(&row);
                    filled += 1;
                }
            }
        }
        z
    }
}

impl Sampler for InjectiveGeneratorSpec {
    fn dim(&self) -> usize {
        InjectiveGeneratorSpec::dim(self)
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let z = self.sample_latent(n, rng);
        self.forward_rows(&z)
            .expect("latent has generator dimension")
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDto {
    weight: MatrixDto,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InjectiveDto {
    family: String,
    activation: Activation,
    activation_on_output: bool,
    layers: Vec<LayerDto>,
}

const FAMILY_TAG: &str = "injective";

impl From<InjectiveGeneratorSpec> for InjectiveDto {
    fn from(s: InjectiveGeneratorSpec) -> Self {
        Self {
            family: FAMILY_TAG.into(),
            activation: s.activation,
            activation_on_output: s.activation_on_output,
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

impl TryFrom<InjectiveDto> for InjectiveGeneratorSpec {
    type Error = Error;

    fn try_from(dto: InjectiveDto) -> Result<Self> {
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
        InjectiveGeneratorSpec::new(layers, dto.activation, dto.activation_on_output)
    }
}
