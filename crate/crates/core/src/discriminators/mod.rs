//! Discriminator families: ReLU units and linear statistics for Gaussians
//! and exponential families, log-density networks mirroring an invertible
//! generator and their differences, two-branch log-sum-exp networks for
//! mixtures, and a plain MLP.
//!
//! Every family implements [`Critic`]: parameters live in a list of tensors
//! so the IPM optimizer and the training loop can differentiate any family
//! through the same tape.

mod logdensity;
pub(crate) mod mlp;
mod mog;
mod relu;

pub use logdensity::{
    build_logdensity_net, ContrastCritic, LogDensityNet, LogSigBranch, TrainableLogSig,
};
pub use mlp::MlpCritic;
pub use mog::{MogBranch, MogCritic};
pub use relu::{LinearCritic, ReluCritic};

use nalgebra::{DMatrix, DVector};

use crate::diffgraph::{GraphError, Var};
use crate::error::{Error, Result};
use crate::generators::GaussianSpec;
use crate::linalg::{matrix_to_tensor, tensor_to_matrix};
use crate::special::expected_relu_standard;
use crate::{Rng, Tape, Tensor};

/// A parameterized function class with a projection onto its constraint
/// set.
pub trait Critic: Clone + Send + Sync {
    /// Current parameters, in a fixed family-specific order.
    fn params(&self) -> Vec<Tensor>;

    fn set_params(&mut self, params: &[Tensor]) -> Result<()>;

    /// Values `f(xᵢ)` as an `n×1` column for the rows `xᵢ` of `x`, with
    /// parameters taken from `params` (same order as [`Critic::params`]).
    fn build(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, GraphError>;

    /// Projects the parameters onto the family's constraint set.
    fn project(&mut self);

    /// Fresh member of the family for an optimizer restart.
    fn randomize(&self, rng: &mut Rng) -> Self;

    /// Whether `-f` belongs to the family whenever `f` does.
    fn closed_under_negation(&self) -> bool {
        true
    }

    /// `f` on every row of `x`.
    fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut tape = Tape::new();
        let params = self
            .params()
            .into_iter()
            .map(|p| tape.constant(p))
            .collect::<Result<Vec<_>, _>>()?;
        let xv = tape.constant(matrix_to_tensor(x))?;
        let out = self.build(&mut tape, &params, xv)?;
        Ok(DVector::from_column_slice(tape.value(out).data()))
    }
}

/// Copy of `critic` projected onto its constraint set.
pub fn project_constraints<C: Critic>(critic: &C) -> C {
    let mut c = critic.clone();
    c.project();
    c
}

pub(crate) fn check_param_shapes(expected: &[Tensor], found: &[Tensor]) -> Result<()> {
    if expected.len() != found.len() {
        return Err(Error::DimensionMismatch {
            expected: expected.len(),
            found: found.len(),
        });
    }
    for (e, f) in expected.iter().zip(found) {
        if e.shape() != f.shape() {
            return Err(Error::InvalidSpec(format!(
                "parameter shape {:?} does not match {:?}",
                f.shape(),
                e.shape()
            )));
        }
    }
    Ok(())
}

pub(crate) fn column(t: &Tensor) -> DVector<f64> {
    DVector::from_column_slice(t.data())
}

pub(crate) fn matrix(t: &Tensor) -> DMatrix<f64> {
    tensor_to_matrix(t)
}

/// `E[ReLU(vᵀX + b)]` for `X ~ N(μ, Σ)`, i.e. `s·R((vᵀμ + b)/s)` with
/// `s = ‖Σ^{1/2} v‖` and `R(a) = a·Φ(a) + φ(a)`.
pub fn gaussian_expected_relu(gauss: &GaussianSpec, v: &DVector<f64>, b: f64) -> Result<f64> {
    if v.len() != gauss.dim() {
        return Err(Error::DimensionMismatch {
            expected: gauss.dim(),
            found: v.len(),
        });
    }
    let s = (v.transpose() * gauss.covariance() * v)[(0, 0)]
        .max(0.0)
        .sqrt();
    if !(s > 1e-300) {
        return Err(Error::InvalidSpec("projection variance is zero".into()));
    }
    let a = (v.dot(gauss.mean()) + b) / s;
    Ok(s * expected_relu_standard(a))
}
