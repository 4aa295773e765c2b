use nalgebra::DVector;
use rand::Rng as _;

use super::{check_param_shapes, column, Critic};
use crate::diffgraph::{GraphError, Unary, Var};
use crate::error::Result;
use crate::linalg::{gaussian_vector, project_ball};
use crate::{Rng, Tape, Tensor};

/// `x ↦ max(vᵀx + b, 0)` with `‖v‖ ≤ 1` and `|b| ≤ D`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluCritic {
    pub v: DVector<f64>,
    pub b: f64,
    /// Bias bound `D`.
    pub radius: f64,
}

impl ReluCritic {
    pub fn new(v: DVector<f64>, b: f64, radius: f64) -> Self {
        Self { v, b, radius }
    }

    /// Zero unit in dimension `d`, a template for [`Critic::randomize`].
    pub fn family(d: usize, radius: f64) -> Self {
        Self::new(DVector::zeros(d), 0.0, radius)
    }

    pub fn eval_point(&self, x: &DVector<f64>) -> f64 {
        (self.v.dot(x) + self.b).max(0.0)
    }
}

impl Critic for ReluCritic {
    fn params(&self) -> Vec<Tensor> {
        vec![Tensor::column(self.v.as_slice()), Tensor::scalar(self.b)]
    }

    fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        check_param_shapes(&self.params(), params)?;
        self.v = column(&params[0]);
        self.b = params[1].data()[0];
        Ok(())
    }

    fn build(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, GraphError> {
        let n = tape.shape(x)[0];
        let xv = tape.matmul(x, params[0])?;
        let b = tape.broadcast_scalar(params[1], n, 1)?;
        let pre = tape.add(xv, b)?;
        tape.unary(pre, Unary::Relu)
    }

    fn project(&mut self) {
        self.v = project_ball(&self.v, 1.0);
        self.b = self.b.clamp(-self.radius, self.radius);
    }

    fn randomize(&self, rng: &mut Rng) -> Self {
        let v = gaussian_vector(self.v.len(), rng).normalize();
        let b = rng.random_range(-self.radius..=self.radius);
        Self::new(v, b, self.radius)
    }

    fn closed_under_negation(&self) -> bool {
        false
    }
}

/// `x ↦ vᵀT(x)` with `T(x) = x` and `‖v‖ ≤ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCritic {
    pub v: DVector<f64>,
}

impl LinearCritic {
    pub fn new(v: DVector<f64>) -> Self {
        Self { v }
    }

    pub fn family(d: usize) -> Self {
        Self::new(DVector::zeros(d))
    }
}

impl Critic for LinearCritic {
    fn params(&self) -> Vec<Tensor> {
        vec![Tensor::column(self.v.as_slice())]
    }

    fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        check_param_shapes(&self.params(), params)?;
        self.v = column(&params[0]);
        Ok(())
    }

    fn build(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, GraphError> {
        tape.matmul(x, params[0])
    }

    fn project(&mut self) {
        self.v = project_ball(&self.v, 1.0);
    }

    fn randomize(&self, rng: &mut Rng) -> Self {
        Self::new(gaussian_vector(self.v.len(), rng) * 0.1)
    }
}
