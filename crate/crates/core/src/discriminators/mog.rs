use nalgebra::DMatrix;
use rand::Rng as _;

use super::{check_param_shapes, matrix, Critic};
use crate::diffgraph::{GraphError, Var};
use crate::error::{Error, Result};
use crate::generators::MixtureSpec;
use crate::linalg::{gaussian_vector, matrix_to_tensor, project_ball};
use crate::special::logsumexp;
use crate::{Rng, Tape, Tensor};

/// `x ↦ log Σⱼ wⱼ exp(μⱼᵀx + bⱼ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MogBranch {
    pub log_w: Vec<f64>,
    /// One center per row.
    pub mu: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl MogBranch {
    /// Branch reproducing `log p(x) + ‖x‖²/2` up to a constant.
    pub fn from_mixture(m: &MixtureSpec) -> Self {
        let k = m.k();
        let d = m.dim();
        let mu = DMatrix::from_fn(k, d, |j, c| m.means[j][c]);
        Self {
            log_w: m.weights.iter().map(|w| w.ln()).collect(),
            b: (0..k).map(|j| -0.5 * mu.row(j).norm_squared()).collect(),
            mu,
        }
    }

    pub fn eval_point(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.log_w.len())
            .map(|j| {
                let dot: f64 = self.mu.row(j).iter().zip(x).map(|(a, b)| a * b).sum();
                self.log_w[j] + dot + self.b[j]
            })
            .collect();
        logsumexp(&terms)
    }

    fn params(&self) -> [Tensor; 3] {
        [
            Tensor::row(&self.log_w),
            matrix_to_tensor(&self.mu),
            Tensor::row(&self.b),
        ]
    }

    fn build(tape: &mut Tape, p: &[Var], x: Var) -> Result<Var, GraphError> {
        let mt = tape.transpose(p[1])?;
        let s = tape.matmul(x, mt)?;
        let off = tape.add(p[0], p[2])?;
        let s = tape.add_row(s, off)?;
        tape.logsumexp_cols(s)
    }

    fn project(&mut self, log_weight_bound: f64, radius: f64) {
        for w in &mut self.log_w {
            *w = w.clamp(-log_weight_bound, 0.0);
        }
        for j in 0..self.mu.nrows() {
            let row = self.mu.row(j).transpose();
            self.mu.set_row(j, &project_ball(&row, radius).transpose());
        }
        for b in &mut self.b {
            *b = b.clamp(-radius * radius, 0.0);
        }
    }
}

/// Difference `f₁ - f₂` of two log-sum-exp branches with weights in
/// `[exp(-B_w), 1]`, centers in the `D` ball and offsets in `[-D², 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MogCritic {
    pub f1: MogBranch,
    pub f2: MogBranch,
    pub log_weight_bound: f64,
    pub radius: f64,
}

impl MogCritic {
    pub fn from_mixtures(
        p: &MixtureSpec,
        q: &MixtureSpec,
        log_weight_bound: f64,
        radius: f64,
    ) -> Result<Self> {
        if p.dim() != q.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                found: q.dim(),
            });
        }
        Ok(Self {
            f1: MogBranch::from_mixture(p),
            f2: MogBranch::from_mixture(q),
            log_weight_bound,
            radius,
        })
    }

    pub fn eval_point(&self, x: &[f64]) -> f64 {
        self.f1.eval_point(x) - self.f2.eval_point(x)
    }
}

impl Critic for MogCritic {
    fn params(&self) -> Vec<Tensor> {
        let mut p = self.f1.params().to_vec();
        p.extend(self.f2.params());
        p
    }

    fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        check_param_shapes(&self.params(), params)?;
        for (branch, p) in [&mut self.f1, &mut self.f2]
            .into_iter()
            .zip(params.chunks(3))
        {
            branch.log_w = p[0].data().to_vec();
            branch.mu = matrix(&p[1]);
            branch.b = p[2].data().to_vec();
        }
        Ok(())
    }

    fn build(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, GraphError> {
        let a = MogBranch::build(tape, &params[..3], x)?;
        let b = MogBranch::build(tape, &params[3..], x)?;
        tape.sub(a, b)
    }

    fn project(&mut self) {
        self.f1.project(self.log_weight_bound, self.radius);
        self.f2.project(self.log_weight_bound, self.radius);
    }

    fn randomize(&self, rng: &mut Rng) -> Self {
        let (k, d) = self.f1.mu.shape();
        let mut fresh = || {
            let mut mu = DMatrix::zeros(k, d);
            for j in 0..k {
                let r = self.radius * rng.random::<f64>();
                mu.set_row(j, &(gaussian_vector(d, rng).normalize() * r).transpose());
            }
            MogBranch {
                log_w: vec![-(k as f64).ln(); k],
                b: (0..k).map(|j| -0.5 * mu.row(j).norm_squared()).collect(),
                mu,
            }
        };
        let mut out = Self {
            f1: fresh(),
            f2: fresh(),
            ..self.clone()
        };
        out.project();
        out
    }
}
