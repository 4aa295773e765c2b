use nalgebra::{DMatrix, DVector};

use super::{check_param_shapes, column, matrix, Critic};
use crate::diffgraph::{GraphError, Unary, Var};
use crate::error::{Error, Result};
use crate::generators::{Activation, InvertibleGeneratorSpec, Layer};
use crate::linalg::{clamp_singular_values, gaussian_matrix, matrix_to_tensor, project_ball};
use crate::special::LN_2PI;
use crate::{Rng, Tape, Tensor};

/// One-hidden-layer surrogate `h ↦ Σⱼ aⱼ tanh(uⱼ h + cⱼ) + e` for
/// `log (σ⁻¹)'`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainableLogSig {
    pub u: Vec<f64>,
    pub c: Vec<f64>,
    pub a: Vec<f64>,
    pub e: f64,
}

impl TrainableLogSig {
    pub const WIDTH: usize = 16;

    /// Least-squares fit of the output layer to `log (σ⁻¹)'` on a grid over
    /// `[-10, 10]`, with hidden slopes spread geometrically.
    pub fn fit(activation: Activation) -> Self {
        let w = Self::WIDTH;
        let u: Vec<f64> = (0..w).map(|j| 0.5 * 2f64.powf(j as f64 / 3.0)).collect();
        let c = vec![0.0; w];
        let grid: Vec<f64> = (0..=2000).map(|i| -10.0 + 0.01 * i as f64).collect();
        let design = DMatrix::from_fn(grid.len(), w + 1, |r, j| {
            if j == w {
                1.0
            } else {
                (u[j] * grid[r] + c[j]).tanh()
            }
        });
        let target = DVector::from_iterator(
            grid.len(),
            grid.iter().map(|&h| activation.log_inverse_derivative(h)),
        );
        let coef = crate::linalg::svd(&design)
            .solve(&target, 1e-12)
            .expect("SVD computed with both factors");
        Self {
            u,
            c,
            a: coef.rows(0, w).iter().copied().collect(),
            e: coef[w],
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        self.u
            .iter()
            .zip(&self.c)
            .zip(&self.a)
            .map(|((u, c), a)| a * (u * h + c).tanh())
            .sum::<f64>()
            + self.e
    }

    fn params(&self) -> Vec<Tensor> {
        vec![
            Tensor::row(&self.u),
            Tensor::row(&self.c),
            Tensor::column(&self.a),
            Tensor::scalar(self.e),
        ]
    }

    fn set(&mut self, p: &[Tensor]) {
        self.u = p[0].data().to_vec();
        self.c = p[1].data().to_vec();
        self.a = p[2].data().to_vec();
        self.e = p[3].data()[0];
    }

    /// Applies the surrogate elementwise to `h` (`n×d`) and sums each row.
    fn build(tape: &mut Tape, p: &[Var], h: Var) -> Result<Var, GraphError> {
        let [n, d] = tape.shape(h);
        let flat = tape.reshape(h, n * d, 1)?;
        let hidden = tape.matmul(flat, p[0])?;
        let hidden = tape.add_row(hidden, p[1])?;
        let hidden = tape.unary(hidden, Unary::Tanh)?;
        let out = tape.matmul(hidden, p[2])?;
        let e = tape.broadcast_scalar(p[3], n * d, 1)?;
        let out = tape.add(out, e)?;
        let out = tape.reshape(out, n, d)?;
        tape.sum_cols(out)
    }
}

/// How the network evaluates `log (σ⁻¹)'` on hidden units.
#[derive(Clone, Debug, PartialEq)]
pub enum LogSigBranch {
    Exact,
    Trainable(TrainableLogSig),
}

/// Network computing a generator's log density from the inverse
/// architecture:
///
/// `f(x) = -½ Σⱼ zⱼ²/γⱼ² + C + Σ_k ⟨1, log (σ⁻¹)'(h_k)⟩ - Σⱼ log γⱼ - (d/2) log 2π`
///
/// where `h_0 = x`, `h_{k+1} = σ⁻¹(V_k h_k + c_k)` on hidden layers and `z`
/// is the output of the last affine map. The last two terms are fixed
/// normalizers; the trainable constant is `C`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDensityNet {
    /// Affine maps `(V_k, c_k)` in application order.
    pub layers: Vec<Layer>,
    pub c: f64,
    pub gamma: DVector<f64>,
    pub activation: Activation,
    pub logsig: LogSigBranch,
    pub r_w: f64,
    pub r_b: f64,
}

impl LogDensityNet {
    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Bound on `|C|`: `ℓ·d·log R_W`.
    pub fn c_bound(&self) -> f64 {
        self.depth() as f64 * self.dim() as f64 * self.r_w.ln().max(0.0)
    }

    /// Bound on the hidden biases `c_k = -W⁻¹ b`.
    pub fn bias_bound(&self) -> f64 {
        self.r_w * self.r_b
    }

    fn normalizer(&self) -> f64 {
        -self.gamma.iter().map(|g| g.ln()).sum::<f64>() - 0.5 * self.dim() as f64 * LN_2PI
    }

    /// Swaps the log-derivative branch for the fitted trainable surrogate.
    pub fn with_trainable_logsig(mut self) -> Self {
        self.logsig = LogSigBranch::Trainable(TrainableLogSig::fit(self.activation));
        self
    }
}

/// Network whose output equals the generator's log density exactly.
pub fn build_logdensity_net(generator: &InvertibleGeneratorSpec) -> Result<LogDensityNet> {
    generator.validate()?;
    let inv = generator.inverse_weights()?;
    let layers = generator
        .layers
        .iter()
        .zip(&inv)
        .rev()
        .map(|(l, vi)| Layer::new(vi.clone(), -(vi * &l.bias)))
        .collect();
    Ok(LogDensityNet {
        layers,
        c: generator.log_det_constant(),
        gamma: generator.gamma.clone(),
        activation: generator.activation,
        logsig: LogSigBranch::Exact,
        r_w: generator.constraints.r_w,
        r_b: generator.constraints.r_b,
    })
}

impl Critic for LogDensityNet {
    fn params(&self) -> Vec<Tensor> {
        let mut p: Vec<Tensor> = self
            .layers
            .iter()
            .flat_map(|l| [matrix_to_tensor(&l.weight), Tensor::row(l.bias.as_slice())])
            .collect();
        p.push(Tensor::scalar(self.c));
        if let LogSigBranch::Trainable(t) = &self.logsig {
            p.extend(t.params());
        }
        p
    }

    fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        check_param_shapes(&self.params(), params)?;
        let n = self.layers.len();
        for (l, pair) in self.layers.iter_mut().zip(params.chunks(2)) {
            l.weight = matrix(&pair[0]);
            l.bias = column(&pair[1]);
        }
        self.c = params[2 * n].data()[0];
        if let LogSigBranch::Trainable(t) = &mut self.logsig {
            t.set(&params[2 * n + 1..]);
        }
        Ok(())
    }

    fn build(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, GraphError> {
        let n = tape.shape(x)[0];
        let depth = self.depth();
        let mut h = x;
        let mut total: Option<Var> = None;
        for k in 0..depth {
            let vt = tape.transpose(params[2 * k])?;
            let m = tape.matmul(h, vt)?;
            h = tape.add_row(m, params[2 * k + 1])?;
            if k + 1 < depth {
                let ls = match &self.logsig {
                    LogSigBranch::Exact => {
                        let l = self.activation.log_inverse_derivative_on_tape(tape, h)?;
                        tape.sum_cols(l)?
                    }
                    LogSigBranch::Trainable(_) => {
                        TrainableLogSig::build(tape, &params[2 * depth + 1..], h)?
                    }
                };
                total = Some(match total {
                    Some(t) => tape.add(t, ls)?,
                    None => ls,
                });
                h = self.activation.inverse_on_tape(tape, h)?;
            }
        }
        let inv_var = self.gamma.map(|g| 1.0 / (g * g));
        let w = tape.constant(Tensor::row(inv_var.as_slice()))?;
        let sq = tape.unary(h, Unary::Square)?;
        let sq = tape.mul_row(sq, w)?;
        let quad = tape.sum_cols(sq)?;
        let mut out = tape.affine(quad, -0.5, self.normalizer())?;
        let c = tape.broadcast_scalar(params[2 * depth], n, 1)?;
        out = tape.add(out, c)?;
        if let Some(t) = total {
            out = tape.add(out, t)?;
        }
        Ok(out)
    }

    fn project(&mut self) {
        let (rw, rb, cb) = (self.r_w, self.bias_bound(), self.c_bound());
        for l in &mut self.layers {
            l.weight = clamp_singular_values(&l.weight, 0.0, rw);
            l.bias = project_ball(&l.bias, rb);
        }
        self.c = self.c.clamp(-cb, cb);
    }

    fn randomize(&self, rng: &mut Rng) -> Self {
        let d = self.dim();
        let mut out = self.clone();
        for l in &mut out.layers {
            l.weight =
                DMatrix::identity(d, d) + gaussian_matrix(d, d, rng) * (0.2 / (d as f64).sqrt());
            l.bias = DVector::zeros(d);
        }
        out.c = 0.0;
        out.project();
        out
    }
}

/// `f_p - f_q` for two log-density networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastCritic {
    pub p: LogDensityNet,
    pub q: LogDensityNet,
}

impl ContrastCritic {
    pub fn new(p: LogDensityNet, q: LogDensityNet) -> Result<Self> {
        if p.dim() != q.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                found: q.dim(),
            });
        }
        Ok(Self { p, q })
    }

    /// Exact `log p - log q` for two generators.
    pub fn from_generators(
        p: &InvertibleGeneratorSpec,
        q: &InvertibleGeneratorSpec,
    ) -> Result<Self> {
        Self::new(build_logdensity_net(p)?, build_logdensity_net(q)?)
    }

    fn split(&self) -> usize {
        self.p.params().len()
    }
}

impl Critic for ContrastCritic {
    fn params(&self) -> Vec<Tensor> {
        let mut p = self.p.params();
        p.extend(self.q.params());
        p
    }

    fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        check_param_shapes(&self.params(), params)?;
        let k = self.split();
        self.p.set_params(&params[..k])?;
        self.q.set_params(&params[k..])
    }

    fn build(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, GraphError> {
        let k = self.split();
        let fp = self.p.build(tape, &params[..k], x)?;
        let fq = self.q.build(tape, &params[k..], x)?;
        tape.sub(fp, fq)
    }

    fn project(&mut self) {
        self.p.project();
        self.q.project();
    }

    fn randomize(&self, rng: &mut Rng) -> Self {
        Self {
            p: self.p.randomize(rng),
            q: self.q.randomize(rng),
        }
    }
}
