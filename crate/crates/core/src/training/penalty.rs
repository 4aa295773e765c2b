use nalgebra::DMatrix;
use rand::Rng as _;

use crate::diffgraph::{GraphError, Unary, Var};
use crate::discriminators::Critic;
use crate::error::Result;
use crate::linalg::matrix_to_tensor;
use crate::{rng_from_seed, Rng, Tape};

/// Keeps the square root differentiable where the input gradient vanishes.
const NORM_FLOOR: f64 = 1e-12;

/// Mean of `(‖∇ₓ f(x̂)‖ - 1)²` over interpolates `x̂ = t·x_p + (1-t)·x_q`,
/// `t ~ U[0, 1]` per row, built on `tape` so that it can be differentiated
/// with respect to `params`.
pub fn gradient_penalty_on_tape<C: Critic>(
    critic: &C,
    tape: &mut Tape,
    params: &[Var],
    batch_p: &DMatrix<f64>,
    batch_q: &DMatrix<f64>,
    rng: &mut Rng,
) -> Result<Var, GraphError> {
    let n = batch_p.nrows().min(batch_q.nrows());
    let d = batch_p.ncols();
    let mut xhat = DMatrix::zeros(n, d);
    for i in 0..n {
        let t: f64 = rng.random();
        for c in 0..d {
            xhat[(i, c)] = t * batch_p[(i, c)] + (1.0 - t) * batch_q[(i, c)];
        }
    }
    let x = tape.var(matrix_to_tensor(&xhat))?;
    let f = critic.build(tape, params, x)?;
    let s = tape.sum(f)?;
    let g = tape.grad(s, &[x])?[0];
    let sq = tape.unary(g, Unary::Square)?;
    let sq = tape.sum_cols(sq)?;
    let sq = tape.affine(sq, 1.0, NORM_FLOOR)?;
    let norm = tape.unary(sq, Unary::Sqrt)?;
    let dev = tape.affine(norm, 1.0, -1.0)?;
    let dev = tape.unary(dev, Unary::Square)?;
    tape.mean(dev)
}

/// Value of the gradient penalty for `critic` at its current parameters.
pub fn gradient_penalty<C: Critic>(
    critic: &C,
    batch_p: &DMatrix<f64>,
    batch_q: &DMatrix<f64>,
    seed: u64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let params = critic
        .params()
        .into_iter()
        .map(|p| tape.var(p))
        .collect::<Result<Vec<_>, _>>()?;
    let v = gradient_penalty_on_tape(
        critic,
        &mut tape,
        &params,
        batch_p,
        batch_q,
        &mut rng_from_seed(seed),
    )?;
    Ok(tape.value(v).data()[0])
}
