use crate::diffgraph::{GraphError, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Largest input dimension accepted by [`hessian`].
pub const MAX_HESSIAN_DIM: usize = 64;

/// Evaluates `f` on fresh differentiable leaves holding `inputs`.
pub fn forward<T, F>(f: F, inputs: &[Tensor<T>]) -> Result<Tensor<T>, GraphError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, GraphError>,
{
    let mut tape = Tape::new();
    let leaves = inputs
        .iter()
        .map(|t| tape.var(t.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let root = f(&mut tape, &leaves)?;
    Ok(tape.value(root).clone())
}

/// Value and gradient of a scalar-valued `f` with respect to every input.
pub fn gradient<T, F>(f: F, inputs: &[Tensor<T>]) -> Result<(T, Vec<Tensor<T>>), GraphError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, GraphError>,
{
    let mut tape = Tape::new();
    let leaves = inputs
        .iter()
        .map(|t| tape.var(t.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let root = f(&mut tape, &leaves)?;
    let value = tape.value(root).item().ok_or(GraphError::NonScalarRoot {
        shape: tape.shape(root),
    })?;
    let grads = tape.gradient_values(root, &leaves)?;
    Ok((value, grads))
}

/// Hessian of a scalar-valued `f` of one `1×k` row input.
///
/// Each row is the gradient of one coordinate of the (differentiable)
/// gradient graph, so the result is exact up to rounding; it is then
/// symmetrized.
pub fn hessian<T, F>(f: F, z: &[T]) -> Result<Tensor<T>, GraphError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var, GraphError>,
{
    let k = z.len();
    if k > MAX_HESSIAN_DIM {
        return Err(GraphError::DimensionTooLarge {
            dim: k,
            max: MAX_HESSIAN_DIM,
        });
    }
    let mut tape = Tape::new();
    let leaf = tape.var(Tensor::row(z))?;
    let root = f(&mut tape, leaf)?;
    let g = tape.grad(root, &[leaf])?[0];
    let mut h = Tensor::zeros(k, k);
    for i in 0..k {
        let mut onehot = Tensor::zeros(1, k);
        onehot.set(0, i, T::one());
        let mark = tape.len();
        let e = tape.constant(onehot)?;
        let gi = tape.mul(g, e)?;
        let gi = tape.sum(gi)?;
        let row = tape.gradient_values(gi, &[leaf])?.remove(0);
        tape.truncate(mark);
        for j in 0..k {
            h.set(i, j, row.get(0, j));
        }
    }
    let scale = h.max_abs().max(T::one());
    let mut worst = T::zero();
    for i in 0..k {
        for j in 0..i {
            let (a, b) = (h.get(i, j), h.get(j, i));
            worst = worst.max((a - b).abs());
            let s = (a + b) / T::lit(2.0);
            h.set(i, j, s);
            h.set(j, i, s);
        }
    }
    let deviation = (worst / scale).to_f64().unwrap_or(f64::INFINITY);
    if deviation > 1e-6 {
        return Err(GraphError::Asymmetric { deviation });
    }
    Ok(h)
}
