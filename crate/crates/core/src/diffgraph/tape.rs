use crate::diffgraph::{GraphError, Tensor};
use crate::scalar::Scalar;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise primitives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary<T> {
    Exp,
    Log,
    Sigmoid,
    Tanh,
    Softplus,
    Square,
    Sqrt,
    Recip,
    Relu,
    /// Derivative of `Relu`; piecewise constant, so its own derivative is zero.
    ReluStep,
    LeakyRelu(T),
    /// Derivative of `LeakyRelu(slope)`: 1 on `x >= 0`, `slope` below.
    LeakyStep(T),
    /// `log (σ⁻¹)'(h)` for the leaky ReLU `σ` with the given slope:
    /// 0 on `h >= 0`, `-log slope` below.
    LeakyLogInvDeriv(T),
    /// `slope·x + (1-slope)·(softplus(k·x) - log 2)/k`.
    SmoothLeaky {
        slope: T,
        sharpness: T,
    },
    /// Inverse of `SmoothLeaky`, solved by Newton iteration.
    SmoothLeakyInv {
        slope: T,
        sharpness: T,
    },
    Affine {
        scale: T,
        shift: T,
    },
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn smooth_leaky<T: Scalar>(x: T, slope: T, k: T) -> T {
    let ln2 = T::lit(std::f64::consts::LN_2);
    slope * x + (T::one() - slope) * (softplus(k * x) - ln2) / k
}

pub fn smooth_leaky_deriv<T: Scalar>(x: T, slope: T, k: T) -> T {
    slope + (T::one() - slope) * sigmoid(k * x)
}

/// Inverse of the smoothed leaky ReLU. The function is convex and increasing,
/// so Newton's method converges monotonically after the first step.
pub fn smooth_leaky_inv<T: Scalar>(y: T, slope: T, k: T) -> T {
    let mut x = if y >= T::zero() { y } else { y / slope };
    let tol = T::epsilon() * T::lit(4.0);
    for _ in 0..200 {
        let step = (smooth_leaky(x, slope, k) - y) / smooth_leaky_deriv(x, slope, k);
        x = x - step;
        if step.abs() <= tol * (T::one() + x.abs()) {
            break;
        }
    }
    x
}

impl<T: Scalar> Unary<T> {
    fn apply(self, x: T) -> T {
        let zero = T::zero();
        match self {
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Softplus => softplus(x),
            Unary::Square => x * x,
            Unary::Sqrt => x.sqrt(),
            Unary::Recip => T::one() / x,
            Unary::Relu => x.max(zero),
            Unary::ReluStep => {
                if x > zero {
                    T::one()
                } else {
                    zero
                }
            }
            Unary::LeakyRelu(a) => {
                if x >= zero {
                    x
                } else {
                    a * x
                }
            }
            Unary::LeakyStep(a) => {
                if x >= zero {
                    T::one()
                } else {
                    a
                }
            }
            Unary::LeakyLogInvDeriv(a) => {
                if x >= zero {
                    zero
                } else {
                    -a.ln()
                }
            }
            Unary::SmoothLeaky { slope, sharpness } => smooth_leaky(x, slope, sharpness),
            Unary::SmoothLeakyInv { slope, sharpness } => smooth_leaky_inv(x, slope, sharpness),
            Unary::Affine { scale, shift } => scale * x + shift,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Sigmoid => "sigmoid",
            Unary::Tanh => "tanh",
            Unary::Softplus => "softplus",
            Unary::Square => "square",
            Unary::Sqrt => "sqrt",
            Unary::Recip => "recip",
            Unary::Relu => "relu",
            Unary::ReluStep => "relu_step",
            Unary::LeakyRelu(_) => "leaky_relu",
            Unary::LeakyStep(_) => "leaky_step",
            Unary::LeakyLogInvDeriv(_) => "leaky_log_inv_deriv",
            Unary::SmoothLeaky { .. } => "smooth_leaky",
            Unary::SmoothLeakyInv { .. } => "smooth_leaky_inv",
            Unary::Affine { .. } => "affine",
        }
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Unary(Var, Unary<T>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastScalar(Var),
    BroadcastRows(Var),
    BroadcastCols(Var),
    LogSumExpCols(Var),
    Reshape(Var),
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    tracked: bool,
}

/// Eagerly evaluated reverse-mode tape.
///
/// Every op computes its value when recorded. [`Tape::grad`] appends the
/// adjoint computation as ordinary nodes, so gradients can themselves be
/// differentiated (used for gradient penalties and exact Hessians).
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Differentiable leaf.
    pub fn var(&mut self, value: Tensor<T>) -> Result<Var, GraphError> {
        self.push(Op::Leaf, value, true, "leaf")
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var, GraphError> {
        self.push(Op::Leaf, value, false, "constant")
    }

    pub fn scalar_constant(&mut self, value: T) -> Result<Var, GraphError> {
        self.constant(Tensor::scalar(value))
    }

    fn push(
        &mut self,
        op: Op<T>,
        value: Tensor<T>,
        tracked: bool,
        name: &'static str,
    ) -> Result<Var, GraphError> {
        if !value.is_finite() {
            return Err(GraphError::NonFinite { op: name });
        }
        self.nodes.push(Node { op, value, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), GraphError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(GraphError::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn unary(&mut self, a: Var, f: Unary<T>) -> Result<Var, GraphError> {
        let value = self.value(a).map(|x| f.apply(x));
        let tracked = self.tracked(a);
        self.push(Op::Unary(a, f), value, tracked, f.name())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(Op::Add(a, b), value, tracked, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(Op::Sub(a, b), value, tracked, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(Op::Mul(a, b), value, tracked, "mul")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        let value = self.value(a).matmul(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(Op::MatMul(a, b), value, tracked, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, GraphError> {
        let value = self.value(a).transpose();
        let tracked = self.tracked(a);
        self.push(Op::Transpose(a), value, tracked, "transpose")
    }

    /// Sum of all entries, as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var, GraphError> {
        let value = Tensor::scalar(self.value(a).sum());
        let tracked = self.tracked(a);
        self.push(Op::SumAll(a), value, tracked, "sum")
    }

    /// Column sums: `n×m -> 1×m`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, GraphError> {
        let t = self.value(a);
        let mut out = Tensor::zeros(1, t.cols());
        for r in 0..t.rows() {
            for c in 0..t.cols() {
                out.set(0, c, out.get(0, c) + t.get(r, c));
            }
        }
        let tracked = self.tracked(a);
        self.push(Op::SumRows(a), out, tracked, "sum_rows")
    }

    /// Row sums: `n×m -> n×1`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, GraphError> {
        let t = self.value(a);
        let data = (0..t.rows())
            .map(|r| t.row_slice(r).iter().copied().sum())
            .collect();
        let out = Tensor::new(t.rows(), 1, data)?;
        let tracked = self.tracked(a);
        self.push(Op::SumCols(a), out, tracked, "sum_cols")
    }

    pub fn broadcast_scalar(
        &mut self,
        a: Var,
        rows: usize,
        cols: usize,
    ) -> Result<Var, GraphError> {
        let v = self.value(a).item().ok_or(GraphError::ShapeMismatch {
            op: "broadcast_scalar",
            left: self.shape(a),
            right: [1, 1],
        })?;
        let tracked = self.tracked(a);
        self.push(
            Op::BroadcastScalar(a),
            Tensor::full(rows, cols, v),
            tracked,
            "broadcast_scalar",
        )
    }

    /// Repeats a `1×m` row `n` times.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var, GraphError> {
        let t = self.value(a);
        if t.rows() != 1 {
            return Err(GraphError::ShapeMismatch {
                op: "broadcast_rows",
                left: t.shape(),
                right: [1, t.cols()],
            });
        }
        let mut data = Vec::with_capacity(n * t.cols());
        for _ in 0..n {
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(n, t.cols(), data)?;
        let tracked = self.tracked(a);
        self.push(Op::BroadcastRows(a), out, tracked, "broadcast_rows")
    }

    /// Repeats an `n×1` column `m` times.
    pub fn broadcast_cols(&mut self, a: Var, m: usize) -> Result<Var, GraphError> {
        let t = self.value(a);
        if t.cols() != 1 {
            return Err(GraphError::ShapeMismatch {
                op: "broadcast_cols",
                left: t.shape(),
                right: [t.rows(), 1],
            });
        }
        let mut data = Vec::with_capacity(t.rows() * m);
        for &v in t.data() {
            data.extend(std::iter::repeat(v).take(m));
        }
        let out = Tensor::new(t.rows(), m, data)?;
        let tracked = self.tracked(a);
        self.push(Op::BroadcastCols(a), out, tracked, "broadcast_cols")
    }

    /// Row-wise log-sum-exp: `n×m -> n×1`, max-shifted.
    pub fn logsumexp_cols(&mut self, a: Var) -> Result<Var, GraphError> {
        let t = self.value(a);
        let data = (0..t.rows())
            .map(|r| crate::special::logsumexp(t.row_slice(r)))
            .collect();
        let out = Tensor::new(t.rows(), 1, data)?;
        let tracked = self.tracked(a);
        self.push(Op::LogSumExpCols(a), out, tracked, "logsumexp")
    }

    /// Reinterprets the row-major data with a new shape of equal size.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, GraphError> {
        let t = self.value(a);
        let out = Tensor::new(rows, cols, t.data().to_vec())?;
        let tracked = self.tracked(a);
        self.push(Op::Reshape(a), out, tracked, "reshape")
    }

    // Composite helpers.

    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Result<Var, GraphError> {
        self.unary(a, Unary::Affine { scale, shift })
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var, GraphError> {
        self.affine(a, s, T::zero())
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, GraphError> {
        let n = T::from_usize(self.value(a).len()).unwrap_or_else(T::one);
        let s = self.sum(a)?;
        self.scale(s, T::one() / n)
    }

    /// `a + row` with `row` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, GraphError> {
        let n = self.shape(a)[0];
        let b = self.broadcast_rows(row, n)?;
        self.add(a, b)
    }

    /// `a ∘ row` with `row` broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, GraphError> {
        let n = self.shape(a)[0];
        let b = self.broadcast_rows(row, n)?;
        self.mul(a, b)
    }

    /// `x ↦ slope + (1-slope)·sigmoid(k·x)`, the derivative of `SmoothLeaky`,
    /// built from differentiable primitives.
    pub fn smooth_leaky_deriv(
        &mut self,
        x: Var,
        slope: T,
        sharpness: T,
    ) -> Result<Var, GraphError> {
        let kx = self.scale(x, sharpness)?;
        let s = self.unary(kx, Unary::Sigmoid)?;
        self.affine(s, T::one() - slope, slope)
    }

    /// Builds the adjoint graph of the scalar `root` and returns one node per
    /// entry of `wrt` holding `∂root/∂wrt`. Nodes are appended to the tape, so
    /// the results are differentiable again.
    pub fn grad(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Var>, GraphError> {
        let shape = self.shape(root);
        if shape != [1, 1] {
            return Err(GraphError::NonScalarRoot { shape });
        }
        let mut adj: Vec<Option<Var>> = vec![None; root.0 + 1];
        adj[root.0] = Some(self.constant(Tensor::scalar(T::one()))?);
        // Nodes are stored in topological order, so a reverse index sweep
        // visits every consumer before its inputs.
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i] else { continue };
            if !self.nodes[i].tracked {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let out = Var(i);
            match op {
                Op::Leaf => {}
                Op::Unary(a, f) => {
                    if let Some(d) = self.unary_vjp(a, out, f, g)? {
                        self.accumulate(&mut adj, a, d)?;
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, a, g)?;
                    self.accumulate(&mut adj, b, g)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adj, a, g)?;
                    if self.tracked(b) {
                        let ng = self.scale(g, -T::one())?;
                        self.accumulate(&mut adj, b, ng)?;
                    }
                }
                Op::Mul(a, b) => {
                    if self.tracked(a) {
                        let da = self.mul(g, b)?;
                        self.accumulate(&mut adj, a, da)?;
                    }
                    if self.tracked(b) {
                        let db = self.mul(g, a)?;
                        self.accumulate(&mut adj, b, db)?;
                    }
                }
                Op::MatMul(a, b) => {
                    if self.tracked(a) {
                        let bt = self.transpose(b)?;
                        let da = self.matmul(g, bt)?;
                        self.accumulate(&mut adj, a, da)?;
                    }
                    if self.tracked(b) {
                        let at = self.transpose(a)?;
                        let db = self.matmul(at, g)?;
                        self.accumulate(&mut adj, b, db)?;
                    }
                }
                Op::Transpose(a) => {
                    let d = self.transpose(g)?;
                    self.accumulate(&mut adj, a, d)?;
                }
                Op::SumAll(a) => {
                    let [r, c] = self.shape(a);
                    let d = self.broadcast_scalar(g, r, c)?;
                    self.accumulate(&mut adj, a, d)?;
                }
                Op::SumRows(a) => {
                    let n = self.shape(a)[0];
                    let d = self.broadcast_rows(g, n)?;
                    self.accumulate(&mut adj, a, d)?;
                }
                Op::SumCols(a) => {
                    let m = self.shape(a)[1];
                    let d = self.broadcast_cols(g, m)?;
                    self.accumulate(&mut adj, a, d)?;
                }
                Op::BroadcastScalar(a) => {
                    let d = self.sum(g)?;
                    self.accumulate(&mut adj, a, d)?;
                }
                Op::BroadcastRows(a) => {
                    let d = self.sum_rows(g)?;
                    self.accumulate(&mut adj, a, d)?;
                }
                Op::BroadcastCols(a) => {
                    let d = self.sum_cols(g)?;
                    self.accumulate(&mut adj, a, d)?;
                }
                Op::Reshape(a) => {
                    let [r, c] = self.shape(a);
                    let d = self.reshape(g, r, c)?;
                    self.accumulate(&mut adj, a, d)?;
                }
                Op::LogSumExpCols(a) => {
                    let m = self.shape(a)[1];
                    let yb = self.broadcast_cols(out, m)?;
                    let shifted = self.sub(a, yb)?;
                    let soft = self.unary(shifted, Unary::Exp)?;
                    let gb = self.broadcast_cols(g, m)?;
                    let d = self.mul(gb, soft)?;
                    self.accumulate(&mut adj, a, d)?;
                }
            }
        }
        wrt.iter()
            .map(|&w| match adj.get(w.0).copied().flatten() {
                Some(v) => Ok(v),
                None => {
                    let [r, c] = self.shape(w);
                    self.constant(Tensor::zeros(r, c))
                }
            })
            .collect()
    }

    fn accumulate(
        &mut self,
        adj: &mut [Option<Var>],
        target: Var,
        d: Var,
    ) -> Result<(), GraphError> {
        if !self.tracked(target) {
            return Ok(());
        }
        adj[target.0] = Some(match adj[target.0] {
            Some(prev) => self.add(prev, d)?,
            None => d,
        });
        Ok(())
    }

    /// Vector-Jacobian product of an elementwise op; `None` where the
    /// derivative vanishes identically.
    fn unary_vjp(
        &mut self,
        a: Var,
        y: Var,
        f: Unary<T>,
        g: Var,
    ) -> Result<Option<Var>, GraphError> {
        let one = T::one();
        let local = match f {
            Unary::Exp => y,
            Unary::Log => self.unary(a, Unary::Recip)?,
            Unary::Sigmoid => {
                let omy = self.affine(y, -one, one)?;
                self.mul(y, omy)?
            }
            Unary::Tanh => {
                let y2 = self.unary(y, Unary::Square)?;
                self.affine(y2, -one, one)?
            }
            Unary::Softplus => self.unary(a, Unary::Sigmoid)?,
            Unary::Square => self.scale(a, T::lit(2.0))?,
            Unary::Sqrt => {
                let r = self.unary(y, Unary::Recip)?;
                self.scale(r, T::lit(0.5))?
            }
            Unary::Recip => {
                let y2 = self.unary(y, Unary::Square)?;
                self.scale(y2, -one)?
            }
            Unary::Relu => self.unary(a, Unary::ReluStep)?,
            Unary::LeakyRelu(s) => self.unary(a, Unary::LeakyStep(s))?,
            Unary::ReluStep | Unary::LeakyStep(_) | Unary::LeakyLogInvDeriv(_) => return Ok(None),
            Unary::SmoothLeaky { slope, sharpness } => {
                self.smooth_leaky_deriv(a, slope, sharpness)?
            }
            Unary::SmoothLeakyInv { slope, sharpness } => {
                let d = self.smooth_leaky_deriv(y, slope, sharpness)?;
                self.unary(d, Unary::Recip)?
            }
            Unary::Affine { scale, .. } => return Ok(Some(self.scale(g, scale)?)),
        };
        Ok(Some(self.mul(g, local)?))
    }

    /// Numeric gradients of `root` with respect to `wrt`. The adjoint nodes
    /// are discarded afterwards, leaving the tape as it was.
    pub fn gradient_values(
        &mut self,
        root: Var,
        wrt: &[Var],
    ) -> Result<Vec<Tensor<T>>, GraphError> {
        let mark = self.len();
        let res = self
            .grad(root, wrt)
            .map(|gs| gs.iter().map(|&g| self.value(g).clone()).collect());
        self.truncate(mark);
        res
    }
}
