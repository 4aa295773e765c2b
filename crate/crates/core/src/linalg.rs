//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, SVD};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::diffgraph::Tensor;
use crate::error::{Error, Result};
use crate::Rng;

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().svd(false, false).singular_values
}

/// Thin SVD with both factors. nalgebra 0.35 occasionally returns factors
/// that do not reconstruct the input when singular values repeat; the
/// factorization of the transpose is tried in that case and the more
/// accurate of the two is kept.
pub fn svd(m: &DMatrix<f64>) -> SVD<f64, Dyn, Dyn> {
    let residual = |s: &SVD<f64, Dyn, Dyn>| {
        let (u, vt) = (s.u.as_ref().expect("U"), s.v_t.as_ref().expect("V^T"));
        (u * DMatrix::from_diagonal(&s.singular_values) * vt - m).amax()
    };
    let direct = m.clone().svd(true, true);
    let tol = 1e-10 * (1.0 + m.amax());
    let r_direct = residual(&direct);
    if r_direct <= tol {
        return direct;
    }
    let t = m.transpose().svd(true, true);
    let flipped = SVD {
        u: t.v_t.map(|vt| vt.transpose()),
        v_t: t.u.map(|u| u.transpose()),
        singular_values: t.singular_values,
    };
    if residual(&flipped) < r_direct {
        flipped
    } else {
        direct
    }
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).max()
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).min()
}

/// Relative slack under which a value counts as inside a bound, so that
/// projecting an already projected value is a no-op.
const PROJECTION_SLACK: f64 = 1e-12;

/// Projects the singular values of `m` into `[lo, hi]`, keeping the singular
/// vectors. Returns `m` untouched when it is already inside.
pub fn clamp_singular_values(m: &DMatrix<f64>, lo: f64, hi: f64) -> DMatrix<f64> {
    let svd = svd(m);
    let inside = |s: f64| s >= lo * (1.0 - PROJECTION_SLACK) && s <= hi * (1.0 + PROJECTION_SLACK);
    if svd.singular_values.iter().all(|&s| inside(s)) {
        return m.clone();
    }
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let s = svd.singular_values.map(|s| s.clamp(lo, hi));
    u * DMatrix::from_diagonal(&s) * vt
}

/// Rescales `v` onto the Euclidean ball of radius `r` if it lies outside.
pub fn project_ball(v: &DVector<f64>, r: f64) -> DVector<f64> {
    let n = v.norm();
    if n > r * (1.0 + PROJECTION_SLACK) {
        v * (r / n)
    } else {
        v.clone()
    }
}

/// Symmetric square root via eigendecomposition, eigenvalues floored at
/// `1e-12`.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let s = eig.eigenvalues.map(|l| l.max(1e-12).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}

pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(m.clone()).eigenvalues
}

/// `log |det m|` from an LU factorization.
pub fn log_abs_det(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    let u = lu.u();
    u.diagonal().iter().map(|d| d.abs().ln()).sum()
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    let min = s.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        s.max() / min
    }
}

/// Inverse with a conditioning check; `layer` only labels the error.
pub fn checked_inverse(m: &DMatrix<f64>, layer: usize) -> Result<DMatrix<f64>> {
    let condition = condition_number(m);
    if !condition.is_finite() || condition > 1.0 / f64::EPSILON {
        return Err(Error::Singular { layer, condition });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::Singular { layer, condition })
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector(n: usize, rng: &mut Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(d: usize, rng: &mut Rng) -> DMatrix<f64> {
    let qr = gaussian_matrix(d, d, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `U·diag(s)·Vᵀ` with Haar `U`, `V` and `s` uniform in `[lo, hi]`.
pub fn random_well_conditioned(d: usize, lo: f64, hi: f64, rng: &mut Rng) -> DMatrix<f64> {
    let u = random_orthogonal(d, rng);
    let v = random_orthogonal(d, rng);
    let s = DVector::from_fn(d, |_, _| rng.random_range(lo..=hi));
    u * DMatrix::from_diagonal(&s) * v.transpose()
}

/// `rows×cols` matrix with Haar singular vectors and its `min(rows, cols)`
/// singular values uniform in `[lo, hi]`.
pub fn random_rectangular(
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
    rng: &mut Rng,
) -> DMatrix<f64> {
    let r = rows.min(cols);
    let u = random_orthogonal(rows, rng).columns(0, r).into_owned();
    let v = random_orthogonal(cols, rng).columns(0, r).into_owned();
    let s = DVector::from_fn(r, |_, _| rng.random_range(lo..=hi));
    u * DMatrix::from_diagonal(&s) * v.transpose()
}

/// `1×n` matrix holding `v`.
pub fn row_matrix(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

pub fn matrix_to_tensor(m: &DMatrix<f64>) -> Tensor<f64> {
    let mut t = Tensor::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            t.set(r, c, m[(r, c)]);
        }
    }
    t
}

pub fn tensor_to_matrix(t: &Tensor<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

/// Row vector `1×n` tensor from a column vector.
pub fn vector_to_row(v: &DVector<f64>) -> Tensor<f64> {
    Tensor::row(v.as_slice())
}

pub fn row_to_vector(t: &Tensor<f64>) -> DVector<f64> {
    DVector::from_row_slice(t.data())
}
