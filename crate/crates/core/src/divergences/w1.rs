use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{exact_sum, Scalar};

/// Largest batch accepted by [`w1_exact`].
pub const MAX_W1_BATCH: usize = 2048;

/// Minimum-cost perfect matching on a square cost matrix given row-major,
/// by shortest augmenting paths with row and column potentials.
/// Returns `assignment[row] = column`.
pub fn solve_assignment<T: Scalar>(cost: &[T], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix is not n×n");
    let inf = T::infinity();
    // 1-based: column 0 and row 0 are the virtual source.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

fn check_batches(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<()> {
    if p.nrows() != q.nrows() {
        return Err(Error::DimensionMismatch {
            expected: p.nrows(),
            found: q.nrows(),
        });
    }
    if p.ncols() != q.ncols() {
        return Err(Error::DimensionMismatch {
            expected: p.ncols(),
            found: q.ncols(),
        });
    }
    if p.nrows() > MAX_W1_BATCH {
        return Err(Error::InvalidSpec(format!(
            "batch of {} exceeds the exact solver cap {MAX_W1_BATCH}",
            p.nrows()
        )));
    }
    if p.iter().chain(q.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample in w1 batch".into()));
    }
    Ok(())
}

/// Optimal assignment between the rows of two equal-size batches.
pub fn w1_assignment(batch_p: &DMatrix<f64>, batch_q: &DMatrix<f64>) -> Result<Vec<usize>> {
    check_batches(batch_p, batch_q)?;
    let n = batch_p.nrows();
    let mut cost = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            cost.push((batch_p.row(i) - batch_q.row(j)).norm());
        }
    }
    Ok(solve_assignment(&cost, n))
}

/// Empirical Wasserstein-1 distance `(1/n)·min_π Σ‖xᵢ - y_π(i)‖`.
///
/// The matched cost is summed with [`exact_sum`]. In one dimension each
/// `|x - y|` is split into its signed endpoints, so every optimal matching
/// yields the same correctly rounded total.
pub fn w1_exact(batch_p: &DMatrix<f64>, batch_q: &DMatrix<f64>) -> Result<f64> {
    let n = batch_p.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let pi = w1_assignment(batch_p, batch_q)?;
    let total = if batch_p.ncols() == 1 {
        exact_sum(pi.iter().enumerate().flat_map(|(i, &j)| {
            let (x, y) = (batch_p[(i, 0)], batch_q[(j, 0)]);
            if x >= y {
                [x, -y]
            } else {
                [y, -x]
            }
        }))
    } else {
        exact_sum(
            pi.iter()
                .enumerate()
                .map(|(i, &j)| (batch_p.row(i) - batch_q.row(j)).norm()),
        )
    };
    Ok(total / n as f64)
}

/// Mean of [`w1_exact`] over consecutive sub-batches of at most `cap` rows.
pub fn w1_subbatched(batch_p: &DMatrix<f64>, batch_q: &DMatrix<f64>, cap: usize) -> Result<f64> {
    if batch_p.nrows() != batch_q.nrows() {
        return Err(Error::DimensionMismatch {
            expected: batch_p.nrows(),
            found: batch_q.nrows(),
        });
    }
    let n = batch_p.nrows();
    let cap = cap.clamp(1, MAX_W1_BATCH);
    let mut parts = Vec::new();
    let mut start = 0;
    while start < n {
        let len = cap.min(n - start);
        let a = batch_p.rows(start, len).into_owned();
        let b = batch_q.rows(start, len).into_owned();
        parts.push(w1_exact(&a, &b)? * len as f64);
        start += len;
    }
    Ok(if n == 0 {
        0.0
    } else {
        exact_sum(parts) / n as f64
    })
}
