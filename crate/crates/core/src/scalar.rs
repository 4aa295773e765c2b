//! Scalar abstraction shared by the generic numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating point type usable by the tape, the assignment solver and the
/// optimizer kernels. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the value is not representable,
    /// which cannot happen for finite inputs on `f32`/`f64`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// `out = a·b` for row-major `a` (`n×m`) and `b` (`m×p`).
    fn gemm(n: usize, m: usize, p: usize, a: &[Self], b: &[Self], out: &mut [Self]) {
        for v in out.iter_mut() {
            *v = Self::zero();
        }
        for i in 0..n {
            let orow = &mut out[i * p..(i + 1) * p];
            for k in 0..m {
                let x = a[i * m + k];
                for (o, &y) in orow.iter_mut().zip(&b[k * p..(k + 1) * p]) {
                    *o = *o + x * y;
                }
            }
        }
    }
}

impl Scalar for f32 {
    fn gemm(n: usize, m: usize, p: usize, a: &[Self], b: &[Self], out: &mut [Self]) {
        assert!(a.len() == n * m && b.len() == m * p && out.len() == n * p);
        // SAFETY: the slices hold exactly the row-major extents passed.
        unsafe {
            matrixmultiply::sgemm(
                n, m, p, 1.0, a.as_ptr(), m as isize, 1, b.as_ptr(), p as isize, 1, 0.0,
                out.as_mut_ptr(), p as isize, 1,
            )
        }
    }
}

impl Scalar for f64 {
    fn gemm(n: usize, m: usize, p: usize, a: &[Self], b: &[Self], out: &mut [Self]) {
        assert!(a.len() == n * m && b.len() == m * p && out.len() == n * p);
        // SAFETY: the slices hold exactly the row-major extents passed.
        unsafe {
            matrixmultiply::dgemm(
                n, m, p, 1.0, a.as_ptr(), m as isize, 1, b.as_ptr(), p as isize, 1, 0.0,
                out.as_mut_ptr(), p as isize, 1,
            )
        }
    }
}

/// Error-free transformation: returns `(s, e)` with `s = fl(a + b)` and
/// `a + b = s + e` exactly.
#[inline]
fn two_sum<T: Scalar>(a: T, b: T) -> (T, T) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Correctly rounded sum of a sequence (Shewchuk's non-overlapping partials).
///
/// The result does not depend on the order of the terms, which is what lets
/// two different summation orders of the same multiset agree bit for bit.
pub fn exact_sum<T: Scalar, I: IntoIterator<Item = T>>(terms: I) -> T {
    let mut partials: Vec<T> = Vec::new();
    for mut x in terms {
        let mut kept = 0;
        for i in 0..partials.len() {
            let mut y = partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let (hi, lo) = two_sum(x, y);
            if lo != T::zero() {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    // Round the partials to a single value, same final step as Python's fsum.
    let mut n = partials.len();
    if n == 0 {
        return T::zero();
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = T::zero();
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        let (s, e) = two_sum(x, y);
        hi = s;
        lo = e;
        if lo != T::zero() {
            break;
        }
    }
    if n > 0 {
        let two = T::lit(2.0);
        let neg = T::zero();
        if (lo < neg && partials[n - 1] < neg) || (lo > neg && partials[n - 1] > neg) {
            let y = lo * two;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_sum_is_order_independent() {
        let xs = [1e16, 1.0, -1e16, 3.5, 1e-3, 7.25e10, -7.25e10];
        let fwd = exact_sum(xs.iter().copied());
        let rev = exact_sum(xs.iter().rev().copied());
        assert_eq!(fwd, rev);
        assert_eq!(fwd, 4.501);
    }

    #[test]
    fn exact_sum_handles_cancellation() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum(Vec::<f64>::new()), 0.0);
        assert_eq!(exact_sum([0.1f32, 0.2, 0.3]), 0.6f32);
    }
}
