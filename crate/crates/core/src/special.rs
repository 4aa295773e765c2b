//! Scalar special functions: stable log-sum-exp and the standard normal
//! density/distribution function.

use libm::erfc;

use crate::scalar::Scalar;

/// `log Σ exp(xᵢ)`, shifted by the maximum. Returns `-∞` for an empty slice.
pub fn logsumexp<T: Scalar>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    let s: T = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal density.
pub fn normal_pdf(a: f64) -> f64 {
    (-0.5 * a * a - 0.5 * LN_2PI).exp()
}

/// Standard normal distribution function, through `erfc` so that the lower
/// tail keeps full relative precision.
pub fn normal_cdf(a: f64) -> f64 {
    0.5 * erfc(-a / std::f64::consts::SQRT_2)
}

/// `R(a) = E[max(W + a, 0)]` for `W ~ N(0, 1)`, i.e. `a·Φ(a) + φ(a)`.
pub fn expected_relu_standard(a: f64) -> f64 {
    a * normal_cdf(a) + normal_pdf(a)
}
