use crate::special::logsumexp;

/// Terms more than this far below the peak exponent are dropped; `e^-60`
/// is below the rounding of the kept sum.
const WINDOW_DROP: f64 = 60.0;

/// Hard cap on lattice points, reached only for non-concave exponents over
/// very wide intervals.
const MAX_POINTS: usize = 20_000_000;

/// `log ∫_{-δ}^{δ} exp(g·c + λ·c²/2) dc` by the midpoint rule on a lattice
/// of spacing at most `step`.
///
/// For `λ < 0` only the lattice points within the window where the exponent
/// is at least its maximum minus 60 are summed; the rest contribute below
/// rounding.
pub fn log_riemann_integral(g: f64, lambda: f64, delta: f64, step: f64) -> f64 {
    assert!(delta > 0.0 && step > 0.0, "integration radius and step must be positive");
    let n = (2.0 * delta / step).ceil().max(1.0) as usize;
    let h = 2.0 * delta / n as f64;
    let node = |j: usize| -delta + (j as f64 + 0.5) * h;
    let exponent = |c: f64| g * c + 0.5 * lambda * c * c;

    let (lo, hi) = if lambda < 0.0 {
        let vertex = -g / lambda;
        let top = exponent(vertex.clamp(-delta, delta));
        // exponent(c) = exponent(vertex) + λ(c - vertex)²/2
        let half = (2.0 * (exponent(vertex) - top + WINDOW_DROP) / -lambda).sqrt();
        let a = (vertex - half).max(-delta);
        let b = (vertex + half).min(delta);
        let to_index = |c: f64| ((c + delta) / h - 0.5).clamp(0.0, (n - 1) as f64);
        (to_index(a).floor() as usize, to_index(b).ceil() as usize)
    } else {
        (0, n - 1)
    };
    assert!(hi - lo < MAX_POINTS, "riemann sum over {} points", hi - lo + 1);
    let terms: Vec<f64> = (lo..=hi).map(|j| exponent(node(j))).collect();
    logsumexp(&terms) + h.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_integrand_gives_interval_length() {
        assert!((log_riemann_integral(0.0, 0.0, 2.0, 0.01) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn wide_gaussian_matches_closed_form() {
        // ∫ exp(-c²/2 · 400) dc = √(2π/400)
        let got = log_riemann_integral(0.0, -400.0, 50.0, 1e-3);
        let want = 0.5 * (2.0 * std::f64::consts::PI / 400.0).ln();
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn windowing_matches_full_sum() {
        let (g, lambda, delta, step): (f64, f64, f64, f64) = (3.0, -50.0, 4.0, 1e-3);
        let n = (2.0 * delta / step).ceil() as usize;
        let h = 2.0 * delta / n as f64;
        let full: Vec<f64> = (0..n)
            .map(|j| {
                let c = -delta + (j as f64 + 0.5) * h;
                g * c + 0.5 * lambda * c * c
            })
            .collect();
        let want = logsumexp(&full) + h.ln();
        assert!((log_riemann_integral(g, lambda, delta, step) - want).abs() < 1e-13);
    }

    #[test]
    fn peak_outside_interval() {
        // Vertex at c = 10, interval [-1, 1]; integrand increasing on it.
        let got = log_riemann_integral(10.0, -1.0, 1.0, 1e-4);
        let f = |c: f64| (10.0 * c - 0.5 * c * c).exp();
        let mut simpson = 0.0;
        let m = 20_000;
        let h = 2.0 / m as f64;
        for i in 0..=m {
            let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            simpson += w * f(-1.0 + i as f64 * h);
        }
        simpson *= h / 3.0;
        assert!((got - simpson.ln()).abs() < 1e-6);
    }
}
