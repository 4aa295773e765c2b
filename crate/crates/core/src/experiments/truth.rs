use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{Activation, InvertibleGeneratorSpec};
use crate::linalg::{gaussian_matrix, gaussian_vector, min_singular_value};
use crate::rng_from_seed;

/// Slope of the exact leaky ReLU in ground-truth generators.
pub const GROUND_TRUTH_SLOPE: f64 = 0.5;
pub const GROUND_TRUTH_SINGULAR_RANGE: (f64, f64) = (0.5, 2.0);

/// `layers` layers of `U·diag(s)·Vᵀ` with Haar `U, V` and `s ~ U[0.5, 2]`,
/// zero biases, leaky ReLU of slope 0.5 and unit latent scales.
pub fn make_ground_truth_generator(d: usize, layers: usize, seed: u64) -> Result<InvertibleGeneratorSpec> {
    if d == 0 || layers == 0 {
        return Err(Error::InvalidSpec(format!("ground truth needs d ≥ 1 and layers ≥ 1 (got {d}, {layers})")));
    }
    Ok(InvertibleGeneratorSpec::random(
        d,
        layers,
        GROUND_TRUTH_SINGULAR_RANGE,
        0.0,
        Activation::leaky(GROUND_TRUTH_SLOPE),
        &mut rng_from_seed(seed),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbed {
    pub spec: InvertibleGeneratorSpec,
    pub noise_scale: f64,
    /// Largest `‖W′⁻¹‖_op` over the layers.
    pub max_inverse_norm: f64,
    /// Set when `max_inverse_norm` exceeds `R_W`.
    pub flagged: bool,
}

/// `W′ = W + s·N(0,1)^{d×d}/√d`, `b′ = b + s·N(0,1)^d` on every layer.
pub fn perturb_generator(spec: &InvertibleGeneratorSpec, noise_scale: f64, seed: u64) -> Result<Perturbed> {
    if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
        return Err(Error::InvalidSpec(format!("noise scale {noise_scale}")));
    }
    let mut out = spec.clone();
    if noise_scale > 0.0 {
        let d = spec.dim();
        let mut rng = rng_from_seed(seed);
        for l in &mut out.layers {
            l.weight += gaussian_matrix(d, d, &mut rng) * (noise_scale / (d as f64).sqrt());
            l.bias += gaussian_vector(d, &mut rng) * noise_scale;
        }
    }
    let max_inverse_norm = out
        .layers
        .iter()
        .map(|l| 1.0 / min_singular_value(&l.weight))
        .fold(0.0, f64::max);
    Ok(Perturbed {
        flagged: !(max_inverse_norm <= out.constraints.r_w),
        spec: out,
        noise_scale,
        max_inverse_norm,
    })
}
