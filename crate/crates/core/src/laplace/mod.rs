//! Smoothed log densities of injective generators.
//!
//! For `G: ℝᵏ → ℝᵈ` with latent density `∝ exp(-‖z‖²)` and Gaussian
//! smoothing `∝ exp(-‖x - G(z)‖²/β²)`, the density is
//! `p^β(x) = π^{-k/2}(πβ²)^{-d/2} ∫ exp(f(z)) dz` with
//! `f(z) = -‖z‖² - ‖G(z) - x‖²/β²`. [`laplace_log_density`] approximates
//! the integral around the maximizer of `f` by one-dimensional integrals
//! along the eigenvectors of a perturbed Hessian;
//! [`mc_log_density_oracle`] estimates it by importance sampling.

mod oracle;
mod quadrature;
mod smoothed;

pub use oracle::{mc_log_density_oracle, McEstimate};
pub use quadrature::log_riemann_integral;
pub use smoothed::{smoothed_ipm, SmoothedIpm, SmoothedSampler};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffgraph::{self, GraphError, Unary, Var};
use crate::error::{Error, Result};
use crate::generators::InjectiveGeneratorSpec;
use crate::linalg::tensor_to_matrix;
use crate::{rng_from_seed, Tape, Tensor};

/// `√d · max(log² d, 3)`: the truncation radius scale. Matches `√d·log²d`
/// for `d ≥ 6`; the floor keeps the domain from collapsing in low
/// dimension.
pub fn truncation_scale(d: usize) -> f64 {
    let d = d as f64;
    d.sqrt() * d.ln().powi(2).max(3.0)
}

/// A point at which to evaluate the smoothed density, with its latent
/// truncation radius `D_z` and the distance `D_x` to the image within which
/// the point counts as on the manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothedDensityQuery {
    pub x: Vec<f64>,
    pub z_radius: f64,
    pub x_slack: f64,
}

impl SmoothedDensityQuery {
    /// Default radii for an output of dimension `x.len()`.
    pub fn new(x: &DVector<f64>, beta: f64) -> Self {
        let s = truncation_scale(x.len());
        Self {
            x: x.as_slice().to_vec(),
            z_radius: s,
            x_slack: beta * s,
        }
    }

    pub fn point(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    fn validate(&self) -> Result<()> {
        if !(self.z_radius > 0.0 && self.x_slack > 0.0) {
            return Err(Error::InvalidSpec("query radii must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaplaceConfig {
    pub beta: f64,
    /// Half-width of the 1-D integrals; `None` uses
    /// `100·β·log(1/β)·√d/R` with `R` the generator's lower Lipschitz bound.
    pub delta_int: Option<f64>,
    /// Quadrature spacing; `None` uses `β²`.
    pub riemann_step: Option<f64>,
    /// Required gap between consecutive eigenvalues of the perturbed
    /// Hessian; `None` uses `β`.
    pub eigengap_target: Option<f64>,
    /// Entrywise variance of the symmetric perturbation; `None` uses `1/β²`.
    pub perturb_variance: Option<f64>,
    pub max_perturb_tries: usize,
    pub newton_steps: usize,
    pub newton_tolerance: f64,
    /// Round the Hessian entrywise to multiples of `β²`.
    pub quantize_hessian: bool,
    pub seed: u64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            delta_int: None,
            riemann_step: None,
            eigengap_target: None,
            perturb_variance: None,
            max_perturb_tries: 20,
            newton_steps: 50,
            newton_tolerance: 1e-6,
            quantize_hessian: true,
            seed: 0,
        }
    }
}

impl LaplaceConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    pub fn delta_int(&self, spec: &InjectiveGeneratorSpec) -> f64 {
        self.delta_int.unwrap_or_else(|| {
            let b = self.beta;
            let r = spec.regularity().r.max(1e-12);
            100.0 * b * (1.0 / b).ln() * (spec.dim() as f64).sqrt() / r
        })
    }

    pub fn riemann_step(&self) -> f64 {
        self.riemann_step.unwrap_or(self.beta * self.beta)
    }

    pub fn eigengap_target(&self) -> f64 {
        self.eigengap_target.unwrap_or(self.beta)
    }

    pub fn perturb_variance(&self) -> f64 {
        self.perturb_variance.unwrap_or(1.0 / (self.beta * self.beta))
    }

    pub fn validate(&self, spec: &InjectiveGeneratorSpec) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidSpec(format!("beta {} must lie in (0, 1)", self.beta)));
        }
        if !(self.riemann_step() < self.delta_int(spec)) {
            return Err(Error::InvalidSpec(format!(
                "riemann step {} must be below the integration radius {}",
                self.riemann_step(),
                self.delta_int(spec)
            )));
        }
        if self.max_perturb_tries == 0 {
            return Err(Error::InvalidSpec("max_perturb_tries must be at least 1".into()));
        }
        Ok(())
    }
}

fn least_squares(w: &DMatrix<f64>, rhs: &DVector<f64>, layer: usize) -> Result<DVector<f64>> {
    let svd = crate::linalg::svd(w);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax.max(1e-300)) {
        return Err(Error::Singular {
            layer,
            condition: smax / smin,
        });
    }
    svd.solve(rhs, 0.0).map_err(|e| Error::InvalidSpec(e.to_string()))
}

/// Layerwise approximate inverse: undo `σ`, then solve each affine map in
/// the least-squares sense, from the output back to the latent.
pub fn approximate_inverse(spec: &InjectiveGeneratorSpec, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: x.len(),
        });
    }
    let mut h = x.clone();
    for i in (0..spec.depth()).rev() {
        if i + 1 < spec.depth() || spec.activation_on_output {
            h.apply(|v| *v = spec.activation.inverse(*v));
        }
        let layer = &spec.layers[i];
        h = least_squares(&layer.weight, &(h - &layer.bias), i)?;
    }
    Ok(h)
}

/// `ε · 2^ℓ · L_σ^ℓ · Π σ_min(Wᵢ)⁻¹`: bound on `‖ẑ - z‖` when
/// `‖G(z) - x‖ ≤ ε`.
pub fn inversion_error_bound(spec: &InjectiveGeneratorSpec, eps: f64) -> f64 {
    let l = spec.depth() as i32;
    let l_sigma = 1.0 / spec.activation.min_slope();
    let inv_smin: f64 = spec
        .layers
        .iter()
        .map(|w| 1.0 / crate::linalg::min_singular_value(&w.weight))
        .product();
    eps * 2f64.powi(l) * l_sigma.powi(l) * inv_smin
}

fn objective_on_tape(
    spec: &InjectiveGeneratorSpec,
    tape: &mut Tape,
    z: Var,
    x: &DVector<f64>,
    beta: f64,
) -> Result<Var, GraphError> {
    let gz = spec.forward_on_tape(tape, z)?;
    let xc = tape.constant(Tensor::row(x.as_slice()))?;
    let r = tape.sub(gz, xc)?;
    let r2 = tape.unary(r, Unary::Square)?;
    let r2 = tape.sum(r2)?;
    let z2 = tape.unary(z, Unary::Square)?;
    let z2 = tape.sum(z2)?;
    let r2 = tape.scale(r2, -1.0 / (beta * beta))?;
    let z2 = tape.scale(z2, -1.0)?;
    tape.add(r2, z2)
}

/// `f(z) = -‖z‖² - ‖G(z) - x‖²/β²`.
pub fn laplace_objective(spec: &InjectiveGeneratorSpec, x: &DVector<f64>, beta: f64, z: &DVector<f64>) -> Result<f64> {
    let gz = spec.forward(z)?;
    Ok(-z.norm_squared() - (gz - x).norm_squared() / (beta * beta))
}

/// Gradient of [`laplace_objective`] with respect to `z`.
pub fn laplace_gradient(spec: &InjectiveGeneratorSpec, x: &DVector<f64>, beta: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
    let (_, g) = diffgraph::gradient(
        |tape, v| objective_on_tape(spec, tape, v[0], x, beta),
        &[Tensor::row(z.as_slice())],
    )?;
    Ok(DVector::from_column_slice(g[0].data()))
}

/// Hessian of [`laplace_objective`] with respect to `z`.
pub fn laplace_hessian(spec: &InjectiveGeneratorSpec, x: &DVector<f64>, beta: f64, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let h = diffgraph::hessian(|tape, v| objective_on_tape(spec, tape, v, x, beta), z.as_slice())?;
    Ok(tensor_to_matrix(&h))
}

/// Maximizer of `f` near `z0` by damped Newton steps, with the negated
/// Hessian's eigenvalues floored to keep each step an ascent direction.
/// Returns the point and its gradient norm.
pub fn refine_maximizer(
    spec: &InjectiveGeneratorSpec,
    x: &DVector<f64>,
    beta: f64,
    z0: &DVector<f64>,
    max_steps: usize,
    tolerance: f64,
) -> Result<(DVector<f64>, f64)> {
    let mut z = z0.clone();
    let mut fz = laplace_objective(spec, x, beta, &z)?;
    let mut g = laplace_gradient(spec, x, beta, &z)?;
    for _ in 0..max_steps {
        if g.norm() < tolerance {
            break;
        }
        let eig = SymmetricEigen::new(-laplace_hessian(spec, x, beta, &z)?);
        let floor = 1e-8 * eig.eigenvalues.amax().max(1.0);
        let inv = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
        let step = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose() * &g;
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand = &z + &step * t;
            let fc = laplace_objective(spec, x, beta, &cand)?;
            if fc >= fz + 1e-4 * t * slope {
                z = cand;
                fz = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        g = laplace_gradient(spec, x, beta, &z)?;
        if !moved {
            break;
        }
    }
    if !fz.is_finite() {
        return Err(Error::NonFinite(format!("laplace objective {fz} at the maximizer")));
    }
    Ok((z, g.norm()))
}

/// `-(k/2)·ln π - (d/2)·ln(πβ²)`: log of the latent and smoothing
/// normalization constants.
pub fn log_normalizer(k: usize, d: usize, beta: f64) -> f64 {
    let pi = std::f64::consts::PI;
    -0.5 * k as f64 * pi.ln() - 0.5 * d as f64 * (pi * beta * beta).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceResult {
    pub log_density: f64,
    pub z_star: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    /// Eigenvalues of the perturbed Hessian, ascending.
    pub eigenvalues: Vec<f64>,
    pub eigengap: f64,
    /// Perturbation draws used; 0 when no perturbation is needed (`k = 1`).
    pub perturb_tries: usize,
    /// Whether `‖G(z*) - x‖ ≤ D_x`.
    pub on_manifold: bool,
}

/// Maximizer of `f` started from the approximate inverse.
pub(crate) fn locate_maximizer(
    spec: &InjectiveGeneratorSpec,
    x: &DVector<f64>,
    config: &LaplaceConfig,
) -> Result<(DVector<f64>, f64)> {
    let z0 = approximate_inverse(spec, x)?;
    refine_maximizer(spec, x, config.beta, &z0, config.newton_steps, config.newton_tolerance)
}

fn smallest_gap(sorted: &[f64]) -> f64 {
    sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Laplace-type approximation of `log p^β(x)`: invert, refine the maximizer
/// `z*`, take gradient `g` and Hessian `H` of `f` there, quantize `H` to the
/// `β²` lattice, add a random symmetric perturbation until the eigengap
/// target is met, and return
/// `f(z*) + Σᵢ log ∫_{|c|≤δ} exp(c⟨eᵢ,g⟩ + c²λᵢ/2) dc + normalizer`.
pub fn laplace_log_density(
    spec: &InjectiveGeneratorSpec,
    query: &SmoothedDensityQuery,
    config: &LaplaceConfig,
) -> Result<LaplaceResult> {
    config.validate(spec)?;
    query.validate()?;
    let x = query.point();
    let (z, grad_norm) = locate_maximizer(spec, &x, config)?;
    if z.norm() > query.z_radius {
        return Err(Error::OutsideLatentDomain {
            norm: z.norm(),
            radius: query.z_radius,
        });
    }
    let beta = config.beta;
    let k = z.len();
    let objective = laplace_objective(spec, &x, beta, &z)?;
    let g = laplace_gradient(spec, &x, beta, &z)?;
    let mut h = laplace_hessian(spec, &x, beta, &z)?;
    if config.quantize_hessian {
        let q = beta * beta;
        h.apply(|v| *v = (*v / q).round() * q);
    }

    let (eig, tries) = if k == 1 {
        (SymmetricEigen::new(h), 0)
    } else {
        let normal = Normal::new(0.0, config.perturb_variance().sqrt()).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let mut rng = rng_from_seed(config.seed);
        let mut found = None;
        for t in 1..=config.max_perturb_tries {
            let mut e = DMatrix::zeros(k, k);
            for i in 0..k {
                for j in 0..=i {
                    let v = normal.sample(&mut rng);
                    e[(i, j)] = v;
                    e[(j, i)] = v;
                }
            }
            let eig = SymmetricEigen::new(&h + e);
            let mut sorted: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            sorted.sort_by(f64::total_cmp);
            if smallest_gap(&sorted) >= config.eigengap_target() {
                found = Some((eig, t));
                break;
            }
        }
        found.ok_or(Error::EigengapNotReached {
            tries: config.max_perturb_tries,
        })?
    };

    let delta = config.delta_int(spec);
    let step = config.riemann_step();
    let integrals: f64 = (0..k)
        .map(|i| log_riemann_integral(eig.eigenvectors.column(i).dot(&g), eig.eigenvalues[i], delta, step))
        .sum();
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let residual = (spec.forward(&z)? - &x).norm();
    let log_density = objective + integrals + log_normalizer(k, spec.dim(), beta);
    if !log_density.is_finite() {
        return Err(Error::NonFinite(format!("laplace log density {log_density}")));
    }
    Ok(LaplaceResult {
        log_density,
        z_star: z.as_slice().to_vec(),
        objective,
        grad_norm,
        eigengap: if k == 1 { f64::INFINITY } else { smallest_gap(&eigenvalues) },
        eigenvalues,
        perturb_tries: tries,
        on_manifold: residual <= query.x_slack,
    })
}

/// `f` on every row of `z` without the tape.
pub(crate) fn objective_rows(spec: &InjectiveGeneratorSpec, x: &DVector<f64>, beta: f64, z: &DMatrix<f64>) -> Result<DVector<f64>> {
    let gz = spec.forward_rows(z)?;
    Ok(DVector::from_fn(z.nrows(), |i, _| {
        -z.row(i).norm_squared() - (gz.row(i).transpose() - x).norm_squared() / (beta * beta)
    }))
}
