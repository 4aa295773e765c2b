//! Generator families, discriminator families with restricted
//! approximability, and the distances used to compare them: neural-net
//! IPMs, exact empirical Wasserstein-1, Gaussian closed forms and KL
//! estimates, plus a WGAN training harness and experiment drivers.
//!
//! Generic numeric kernels ([`diffgraph`], the assignment solver, the
//! RMSProp update) are written over [`Scalar`]; the distribution-level code
//! works in `f64`, with the aliases below naming the concrete types.

pub mod diffgraph;
pub mod discriminators;
pub mod divergences;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod laplace;
pub mod linalg;
pub mod scalar;
pub mod special;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Random generator used across the crate; every stochastic routine takes an
/// explicit seed or stream.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Tape over `f64`, the precision every tolerance in this crate assumes.
pub type Tape = diffgraph::Tape<f64>;
/// Dense `f64` tensor.
pub type Tensor = diffgraph::Tensor<f64>;

/// Deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Stream for the `unit`-th independent work item under `seed`
/// (restarts, seeds of a sweep, generator pairs).
pub fn derive_seed(seed: u64, unit: u64) -> u64 {
    // SplitMix64 finalizer over the pair.
    let mut z = seed ^ unit.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
