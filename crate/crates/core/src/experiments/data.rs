use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::generators::Sampler;
use crate::{rng_from_seed, Rng};

/// Uniform distribution on the unit circle.
#[derive(Clone, Copy, Debug, Default)]
pub struct Circle;

/// `(z cos 4πz, z sin 4πz)` with `z ~ U[0.25, 1]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SwissRoll;

pub const SWISSROLL_RANGE: (f64, f64) = (0.25, 1.0);

pub fn swissroll_point(z: f64) -> [f64; 2] {
    let a = 4.0 * PI * z;
    [z * a.cos(), z * a.sin()]
}

impl Sampler for Circle {
    fn dim(&self) -> usize {
        2
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(n, 2);
        for i in 0..n {
            let t = rng.random_range(0.0..2.0 * PI);
            x[(i, 0)] = t.cos();
            x[(i, 1)] = t.sin();
        }
        x
    }
}

impl Sampler for SwissRoll {
    fn dim(&self) -> usize {
        2
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let (lo, hi) = SWISSROLL_RANGE;
        let mut x = DMatrix::zeros(n, 2);
        for i in 0..n {
            let [a, b] = swissroll_point(rng.random_range(lo..=hi));
            x[(i, 0)] = a;
            x[(i, 1)] = b;
        }
        x
    }
}

pub fn make_circle(n: usize, seed: u64) -> DMatrix<f64> {
    Circle.sample_with(n, &mut rng_from_seed(seed))
}

pub fn make_swissroll(n: usize, seed: u64) -> DMatrix<f64> {
    SwissRoll.sample_with(n, &mut rng_from_seed(seed))
}
