#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tvfbe::envelope::EnvelopeParams;
use tvfbe::problem::{estimate_moduli, LeastSquares, NonsmoothTerm};

/// `½‖A x − b‖² + (ridge/2)‖x‖² + weight‖x‖₁` with Gaussian `A`, `b`.
pub struct Quadratic {
    pub ls: LeastSquares,
    pub g: NonsmoothTerm,
    pub m: f64,
    pub lipschitz: f64,
}

impl Quadratic {
    pub fn params(&self, factor: f64) -> EnvelopeParams {
        EnvelopeParams::from_factor(factor, self.lipschitz).unwrap()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

pub fn quadratic(seed: u64, n: usize, rows: usize, ridge: f64, weight: f64) -> Quadratic {
    let mut r = rng(seed);
    let a = gaussian_matrix(&mut r, rows, n) / (rows as f64).sqrt();
    let b = gaussian_vector(&mut r, rows, 1.0);
    let ls = LeastSquares::fixed(a, b, ridge).unwrap();
    let (m, lipschitz) = estimate_moduli(&ls.hessian_matrix()).unwrap();
    let g = if weight > 0.0 {
        NonsmoothTerm::l1(weight).unwrap()
    } else {
        NonsmoothTerm::Zero
    };
    Quadratic {
        ls,
        g,
        m,
        lipschitz,
    }
}

pub fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}
