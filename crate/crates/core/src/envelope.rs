//! Forward-backward envelope of `φ + g`.
//!
//! For `γ ∈ (0, 1/L)`:
//!
//! ```text
//! M(x)   = φ(x) + ⟨∇φ(x), T(x) − x⟩ + g(T(x)) + ‖T(x) − x‖² / (2γ)
//! T(x)   = prox_{γg}(x − γ∇φ(x))
//! R(x)   = (x − T(x)) / γ
//! ∇M(x)  = (I − γ∇²φ(x)) R(x)
//! ```
//!
//! `M` has the same minimizers as `φ + g`, and `R` vanishes exactly there.

use std::cell::Cell;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::problem::{NonsmoothTerm, SmoothPart, GRAD_COST, HESS_VEC_COST};

/// Envelope step `γ`, validated against the Lipschitz constant it is used with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    gamma: f64,
}

impl EnvelopeParams {
    pub fn new(gamma: f64, lipschitz: f64) -> Result<Self> {
        let bound = 1.0 / lipschitz;
        if !(gamma > 0.0 && gamma < bound) {
            return Err(Error::GammaOutOfRange { gamma, bound });
        }
        Ok(Self { gamma })
    }

    /// `γ = factor / L`; `factor` must lie in `(0, 1)`.
    pub fn from_factor(factor: f64, lipschitz: f64) -> Result<Self> {
        Self::new(factor / lipschitz, lipschitz)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Everything one envelope evaluation at `x` produces.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeEval {
    pub value: f64,
    pub residual: Array1<f64>,
    pub fb_point: Array1<f64>,
    /// `∇M(x)`, present only when requested.
    pub gradient: Option<Array1<f64>>,
}

impl EnvelopeEval {
    pub fn residual_norm(&self) -> f64 {
        self.residual.dot(&self.residual).sqrt()
    }
}

/// Envelope of a fixed smooth part and nonsmooth term, with a running count of
/// the matrix-vector products spent on it.
pub struct Envelope<'a, S: ?Sized> {
    smooth: &'a S,
    nonsmooth: NonsmoothTerm,
    gamma: f64,
    matvecs: Cell<u64>,
}

impl<'a, S: SmoothPart + ?Sized> Envelope<'a, S> {
    pub fn new(smooth: &'a S, nonsmooth: NonsmoothTerm, params: EnvelopeParams) -> Self {
        Self {
            smooth,
            nonsmooth,
            gamma: params.gamma(),
            matvecs: Cell::new(0),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn matvecs(&self) -> u64 {
        self.matvecs.get()
    }

    fn charge(&self, units: u64) {
        self.matvecs.set(self.matvecs.get() + units);
    }

    /// Value, forward-backward point and residual at `x`.
    pub fn evaluate(&self, x: &Array1<f64>) -> EnvelopeEval {
        self.charge(GRAD_COST);
        let gamma = self.gamma;
        let (phi, grad) = self.smooth.value_grad(x);
        let mut forward = x.clone();
        forward.scaled_add(-gamma, &grad);
        let fb_point = self.nonsmooth.prox_unchecked(&forward, gamma);
        let step = &fb_point - x;
        let value = phi
            + grad.dot(&step)
            + self.nonsmooth.eval(&fb_point)
            + step.dot(&step) / (2.0 * gamma);
        let residual = step / -gamma;
        EnvelopeEval {
            value,
            residual,
            fb_point,
            gradient: None,
        }
    }

    /// [`evaluate`](Self::evaluate) plus `∇M(x) = R − γ ∇²φ(x) R`.
    pub fn evaluate_with_gradient(&self, x: &Array1<f64>) -> EnvelopeEval {
        let mut eval = self.evaluate(x);
        self.charge(HESS_VEC_COST);
        let hr = self.smooth.hess_vec(x, &eval.residual);
        let mut gradient = eval.residual.clone();
        gradient.scaled_add(-self.gamma, &hr);
        eval.gradient = Some(gradient);
        eval
    }

    /// `S_γ(x) v = (I − γ∇²φ(x)) v`.
    pub fn apply_jacobian_factor(&self, x: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
        self.charge(HESS_VEC_COST);
        let mut out = v.clone();
        out.scaled_add(-self.gamma, &self.smooth.hess_vec(x, v));
        out
    }
}

pub fn fbe_value<S: SmoothPart + ?Sized>(
    smooth: &S,
    nonsmooth: &NonsmoothTerm,
    x: &Array1<f64>,
    params: EnvelopeParams,
) -> f64 {
    Envelope::new(smooth, *nonsmooth, params).evaluate(x).value
}

pub fn forward_backward_step<S: SmoothPart + ?Sized>(
    smooth: &S,
    nonsmooth: &NonsmoothTerm,
    x: &Array1<f64>,
    params: EnvelopeParams,
) -> Array1<f64> {
    Envelope::new(smooth, *nonsmooth, params)
        .evaluate(x)
        .fb_point
}

pub fn residual<S: SmoothPart + ?Sized>(
    smooth: &S,
    nonsmooth: &NonsmoothTerm,
    x: &Array1<f64>,
    params: EnvelopeParams,
) -> Array1<f64> {
    Envelope::new(smooth, *nonsmooth, params)
        .evaluate(x)
        .residual
}

pub fn fbe_gradient<S: SmoothPart + ?Sized>(
    smooth: &S,
    nonsmooth: &NonsmoothTerm,
    x: &Array1<f64>,
    params: EnvelopeParams,
) -> Array1<f64> {
    Envelope::new(smooth, *nonsmooth, params)
        .evaluate_with_gradient(x)
        .gradient
        .unwrap_or_else(|| Array1::zeros(x.len()))
}
