//! Time-varying composite problems `f(x; t) + g(x)`.
//!
//! The smooth part is exposed through [`SmoothOracle`] (value, gradient,
//! Hessian-vector product and the mixed time derivative of the gradient).
//! Solvers work on a frozen snapshot of it, described by [`SmoothPart`]:
//! either the true cost at a sampling instant ([`Frozen`]) or a surrogate such
//! as the prediction model.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Matrix-vector product units charged for one gradient evaluation.
pub const GRAD_COST: u64 = 2;
/// Units charged for one Hessian-vector product.
pub const HESS_VEC_COST: u64 = 2;
/// Units charged for one evaluation of the time derivative of the gradient.
pub const TIME_DERIVATIVE_COST: u64 = 1;

/// Smooth, strongly convex part of a time-varying composite problem.
pub trait SmoothOracle {
    fn dim(&self) -> usize;

    fn eval(&self, x: &Array1<f64>, t: f64) -> f64;

    /// `∇ₓ f(x; t)`.
    fn grad(&self, x: &Array1<f64>, t: f64) -> Array1<f64>;

    /// Value and gradient together; implementations share work where they can.
    fn eval_grad(&self, x: &Array1<f64>, t: f64) -> (f64, Array1<f64>) {
        (self.eval(x, t), self.grad(x, t))
    }

    /// `∇ₓₓ f(x; t) · v`.
    fn hess_vec(&self, x: &Array1<f64>, t: f64, v: &Array1<f64>) -> Array1<f64>;

    /// `∇ₜₓ f(x; t)`.
    fn grad_t_grad(&self, x: &Array1<f64>, t: f64) -> Array1<f64>;

    /// False when the time derivative at `t` is a placeholder (for example the
    /// first sample of a streamed signal, where no backward difference exists).
    fn has_time_derivative(&self, _t: f64) -> bool {
        true
    }
}

impl<O: SmoothOracle + ?Sized> SmoothOracle for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &Array1<f64>, t: f64) -> f64 {
        (**self).eval(x, t)
    }
    fn grad(&self, x: &Array1<f64>, t: f64) -> Array1<f64> {
        (**self).grad(x, t)
    }
    fn eval_grad(&self, x: &Array1<f64>, t: f64) -> (f64, Array1<f64>) {
        (**self).eval_grad(x, t)
    }
    fn hess_vec(&self, x: &Array1<f64>, t: f64, v: &Array1<f64>) -> Array1<f64> {
        (**self).hess_vec(x, t, v)
    }
    fn grad_t_grad(&self, x: &Array1<f64>, t: f64) -> Array1<f64> {
        (**self).grad_t_grad(x, t)
    }
    fn has_time_derivative(&self, t: f64) -> bool {
        (**self).has_time_derivative(t)
    }
}

/// A smooth function at a fixed time, as seen by the envelope and the solvers.
pub trait SmoothPart {
    fn dim(&self) -> usize;

    fn value_grad(&self, x: &Array1<f64>) -> (f64, Array1<f64>);

    fn hess_vec(&self, x: &Array1<f64>, v: &Array1<f64>) -> Array1<f64>;
}

/// `f(·; t)` for a fixed `t`.
#[derive(Debug, Clone, Copy)]
pub struct Frozen<'a, O: ?Sized> {
    pub oracle: &'a O,
    pub t: f64,
}

impl<'a, O: SmoothOracle + ?Sized> Frozen<'a, O> {
    pub fn new(oracle: &'a O, t: f64) -> Self {
        Self { oracle, t }
    }
}

impl<O: SmoothOracle + ?Sized> SmoothPart for Frozen<'_, O> {
    fn dim(&self) -> usize {
        self.oracle.dim()
    }
    fn value_grad(&self, x: &Array1<f64>) -> (f64, Array1<f64>) {
        self.oracle.eval_grad(x, self.t)
    }
    fn hess_vec(&self, x: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
        self.oracle.hess_vec(x, self.t, v)
    }
}

/// Nonsmooth convex term `g` with a closed-form proximal operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonsmoothTerm {
    Zero,
    /// `weight · ‖x‖₁`
    L1 {
        weight: f64,
    },
}

impl NonsmoothTerm {
    pub fn l1(weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "weight",
                reason: format!("l1 weight must be finite and >= 0, got {weight}"),
            });
        }
        Ok(if weight == 0.0 {
            NonsmoothTerm::Zero
        } else {
            NonsmoothTerm::L1 { weight }
        })
    }

    pub fn eval(&self, x: &Array1<f64>) -> f64 {
        match *self {
            NonsmoothTerm::Zero => 0.0,
            NonsmoothTerm::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    /// `prox_{step·g}(point)`.
    pub fn prox(&self, point: &Array1<f64>, step: f64) -> Result<Array1<f64>> {
        if !(step > 0.0) {
            return Err(Error::NonPositiveStep(step));
        }
        Ok(self.prox_unchecked(point, step))
    }

    /// Proximal map for a step already known to be positive.
    pub(crate) fn prox_unchecked(&self, point: &Array1<f64>, step: f64) -> Array1<f64> {
        match *self {
            NonsmoothTerm::Zero => point.clone(),
            NonsmoothTerm::L1 { weight } => {
                let level = step * weight;
                point.mapv(|u| soft_threshold(u, level))
            }
        }
    }
}

#[inline]
pub fn soft_threshold(u: f64, level: f64) -> f64 {
    if u > level {
        u - level
    } else if u < -level {
        u + level
    } else {
        0.0
    }
}

/// Optional bounds on the time and mixed derivatives of `f`.
///
/// `c0` bounds `‖∇ₜₓ f‖`, `c1` bounds `‖∇ₓₓₓ f‖`, `c2` bounds `‖∇ₓₜₓ f‖` and
/// `‖∇ₜₓₓ f‖`, `c3` bounds `‖∇ₜₜₓ f‖`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DerivativeBounds {
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
}

/// A smooth oracle, a nonsmooth term and the moduli of the smooth part.
#[derive(Debug, Clone)]
pub struct CompositeProblem<O> {
    pub smooth: O,
    pub nonsmooth: NonsmoothTerm,
    m: f64,
    lipschitz: f64,
    pub bounds: DerivativeBounds,
}

impl<O: SmoothOracle> CompositeProblem<O> {
    pub fn new(smooth: O, nonsmooth: NonsmoothTerm, m: f64, lipschitz: f64) -> Result<Self> {
        if !(m > 0.0 && m <= lipschitz && lipschitz.is_finite()) {
            return Err(Error::InvalidModuli { m, lipschitz });
        }
        Ok(Self {
            smooth,
            nonsmooth,
            m,
            lipschitz,
            bounds: DerivativeBounds::default(),
        })
    }

    pub fn with_bounds(mut self, bounds: DerivativeBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    /// Strong convexity modulus.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// Lipschitz constant of the gradient.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn at(&self, t: f64) -> Frozen<'_, O> {
        Frozen::new(&self.smooth, t)
    }

    /// Composite objective `f(x; t) + g(x)`.
    pub fn objective(&self, x: &Array1<f64>, t: f64) -> f64 {
        self.smooth.eval(x, t) + self.nonsmooth.eval(x)
    }

    fn check_dim(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// `∇ₓ f(x; t)` with a dimension check.
pub fn grad_f<O: SmoothOracle>(
    problem: &CompositeProblem<O>,
    x: &Array1<f64>,
    t: f64,
) -> Result<Array1<f64>> {
    problem.check_dim(x)?;
    Ok(problem.smooth.grad(x, t))
}

/// `∇ₜₓ f(x; t)` with a dimension check.
pub fn grad_t_grad_f<O: SmoothOracle>(
    problem: &CompositeProblem<O>,
    x: &Array1<f64>,
    t: f64,
) -> Result<Array1<f64>> {
    problem.check_dim(x)?;
    Ok(problem.smooth.grad_t_grad(x, t))
}

pub fn prox_g(term: &NonsmoothTerm, point: &Array1<f64>, step: f64) -> Result<Array1<f64>> {
    term.prox(point, step)
}

/// Scalar tracking cost `f(x; t) = ½ (x − r(t))²`.
#[derive(Debug, Clone, Copy)]
pub struct ScalarTracking {
    reference: fn(f64) -> f64,
    reference_rate: fn(f64) -> f64,
}

impl ScalarTracking {
    /// `reference_rate` must be the derivative of `reference`.
    pub fn new(reference: fn(f64) -> f64, reference_rate: fn(f64) -> f64) -> Self {
        Self {
            reference,
            reference_rate,
        }
    }

    /// Time-invariant `½ x²`.
    pub fn origin() -> Self {
        Self::new(|_| 0.0, |_| 0.0)
    }

    pub fn reference(&self, t: f64) -> f64 {
        (self.reference)(t)
    }
}

impl SmoothOracle for ScalarTracking {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &Array1<f64>, t: f64) -> f64 {
        let d = x[0] - self.reference(t);
        0.5 * d * d
    }
    fn grad(&self, x: &Array1<f64>, t: f64) -> Array1<f64> {
        Array1::from_elem(1, x[0] - self.reference(t))
    }
    fn hess_vec(&self, _x: &Array1<f64>, _t: f64, v: &Array1<f64>) -> Array1<f64> {
        v.clone()
    }
    fn grad_t_grad(&self, _x: &Array1<f64>, t: f64) -> Array1<f64> {
        Array1::from_elem(1, -(self.reference_rate)(t))
    }
}

/// Regularized least squares `½‖A x − b(t)‖² + (ridge/2)‖x‖²` where `b` is
/// observed on the grid `t_k = k · period`.
///
/// `∇ₜₓ f` is the backward difference `−Aᵀ(b_k − b_{k−1}) / period`, and the
/// zero vector at the first sample.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: Array2<f64>,
    ridge: f64,
    period: f64,
    samples: Vec<Array1<f64>>,
}

impl LeastSquares {
    /// Time-invariant instance with a single measurement vector.
    pub fn fixed(a: Array2<f64>, b: Array1<f64>, ridge: f64) -> Result<Self> {
        Self::sampled(a, vec![b], ridge, 1.0)
    }

    pub fn sampled(
        a: Array2<f64>,
        samples: Vec<Array1<f64>>,
        ridge: f64,
        period: f64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: "at least one measurement vector is required".into(),
            });
        }
        if !(period > 0.0) {
            return Err(Error::InvalidParameter {
                name: "period",
                reason: format!("sampling period must be positive, got {period}"),
            });
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "ridge",
                reason: format!("ridge weight must be >= 0, got {ridge}"),
            });
        }
        for b in &samples {
            if b.len() != a.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: a.nrows(),
                    actual: b.len(),
                });
            }
        }
        Ok(Self {
            a,
            ridge,
            period,
            samples,
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn samples(&self) -> &[Array1<f64>] {
        &self.samples
    }

    /// Grid index of `t`, clamped to the available samples.
    pub fn index(&self, t: f64) -> usize {
        if self.samples.len() == 1 {
            return 0;
        }
        let k = (t / self.period).round().max(0.0) as usize;
        debug_assert!(
            k < self.samples.len(),
            "time {t} beyond the observed samples"
        );
        k.min(self.samples.len() - 1)
    }

    pub fn measurement(&self, t: f64) -> &Array1<f64> {
        &self.samples[self.index(t)]
    }

    /// `AᵀA + ridge · I`.
    pub fn hessian_matrix(&self) -> Array2<f64> {
        let mut h = self.a.t().dot(&self.a);
        h.diag_mut().mapv_inplace(|d| d + self.ridge);
        h
    }
}

impl SmoothOracle for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn eval(&self, x: &Array1<f64>, t: f64) -> f64 {
        let r = self.a.dot(x) - self.measurement(t);
        0.5 * r.dot(&r) + 0.5 * self.ridge * x.dot(x)
    }

    fn grad(&self, x: &Array1<f64>, t: f64) -> Array1<f64> {
        self.eval_grad(x, t).1
    }

    fn eval_grad(&self, x: &Array1<f64>, t: f64) -> (f64, Array1<f64>) {
        let r = self.a.dot(x) - self.measurement(t);
        let value = 0.5 * r.dot(&r) + 0.5 * self.ridge * x.dot(x);
        let mut g = self.a.t().dot(&r);
        g.scaled_add(self.ridge, x);
        (value, g)
    }

    fn hess_vec(&self, _x: &Array1<f64>, _t: f64, v: &Array1<f64>) -> Array1<f64> {
        let mut hv = self.a.t().dot(&self.a.dot(v));
        hv.scaled_add(self.ridge, v);
        hv
    }

    fn grad_t_grad(&self, _x: &Array1<f64>, t: f64) -> Array1<f64> {
        let k = self.index(t);
        if k == 0 {
            return Array1::zeros(self.dim());
        }
        let db = (&self.samples[k] - &self.samples[k - 1]) / self.period;
        -self.a.t().dot(&db)
    }

    fn has_time_derivative(&self, t: f64) -> bool {
        self.samples.len() > 1 && self.index(t) > 0
    }
}

pub use crate::spectrum::estimate_moduli;
