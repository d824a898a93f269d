//! Inner minimizers of the forward-backward envelope.
//!
//! * [`quasi_newton_fbe`]: BFGS directions on `M`, optional backtracking, and a
//!   forward-backward step closing every iteration.
//! * [`gradient_descent_fbe`]: fixed-step descent on `M`.
//! * [`fista_solve`]: accelerated proximal gradient with adaptive restart,
//!   used as the high-accuracy reference solver.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{Envelope, EnvelopeEval, EnvelopeParams};
use crate::error::Error;
use crate::problem::{NonsmoothTerm, SmoothPart};

/// Consecutive increases of `M` that count as divergence for the gradient method.
const DIVERGENCE_WINDOW: usize = 5;
/// Step halvings the gradient method may apply before giving up.
const MAX_STEP_HALVINGS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "qn-ls")]
    QuasiNewtonLs,
    #[serde(rename = "qn")]
    QuasiNewton,
    #[serde(rename = "grad")]
    Gradient,
    #[serde(rename = "fista")]
    FistaOracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::QuasiNewtonLs => "qn-ls",
            Method::QuasiNewton => "qn",
            Method::Gradient => "grad",
            Method::FistaOracle => "fista",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qn-ls" => Ok(Method::QuasiNewtonLs),
            "qn" => Ok(Method::QuasiNewton),
            "grad" => Ok(Method::Gradient),
            "fista" => Ok(Method::FistaOracle),
            other => Err(format!(
                "unknown solver `{other}` (expected qn-ls, qn, grad or fista)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Iteration budget; 0 returns the starting point.
    pub max_iters: usize,
    /// Early exit once `‖R_γ‖` drops to this level.
    pub tolerance: f64,
    /// Backtracking shrink factor `β`.
    pub shrink: f64,
    /// Sufficient-decrease constant `σ`.
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    /// Gradient-method step in units of `γ`.
    pub step_scale: f64,
}

impl SolverConfig {
    pub fn new(method: Method, max_iters: usize) -> Self {
        Self {
            method,
            max_iters,
            tolerance: 1e-12,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 50,
            step_scale: 1.0,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖R_γ‖` at the starting point.
    pub initial_residual: f64,
    /// `‖R_γ‖` at the returned point.
    pub final_residual: f64,
    /// `M` at every iterate, starting point included.
    pub fbe_values: Vec<f64>,
    pub matvecs: u64,
    pub backtracks: u64,
    /// Times the BFGS estimate was discarded for a non-descent direction.
    pub resets: u64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Invalid(#[from] Error),

    #[error("gradient method diverged after {} iterations", stats.iterations)]
    Diverged { stats: SolveStats },

    #[error("iteration cap {iterations} reached with residual {residual:e}")]
    IterationCap {
        iterations: usize,
        best: Array1<f64>,
        residual: f64,
    },
}

fn check_dim<S: SmoothPart + ?Sized>(smooth: &S, x: &Array1<f64>) -> Result<(), SolverError> {
    if x.len() != smooth.dim() {
        return Err(Error::DimensionMismatch {
            expected: smooth.dim(),
            actual: x.len(),
        }
        .into());
    }
    Ok(())
}

/// Residual and envelope value at `x`, computed outside the work accounting.
fn audit<S: SmoothPart + ?Sized>(
    smooth: &S,
    g: NonsmoothTerm,
    params: EnvelopeParams,
    x: &Array1<f64>,
) -> EnvelopeEval {
    Envelope::new(smooth, g, params).evaluate(x)
}

/// Runs whichever method `cfg` selects.
pub fn minimize<S: SmoothPart + ?Sized>(
    smooth: &S,
    g: &NonsmoothTerm,
    x0: &Array1<f64>,
    params: EnvelopeParams,
    cfg: &SolverConfig,
) -> Result<(Array1<f64>, SolveStats), SolverError> {
    match cfg.method {
        Method::QuasiNewtonLs | Method::QuasiNewton => quasi_newton_fbe(smooth, g, x0, params, cfg),
        Method::Gradient => gradient_descent_fbe(smooth, g, x0, params, cfg),
        Method::FistaOracle => {
            fista_with_stats(smooth, g, x0, params, cfg.tolerance, cfg.max_iters)
        }
    }
}

/// Quasi-Newton minimization of the envelope with BFGS curvature.
///
/// Every iteration takes `d = −H ∇M(x̂)` with `H` the inverse BFGS estimate
/// (initialized to `γ I`), picks `w = x̂ + τ d`, and moves to the
/// forward-backward point `T(w)`. With [`Method::QuasiNewtonLs`], `τ` is
/// backtracked from 1 until `M(w) ≤ M(x̂) − σ τ ‖d‖²`; otherwise `τ = 1`.
pub fn quasi_newton_fbe<S: SmoothPart + ?Sized>(
    smooth: &S,
    g: &NonsmoothTerm,
    x0: &Array1<f64>,
    params: EnvelopeParams,
    cfg: &SolverConfig,
) -> Result<(Array1<f64>, SolveStats), SolverError> {
    let line_search = match cfg.method {
        Method::QuasiNewtonLs => true,
        Method::QuasiNewton => false,
        other => {
            return Err(Error::InvalidParameter {
                name: "method",
                reason: format!("quasi-Newton solver called with `{other}`"),
            }
            .into())
        }
    };
    check_dim(smooth, x0)?;
    let n = x0.len();
    let gamma = params.gamma();
    let env = Envelope::new(smooth, *g, params);
    let mut stats = SolveStats::default();
    let mut x = x0.clone();
    let mut inv_hessian = scaled_identity(n, gamma);
    let mut previous: Option<(Array1<f64>, Array1<f64>)> = None;

    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let cur = env.evaluate_with_gradient(&x);
        let grad = cur.gradient.clone().unwrap_or_else(|| Array1::zeros(n));
        if iterations == 0 {
            stats.initial_residual = cur.residual_norm();
        }
        stats.fbe_values.push(cur.value);
        if cur.residual_norm() <= cfg.tolerance {
            break;
        }

        if let Some((x_prev, grad_prev)) = previous.take() {
            let s = &x - &x_prev;
            let y = &grad - &grad_prev;
            bfgs_update(&mut inv_hessian, &s, &y);
        }

        let mut d = -inv_hessian.dot(&grad);
        if d.dot(&grad) >= 0.0 {
            log::debug!("non-descent quasi-Newton direction, resetting curvature estimate");
            stats.resets += 1;
            inv_hessian = scaled_identity(n, gamma);
            d = &grad * -gamma;
        }

        let mut tau = 1.0;
        let mut w = &x + &d;
        let mut trial = env.evaluate(&w);
        if line_search {
            let d_sq = d.dot(&d);
            let mut accepted = trial.value <= cur.value - cfg.sufficient_decrease * tau * d_sq;
            let mut tries = 0;
            while !accepted && tries < cfg.max_backtracks {
                tau *= cfg.shrink;
                w = &x + &(&d * tau);
                trial = env.evaluate(&w);
                stats.backtracks += 1;
                tries += 1;
                accepted = trial.value <= cur.value - cfg.sufficient_decrease * tau * d_sq;
            }
            if !accepted {
                // τ = 0: fall back to the plain forward-backward step from x̂.
                trial = cur.clone();
            }
        }

        previous = Some((x, grad));
        x = trial.fb_point;
        iterations += 1;
    }

    stats.iterations = iterations;
    stats.matvecs = env.matvecs();
    let last = audit(smooth, *g, params, &x);
    if cfg.max_iters == 0 {
        stats.initial_residual = last.residual_norm();
    }
    if iterations == cfg.max_iters {
        stats.fbe_values.push(last.value);
    }
    stats.final_residual = last.residual_norm();
    Ok((x, stats))
}

fn scaled_identity(n: usize, scale: f64) -> Array2<f64> {
    Array2::eye(n) * scale
}

/// Inverse BFGS update `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`, skipped when
/// the curvature condition `sᵀy > 0` fails.
fn bfgs_update(h: &mut Array2<f64>, s: &Array1<f64>, y: &Array1<f64>) {
    let sy = s.dot(y);
    if !(sy > 1e-12 * s.dot(s).sqrt() * y.dot(y).sqrt()) {
        return;
    }
    let rho = 1.0 / sy;
    let hy = h.dot(y);
    let yhy = y.dot(&hy);
    let coef = rho * rho * yhy + rho;
    let n = s.len();
    for i in 0..n {
        for j in 0..n {
            h[[i, j]] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Fixed-step gradient descent on the envelope: `x̂ ← x̂ − η ∇M(x̂)` with
/// `η = step_scale · γ`. The step is halved whenever `M` increases for
/// several consecutive iterations.
pub fn gradient_descent_fbe<S: SmoothPart + ?Sized>(
    smooth: &S,
    g: &NonsmoothTerm,
    x0: &Array1<f64>,
    params: EnvelopeParams,
    cfg: &SolverConfig,
) -> Result<(Array1<f64>, SolveStats), SolverError> {
    check_dim(smooth, x0)?;
    if !(cfg.step_scale > 0.0) {
        return Err(Error::InvalidParameter {
            name: "step_scale",
            reason: format!("must be positive, got {}", cfg.step_scale),
        }
        .into());
    }
    let env = Envelope::new(smooth, *g, params);
    let mut eta = cfg.step_scale * params.gamma();
    let mut stats = SolveStats::default();
    let mut x = x0.clone();
    let mut growth = 0;
    let mut halvings = 0;

    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let cur = env.evaluate_with_gradient(&x);
        if iterations == 0 {
            stats.initial_residual = cur.residual_norm();
        }
        if let Some(&last) = stats.fbe_values.last() {
            if cur.value > last {
                growth += 1;
            } else {
                growth = 0;
            }
        }
        stats.fbe_values.push(cur.value);
        if cur.residual_norm() <= cfg.tolerance {
            break;
        }
        if growth >= DIVERGENCE_WINDOW {
            halvings += 1;
            if halvings > MAX_STEP_HALVINGS || !cur.value.is_finite() {
                stats.iterations = iterations;
                stats.matvecs = env.matvecs();
                stats.final_residual = cur.residual_norm();
                return Err(SolverError::Diverged { stats });
            }
            log::debug!("envelope increased {DIVERGENCE_WINDOW} times in a row, halving step");
            eta *= 0.5;
            growth = 0;
        }
        if let Some(grad) = cur.gradient.as_ref() {
            x.scaled_add(-eta, grad);
        }
        iterations += 1;
    }

    stats.iterations = iterations;
    stats.matvecs = env.matvecs();
    let last = audit(smooth, *g, params, &x);
    if cfg.max_iters == 0 {
        stats.initial_residual = last.residual_norm();
    }
    if iterations == cfg.max_iters {
        stats.fbe_values.push(last.value);
    }
    stats.final_residual = last.residual_norm();
    Ok((x, stats))
}

/// FISTA with gradient-based adaptive restart, run until `‖R_γ‖ ≤ tol`.
pub fn fista_solve<S: SmoothPart + ?Sized>(
    smooth: &S,
    g: &NonsmoothTerm,
    x0: &Array1<f64>,
    params: EnvelopeParams,
    tol: f64,
    iter_cap: usize,
) -> Result<Array1<f64>, SolverError> {
    fista_with_stats(smooth, g, x0, params, tol, iter_cap).map(|(x, _)| x)
}

pub fn fista_with_stats<S: SmoothPart + ?Sized>(
    smooth: &S,
    g: &NonsmoothTerm,
    x0: &Array1<f64>,
    params: EnvelopeParams,
    tol: f64,
    iter_cap: usize,
) -> Result<(Array1<f64>, SolveStats), SolverError> {
    check_dim(smooth, x0)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("tolerance must be positive, got {tol}"),
        }
        .into());
    }
    let env = Envelope::new(smooth, *g, params);
    let mut stats = SolveStats::default();
    let mut x = x0.clone();
    let at_x = env.evaluate(&x);
    stats.initial_residual = at_x.residual_norm();
    stats.fbe_values.push(at_x.value);
    let mut residual = at_x.residual_norm();
    if residual <= tol {
        stats.final_residual = residual;
        stats.matvecs = env.matvecs();
        return Ok((x, stats));
    }

    let mut y = x.clone();
    let mut y_eval = at_x;
    let mut theta: f64 = 1.0;
    for iteration in 1..=iter_cap {
        let x_next = y_eval.fb_point.clone();
        let at_next = env.evaluate(&x_next);
        residual = at_next.residual_norm();
        stats.fbe_values.push(at_next.value);
        if residual <= tol {
            stats.iterations = iteration;
            stats.final_residual = residual;
            stats.matvecs = env.matvecs();
            return Ok((x_next, stats));
        }
        let step = &x_next - &x;
        let restart = (&y - &x_next).dot(&step) > 0.0;
        if restart {
            theta = 1.0;
            y = x_next.clone();
            y_eval = at_next;
        } else {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            theta = theta_next;
            y = &x_next + &(step * beta);
            y_eval = env.evaluate(&y);
        }
        x = x_next;
    }
    Err(SolverError::IterationCap {
        iterations: iter_cap,
        best: x,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Frozen, ScalarTracking};
    use ndarray::array;

    fn scalar() -> ScalarTracking {
        ScalarTracking::origin()
    }

    fn gamma_half() -> EnvelopeParams {
        EnvelopeParams::new(0.5, 1.0).unwrap()
    }

    #[test]
    fn method_names_roundtrip() {
        for m in [
            Method::QuasiNewtonLs,
            Method::QuasiNewton,
            Method::Gradient,
            Method::FistaOracle,
        ] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("newton".parse::<Method>().is_err());
    }

    #[test]
    fn optimal_start_is_returned_unchanged() {
        let o = scalar();
        let phi = Frozen::new(&o, 0.0);
        let g = NonsmoothTerm::l1(1.0).unwrap();
        let x0 = array![0.0];
        for method in [Method::QuasiNewtonLs, Method::QuasiNewton, Method::Gradient] {
            let (x, stats) =
                minimize(&phi, &g, &x0, gamma_half(), &SolverConfig::new(method, 20)).unwrap();
            assert_eq!(x, x0);
            assert_eq!(stats.backtracks, 0);
            assert_eq!(stats.iterations, 0);
        }
        assert_eq!(
            fista_solve(&phi, &g, &x0, gamma_half(), 1e-10, 10).unwrap(),
            x0
        );
    }

    #[test]
    fn zero_budget_passes_through() {
        let o = scalar();
        let phi = Frozen::new(&o, 0.0);
        let x0 = array![3.0];
        let (x, stats) = quasi_newton_fbe(
            &phi,
            &NonsmoothTerm::Zero,
            &x0,
            gamma_half(),
            &SolverConfig::new(Method::QuasiNewton, 0),
        )
        .unwrap();
        assert_eq!(x, x0);
        assert_eq!(stats.matvecs, 0);
        assert_eq!(stats.initial_residual, stats.final_residual);
    }

    #[test]
    fn quasi_newton_scalar_l1() {
        let o = scalar();
        let phi = Frozen::new(&o, 0.0);
        let g = NonsmoothTerm::l1(1.0).unwrap();
        for method in [Method::QuasiNewtonLs, Method::QuasiNewton] {
            let cfg = SolverConfig::new(method, 50).with_tolerance(1e-10);
            let (x, stats) = quasi_newton_fbe(&phi, &g, &array![5.0], gamma_half(), &cfg).unwrap();
            assert!(x[0].abs() <= 1e-10, "{method}: {x}");
            assert!(stats.final_residual <= 1e-10);
            assert!(stats.iterations <= 50);
        }
    }

    #[test]
    fn gradient_scalar_contracts_to_origin() {
        let o = scalar();
        let phi = Frozen::new(&o, 0.0);
        let cfg = SolverConfig::new(Method::Gradient, 200).with_tolerance(0.0);
        let (x, _) =
            gradient_descent_fbe(&phi, &NonsmoothTerm::Zero, &array![5.0], gamma_half(), &cfg)
                .unwrap();
        assert!(x[0].abs() <= 1e-8);
    }

    #[test]
    fn fista_scalar_l1() {
        let o = scalar();
        let phi = Frozen::new(&o, 0.0);
        let g = NonsmoothTerm::l1(1.0).unwrap();
        let x = fista_solve(&phi, &g, &array![5.0], gamma_half(), 1e-10, 1000).unwrap();
        assert!(x[0].abs() <= 1e-10);
    }

    #[test]
    fn fista_reports_iteration_cap() {
        let o = scalar();
        let phi = Frozen::new(&o, 0.0);
        let params = EnvelopeParams::new(1e-3, 1.0).unwrap();
        match fista_solve(&phi, &NonsmoothTerm::Zero, &array![5.0], params, 1e-12, 3) {
            Err(SolverError::IterationCap {
                iterations,
                best,
                residual,
            }) => {
                assert_eq!(iterations, 3);
                assert_eq!(best.len(), 1);
                assert!(residual > 1e-12);
            }
            other => panic!("expected iteration cap, got {other:?}"),
        }
    }

    #[test]
    fn wrong_method_and_dimension_are_rejected() {
        let o = scalar();
        let phi = Frozen::new(&o, 0.0);
        let cfg = SolverConfig::new(Method::Gradient, 5);
        assert!(
            quasi_newton_fbe(&phi, &NonsmoothTerm::Zero, &array![1.0], gamma_half(), &cfg).is_err()
        );
        let cfg = SolverConfig::new(Method::QuasiNewton, 5);
        assert!(minimize(
            &phi,
            &NonsmoothTerm::Zero,
            &array![1.0, 2.0],
            gamma_half(),
            &cfg
        )
        .is_err());
    }

    #[test]
    fn bfgs_update_satisfies_secant_condition() {
        let mut h = Array2::eye(3) * 0.5;
        let s = array![1.0, 0.5, -0.2];
        let y = array![2.0, 0.3, 0.1];
        bfgs_update(&mut h, &s, &y);
        let hy = h.dot(&y);
        for i in 0..3 {
            assert!((hy[i] - s[i]).abs() < 1e-12);
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!((h[[i, j]] - h[[j, i]]).abs() < 1e-14);
            }
        }
    }
}
