//! The prediction-correction tracking loop.
//!
//! At each sampling instant `t_k` the cost `f(·; t_{k+1})` is not yet known, so
//! the gradient is extrapolated with a first-order Taylor expansion in `x` and
//! `t` around `(x_k, t_k)`. This gives the quadratic surrogate
//!
//! ```text
//! h_k(x) = ½ xᵀ Q x + (∇ₓf(x_k; t_k) − Q x_k + T_s ∇ₜₓf(x_k; t_k))ᵀ x,   Q = ∇ₓₓf(x_k; t_k)
//! ```
//!
//! `P` inner iterations on the envelope of `h_k + g` produce the prediction;
//! once `f(·; t_{k+1})` is observed, `C` iterations on its envelope correct it.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{Envelope, EnvelopeParams};
use crate::error::Error;
use crate::problem::{
    CompositeProblem, NonsmoothTerm, SmoothOracle, SmoothPart, GRAD_COST, HESS_VEC_COST,
    TIME_DERIVATIVE_COST,
};
use crate::solvers::{fista_with_stats, minimize, Method, SolveStats, SolverConfig, SolverError};

/// Quadratic prediction model `h_k` built at `(x_k, t_k)`.
#[derive(Debug, Clone)]
pub struct QuadraticModel<'a, O: ?Sized> {
    oracle: &'a O,
    t_k: f64,
    base_point: Array1<f64>,
    linear: Array1<f64>,
}

impl<'a, O: SmoothOracle + ?Sized> QuadraticModel<'a, O> {
    pub fn base_point(&self) -> &Array1<f64> {
        &self.base_point
    }

    /// `∇ₓf(x_k; t_k) − Q x_k + T_s ∇ₜₓf(x_k; t_k)`.
    pub fn linear(&self) -> &Array1<f64> {
        &self.linear
    }

    /// `Q v`.
    pub fn apply_q(&self, v: &Array1<f64>) -> Array1<f64> {
        self.oracle.hess_vec(&self.base_point, self.t_k, v)
    }

    /// `∇h_k(x) = Q x + linear`.
    pub fn gradient(&self, x: &Array1<f64>) -> Array1<f64> {
        self.apply_q(x) + &self.linear
    }

    /// Dense `Q`, assembled column by column.
    pub fn q_matrix(&self) -> Array2<f64> {
        let n = self.base_point.len();
        let mut q = Array2::zeros((n, n));
        for j in 0..n {
            let mut e = Array1::zeros(n);
            e[j] = 1.0;
            q.column_mut(j).assign(&self.apply_q(&e));
        }
        q
    }
}

impl<O: SmoothOracle + ?Sized> SmoothPart for QuadraticModel<'_, O> {
    fn dim(&self) -> usize {
        self.base_point.len()
    }

    fn value_grad(&self, x: &Array1<f64>) -> (f64, Array1<f64>) {
        let qx = self.apply_q(x);
        let value = 0.5 * x.dot(&qx) + self.linear.dot(x);
        (value, qx + &self.linear)
    }

    fn hess_vec(&self, _x: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
        self.apply_q(v)
    }
}

/// Builds `h_k` and reports the matrix-vector products it cost.
pub fn build_prediction_model<'a, O: SmoothOracle>(
    problem: &'a CompositeProblem<O>,
    x_k: &Array1<f64>,
    t_k: f64,
    sampling_period: f64,
) -> (QuadraticModel<'a, O>, u64) {
    let oracle = &problem.smooth;
    let mut linear = oracle.grad(x_k, t_k);
    linear -= &oracle.hess_vec(x_k, t_k, x_k);
    linear.scaled_add(sampling_period, &oracle.grad_t_grad(x_k, t_k));
    let model = QuadraticModel {
        oracle,
        t_k,
        base_point: x_k.clone(),
        linear,
    };
    (model, GRAD_COST + HESS_VEC_COST + TIME_DERIVATIVE_COST)
}

/// `cfg.max_iters` inner iterations on the envelope of `h_k + g` from `x_k`.
pub fn predict<O: SmoothOracle + ?Sized>(
    model: &QuadraticModel<'_, O>,
    g: &NonsmoothTerm,
    x_k: &Array1<f64>,
    params: EnvelopeParams,
    cfg: &SolverConfig,
) -> Result<(Array1<f64>, SolveStats), SolverError> {
    minimize(model, g, x_k, params, cfg)
}

/// `cfg.max_iters` inner iterations on the envelope of `f(·; t_next) + g` from
/// the prediction.
pub fn correct<O: SmoothOracle>(
    problem: &CompositeProblem<O>,
    prediction: &Array1<f64>,
    t_next: f64,
    params: EnvelopeParams,
    cfg: &SolverConfig,
) -> Result<(Array1<f64>, SolveStats), SolverError> {
    if cfg.max_iters == 0 {
        return Err(Error::InvalidParameter {
            name: "C",
            reason: "at least one correction iteration is required".into(),
        }
        .into());
    }
    minimize(
        &problem.at(t_next),
        &problem.nonsmooth,
        prediction,
        params,
        cfg,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcConfig {
    /// `T_s`, seconds.
    pub sampling_period: f64,
    /// `P`; zero disables prediction.
    pub prediction_steps: usize,
    /// `C`, at least one.
    pub correction_steps: usize,
    /// `γ = gamma_factor / L`.
    pub gamma_factor: f64,
    pub predictor: Method,
    pub corrector: Method,
    /// Number of sampling periods `K`.
    pub steps: usize,
    /// Early exit tolerance on `‖R_γ‖` inside the `P` and `C` budgets.
    pub inner_tolerance: f64,
    pub oracle_tolerance: f64,
    pub oracle_iter_cap: usize,
}

impl Default for PcConfig {
    fn default() -> Self {
        Self {
            sampling_period: 0.1,
            prediction_steps: 10,
            correction_steps: 5,
            gamma_factor: 0.8,
            predictor: Method::QuasiNewton,
            corrector: Method::QuasiNewtonLs,
            steps: 1200,
            inner_tolerance: 1e-12,
            oracle_tolerance: 1e-10,
            oracle_iter_cap: 200_000,
        }
    }
}

impl PcConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.sampling_period > 0.0 && self.sampling_period.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sampling_period",
                reason: format!("must be positive, got {}", self.sampling_period),
            });
        }
        if self.correction_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "correction_steps",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.gamma_factor > 0.0 && self.gamma_factor < 1.0) {
            return Err(Error::InvalidParameter {
                name: "gamma_factor",
                reason: format!(
                    "γ must lie in (0, 1/L): gamma_factor {} is outside (0, 1)",
                    self.gamma_factor
                ),
            });
        }
        if !(self.inner_tolerance >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "inner_tolerance",
                reason: "must be >= 0".into(),
            });
        }
        if !(self.oracle_tolerance > 0.0) {
            return Err(Error::InvalidParameter {
                name: "oracle_tolerance",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.sampling_period
    }

    fn predictor_config(&self) -> SolverConfig {
        SolverConfig::new(self.predictor, self.prediction_steps)
            .with_tolerance(self.inner_tolerance)
    }

    fn corrector_config(&self) -> SolverConfig {
        SolverConfig::new(self.corrector, self.correction_steps)
            .with_tolerance(self.inner_tolerance)
    }
}

/// State after sampling period `k`. Prediction and correction fields describe
/// the work that produced `iterate` from the previous record; they are empty
/// or zero for `k = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub k: usize,
    pub t: f64,
    /// `x_k`.
    pub iterate: Array1<f64>,
    /// `x̃_{k|k−1}`.
    pub prediction: Option<Array1<f64>>,
    /// `x*(t_k)`, when the oracle is enabled.
    pub optimum: Option<Array1<f64>>,
    /// `‖x_k − x*_k‖`.
    pub error_norm: Option<f64>,
    /// `‖x_k − x*_k‖ / s`.
    pub normalized_error: Option<f64>,
    /// `‖R_γ‖` of the true cost at the prediction.
    pub residual_prediction: f64,
    /// `‖R_γ‖` of the true cost at the corrected iterate.
    pub residual_correction: f64,
    pub matvec_prediction: u64,
    pub matvec_correction: u64,
    pub matvec_oracle: u64,
    /// False when the prediction used a placeholder time derivative.
    pub derivative_available: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub oracle: bool,
    /// Divisor `s` of the normalized error.
    pub active_components: usize,
    /// Defaults to the origin.
    pub initial_point: Option<Array1<f64>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            oracle: true,
            active_components: 1,
            initial_point: None,
        }
    }
}

#[derive(Debug, Error)]
#[error("run aborted at step {step}: {source}")]
pub struct RunError {
    pub step: usize,
    pub records: Vec<TrajectoryRecord>,
    #[source]
    pub source: SolverError,
}

/// Runs `K = cfg.steps` prediction-correction periods on `t_k = k · T_s`.
pub fn run<O: SmoothOracle>(
    problem: &CompositeProblem<O>,
    cfg: &PcConfig,
    options: &RunOptions,
) -> Result<Vec<TrajectoryRecord>, RunError> {
    let fail = |step: usize, records: Vec<TrajectoryRecord>, source: SolverError| RunError {
        step,
        records,
        source,
    };
    let setup = || -> Result<EnvelopeParams, Error> {
        cfg.validate()?;
        if options.oracle && options.active_components == 0 {
            return Err(Error::InvalidParameter {
                name: "active_components",
                reason: "normalized error needs s > 0".into(),
            });
        }
        EnvelopeParams::from_factor(cfg.gamma_factor, problem.lipschitz())
    };
    let params = setup().map_err(|e| fail(0, Vec::new(), e.into()))?;
    let n = problem.dim();
    let mut x = match &options.initial_point {
        Some(x0) if x0.len() != n => {
            return Err(fail(
                0,
                Vec::new(),
                Error::DimensionMismatch {
                    expected: n,
                    actual: x0.len(),
                }
                .into(),
            ))
        }
        Some(x0) => x0.clone(),
        None => Array1::zeros(n),
    };
    let g = problem.nonsmooth;
    let s = options.active_components.max(1) as f64;
    let predictor = cfg.predictor_config();
    let corrector = cfg.corrector_config();

    let mut records = Vec::with_capacity(cfg.steps + 1);
    let mut optimum = Array1::zeros(n);

    let solve_oracle = |t: f64, warm: &Array1<f64>| {
        fista_with_stats(
            &problem.at(t),
            &g,
            warm,
            params,
            cfg.oracle_tolerance,
            cfg.oracle_iter_cap,
        )
    };

    let initial_residual = Envelope::new(&problem.at(0.0), g, params)
        .evaluate(&x)
        .residual_norm();
    let mut first = TrajectoryRecord {
        k: 0,
        t: 0.0,
        iterate: x.clone(),
        prediction: None,
        optimum: None,
        error_norm: None,
        normalized_error: None,
        residual_prediction: initial_residual,
        residual_correction: initial_residual,
        matvec_prediction: 0,
        matvec_correction: 0,
        matvec_oracle: 0,
        derivative_available: false,
    };
    if options.oracle {
        match solve_oracle(0.0, &optimum) {
            Ok((opt, stats)) => {
                let err = distance(&x, &opt);
                first.error_norm = Some(err);
                first.normalized_error = Some(err / s);
                first.matvec_oracle = stats.matvecs;
                optimum = opt;
                first.optimum = Some(optimum.clone());
            }
            Err(e) => return Err(fail(0, records, e)),
        }
    }
    records.push(first);

    for k in 0..cfg.steps {
        let t_k = cfg.time(k);
        let t_next = cfg.time(k + 1);

        let (prediction, matvec_prediction, derivative_available) = if cfg.prediction_steps > 0 {
            let (model, build_cost) = build_prediction_model(problem, &x, t_k, cfg.sampling_period);
            match predict(&model, &g, &x, params, &predictor) {
                Ok((xp, stats)) => (
                    xp,
                    build_cost + stats.matvecs,
                    problem.smooth.has_time_derivative(t_k),
                ),
                Err(e) => return Err(fail(k + 1, records, e)),
            }
        } else {
            (x.clone(), 0, false)
        };

        let (next, corr) = match correct(problem, &prediction, t_next, params, &corrector) {
            Ok(out) => out,
            Err(e) => return Err(fail(k + 1, records, e)),
        };
        x = next;

        let mut record = TrajectoryRecord {
            k: k + 1,
            t: t_next,
            iterate: x.clone(),
            prediction: Some(prediction),
            optimum: None,
            error_norm: None,
            normalized_error: None,
            residual_prediction: corr.initial_residual,
            residual_correction: corr.final_residual,
            matvec_prediction,
            matvec_correction: corr.matvecs,
            matvec_oracle: 0,
            derivative_available,
        };
        if options.oracle {
            match solve_oracle(t_next, &optimum) {
                Ok((opt, stats)) => {
                    let err = distance(&x, &opt);
                    record.error_norm = Some(err);
                    record.normalized_error = Some(err / s);
                    record.matvec_oracle = stats.matvecs;
                    optimum = opt;
                    record.optimum = Some(optimum.clone());
                }
                Err(e) => return Err(fail(k + 1, records, e)),
            }
        }
        records.push(record);
    }
    Ok(records)
}

fn distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let d = a - b;
    d.dot(&d).sqrt()
}
