//! Time-varying elastic-net regression benchmark.
//!
//! A sparse signal `y_k` with `s` active components `c_i sin(ω t_k + φ_i)` is
//! observed through `b_k = A y_k + e_k`, `A ∈ ℝ^{rows × cols}` with
//! `rows < cols`. The cost at `t_k` is
//!
//! ```text
//! f(x; t_k) = ½‖A x − b_k‖² + ((1 − α)/2)‖x‖²,   g(x) = α‖x‖₁
//! ```
//!
//! and the tracking error is `‖x_k − x*_k‖ / s`.

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::prediction_correction::{run, PcConfig, RunError, RunOptions, TrajectoryRecord};
use crate::problem::{
    estimate_moduli, CompositeProblem, DerivativeBounds, LeastSquares, NonsmoothTerm,
};

const STREAM_MATRIX: u64 = 0;
const STREAM_SIGNAL: u64 = 1;
const STREAM_NOISE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    /// Number of active components `s`.
    pub active: usize,
    /// Angular rate `ω`, rad/s.
    pub omega: f64,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    pub seed: u64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        Self {
            active: 6,
            omega: 0.05,
            amplitude_min: 0.5,
            amplitude_max: 1.5,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub rows: usize,
    pub cols: usize,
    pub alpha: f64,
    /// Variance `σ²` of each measurement-noise component.
    pub noise_variance: f64,
    pub signal: SignalSpec,
    pub pc: PcConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rows: 25,
            cols: 50,
            alpha: 0.8,
            noise_variance: 1e-3,
            signal: SignalSpec::default(),
            pc: PcConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let invalid =
            |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.rows == 0 || self.rows >= self.cols {
            return invalid(
                "rows",
                format!(
                    "need 0 < rows < cols, got rows = {}, cols = {}",
                    self.rows, self.cols
                ),
            );
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return invalid("alpha", format!("must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return invalid(
                "noise_variance",
                format!("must be >= 0, got {}", self.noise_variance),
            );
        }
        let s = &self.signal;
        if s.active == 0 || s.active > self.cols {
            return invalid(
                "signal.active",
                format!("need 0 < active <= cols, got {}", s.active),
            );
        }
        if !(s.omega.is_finite()) {
            return invalid("signal.omega", format!("must be finite, got {}", s.omega));
        }
        if !(s.amplitude_min <= s.amplitude_max
            && s.amplitude_min.is_finite()
            && s.amplitude_max.is_finite())
        {
            return invalid(
                "signal.amplitude_min",
                format!(
                    "need amplitude_min <= amplitude_max, got [{}, {}]",
                    s.amplitude_min, s.amplitude_max
                ),
            );
        }
        self.pc.validate()
    }
}

/// Sparse sinusoidal signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub dim: usize,
    /// Active indices, ascending.
    pub support: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub omega: f64,
}

impl Signal {
    pub fn at(&self, t: f64) -> Array1<f64> {
        let mut y = Array1::zeros(self.dim);
        for ((&i, &c), &phi) in self.support.iter().zip(&self.amplitudes).zip(&self.phases) {
            y[i] = c * (self.omega * t + phi).sin();
        }
        y
    }

    /// `‖c‖₂`, the largest possible `‖y(t)‖`.
    pub fn amplitude_norm(&self) -> f64 {
        self.amplitudes.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub matrix: Array2<f64>,
    pub signal: Signal,
    /// `b_0, …, b_K`.
    pub measurements: Vec<Array1<f64>>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `A`, the signal and the measurement stream for `K + 1` samples.
///
/// `A` has i.i.d. `N(0, 1/rows)` entries; amplitudes are uniform on
/// `[amplitude_min, amplitude_max]` and phases uniform on `[0, 2π)`.
pub fn generate_instance(cfg: &ExperimentConfig) -> Result<Instance, Error> {
    cfg.validate()?;
    let seed = cfg.signal.seed;
    let scale = 1.0 / (cfg.rows as f64).sqrt();
    let mut rng = rng_for(seed, STREAM_MATRIX);
    let matrix = Array2::from_shape_fn((cfg.rows, cfg.cols), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    });

    let mut rng = rng_for(seed, STREAM_SIGNAL);
    let mut support = index::sample(&mut rng, cfg.cols, cfg.signal.active).into_vec();
    support.sort_unstable();
    let (lo, hi) = (cfg.signal.amplitude_min, cfg.signal.amplitude_max);
    let amplitudes = (0..support.len())
        .map(|_| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        })
        .collect();
    let phases = (0..support.len())
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let signal = Signal {
        dim: cfg.cols,
        support,
        amplitudes,
        phases,
        omega: cfg.signal.omega,
    };

    let mut rng = rng_for(seed, STREAM_NOISE);
    let noise =
        Normal::new(0.0, cfg.noise_variance.sqrt()).map_err(|e| Error::InvalidParameter {
            name: "noise_variance",
            reason: e.to_string(),
        })?;
    let measurements = (0..=cfg.pc.steps)
        .map(|k| {
            let mut b = matrix.dot(&signal.at(cfg.pc.time(k)));
            b.mapv_inplace(|v| v + noise.sample(&mut rng));
            b
        })
        .collect();
    Ok(Instance {
        matrix,
        signal,
        measurements,
    })
}

fn moduli(ls: &LeastSquares) -> Result<(f64, f64), Error> {
    match estimate_moduli(&ls.hessian_matrix()) {
        Ok((m, l)) if m > 1e-10 * l => Ok((m, l)),
        Ok((m, _)) => Err(Error::NotStronglyConvex { m }),
        Err(Error::NotPositiveDefinite) => Err(Error::NotStronglyConvex { m: 0.0 }),
        Err(e) => Err(e),
    }
}

fn elastic_net_term(alpha: f64) -> Result<NonsmoothTerm, Error> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("must lie in [0, 1], got {alpha}"),
        });
    }
    NonsmoothTerm::l1(alpha)
}

/// Elastic-net problem for a single measurement vector.
pub fn problem_at(
    a: &Array2<f64>,
    b: &Array1<f64>,
    alpha: f64,
) -> Result<CompositeProblem<LeastSquares>, Error> {
    let g = elastic_net_term(alpha)?;
    let ls = LeastSquares::fixed(a.clone(), b.clone(), 1.0 - alpha)?;
    let (m, l) = moduli(&ls)?;
    CompositeProblem::new(ls, g, m, l)
}

/// The whole measurement stream as one time-varying problem, with derivative
/// bounds derived from the signal: `C₀ = ‖A‖² ω ‖c‖`, `C₃ = ‖A‖² ω² ‖c‖`,
/// `C₁ = C₂ = 0` since `f` is quadratic in `x` and affine in `b`.
pub fn tracking_problem(
    instance: &Instance,
    cfg: &ExperimentConfig,
) -> Result<CompositeProblem<LeastSquares>, Error> {
    let g = elastic_net_term(cfg.alpha)?;
    let ls = LeastSquares::sampled(
        instance.matrix.clone(),
        instance.measurements.clone(),
        1.0 - cfg.alpha,
        cfg.pc.sampling_period,
    )?;
    let (m, l) = moduli(&ls)?;
    let a_norm_sq = l - (1.0 - cfg.alpha);
    let omega = instance.signal.omega.abs();
    let c = instance.signal.amplitude_norm();
    let bounds = DerivativeBounds {
        c0: Some(a_norm_sq * omega * c),
        c1: Some(0.0),
        c2: Some(0.0),
        c3: Some(a_norm_sq * omega * omega * c),
    };
    Ok(CompositeProblem::new(ls, g, m, l)?.with_bounds(bounds))
}

/// `‖x_k − x*_k‖ / s`.
pub fn tracking_error(x: &Array1<f64>, x_star: &Array1<f64>, active: usize) -> Result<f64, Error> {
    if active == 0 {
        return Err(Error::InvalidParameter {
            name: "active",
            reason: "the active-component count must be positive".into(),
        });
    }
    if x.len() != x_star.len() {
        return Err(Error::DimensionMismatch {
            expected: x_star.len(),
            actual: x.len(),
        });
    }
    let d = x - x_star;
    Ok(d.dot(&d).sqrt() / active as f64)
}

/// Steady-state and work statistics of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub steps: usize,
    /// First `k` of the steady-state window (the last half of the steps).
    pub window_start: usize,
    pub mean_error: f64,
    pub max_error: f64,
    pub matvec_prediction: u64,
    pub matvec_correction: u64,
    pub matvec_oracle: u64,
    pub mean_matvec_prediction: f64,
    pub mean_matvec_correction: f64,
}

impl Summary {
    pub fn total_matvecs(&self) -> u64 {
        self.matvec_prediction + self.matvec_correction
    }
}

/// Records with `k > K/2`; all records when `K = 0`.
pub fn steady_state(records: &[TrajectoryRecord]) -> &[TrajectoryRecord] {
    let steps = records.len().saturating_sub(1);
    if steps == 0 {
        return records;
    }
    &records[steps / 2 + 1..]
}

pub fn summarize(records: &[TrajectoryRecord]) -> Summary {
    let steps = records.len().saturating_sub(1);
    let window = steady_state(records);
    let errors: Vec<f64> = window.iter().filter_map(|r| r.normalized_error).collect();
    let mean_error = if errors.is_empty() {
        f64::NAN
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    };
    let max_error = errors.iter().copied().fold(f64::NAN, f64::max);
    let matvec_prediction = records.iter().map(|r| r.matvec_prediction).sum();
    let matvec_correction = records.iter().map(|r| r.matvec_correction).sum();
    let matvec_oracle = records.iter().map(|r| r.matvec_oracle).sum();
    let per_step = |total: u64| {
        if steps == 0 {
            0.0
        } else {
            total as f64 / steps as f64
        }
    };
    Summary {
        steps,
        window_start: window.first().map_or(0, |r| r.k),
        mean_error,
        max_error,
        matvec_prediction,
        matvec_correction,
        matvec_oracle,
        mean_matvec_prediction: per_step(matvec_prediction),
        mean_matvec_correction: per_step(matvec_correction),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub records: Vec<TrajectoryRecord>,
    pub summary: Summary,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error("{source}")]
    Aborted {
        #[source]
        source: RunError,
        partial: Box<ExperimentReport>,
    },
}

/// Validates `cfg`, then builds its instance and tracking problem.
pub fn prepare(
    cfg: &ExperimentConfig,
) -> Result<(Instance, CompositeProblem<LeastSquares>), Error> {
    let instance = generate_instance(cfg)?;
    let problem = tracking_problem(&instance, cfg)?;
    Ok((instance, problem))
}

/// Runs the tracking loop with the oracle enabled on a prepared problem.
pub fn run_prepared(
    cfg: &ExperimentConfig,
    problem: &CompositeProblem<LeastSquares>,
) -> Result<ExperimentReport, ExperimentError> {
    let options = RunOptions {
        oracle: true,
        active_components: cfg.signal.active,
        initial_point: None,
    };
    match run(problem, &cfg.pc, &options) {
        Ok(records) => {
            let summary = summarize(&records);
            Ok(ExperimentReport { records, summary })
        }
        Err(mut source) => {
            let records = std::mem::take(&mut source.records);
            let summary = summarize(&records);
            Err(ExperimentError::Aborted {
                source,
                partial: Box::new(ExperimentReport { records, summary }),
            })
        }
    }
}

/// Generates the instance and runs the tracking loop with the oracle enabled.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let (_, problem) = prepare(cfg)?;
    run_prepared(cfg, &problem)
}

/// Runs independent experiments in parallel, preserving input order.
pub fn run_many(cfgs: &[ExperimentConfig]) -> Vec<Result<ExperimentReport, ExperimentError>> {
    cfgs.par_iter().map(run_experiment).collect()
}
