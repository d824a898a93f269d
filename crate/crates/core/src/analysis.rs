//! Convergence constants of the prediction-correction scheme.
//!
//! Everything here is a closed-form function of the moduli `(m, L)`, the
//! envelope step `γ`, the horizons `(P, C)`, the sampling period `T_s` and the
//! derivative bounds `C₀ … C₃`:
//!
//! ```text
//! ζ  = sqrt(max{½, 1 − (m/4) min{γ, 1/(4L)}})
//! κ  = (1 − γm) / (m (1 − γL))
//! ```
//!
//! First-order regime (global): `‖x_{k+1} − x*_{k+1}‖ ≤ A₁ ‖x_k − x*_k‖ + A₀` with
//!
//! ```text
//! a₁ = 2Lκ
//! a₀ = 2 C₀ T_s κ (Lκ + 1)
//! A₁ = ζ^C [ζ^P + a₁ (ζ^P + 1)]
//! A₀ = ζ^C [ζ^P κ T_s C₀ + (ζ^P + 1) a₀]
//! ```
//!
//! Second-order regime (local): the bound gains a quadratic term `A₂ e²` with
//!
//! ```text
//! a₂ = κ C₁ / 2
//! a₁ = T_s κ (κ C₀ C₁ + C₂)
//! a₀ = T_s² κ [κ² C₁ C₀² / 2 + κ C₀ C₂ + C₃ / 2]
//! A₂ = ζ^C (ζ^P + 1) a₂
//! ```
//!
//! and `A₁`, `A₀` as above with the second-order `a₁`, `a₀`.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative gap above which the two convergence-radius expressions are
/// reported as inconsistent.
pub const RADIUS_AGREEMENT_TOL: f64 = 1e-9;

fn check_moduli(m: f64, lipschitz: f64, gamma: f64) -> Result<()> {
    if !(m > 0.0 && m <= lipschitz && lipschitz.is_finite()) {
        return Err(Error::InvalidModuli { m, lipschitz });
    }
    let bound = 1.0 / lipschitz;
    if !(gamma > 0.0 && gamma < bound) {
        return Err(Error::GammaOutOfRange { gamma, bound });
    }
    Ok(())
}

/// Linear rate `ζ` of the quasi-Newton envelope iterations.
pub fn contraction_factor(m: f64, lipschitz: f64, gamma: f64) -> Result<f64> {
    check_moduli(m, lipschitz, gamma)?;
    Ok(zeta_unchecked(m, lipschitz, gamma))
}

fn zeta_unchecked(m: f64, lipschitz: f64, gamma: f64) -> f64 {
    let inner = 1.0 - 0.25 * m * gamma.min(0.25 / lipschitz);
    inner.max(0.5).sqrt()
}

/// `κ = (1 − γm) / (m (1 − γL))`, the bound on `‖S_γ‖ · ‖(∇²M)⁻¹‖`.
pub fn kappa(m: f64, lipschitz: f64, gamma: f64) -> Result<f64> {
    check_moduli(m, lipschitz, gamma)?;
    Ok(kappa_unchecked(m, lipschitz, gamma))
}

// Same ratio with numerator and denominator divided by γ.
fn kappa_unchecked(m: f64, lipschitz: f64, gamma: f64) -> f64 {
    let inv = 1.0 / gamma;
    (inv - m) / (m * (inv - lipschitz))
}

/// `A₁` of the first-order regime and whether it is below one.
pub fn linear_regime_check(
    zeta: f64,
    prediction_steps: u32,
    correction_steps: u32,
    m: f64,
    lipschitz: f64,
    gamma: f64,
) -> Result<(f64, bool)> {
    check_moduli(m, lipschitz, gamma)?;
    let a1 = 2.0 * lipschitz * kappa_unchecked(m, lipschitz, gamma);
    let big_a1 = contraction_bound(zeta, prediction_steps, correction_steps, a1);
    Ok((big_a1, big_a1 < 1.0))
}

/// `ζ^C [ζ^P + a₁ (ζ^P + 1)]`.
fn contraction_bound(zeta: f64, p: u32, c: u32, a1: f64) -> f64 {
    let zp = zeta.powi(p as i32);
    zeta.powi(c as i32) * (zp + a1 * (zp + 1.0))
}

/// Smallest `C ≤ max_c` for which the first-order condition holds.
pub fn min_correction_horizon(
    zeta: f64,
    prediction_steps: u32,
    m: f64,
    lipschitz: f64,
    gamma: f64,
    max_c: u32,
) -> Result<Option<u32>> {
    for c in 0..=max_c {
        if linear_regime_check(zeta, prediction_steps, c, m, lipschitz, gamma)?.1 {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

/// Coefficients of the first-order error recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrderCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub big_a0: f64,
    pub big_a1: f64,
}

pub fn first_order_coefficients(
    m: f64,
    lipschitz: f64,
    gamma: f64,
    c0: f64,
    sampling_period: f64,
    prediction_steps: u32,
    correction_steps: u32,
) -> Result<FirstOrderCoefficients> {
    check_moduli(m, lipschitz, gamma)?;
    let zeta = zeta_unchecked(m, lipschitz, gamma);
    let k = kappa_unchecked(m, lipschitz, gamma);
    let zp = zeta.powi(prediction_steps as i32);
    let zc = zeta.powi(correction_steps as i32);
    let a1 = 2.0 * lipschitz * k;
    let a0 = 2.0 * c0 * sampling_period * k * (lipschitz * k + 1.0);
    Ok(FirstOrderCoefficients {
        a0,
        a1,
        big_a0: zc * (zp * k * sampling_period * c0 + (zp + 1.0) * a0),
        big_a1: contraction_bound(zeta, prediction_steps, correction_steps, a1),
    })
}

/// `limsup ‖x_k − x*_k‖ ≤ A₀ / (1 − A₁)` in the first-order regime.
pub fn linear_asymptote(
    m: f64,
    lipschitz: f64,
    gamma: f64,
    c0: f64,
    sampling_period: f64,
    prediction_steps: u32,
    correction_steps: u32,
) -> Result<f64> {
    let c = first_order_coefficients(
        m,
        lipschitz,
        gamma,
        c0,
        sampling_period,
        prediction_steps,
        correction_steps,
    )?;
    if c.big_a1 >= 1.0 {
        return Err(Error::BoundVacuous { a1: c.big_a1 });
    }
    Ok(c.big_a0 / (1.0 - c.big_a1))
}

/// Coefficients of the second-order error recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondOrderCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub big_a0: f64,
    pub big_a1: f64,
    pub big_a2: f64,
}

pub fn second_order_coefficients(inputs: &BoundsInputs) -> Result<SecondOrderCoefficients> {
    let BoundsInputs {
        m,
        lipschitz,
        gamma,
        c0,
        c1,
        c2,
        c3,
        prediction_steps,
        correction_steps,
        sampling_period: ts,
        ..
    } = *inputs;
    check_moduli(m, lipschitz, gamma)?;
    let zeta = zeta_unchecked(m, lipschitz, gamma);
    let k = kappa_unchecked(m, lipschitz, gamma);
    let zp = zeta.powi(prediction_steps as i32);
    let zc = zeta.powi(correction_steps as i32);
    let a2 = k * c1 / 2.0;
    let a1 = ts * k * (k * c0 * c1 + c2);
    let a0 = ts * ts * k * (k * k * c1 * c0 * c0 / 2.0 + k * c0 * c2 + c3 / 2.0);
    Ok(SecondOrderCoefficients {
        a0,
        a1,
        a2,
        big_a0: zc * (zp * k * c0 * ts + (zp + 1.0) * a0),
        big_a1: contraction_bound(zeta, prediction_steps, correction_steps, a1),
        big_a2: zc * (zp + 1.0) * a2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsInputs {
    pub m: f64,
    pub lipschitz: f64,
    pub gamma: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub prediction_steps: u32,
    pub correction_steps: u32,
    /// Target contraction `τ ∈ (0, 1)` of the second-order regime.
    pub tau: f64,
    pub sampling_period: f64,
}

fn finite_or_text<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&format_value(*v))
    }
}

fn optional_finite_or_text<S: Serializer>(
    v: &Option<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => finite_or_text(v, s),
        None => s.serialize_none(),
    }
}

/// Renders non-finite values as `inf`, `-inf` or `nan`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub zeta: f64,
    pub kappa: f64,
    pub tau: f64,
    pub first_order: FirstOrderCoefficients,
    pub second_order: SecondOrderCoefficients,
    /// Largest sampling period for the second-order regime; `inf` when
    /// `κ(κC₀C₁ + C₂) = 0`.
    #[serde(serialize_with = "finite_or_text")]
    pub ts_bar: f64,
    /// Convergence radius `(2/C₁)(κC₀C₁ + C₂)(T̄_s − m T_s / ζ^C)`.
    #[serde(serialize_with = "finite_or_text")]
    pub r_bar: f64,
    /// Convergence radius `(τ − A₁)/A₂` from the second-order recursion.
    #[serde(serialize_with = "finite_or_text")]
    pub r_bar_recursion: f64,
    /// False when the two radius expressions differ by more than
    /// [`RADIUS_AGREEMENT_TOL`] relative.
    pub r_bar_consistent: bool,
    /// First-order condition `A₁ < 1`.
    pub linear_bound_holds: bool,
    /// `A₀ / (1 − A₁)` when the first-order condition holds.
    #[serde(serialize_with = "optional_finite_or_text")]
    pub asymptotic_bound_linear: Option<f64>,
}

/// All constants of both regimes for one parameter set.
pub fn second_order_bounds(inputs: &BoundsInputs) -> Result<BoundsReport> {
    let BoundsInputs {
        m,
        lipschitz,
        gamma,
        c0,
        c1,
        c2,
        prediction_steps: p,
        correction_steps: c,
        tau,
        sampling_period: ts,
        ..
    } = *inputs;
    check_moduli(m, lipschitz, gamma)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("must lie in (0, 1), got {tau}"),
        });
    }
    for (name, v) in [
        ("C0", c0),
        ("C1", c1),
        ("C2", c2),
        ("C3", inputs.c3),
        ("Ts", ts),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be finite and >= 0, got {v}"),
            });
        }
    }
    let zeta = contraction_factor(m, lipschitz, gamma)?;
    let k = kappa(m, lipschitz, gamma)?;
    let zp = zeta.powi(p as i32);
    let zc = zeta.powi(c as i32);
    let zeta_pc = zeta.powi((p + c) as i32);
    if zeta_pc >= tau {
        return Err(Error::HorizonsTooShort { zeta_pc, tau });
    }

    let first_order = first_order_coefficients(m, lipschitz, gamma, c0, ts, p, c)?;
    let second_order = second_order_coefficients(inputs)?;

    let drift = k * c0 * c1 + c2;
    let denom = k * drift;
    let ts_bar = if denom > 0.0 {
        (tau - zeta_pc) / (zc * (zp + 1.0)) / denom
    } else {
        f64::INFINITY
    };
    let r_bar = if c1 > 0.0 && ts_bar.is_finite() {
        2.0 / c1 * drift * (ts_bar - m / zc * ts)
    } else {
        f64::INFINITY
    };
    let r_bar_recursion = if second_order.big_a2 > 0.0 {
        (tau - second_order.big_a1) / second_order.big_a2
    } else if tau > second_order.big_a1 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let r_bar_consistent = if r_bar.is_infinite() || r_bar_recursion.is_infinite() {
        r_bar == r_bar_recursion
    } else {
        (r_bar - r_bar_recursion).abs()
            <= RADIUS_AGREEMENT_TOL * r_bar.abs().max(r_bar_recursion.abs())
    };
    if !r_bar_consistent {
        log::warn!("convergence radius expressions disagree: {r_bar} vs {r_bar_recursion}");
    }
    let linear_bound_holds = first_order.big_a1 < 1.0;

    Ok(BoundsReport {
        zeta,
        kappa: k,
        tau,
        first_order,
        second_order,
        ts_bar,
        r_bar,
        r_bar_recursion,
        r_bar_consistent,
        linear_bound_holds,
        asymptotic_bound_linear: linear_bound_holds
            .then(|| first_order.big_a0 / (1.0 - first_order.big_a1)),
    })
}
