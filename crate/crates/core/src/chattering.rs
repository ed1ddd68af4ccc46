//! Describing-function prediction of the residual oscillation caused by a
//! first-order actuator lag `μ`.
//!
//! The controller is treated as a three-state hysteresis relay. Harmonic
//! balance `N(σ_A)·W(jω) + 1 = 0` with `W(s) = 1/(s²(μs+1))` then fixes the
//! frequency through the phase condition and the amplitude through the
//! magnitude condition.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerParams, Mode};
use crate::error::{Error, Result};
use crate::plant::LimitCycleMeasurement;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfValue {
    pub re: f64,
    pub im: f64,
    /// Angle of `-1/N`, measured from the negative real axis.
    pub angle_neg_recip: f64,
}

impl DfValue {
    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// `N(σ_A)` without the `1/σ_A` scale: `(gain, shape)` such that
/// `N = gain/σ_A · shape`.
fn relay_shape(params: &ControllerParams) -> Result<(f64, Complex64)> {
    let b1 = params.beta1;
    if !(b1.abs() <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "|beta1| must be <= 1, got {b1}"
        )));
    }
    let c1 = (1.0 - b1 * b1).sqrt();
    match params.mode {
        Mode::Conventional => Ok((4.0 * params.u_max / PI, Complex64::new(c1, b1))),
        Mode::EnergySaving => {
            let b2 = params.beta2;
            if !(b2.abs() <= 1.0) {
                return Err(Error::InvalidParams(format!(
                    "|beta2| must be <= 1, got {b2}"
                )));
            }
            let c2 = (1.0 - b2 * b2).sqrt();
            Ok((2.0 * params.u_max / PI, Complex64::new(c1 + c2, b1 + b2)))
        }
    }
}

pub fn describing_function(sigma_a: f64, params: &ControllerParams) -> Result<DfValue> {
    if !(sigma_a.is_finite() && sigma_a > 0.0) {
        return Err(Error::InvalidParams(format!(
            "sigma_A must be > 0, got {sigma_a}"
        )));
    }
    let (gain, shape) = relay_shape(params)?;
    let k = gain / sigma_a;
    Ok(DfValue {
        re: k * shape.re,
        im: k * shape.im,
        angle_neg_recip: (-shape.im / shape.re).atan(),
    })
}

/// `W(jω) = 1/((jω)²(jμω + 1))`
pub fn plant_response(omega: f64, mu: f64) -> Complex64 {
    let s = Complex64::new(0.0, omega);
    1.0 / (s * s * (mu * s + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatteringPrediction {
    pub mu: f64,
    pub omega_c: f64,
    /// Amplitude from the magnitude condition `|N(σ_A)|·|W(jω_c)| = 1`.
    pub sigma_a: f64,
    /// `√(μ²ω²+1)/(ω²(μ²ω²+1))`, which omits the relay gain and agrees with
    /// `sigma_a` only when that gain happens to be one.
    pub sigma_a_closed_form: f64,
    /// `|N(σ_A)·W(jω_c) + 1|` at `sigma_a`.
    pub balance_residual: f64,
    /// Same residual evaluated at `sigma_a_closed_form`.
    pub closed_form_residual: f64,
    /// `arg W(jω_c) − (π + φ)`.
    pub phase_residual: f64,
}

pub fn harmonic_balance(mu: f64, params: &ControllerParams) -> Result<ChatteringPrediction> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidParams(format!("mu must be > 0, got {mu}")));
    }
    params.validate()?;
    let (gain, shape) = relay_shape(params)?;
    if !(shape.im > 0.0) {
        return Err(Error::NoOscillation(format!(
            "beta1 + beta2 = {} leaves no crossing at positive frequency",
            params.beta1 + params.effective_beta2()
        )));
    }
    let omega_c = shape.im / (mu * shape.re);
    let mw2 = (mu * omega_c).powi(2) + 1.0;
    let sigma_a_closed_form = mw2.sqrt() / (omega_c * omega_c * mw2);

    let w = plant_response(omega_c, mu);
    let sigma_a = gain * shape.norm() * w.norm();
    let residual = |sa: f64| (gain / sa * shape * w + 1.0).norm();

    let phi = (-shape.im / shape.re).atan();
    let mut phase_residual = w.arg() - (PI + phi);
    // arg() lives in (-π, π]; fold onto the nearest branch
    phase_residual -= (phase_residual / (2.0 * PI)).round() * 2.0 * PI;

    Ok(ChatteringPrediction {
        mu,
        omega_c,
        sigma_a,
        sigma_a_closed_form,
        balance_residual: residual(sigma_a),
        closed_form_residual: residual(sigma_a_closed_form),
        phase_residual,
    })
}

/// Relative errors `|predicted − measured| / measured`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionError {
    pub omega_rel_error: f64,
    pub sigma_rel_error: f64,
    pub sigma_closed_form_rel_error: f64,
}

pub fn compare_prediction(
    pred: &ChatteringPrediction,
    meas: &LimitCycleMeasurement,
) -> PredictionError {
    let rel = |p: f64, m: f64| (p - m).abs() / m;
    PredictionError {
        omega_rel_error: rel(pred.omega_c, meas.omega_c),
        sigma_rel_error: rel(pred.sigma_a, meas.sigma_a),
        sigma_closed_form_rel_error: rel(pred.sigma_a_closed_form, meas.sigma_a),
    }
}
