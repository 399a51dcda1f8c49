//! Pointwise evaluation of the damping law F, the restoring law G, their
//! derivatives and primitives, and the sup-bounded power-comparison
//! constant gamma with int |u|^m <= gamma int u^2 whenever ||u||_inf <= M.

use crate::problem::{DampingForm, DampingSpec, RestoringSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NonlinearityError {
    #[error("sup bound M = {0} must be positive")]
    NonPositiveSupBound(f64),
    #[error("exponent m = {0} must satisfy m >= 2")]
    ExponentOutOfRange(f64),
}

/// Derivative regularization width. F'' blows up at the origin for
/// m < 3; a slope evaluated at |x| + eta keeps Newton descent-compatible
/// without touching the residual, which alone defines the solution.
const DERIVATIVE_ETA: f64 = 1e-12;

pub fn damping_eval(spec: &DampingSpec, x: f64) -> f64 {
    match &spec.form {
        DampingForm::Canonical { a } => a * (x + x.abs().powf(spec.m - 2.0) * x),
        DampingForm::Composite { terms } => terms
            .iter()
            .map(|t| t.coef * x.signum() * x.abs().powf(t.exponent))
            .sum(),
    }
}

pub fn damping_derivative(spec: &DampingSpec, x: f64) -> f64 {
    match &spec.form {
        DampingForm::Canonical { a } => {
            a * (1.0 + (spec.m - 1.0) * (x.abs() + DERIVATIVE_ETA).powf(spec.m - 2.0))
        }
        DampingForm::Composite { terms } => terms
            .iter()
            .map(|t| t.coef * t.exponent * (x.abs() + DERIVATIVE_ETA).powf(t.exponent - 1.0))
            .sum(),
    }
}

pub fn restoring_eval(spec: &RestoringSpec, u: f64) -> f64 {
    match spec {
        RestoringSpec::Zero => 0.0,
        RestoringSpec::OddPower { lambda, p } => lambda * u.powi(*p as i32),
        RestoringSpec::Custom(c) => (c.g)(u),
    }
}

pub fn restoring_derivative(spec: &RestoringSpec, u: f64) -> f64 {
    match spec {
        RestoringSpec::Zero => 0.0,
        RestoringSpec::OddPower { lambda, p } => lambda * *p as f64 * u.powi(*p as i32 - 1),
        RestoringSpec::Custom(c) => (c.dg)(u),
    }
}

/// Primitive of G with primitive(0) = 0.
pub fn primitive(spec: &RestoringSpec, u: f64) -> f64 {
    match spec {
        RestoringSpec::Zero => 0.0,
        RestoringSpec::OddPower { lambda, p } => {
            lambda * u.abs().powi(*p as i32 + 1) / (*p as f64 + 1.0)
        }
        RestoringSpec::Custom(c) => (c.primitive)(u),
    }
}

/// The constant gamma = M^{m-2} in int |u|^m <= gamma int u^2 for fields
/// with ||u||_inf <= M.
#[derive(Debug, Clone, Copy)]
pub struct PowerComparisonConstant {
    pub sup_bound: f64,
    pub exponent: f64,
    pub gamma: f64,
}

impl PowerComparisonConstant {
    /// The looser constant (m/2)^2 M^{m-2} obtained by the Lipschitz
    /// bound on |x|^{m/2}; kept as a cross-check only.
    pub fn lipschitz_gamma(&self) -> f64 {
        let half = self.exponent / 2.0;
        half * half * self.sup_bound.powf(self.exponent - 2.0)
    }
}

/// Direct bound: |u|^m = |u|^{m-2} u^2 <= M^{m-2} u^2 pointwise.
pub fn power_comparison_gamma(
    sup_bound: f64,
    exponent: f64,
) -> Result<PowerComparisonConstant, NonlinearityError> {
    if sup_bound <= 0.0 || sup_bound.is_nan() {
        return Err(NonlinearityError::NonPositiveSupBound(sup_bound));
    }
    if exponent < 2.0 || exponent.is_nan() {
        return Err(NonlinearityError::ExponentOutOfRange(exponent));
    }
    Ok(PowerComparisonConstant {
        sup_bound,
        exponent,
        gamma: sup_bound.powf(exponent - 2.0),
    })
}
