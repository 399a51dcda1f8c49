//! Solution energy, perturbed energy, dissipation functional, and
//! log-linear decay-rate fits over trajectory diagnostics.

use crate::integrator::State;
use crate::operators::{h2star_norm, l2_norm, sup_norm, BandedOperator};
use crate::problem::DampingSpec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("decay fit needs at least 10 samples in the window (got {0})")]
    TooFewSamples(usize),
    #[error("decay fit requires positive values (found {value} at t = {t})")]
    NonPositiveValue { t: f64, value: f64 },
}

/// One diagnostics row. `perturbed` holds E + eps (u, v)_h for the active
/// certificate eps, and plain E when no certificate is attached (eps = 0
/// makes the two coincide).
#[derive(Debug, Clone, Copy)]
pub struct EnergyRecord {
    pub t: f64,
    pub energy: f64,
    pub perturbed: f64,
    pub dissipation: f64,
    pub l2_u: f64,
    pub h2star_u: f64,
    pub l2_v: f64,
    pub sup_u: f64,
    pub newton_iters: u32,
}

/// E = 1/2 (v, v)_h + 1/2 (Au, u)_h. The operator quadratic form defines
/// the discrete bending seminorm, so the step-wise energy identity of the
/// integrator is exact in this quantity.
pub fn energy(state: &State, op: &BandedOperator) -> f64 {
    let h = op.spacing();
    let kinetic = 0.5 * h * state.v.iter().map(|x| x * x).sum::<f64>();
    let bending = 0.5 * op.quadratic_form(&state.u).expect("state length");
    kinetic + bending
}

/// H = E + eps (u, v)_h.
pub fn perturbed_energy(state: &State, eps: f64, op: &BandedOperator) -> f64 {
    energy(state, op) + eps * cross_term(state, op.spacing())
}

/// (u, v)_h, the perturbation inner product.
pub fn cross_term(state: &State, h: f64) -> f64 {
    h * state
        .u
        .iter()
        .zip(&state.v)
        .map(|(a, b)| a * b)
        .sum::<f64>()
}

/// (F(v), v)_h >= 0 for validated damping.
pub fn dissipation(state: &State, damping: &DampingSpec, h: f64) -> f64 {
    h * state
        .v
        .iter()
        .map(|&x| crate::nonlinearity::damping_eval(damping, x) * x)
        .sum::<f64>()
}

pub fn make_record(
    state: &State,
    op: &BandedOperator,
    damping: &DampingSpec,
    eps: Option<f64>,
    newton_iters: u32,
) -> EnergyRecord {
    let h = op.spacing();
    let e = energy(state, op);
    EnergyRecord {
        t: state.t,
        energy: e,
        perturbed: match eps {
            Some(eps) => e + eps * cross_term(state, h),
            None => e,
        },
        dissipation: dissipation(state, damping, h),
        l2_u: l2_norm(&state.u, h),
        h2star_u: h2star_norm(op, &state.u).expect("state length"),
        l2_v: l2_norm(&state.v, h),
        sup_u: sup_norm(&state.u),
        newton_iters,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    /// Decay rate, the negated slope of the log-linear fit.
    pub rate: f64,
    /// Fitted value of ln(series) at t = 0.
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

/// Least-squares line through (t, ln value) over the window [t_lo, t_hi].
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult, FitError> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .copied()
        .collect();
    if pts.len() < 10 {
        return Err(FitError::TooFewSamples(pts.len()));
    }
    for &(t, v) in &pts {
        if v <= 0.0 || v.is_nan() {
            return Err(FitError::NonPositiveValue { t, value: v });
        }
    }
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(t, v) in &pts {
        let y = v.ln();
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
    }
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mut ss = 0.0;
    for &(t, v) in &pts {
        let r = v.ln() - (intercept + slope * t);
        ss += r * r;
    }
    Ok(FitResult {
        rate: -slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

/// Default fit window: the tail half of the trajectory, which excludes
/// the transient phase oscillation of underdamped modes.
pub fn tail_window(t_end: f64) -> (f64, f64) {
    (t_end / 2.0, t_end)
}
