//! The stationary problem u_xxxx + G(u) = f with hinged conditions, and
//! the audit that the dynamic solution converges to it exponentially.

use crate::banded::{banded_solve, BandedLu};
use crate::certificate::{
    audit_records, certificate_from_parts, AuditReport, Certificate, CertificateError,
};
use crate::integrator::{SolverError, Trajectory};
use crate::lyapunov::{fit_decay_rate, tail_window, EnergyRecord, FitResult};
use crate::nonlinearity::{restoring_derivative, restoring_eval};
use crate::operators::{discrete_constants, h2star_norm, l2_norm, BandedOperator};
use crate::problem::{ForcingSpec, ValidatedProblem};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StationaryError {
    #[error("stationary solve requires static or zero forcing")]
    TimeDependentForcing,
    #[error("newton stalled at residual {residual:e} after {iterations} iterations (tol {tol:e})")]
    NewtonStalled {
        residual: f64,
        iterations: u32,
        tol: f64,
    },
    #[error("stationary solution length {got} does not match trajectory interior size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

#[derive(Debug, Clone)]
pub struct StationarySolution {
    pub u_hat: Vec<f64>,
    pub residual_norm: f64,
    pub newton_iterations: u32,
    /// Residuals of the accepted iterates, strictly decreasing.
    pub residual_history: Vec<f64>,
}

fn forcing_vector(problem: &ValidatedProblem) -> Result<Vec<f64>, StationaryError> {
    match problem.forcing() {
        ForcingSpec::Zero => Ok(vec![0.0; problem.grid().interior_len()]),
        ForcingSpec::Static { values } => Ok(values.clone()),
        ForcingSpec::Harmonic { .. } => Err(StationaryError::TimeDependentForcing),
    }
}

/// Newton iteration on R(u) = Au + G(u) - f with banded Jacobian
/// A + diag(G'(u)), starting from the linear solve A^{-1} f. For G = 0
/// the initial guess already solves the system and no iteration runs.
///
/// Iterates are accepted only when they reduce the residual; near the
/// floating-point floor the iteration resamples the last couple of ulps,
/// so the best iterate is kept and stagnation ends the loop.
pub fn solve_stationary(
    problem: &ValidatedProblem,
    op: &BandedOperator,
    tol: f64,
) -> Result<StationarySolution, StationaryError> {
    let f = forcing_vector(problem)?;
    let n = op.interior_len();
    let h = op.spacing();
    let restoring = problem.restoring();

    let residual_of = |u: &[f64]| -> (Vec<f64>, f64) {
        let au = op.apply(u).expect("length");
        let r: Vec<f64> = (0..n)
            .map(|i| au[i] + restoring_eval(restoring, u[i]) - f[i])
            .collect();
        let norm = l2_norm(&r, h);
        (r, norm)
    };

    let mut u = banded_solve(op.matrix(), &f).map_err(SolverError::from)?;
    let (mut r, mut best_norm) = residual_of(&u);
    let mut best_u = u.clone();
    let mut history = vec![best_norm];
    let mut iterations: u32 = 0;
    let mut stagnation = 0u32;
    let max_iter = problem.config().newton_max_iter;

    while best_norm >= tol && iterations < max_iter && stagnation < 2 {
        let mut diag = vec![0.0; n];
        for i in 0..n {
            diag[i] = restoring_derivative(restoring, u[i]);
        }
        let jac = op.matrix().scaled_with_diagonal(1.0, &diag);
        let lu = BandedLu::factor(&jac).map_err(SolverError::from)?;
        let mut delta = r.clone();
        lu.solve_in_place(&mut delta);
        // one refinement pass on the correction; matters near the floor
        let jd = jac.apply_compensated(&delta);
        let mut corr: Vec<f64> = r.iter().zip(&jd).map(|(a, b)| a - b).collect();
        lu.solve_in_place(&mut corr);
        for i in 0..n {
            u[i] -= delta[i] + corr[i];
        }
        iterations += 1;
        let (nr, norm) = residual_of(&u);
        r = nr;
        if norm < best_norm {
            best_norm = norm;
            best_u = u.clone();
            history.push(norm);
            stagnation = 0;
        } else {
            stagnation += 1;
        }
    }

    if best_norm >= tol {
        return Err(StationaryError::NewtonStalled {
            residual: best_norm,
            iterations,
            tol,
        });
    }
    Ok(StationarySolution {
        u_hat: best_u,
        residual_norm: best_norm,
        newton_iterations: iterations,
        residual_history: history,
    })
}

/// Certificate for the shifted problem w = u - u_hat. For G = 0 and
/// static f, w satisfies w'' + Aw + F(w') = 0 exactly, so the decay
/// certificate applies to w with E_w(0) from the shifted initial data.
pub fn shifted_certificate(
    problem: &ValidatedProblem,
    u_hat: &StationarySolution,
    op: &BandedOperator,
) -> Result<Certificate, StationaryError> {
    if !problem.restoring().is_zero() {
        return Err(StationaryError::Certificate(
            CertificateError::RestoringPresent,
        ));
    }
    let init = problem.initial();
    let w0: Vec<f64> = init
        .u0
        .iter()
        .zip(&u_hat.u_hat)
        .map(|(a, b)| a - b)
        .collect();
    let h = op.spacing();
    let e0 = 0.5 * h * init.u1.iter().map(|x| x * x).sum::<f64>()
        + 0.5 * op.quadratic_form(&w0).expect("length");
    let d = problem.damping();
    let constants = discrete_constants(problem.grid());
    Ok(certificate_from_parts(
        d.m,
        d.a1,
        d.a2,
        &constants,
        e0,
        problem.fingerprint(),
    )?)
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// Rows (t, ||u - u_hat||_{H2*}, ||v||_2).
    pub series: Vec<(f64, f64, f64)>,
    /// Tail decay rate of the H2* difference, when the series allows a fit.
    pub difference_rate: Option<FitResult>,
    /// Tail decay rate of the velocity norm.
    pub velocity_rate: Option<FitResult>,
    /// Envelope audit of the shifted energy against the certificate.
    pub audit: AuditReport,
}

const CONVERGENCE_AUDIT_TOL: f64 = 0.05;

/// Check the convergence of a trajectory (static f, G = 0) to the
/// stationary solution: build the shifted series, audit it against the
/// shifted certificate, and fit tail decay rates for both norms.
pub fn convergence_check(
    traj: &Trajectory,
    u_hat: &StationarySolution,
    cert: &Certificate,
    op: &BandedOperator,
) -> Result<ConvergenceReport, StationaryError> {
    let n = op.interior_len();
    if u_hat.u_hat.len() != n {
        return Err(StationaryError::LengthMismatch {
            expected: n,
            got: u_hat.u_hat.len(),
        });
    }
    let h = op.spacing();
    let mut series = Vec::with_capacity(traj.states().len());
    let mut records = Vec::with_capacity(traj.states().len());
    for state in traj.states() {
        let w: Vec<f64> = state
            .u
            .iter()
            .zip(&u_hat.u_hat)
            .map(|(a, b)| a - b)
            .collect();
        let diff = h2star_norm(op, &w).expect("length");
        let vel = l2_norm(&state.v, h);
        series.push((state.t, diff, vel));
        let e = 0.5 * vel * vel + 0.5 * diff * diff;
        let cross = h * w.iter().zip(&state.v).map(|(a, b)| a * b).sum::<f64>();
        records.push(EnergyRecord {
            t: state.t,
            energy: e,
            perturbed: e + cert.eps * cross,
            dissipation: 0.0,
            l2_u: l2_norm(&w, h),
            h2star_u: diff,
            l2_v: vel,
            sup_u: crate::operators::sup_norm(&w),
            newton_iters: 0,
        });
    }
    let audit = audit_records(&records, cert, CONVERGENCE_AUDIT_TOL)?;

    let t_end = series.last().map(|r| r.0).unwrap_or(0.0);
    let window = tail_window(t_end);
    let diff_series: Vec<(f64, f64)> = series.iter().map(|&(t, d, _)| (t, d)).collect();
    let vel_series: Vec<(f64, f64)> = series.iter().map(|&(t, _, v)| (t, v)).collect();
    Ok(ConvergenceReport {
        series,
        difference_rate: fit_decay_rate(&diff_series, window).ok(),
        velocity_rate: fit_decay_rate(&vel_series, window).ok(),
        audit,
    })
}
