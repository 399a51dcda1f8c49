//! Closed-form solution of the linear case (m = 2, so F(x) = 2a x, G = 0)
//! used as the convergence and decay oracle.
//!
//! The sine transform diagonalizes the discrete biharmonic exactly, so
//! each mode obeys q'' + 2a q' + mu_k q = f_k with mu_k the discrete
//! eigenvalue. The oracle is therefore time-exact for the semi-discrete
//! system: comparing against it isolates the time-integration error from
//! the spatial error, which is tested separately against continuum
//! eigenvalues.

use crate::integrator::{simulate_with_operator, State, Trajectory};
use crate::operators::{biharmonic_eigenvalue, dst, h2star_norm, idst, l2_norm, BandedOperator};
use crate::problem::{DampingForm, ForcingSpec, Grid, InitialData, ValidatedProblem};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("modal oracle requires canonical damping with m = 2 (got m = {0})")]
    NonlinearDamping(f64),
    #[error("modal oracle requires G = 0")]
    RestoringPresent,
    #[error("modal oracle supports zero or static forcing only")]
    TimeDependentForcing,
    #[error("initial data length {got} does not match interior size {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Relative window for the floating-point tie a^2 = mu_k.
const CRITICAL_WINDOW: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
enum Regime {
    /// a^2 < mu: oscillation at omega = sqrt(mu - a^2).
    Underdamped { omega: f64 },
    /// a^2 = mu (within the tie window): degenerate (C + D t) e^{-at}.
    Critical,
    /// a^2 > mu: real decay rates -a +- s.
    Overdamped { s: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Mode {
    regime: Regime,
    /// Homogeneous initial displacement about the particular solution f/mu.
    c0: f64,
    q1: f64,
    /// Static particular solution f_k / mu_k.
    part: f64,
}

impl Mode {
    fn new(a: f64, mu: f64, q0: f64, q1: f64, f_k: f64) -> Self {
        let part = f_k / mu;
        let disc = a * a - mu;
        let regime = if disc.abs() <= CRITICAL_WINDOW * (a * a).max(mu) {
            Regime::Critical
        } else if disc < 0.0 {
            Regime::Underdamped {
                omega: (-disc).sqrt(),
            }
        } else {
            Regime::Overdamped { s: disc.sqrt() }
        };
        Mode {
            regime,
            c0: q0 - part,
            q1,
            part,
        }
    }

    /// (q(t), q'(t)) from the exact damped-oscillator propagator.
    fn at(&self, a: f64, t: f64) -> (f64, f64) {
        let decay = (-a * t).exp();
        match self.regime {
            Regime::Underdamped { omega } => {
                let c = self.c0;
                let d = (self.q1 + a * c) / omega;
                let (s_t, c_t) = (omega * t).sin_cos();
                let q = decay * (c * c_t + d * s_t) + self.part;
                let qd = decay * ((-a * c + omega * d) * c_t + (-a * d - omega * c) * s_t);
                (q, qd)
            }
            Regime::Critical => {
                let c = self.c0;
                let d = self.q1 + a * c;
                let q = decay * (c + d * t) + self.part;
                let qd = decay * (d - a * (c + d * t));
                (q, qd)
            }
            Regime::Overdamped { s } => {
                let r1 = -a + s;
                let r2 = -a - s;
                let d = (self.q1 - r1 * self.c0) / (r2 - r1);
                let c = self.c0 - d;
                let q = c * (r1 * t).exp() + d * (r2 * t).exp() + self.part;
                let qd = c * r1 * (r1 * t).exp() + d * r2 * (r2 * t).exp();
                (q, qd)
            }
        }
    }
}

/// Per-mode closed-form solution of the semi-discrete linear system.
#[derive(Debug, Clone)]
pub struct ModalOracle {
    a: f64,
    modes: Vec<Mode>,
}

impl ModalOracle {
    pub fn new(
        init: &InitialData,
        a: f64,
        grid: &Grid,
        forcing: &ForcingSpec,
    ) -> Result<Self, OracleError> {
        let n = grid.interior_len();
        if init.u0.len() != n || init.u1.len() != n {
            return Err(OracleError::LengthMismatch {
                expected: n,
                got: init.u0.len().max(init.u1.len()),
            });
        }
        let f_hat = match forcing {
            ForcingSpec::Zero => vec![0.0; n],
            ForcingSpec::Static { values } => {
                if values.len() != n {
                    return Err(OracleError::LengthMismatch {
                        expected: n,
                        got: values.len(),
                    });
                }
                dst(values)
            }
            ForcingSpec::Harmonic { .. } => return Err(OracleError::TimeDependentForcing),
        };
        let q0 = dst(&init.u0);
        let q1 = dst(&init.u1);
        let modes = (0..n)
            .map(|k| {
                Mode::new(
                    a,
                    biharmonic_eigenvalue(grid, k + 1),
                    q0[k],
                    q1[k],
                    f_hat[k],
                )
            })
            .collect();
        Ok(ModalOracle { a, modes })
    }

    pub fn state_at(&self, t: f64) -> State {
        let n = self.modes.len();
        let mut q = vec![0.0; n];
        let mut qd = vec![0.0; n];
        for (k, mode) in self.modes.iter().enumerate() {
            let (qk, qdk) = mode.at(self.a, t);
            q[k] = qk;
            qd[k] = qdk;
        }
        State {
            t,
            u: idst(&q),
            v: idst(&qd),
        }
    }
}

/// Exact state of the semi-discrete linear system at time `t`.
pub fn modal_solution(
    init: &InitialData,
    a: f64,
    grid: &Grid,
    forcing: &ForcingSpec,
    t: f64,
) -> Result<State, OracleError> {
    Ok(ModalOracle::new(init, a, grid, forcing)?.state_at(t))
}

fn linear_coefficient(problem: &ValidatedProblem) -> Result<f64, OracleError> {
    let d = problem.damping();
    if d.m != 2.0 {
        return Err(OracleError::NonlinearDamping(d.m));
    }
    match &d.form {
        DampingForm::Canonical { a } => Ok(*a),
        DampingForm::Composite { .. } => Err(OracleError::NonlinearDamping(d.m)),
    }
}

fn oracle_for(problem: &ValidatedProblem) -> Result<ModalOracle, OracleError> {
    if !problem.restoring().is_zero() {
        return Err(OracleError::RestoringPresent);
    }
    let a = linear_coefficient(problem)?;
    ModalOracle::new(problem.initial(), a, problem.grid(), problem.forcing())
}

#[derive(Debug, Clone, Copy)]
pub struct OracleComparison {
    pub max_l2_error: f64,
    pub max_h2star_error: f64,
}

/// Pointwise-in-time error norms between a computed trajectory and the
/// exact modal solution at the record times.
pub fn oracle_compare(
    traj: &Trajectory,
    problem: &ValidatedProblem,
    op: &BandedOperator,
) -> Result<OracleComparison, OracleError> {
    let oracle = oracle_for(problem)?;
    let h = op.spacing();
    let mut max_l2: f64 = 0.0;
    let mut max_h2: f64 = 0.0;
    for state in traj.states() {
        let exact = oracle.state_at(state.t);
        let diff: Vec<f64> = state.u.iter().zip(&exact.u).map(|(a, b)| a - b).collect();
        max_l2 = max_l2.max(l2_norm(&diff, h));
        max_h2 = max_h2.max(h2star_norm(op, &diff).expect("length"));
    }
    Ok(OracleComparison {
        max_l2_error: max_l2,
        max_h2star_error: max_h2,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct OrderRow {
    pub dt: f64,
    pub max_l2_error: f64,
    pub max_h2star_error: f64,
    /// log2 error ratio against the previous row; empty on the first.
    pub observed_order: Option<f64>,
}

/// Run the problem at dt, dt/2, ..., dt/2^halvings and estimate the
/// observed time order from consecutive error ratios.
pub fn dt_order_study(
    problem: &ValidatedProblem,
    op: &BandedOperator,
    halvings: u32,
) -> Result<Vec<OrderRow>, OracleStudyError> {
    let mut rows: Vec<OrderRow> = Vec::new();
    let base = *problem.config();
    for j in 0..=halvings {
        let mut cfg = base;
        cfg.dt = base.dt / 2f64.powi(j as i32);
        cfg.output_stride = base.output_stride * 2usize.pow(j);
        let refined = problem
            .with_config(cfg)
            .expect("validated config stays valid");
        let traj = simulate_with_operator(&refined, op)?;
        let cmp = oracle_compare(&traj, &refined, op)?;
        let order = rows
            .last()
            .map(|prev: &OrderRow| (prev.max_l2_error / cmp.max_l2_error).log2());
        rows.push(OrderRow {
            dt: cfg.dt,
            max_l2_error: cmp.max_l2_error,
            max_h2star_error: cmp.max_h2star_error,
            observed_order: order,
        });
    }
    Ok(rows)
}

#[derive(Debug, Error)]
pub enum OracleStudyError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Solver(#[from] crate::integrator::SolverError),
}
