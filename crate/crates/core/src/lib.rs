//! Numerical laboratory for the damped hinged beam
//! u_tt + u_xxxx + F(u_t) + G(u) = f on an interval, with hinged
//! (simply-supported) boundary conditions.
//!
//! The crate simulates the dynamics with a dissipation-exact implicit
//! midpoint scheme, evaluates an explicit exponential-decay certificate
//! from the damping envelope and the discrete embedding constants, solves
//! the stationary problem u_xxxx + G(u) = f, and audits computed
//! trajectories against the certified envelopes. A closed-form modal
//! oracle for the linear case backs the convergence tests.

pub mod banded;
pub mod certificate;
pub mod integrator;
pub mod lyapunov;
pub mod nonlinearity;
pub mod operators;
pub mod oracle;
pub mod probfile;
pub mod problem;
pub mod report;
pub mod stationary;

pub use banded::{banded_solve, BandedLu, PentaMatrix, SolveError};
pub use certificate::{
    audit_records, certificate_from_parts, compute_certificate, verify_trajectory, AuditReport,
    Certificate, CertificateError,
};
pub use integrator::{simulate, simulate_with_operator, step, SolverError, State, Trajectory};
pub use lyapunov::{
    dissipation, energy, fit_decay_rate, perturbed_energy, tail_window, EnergyRecord, FitError,
    FitResult,
};
pub use nonlinearity::{
    damping_derivative, damping_eval, power_comparison_gamma, primitive, restoring_eval,
    PowerComparisonConstant,
};
pub use operators::{
    assemble_biharmonic, discrete_constants, dst, idst, norms, BandedOperator, DiscreteConstants,
    Norms, OperatorError,
};
pub use oracle::{
    dt_order_study, modal_solution, oracle_compare, ModalOracle, OracleComparison, OracleError,
    OrderRow,
};
pub use probfile::{parse_problem_file, parse_problem_str, BuiltProblem, ParseError, ProblemFile};
pub use problem::{
    validate_problem, BeamDomain, DampingForm, DampingSpec, ForcingSpec, Grid, InitialData,
    PowerTerm, RestoringSpec, SimConfig, ValidatedProblem, ValidationError,
};
pub use stationary::{
    convergence_check, shifted_certificate, solve_stationary, ConvergenceReport, StationaryError,
    StationarySolution,
};
