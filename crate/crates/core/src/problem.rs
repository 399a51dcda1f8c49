//! Problem statement: domain, grid, damping/restoring/forcing families,
//! initial data, solver configuration, and the validation gate that checks
//! every hypothesis before a problem object is sealed.

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("m out of range: damping exponent m = {0} violates the hypothesis m >= 2")]
    ExponentOutOfRange(f64),
    #[error("damping lower coefficient a1 = {0} must be positive")]
    NonPositiveA1(f64),
    #[error("damping envelope requires a1 <= a2 (got a1 = {a1}, a2 = {a2})")]
    EnvelopeOrder { a1: f64, a2: f64 },
    #[error("canonical coefficient a = {a} lies outside the declared envelope [{a1}, {a2}]")]
    CoefficientOutsideEnvelope { a: f64, a1: f64, a2: f64 },
    #[error("domain endpoints must satisfy c < d (got c = {c}, d = {d})")]
    DomainOrder { c: f64, d: f64 },
    #[error("domain endpoints must be finite")]
    NonFiniteDomain,
    #[error("grid too coarse: N = {0} violates N >= 4")]
    GridTooCoarse(usize),
    #[error("time step dt = {0} must be positive and finite")]
    NonPositiveDt(f64),
    #[error("horizon T = {t} must exceed the time step dt = {dt}")]
    HorizonBelowStep { dt: f64, t: f64 },
    #[error("newton tolerance {0} must be positive")]
    NonPositiveTolerance(f64),
    #[error("{which} must be a positive integer")]
    ZeroCount { which: &'static str },
    #[error("initial data contains non-finite entries")]
    NonFiniteInitialData,
    #[error("{name} has length {got}, expected N - 1 = {expected}")]
    WrongLength {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("damping monotonicity spot-check failed: F({x1}) = {f1} > F({x2}) = {f2}")]
    NotMonotone { x1: f64, f1: f64, x2: f64, f2: f64 },
    #[error("damping must vanish at the origin (F(0) = {0})")]
    NonzeroAtOrigin(f64),
    #[error("damping envelope spot-check failed at x = {x}: |F(x)| = {fx} outside [{lo}, {hi}]")]
    EnvelopeViolated { x: f64, fx: f64, lo: f64, hi: f64 },
    #[error("damping sign condition failed at x = {x}: F(x) x = {lhs} < a1 (x^2 + |x|^m) = {rhs}")]
    SignCondition { x: f64, lhs: f64, rhs: f64 },
    #[error("odd-power restoring term requires an odd exponent (got p = {0})")]
    EvenRestoringExponent(u32),
    #[error("odd-power restoring coefficient lambda = {0} must be nonnegative")]
    NegativeLambda(f64),
    #[error(
        "restoring primitive dips below its declared lower bound at u = {u}: {value} < {bound}"
    )]
    PrimitiveBelowBound { u: f64, value: f64, bound: f64 },
    #[error("restoring lower bound D = {0} must be nonpositive")]
    PositiveLowerBound(f64),
    #[error("forcing values contain non-finite entries")]
    NonFiniteForcing,
    #[error("composite damping needs at least one term")]
    EmptyComposite,
}

/// The spatial interval (c, d).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamDomain {
    c: f64,
    d: f64,
}

impl BeamDomain {
    pub fn new(c: f64, d: f64) -> Result<Self, ValidationError> {
        if !c.is_finite() || !d.is_finite() {
            return Err(ValidationError::NonFiniteDomain);
        }
        if c >= d {
            return Err(ValidationError::DomainOrder { c, d });
        }
        Ok(BeamDomain { c, d })
    }

    pub fn left(&self) -> f64 {
        self.c
    }

    pub fn right(&self) -> f64 {
        self.d
    }

    pub fn length(&self) -> f64 {
        self.d - self.c
    }
}

/// Uniform grid over the domain; vectors live on the N - 1 interior nodes,
/// boundary values of u and u_xx vanish by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    c: f64,
    length: f64,
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(domain: &BeamDomain, n: usize) -> Result<Self, ValidationError> {
        if n < 4 {
            return Err(ValidationError::GridTooCoarse(n));
        }
        Ok(Grid {
            c: domain.left(),
            length: domain.length(),
            n,
            h: domain.length() / n as f64,
        })
    }

    /// Subdivision count N.
    pub fn subdivisions(&self) -> usize {
        self.n
    }

    /// Number of interior nodes, N - 1.
    pub fn interior_len(&self) -> usize {
        self.n - 1
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn left(&self) -> f64 {
        self.c
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Interior nodes x_i = c + i h, i = 1..N-1.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (1..self.n).map(move |i| self.c + i as f64 * self.h)
    }

    /// Sample amp * sin(k pi (x - c)/L) at the interior nodes.
    pub fn sine_profile(&self, k: usize, amp: f64) -> Vec<f64> {
        self.nodes()
            .map(|x| amp * (k as f64 * std::f64::consts::PI * (x - self.c) / self.length).sin())
            .collect()
    }
}

/// One term of a composite damping law: coef * sign(x) |x|^exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTerm {
    pub coef: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DampingForm {
    /// F(x) = a (x + |x|^{m-2} x).
    Canonical { a: f64 },
    /// Odd-power composite sum; must satisfy the declared (a1, a2) envelope.
    Composite { terms: Vec<PowerTerm> },
}

/// Damping family with exponent m and envelope coefficients
/// a1 (|x| + |x|^{m-1}) <= |F(x)| <= a2 (|x| + |x|^{m-1}).
#[derive(Debug, Clone, PartialEq)]
pub struct DampingSpec {
    pub m: f64,
    pub a1: f64,
    pub a2: f64,
    pub form: DampingForm,
}

impl DampingSpec {
    /// Canonical family with a single coefficient (a1 = a = a2).
    pub fn canonical(m: f64, a: f64) -> Self {
        DampingSpec {
            m,
            a1: a,
            a2: a,
            form: DampingForm::Canonical { a },
        }
    }

    pub fn canonical_enveloped(m: f64, a: f64, a1: f64, a2: f64) -> Self {
        DampingSpec {
            m,
            a1,
            a2,
            form: DampingForm::Canonical { a },
        }
    }

    pub fn composite(m: f64, a1: f64, a2: f64, terms: Vec<PowerTerm>) -> Self {
        DampingSpec {
            m,
            a1,
            a2,
            form: DampingForm::Composite { terms },
        }
    }
}

/// User-supplied restoring law; the primitive must be supplied alongside
/// the function so energy diagnostics stay exact to round-off.
#[derive(Clone)]
pub struct CustomRestoring {
    pub g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dg: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub primitive: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Declared lower bound D <= 0 for the primitive.
    pub lower_bound: f64,
}

impl fmt::Debug for CustomRestoring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomRestoring")
            .field("lower_bound", &self.lower_bound)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum RestoringSpec {
    Zero,
    /// G(u) = lambda u^p with odd p and lambda >= 0.
    OddPower {
        lambda: f64,
        p: u32,
    },
    Custom(CustomRestoring),
}

impl RestoringSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, RestoringSpec::Zero)
    }

    /// Lower bound D for the primitive of G.
    pub fn lower_bound(&self) -> f64 {
        match self {
            RestoringSpec::Zero | RestoringSpec::OddPower { .. } => 0.0,
            RestoringSpec::Custom(c) => c.lower_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForcingSpec {
    Zero,
    /// Constant-in-time nodal profile.
    Static {
        values: Vec<f64>,
    },
    /// values(x) * cos(omega t); simulation only, outside the certified path.
    Harmonic {
        values: Vec<f64>,
        omega: f64,
    },
}

impl ForcingSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, ForcingSpec::Zero)
    }

    pub fn is_static(&self) -> bool {
        matches!(self, ForcingSpec::Static { .. })
    }
}

/// Nodal initial displacement and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
}

impl InitialData {
    pub fn new(u0: Vec<f64>, u1: Vec<f64>) -> Self {
        InitialData { u0, u1 }
    }

    pub fn zero(len: usize) -> Self {
        InitialData {
            u0: vec![0.0; len],
            u1: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max_iter: u32,
    pub output_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            t_end: 10.0,
            newton_tol: 1e-12,
            newton_max_iter: 25,
            output_stride: 1,
        }
    }
}

/// A problem that has passed every hypothesis check. Immutable afterwards;
/// safe to share read-only across threads.
#[derive(Debug, Clone)]
pub struct ValidatedProblem {
    domain: BeamDomain,
    grid: Grid,
    damping: DampingSpec,
    restoring: RestoringSpec,
    forcing: ForcingSpec,
    init: InitialData,
    cfg: SimConfig,
    certificate_admissible: bool,
    fingerprint: u64,
}

impl ValidatedProblem {
    pub fn domain(&self) -> &BeamDomain {
        &self.domain
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn damping(&self) -> &DampingSpec {
        &self.damping
    }

    pub fn restoring(&self) -> &RestoringSpec {
        &self.restoring
    }

    pub fn forcing(&self) -> &ForcingSpec {
        &self.forcing
    }

    pub fn initial(&self) -> &InitialData {
        &self.init
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Whether the decay-certificate path applies (G = 0, f = 0, damping
    /// with a validated envelope).
    pub fn certificate_admissible(&self) -> bool {
        self.certificate_admissible
    }

    /// Stable hash of the resolved problem data, used to match
    /// trajectories with certificates produced from the same problem.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// The same problem with a different solver configuration.
    pub fn with_config(&self, cfg: SimConfig) -> Result<Self, ValidationError> {
        validate_problem(
            self.domain,
            self.grid,
            self.damping.clone(),
            self.restoring.clone(),
            self.forcing.clone(),
            self.init.clone(),
            cfg,
        )
    }

    /// The shifted companion problem w = u - u_hat: same damping, zero
    /// forcing, initial data (u0 - u_hat, u1). Exact for G = 0.
    pub fn shifted(&self, u_hat: &[f64]) -> Result<Self, ValidationError> {
        let u0: Vec<f64> = self.init.u0.iter().zip(u_hat).map(|(a, b)| a - b).collect();
        validate_problem(
            self.domain,
            self.grid,
            self.damping.clone(),
            self.restoring.clone(),
            ForcingSpec::Zero,
            InitialData::new(u0, self.init.u1.clone()),
            self.cfg,
        )
    }
}

/// Sign-symmetric sample grid (log-spaced magnitudes plus the origin)
/// used for all numerical spot-checks on damping laws.
pub(crate) fn spot_check_samples() -> Vec<f64> {
    let mut xs = vec![0.0];
    let decades = 22; // 1e-8 .. 1e3 at half-decade resolution
    for i in 0..=decades {
        let mag = 10f64.powf(-8.0 + 0.5 * i as f64);
        xs.push(mag);
        xs.push(-mag);
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs
}

fn check_damping(spec: &DampingSpec) -> Result<(), ValidationError> {
    if spec.m < 2.0 || spec.m.is_nan() {
        return Err(ValidationError::ExponentOutOfRange(spec.m));
    }
    if spec.a1 <= 0.0 || spec.a1.is_nan() {
        return Err(ValidationError::NonPositiveA1(spec.a1));
    }
    if spec.a1 > spec.a2 {
        return Err(ValidationError::EnvelopeOrder {
            a1: spec.a1,
            a2: spec.a2,
        });
    }
    match &spec.form {
        DampingForm::Canonical { a } => {
            if *a < spec.a1 || *a > spec.a2 {
                return Err(ValidationError::CoefficientOutsideEnvelope {
                    a: *a,
                    a1: spec.a1,
                    a2: spec.a2,
                });
            }
        }
        DampingForm::Composite { terms } => {
            if terms.is_empty() {
                return Err(ValidationError::EmptyComposite);
            }
        }
    }

    let eval = |x: f64| crate::nonlinearity::damping_eval(spec, x);
    let f0 = eval(0.0);
    if f0.abs() > 1e-14 {
        return Err(ValidationError::NonzeroAtOrigin(f0));
    }
    let xs = spot_check_samples();
    let slack = 1e-9;
    let mut prev: Option<(f64, f64)> = None;
    for &x in &xs {
        let fx = eval(x);
        if let Some((px, pf)) = prev {
            if fx < pf - slack * (1.0 + pf.abs()) {
                return Err(ValidationError::NotMonotone {
                    x1: px,
                    f1: pf,
                    x2: x,
                    f2: fx,
                });
            }
        }
        prev = Some((x, fx));
        if x != 0.0 {
            let envelope = x.abs() + x.abs().powf(spec.m - 1.0);
            let lo = spec.a1 * envelope;
            let hi = spec.a2 * envelope;
            let fa = fx.abs();
            if fa < lo * (1.0 - slack) || fa > hi * (1.0 + slack) {
                return Err(ValidationError::EnvelopeViolated { x, fx: fa, lo, hi });
            }
            let lhs = fx * x;
            let rhs = spec.a1 * (x * x + x.abs().powf(spec.m));
            if lhs < rhs * (1.0 - slack) {
                return Err(ValidationError::SignCondition { x, lhs, rhs });
            }
        }
    }
    Ok(())
}

fn check_restoring(spec: &RestoringSpec) -> Result<(), ValidationError> {
    match spec {
        RestoringSpec::Zero => Ok(()),
        RestoringSpec::OddPower { lambda, p } => {
            if p % 2 == 0 {
                return Err(ValidationError::EvenRestoringExponent(*p));
            }
            if *lambda < 0.0 {
                return Err(ValidationError::NegativeLambda(*lambda));
            }
            Ok(())
        }
        RestoringSpec::Custom(custom) => {
            if custom.lower_bound > 0.0 {
                return Err(ValidationError::PositiveLowerBound(custom.lower_bound));
            }
            for &u in &spot_check_samples() {
                let p = (custom.primitive)(u);
                if p < custom.lower_bound - 1e-12 * (1.0 + custom.lower_bound.abs()) {
                    return Err(ValidationError::PrimitiveBelowBound {
                        u,
                        value: p,
                        bound: custom.lower_bound,
                    });
                }
            }
            Ok(())
        }
    }
}

/// FNV-1a over the resolved problem bytes; stable across runs so that
/// chained artifacts can be matched byte-for-byte.
struct Fingerprint(u64);

impl Fingerprint {
    fn new() -> Self {
        Fingerprint(0xcbf29ce484222325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    fn f64(&mut self, x: f64) {
        self.write(&x.to_bits().to_le_bytes());
    }

    fn slice(&mut self, xs: &[f64]) {
        self.write(&(xs.len() as u64).to_le_bytes());
        for &x in xs {
            self.f64(x);
        }
    }
}

fn fingerprint_of(
    domain: &BeamDomain,
    grid: &Grid,
    damping: &DampingSpec,
    restoring: &RestoringSpec,
    forcing: &ForcingSpec,
    init: &InitialData,
) -> u64 {
    let mut fp = Fingerprint::new();
    fp.f64(domain.left());
    fp.f64(domain.right());
    fp.write(&(grid.subdivisions() as u64).to_le_bytes());
    fp.f64(damping.m);
    fp.f64(damping.a1);
    fp.f64(damping.a2);
    match &damping.form {
        DampingForm::Canonical { a } => {
            fp.write(b"canonical");
            fp.f64(*a);
        }
        DampingForm::Composite { terms } => {
            fp.write(b"composite");
            for t in terms {
                fp.f64(t.coef);
                fp.f64(t.exponent);
            }
        }
    }
    match restoring {
        RestoringSpec::Zero => fp.write(b"g:zero"),
        RestoringSpec::OddPower { lambda, p } => {
            fp.write(b"g:odd");
            fp.f64(*lambda);
            fp.write(&p.to_le_bytes());
        }
        RestoringSpec::Custom(c) => {
            fp.write(b"g:custom");
            fp.f64(c.lower_bound);
        }
    }
    match forcing {
        ForcingSpec::Zero => fp.write(b"f:zero"),
        ForcingSpec::Static { values } => {
            fp.write(b"f:static");
            fp.slice(values);
        }
        ForcingSpec::Harmonic { values, omega } => {
            fp.write(b"f:harmonic");
            fp.f64(*omega);
            fp.slice(values);
        }
    }
    fp.slice(&init.u0);
    fp.slice(&init.u1);
    fp.0
}

/// The validation gate: every input either yields a sealed problem or a
/// diagnostic error naming the violated hypothesis. Never partially
/// constructs.
pub fn validate_problem(
    domain: BeamDomain,
    grid: Grid,
    damping: DampingSpec,
    restoring: RestoringSpec,
    forcing: ForcingSpec,
    init: InitialData,
    cfg: SimConfig,
) -> Result<ValidatedProblem, ValidationError> {
    check_damping(&damping)?;
    check_restoring(&restoring)?;

    let n_interior = grid.interior_len();
    let check_len = |name: &'static str, v: &[f64]| -> Result<(), ValidationError> {
        if v.len() != n_interior {
            return Err(ValidationError::WrongLength {
                name,
                expected: n_interior,
                got: v.len(),
            });
        }
        Ok(())
    };
    check_len("u0", &init.u0)?;
    check_len("u1", &init.u1)?;
    if init.u0.iter().chain(&init.u1).any(|x| !x.is_finite()) {
        return Err(ValidationError::NonFiniteInitialData);
    }
    match &forcing {
        ForcingSpec::Zero => {}
        ForcingSpec::Static { values } | ForcingSpec::Harmonic { values, .. } => {
            check_len("forcing profile", values)?;
            if values.iter().any(|x| !x.is_finite()) {
                return Err(ValidationError::NonFiniteForcing);
            }
        }
    }

    if cfg.dt <= 0.0 || !cfg.dt.is_finite() {
        return Err(ValidationError::NonPositiveDt(cfg.dt));
    }
    if cfg.t_end <= cfg.dt || cfg.t_end.is_nan() {
        return Err(ValidationError::HorizonBelowStep {
            dt: cfg.dt,
            t: cfg.t_end,
        });
    }
    if cfg.newton_tol <= 0.0 || cfg.newton_tol.is_nan() {
        return Err(ValidationError::NonPositiveTolerance(cfg.newton_tol));
    }
    if cfg.newton_max_iter == 0 {
        return Err(ValidationError::ZeroCount {
            which: "newton_max_iter",
        });
    }
    if cfg.output_stride == 0 {
        return Err(ValidationError::ZeroCount {
            which: "output_stride",
        });
    }

    let certificate_admissible = restoring.is_zero() && forcing.is_zero();
    let fingerprint = fingerprint_of(&domain, &grid, &damping, &restoring, &forcing, &init);
    Ok(ValidatedProblem {
        domain,
        grid,
        damping,
        restoring,
        forcing,
        init,
        cfg,
        certificate_admissible,
        fingerprint,
    })
}
