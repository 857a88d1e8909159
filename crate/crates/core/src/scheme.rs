//! The implicit schemes.
//!
//! * viscosity: `z_n = ε_n f(z_n) + (1 - ε_n) T_{μ_n} z_n`
//! * anchor:    `z_n = (1/n) x + (1 - 1/n) T_μ z_n`
//!
//! Every outer step is an equation `z = ε g(z) + (1 - ε) T_μ z` whose right
//! hand side is a contraction with constant `q = ε α + (1 - ε) < 1`; it is
//! solved by Picard iteration warm-started from the previous outer iterate.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lp_space::{LpSpace, Vector};
use crate::means::{apply_mean_unchecked, cesaro_mean, FiniteMean};
use crate::semigroup::Representation;

pub const DEFAULT_INNER_TOL: f64 = 1e-10;
pub const DEFAULT_INNER_MAX: usize = 100_000;
pub const DEFAULT_OUTER_STEPS: usize = 200;
/// Consecutive small outer moves required before an early stop.
pub const EARLY_STOP_RUN: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum ContractionKind {
    Constant(Vector),
    /// `x ↦ F x + b`.
    Affine {
        f: DMatrix<f64>,
        b: Vector,
    },
    /// `x ↦ u + α (x - u)`.
    Toward {
        factor: f64,
        point: Vector,
    },
}

/// An `α`-contraction `f` with a certified constant `α < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contraction {
    kind: ContractionKind,
    alpha: f64,
}

impl Contraction {
    pub fn constant(u: Vector) -> Self {
        Self { kind: ContractionKind::Constant(u), alpha: 0.0 }
    }

    pub fn toward(factor: f64, point: Vector) -> Result<Self> {
        if !(0.0..1.0).contains(&factor) {
            return Err(Error::Certification {
                reason: format!("contraction factor {factor} outside [0, 1)"),
                witness: None,
            });
        }
        Ok(Self { kind: ContractionKind::Toward { factor, point }, alpha: factor })
    }

    /// Affine contraction; `α` is the operator-norm bound of `F` in `space`.
    pub fn affine(space: &LpSpace, f: DMatrix<f64>, b: Vector) -> Result<Self> {
        space.check_vector(&b)?;
        let alpha = space.operator_norm_bound(&f)?;
        if alpha >= 1.0 {
            return Err(Error::Certification {
                reason: format!("affine map has norm bound {alpha:.6} >= 1, not a contraction"),
                witness: None,
            });
        }
        Ok(Self { kind: ContractionKind::Affine { f, b }, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kind(&self) -> &ContractionKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ContractionKind::Constant(u) => u.len(),
            ContractionKind::Affine { b, .. } => b.len(),
            ContractionKind::Toward { point, .. } => point.len(),
        }
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        match &self.kind {
            ContractionKind::Constant(u) => u.clone(),
            ContractionKind::Affine { f, b } => f * x + b,
            ContractionKind::Toward { factor, point } => point + (x - point) * *factor,
        }
    }
}

/// Rule producing `ε_n ∈ (0, 1)`.
#[derive(Clone)]
pub enum EpsilonRule {
    /// `1 / (n + 1)`.
    Harmonic,
    /// `1 / (n + 1)^γ`, `γ ∈ (0, 1]`.
    Power {
        gamma: f64,
    },
    /// `c / ln(n + 2)`, `c ∈ (0, ln 3)`.
    Log {
        c: f64,
    },
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl fmt::Debug for EpsilonRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonRule::Harmonic => write!(f, "Harmonic"),
            EpsilonRule::Power { gamma } => write!(f, "Power {{ gamma: {gamma} }}"),
            EpsilonRule::Log { c } => write!(f, "Log {{ c: {c} }}"),
            EpsilonRule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl EpsilonRule {
    pub fn power(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("gamma = {gamma} outside (0, 1]")));
        }
        Ok(EpsilonRule::Power { gamma })
    }

    pub fn log(c: f64) -> Result<Self> {
        // n = 1 gives c / ln 3, which must stay below 1.
        if !(c > 0.0 && c < 3f64.ln()) {
            return Err(Error::Config(format!("log rule constant c = {c} outside (0, ln 3)")));
        }
        Ok(EpsilonRule::Log { c })
    }

    pub fn eval(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidArgument("epsilon schedule is indexed from n = 1".into()));
        }
        let x = n as f64;
        let eps = match self {
            EpsilonRule::Harmonic => 1.0 / (x + 1.0),
            EpsilonRule::Power { gamma } => (x + 1.0).powf(-gamma),
            EpsilonRule::Log { c } => c / (x + 2.0).ln(),
            EpsilonRule::Custom(f) => f(n),
        };
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Config(format!("epsilon_{n} = {eps} outside (0, 1)")));
        }
        Ok(eps)
    }
}

#[derive(Debug, Clone)]
pub enum MeanRule {
    /// `μ_n = cesaro_mean(n, k)`, tied to the outer index.
    Cesaro,
    /// The same mean at every step.
    Fixed(FiniteMean),
}

impl MeanRule {
    pub fn mean(&self, n: usize, k: usize) -> Result<FiniteMean> {
        match self {
            MeanRule::Cesaro => cesaro_mean(n, k),
            MeanRule::Fixed(mu) => {
                if mu.rank() != k {
                    return Err(Error::dims(k, mu.rank()));
                }
                Ok(mu.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub epsilon: EpsilonRule,
    pub mean: MeanRule,
    pub inner_tol: f64,
    pub inner_max: usize,
    pub outer_steps: usize,
    /// Stop once `‖z_n - z_{n-1}‖ ≤ outer_tol` holds for [`EARLY_STOP_RUN`] steps in a row.
    pub outer_tol: Option<f64>,
    /// Warm start for the first step; the zero vector when absent.
    pub initial: Option<Vector>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            epsilon: EpsilonRule::Harmonic,
            mean: MeanRule::Cesaro,
            inner_tol: DEFAULT_INNER_TOL,
            inner_max: DEFAULT_INNER_MAX,
            outer_steps: DEFAULT_OUTER_STEPS,
            outer_tol: None,
            initial: None,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_tol > 0.0 && self.inner_tol.is_finite()) {
            return Err(Error::Config("inner_tol must be positive".into()));
        }
        if self.inner_max == 0 || self.outer_steps == 0 {
            return Err(Error::Config("inner_max and outer_steps must be >= 1".into()));
        }
        if let Some(t) = self.outer_tol {
            if !(t > 0.0) {
                return Err(Error::Config("outer_tol must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `ε_n` for the configured rule.
pub fn epsilon_schedule_eval(cfg: &SchemeConfig, n: usize) -> Result<f64> {
    cfg.epsilon.eval(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerReport {
    /// Contraction constant `ε α + (1 - ε)`.
    pub q: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `ceil(log(tol (1 - q) / r_0) / log q)`, `r_0` the first residual.
    pub a_priori_bound: usize,
    /// Largest observed ratio of consecutive residuals.
    pub max_ratio: f64,
}

/// Solves `z = ε f(z) + (1 - ε) T_μ z` by Picard iteration from `warm_start`.
///
/// The returned `z` satisfies `‖z - (ε f(z) + (1 - ε) T_μ z)‖ ≤ inner_tol`.
pub fn solve_implicit(
    rep: &Representation,
    mu: &FiniteMean,
    f: &Contraction,
    eps: f64,
    warm_start: &Vector,
    inner_tol: f64,
    inner_max: usize,
) -> Result<(Vector, InnerReport)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} outside (0, 1)")));
    }
    picard(rep, mu, f, eps, warm_start, inner_tol, inner_max)
}

/// Same as [`solve_implicit`] but allows `eps = 1` (the first anchor step).
fn picard(
    rep: &Representation,
    mu: &FiniteMean,
    f: &Contraction,
    eps: f64,
    warm_start: &Vector,
    inner_tol: f64,
    inner_max: usize,
) -> Result<(Vector, InnerReport)> {
    if mu.rank() != rep.rank() {
        return Err(Error::dims(rep.rank(), mu.rank()));
    }
    if f.dim() != rep.space().dim() {
        return Err(Error::dims(rep.space().dim(), f.dim()));
    }
    if !(inner_tol > 0.0) || inner_max == 0 {
        return Err(Error::InvalidArgument("inner_tol > 0 and inner_max >= 1 required".into()));
    }
    let space = rep.space();
    let q = eps * f.alpha() + (1.0 - eps);
    let mut z = warm_start.clone();
    let mut first: Option<f64> = None;
    let mut prev: Option<f64> = None;
    let mut max_ratio = 0.0f64;
    let mut residual = f64::INFINITY;

    for it in 1..=inner_max {
        rep.check_point(&z)?;
        let next = f.apply(&z) * eps + apply_mean_unchecked(rep, mu, &z) * (1.0 - eps);
        residual = space.dist_unchecked(&z, &next);
        let r0 = *first.get_or_insert(residual);
        if let Some(p) = prev {
            if p > 0.0 {
                max_ratio = max_ratio.max(residual / p);
            }
        }
        if residual <= inner_tol {
            let report = InnerReport {
                q,
                iterations: it,
                residual,
                a_priori_bound: a_priori_bound(q, inner_tol, r0),
                max_ratio,
            };
            return Ok((z, report));
        }
        prev = Some(residual);
        z = next;
    }
    Err(Error::InnerNotConverged { best: z, iterations: inner_max, residual })
}

fn a_priori_bound(q: f64, tol: f64, r0: f64) -> usize {
    if r0 <= tol {
        return 0;
    }
    if q <= 0.0 {
        return 1;
    }
    ((tol * (1.0 - q) / r0).ln() / q.ln()).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Viscosity,
    Anchor,
}

/// Per-step inequality values filled in by the verification module.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepDiagnostics {
    /// `⟨x - Px, J(z_n - Px)⟩`.
    pub vi_value: Option<f64>,
    /// Smallest `RHS - LHS` of the quadratic bound over the sampled fixed points.
    pub bound6_slack: Option<f64>,
    /// `RHS - LHS` of `‖z_n - Px‖² ≤ 2/(1-α) ⟨x - Px, J(z_n - Px)⟩`.
    pub gbh_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub n: usize,
    pub epsilon: f64,
    pub inner_iterations: usize,
    pub inner_residual: f64,
    /// False only for the last step of a failed run (best iterate kept).
    pub inner_converged: bool,
    pub z: Vector,
    /// `‖z_n - G_i z_n‖` per generator.
    pub generator_residuals: Vec<f64>,
    /// `‖z_n - T_{μ_n} z_n‖`.
    pub mean_residual: f64,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub kind: SchemeKind,
    pub inner_tol: f64,
    pub steps: Vec<TraceStep>,
    /// Set when an inner solve gave up; the trace is truncated there.
    pub failure: Option<String>,
    pub stopped_early: bool,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Final iterate, the estimate of the scheme limit.
    pub fn limit(&self) -> Option<&Vector> {
        self.steps.last().map(|s| &s.z)
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

struct StepSpec<'a> {
    n: usize,
    eps: f64,
    mu: &'a FiniteMean,
}

struct Budget {
    inner_tol: f64,
    inner_max: usize,
    outer_tol: Option<f64>,
}

fn run_steps<'a, I>(
    kind: SchemeKind,
    rep: &Representation,
    f: &Contraction,
    start: Vector,
    steps: I,
    budget: Budget,
) -> Result<Trace>
where
    I: Iterator<Item = Result<(usize, f64, std::borrow::Cow<'a, FiniteMean>)>>,
{
    let Budget { inner_tol, inner_max, outer_tol } = budget;
    let space = rep.space();
    let mut trace = Trace { kind, inner_tol, steps: Vec::new(), failure: None, stopped_early: false };
    let mut z = start;
    let mut quiet_run = 0;
    for step in steps {
        let (n, eps, mu) = step?;
        let spec = StepSpec { n, eps, mu: &mu };
        match picard(rep, spec.mu, f, spec.eps, &z, inner_tol, inner_max) {
            Ok((next, report)) => {
                let moved = space.dist_unchecked(&next, &z);
                trace.steps.push(record(rep, &spec, next.clone(), report.iterations, report.residual, true));
                z = next;
                if let Some(tol) = outer_tol {
                    quiet_run = if moved <= tol { quiet_run + 1 } else { 0 };
                    if quiet_run >= EARLY_STOP_RUN {
                        trace.stopped_early = true;
                        break;
                    }
                }
            }
            Err(Error::InnerNotConverged { best, iterations, residual }) => {
                trace.steps.push(record(rep, &spec, best, iterations, residual, false));
                trace.failure = Some(format!(
                    "step {n}: inner solve stopped after {iterations} iterations with residual {residual:.3e}"
                ));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}

fn record(
    rep: &Representation,
    spec: &StepSpec<'_>,
    z: Vector,
    iterations: usize,
    residual: f64,
    converged: bool,
) -> TraceStep {
    let mean_residual = rep.space().dist_unchecked(&z, &apply_mean_unchecked(rep, spec.mu, &z));
    TraceStep {
        n: spec.n,
        epsilon: spec.eps,
        inner_iterations: iterations,
        inner_residual: residual,
        inner_converged: converged,
        generator_residuals: rep.generator_residuals(&z),
        mean_residual,
        z,
        diagnostics: StepDiagnostics::default(),
    }
}

/// Runs the viscosity scheme for `cfg.outer_steps` steps, warm-starting each
/// step from the previous iterate.
pub fn run_viscosity(rep: &Representation, cfg: &SchemeConfig, f: &Contraction) -> Result<Trace> {
    cfg.validate()?;
    let start = match &cfg.initial {
        Some(x) => {
            rep.check_point(x)?;
            x.clone()
        }
        None => rep.space().zero(),
    };
    let k = rep.rank();
    let steps = (1..=cfg.outer_steps).map(|n| {
        let eps = cfg.epsilon.eval(n)?;
        let mu = cfg.mean.mean(n, k)?;
        Ok((n, eps, std::borrow::Cow::Owned(mu)))
    });
    let budget = Budget { inner_tol: cfg.inner_tol, inner_max: cfg.inner_max, outer_tol: cfg.outer_tol };
    run_steps(SchemeKind::Viscosity, rep, f, start, steps, budget)
}

/// Runs the anchor scheme `z_n = (1/n) x + (1 - 1/n) T_μ z_n` for `n = 1..=n_max`.
pub fn run_anchor(
    rep: &Representation,
    mu: &FiniteMean,
    anchor_x: &Vector,
    n_max: usize,
    inner_tol: f64,
) -> Result<Trace> {
    run_anchor_with(rep, mu, anchor_x, n_max, inner_tol, DEFAULT_INNER_MAX)
}

pub fn run_anchor_with(
    rep: &Representation,
    mu: &FiniteMean,
    anchor_x: &Vector,
    n_max: usize,
    inner_tol: f64,
    inner_max: usize,
) -> Result<Trace> {
    rep.check_point(anchor_x)?;
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    let f = Contraction::constant(anchor_x.clone());
    let steps = (1..=n_max).map(|n| Ok((n, 1.0 / n as f64, std::borrow::Cow::Borrowed(mu))));
    let budget = Budget { inner_tol, inner_max, outer_tol: None };
    run_steps(SchemeKind::Anchor, rep, &f, anchor_x.clone(), steps, budget)
}
