//! Declarative experiments: TOML configs, trace files and the commands
//! behind the `semifix` binary.
//!
//! A config names the space, the generators, an optional domain, the scheme
//! and the verification tolerances:
//!
//! ```toml
//! seed = 7
//!
//! [space]
//! d = 2
//! p = 2.0
//!
//! [[generators]]
//! kind = "clamp"
//! lo = [0.0, 0.0]
//! hi = [1.0, 1.0]
//!
//! [[generators]]
//! kind = "affine"
//! a = [[0.0, 1.0], [1.0, 0.0]]
//! b = [0.0, 0.0]
//!
//! [scheme]
//! kind = "viscosity"
//! outer_steps = 200
//!
//! [contraction]
//! kind = "constant"
//! u = [1.0, 0.0]
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp_space::{LpSpace, Vector};
use crate::means::{apply_mean, cesaro_mean, FiniteMean};
use crate::scheme::{
    run_anchor_with, run_viscosity, Contraction, EpsilonRule, MeanRule, SchemeConfig, SchemeKind, StepDiagnostics,
    Trace, TraceStep,
};
use crate::semigroup::{CertificationReport, Domain, FixedSet, NonexpansiveMap, Representation};
use crate::verify::{self, DiagnosticReport, SLACK_FACTOR};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.json";
pub const SWEEP_FILE: &str = "sweep.csv";

/// Parameters accepted by [`sweep`].
pub const SWEEP_PARAMETERS: [&str; 4] = ["gamma", "log_c", "outer_steps", "inner_tol"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub space: SpaceSpec,
    pub generators: Vec<MapSpec>,
    #[serde(default)]
    pub domain: DomainSpec,
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub contraction: Option<ContractionSpec>,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub d: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    /// `x ↦ A x + b`, `a` given row by row.
    Affine {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Clamp {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Applied in list order.
    Compose {
        maps: Vec<MapSpec>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    #[default]
    Whole,
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKindSpec {
    Viscosity,
    Anchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub kind: SchemeKindSpec,
    #[serde(default = "default_outer_steps")]
    pub outer_steps: usize,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_inner_max")]
    pub inner_max: usize,
    #[serde(default)]
    pub outer_tol: Option<f64>,
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    /// Anchor point `x` of the anchor scheme.
    #[serde(default)]
    pub anchor: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilon: EpsilonSpec,
    #[serde(default)]
    pub mean: MeanSpec,
}

fn default_outer_steps() -> usize {
    crate::scheme::DEFAULT_OUTER_STEPS
}

fn default_inner_tol() -> f64 {
    crate::scheme::DEFAULT_INNER_TOL
}

fn default_inner_max() -> usize {
    crate::scheme::DEFAULT_INNER_MAX
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonSpec {
    /// `1/(n+1)`.
    #[default]
    Harmonic,
    /// `1/(n+1)^gamma`.
    Power { gamma: f64 },
    /// `c/ln(n+2)`.
    Log { c: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanSpec {
    /// `cesaro_mean(n, k)` at step `n`.
    #[default]
    Cesaro,
    /// `cesaro_mean(size, k)` at every step.
    CesaroFixed { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContractionSpec {
    Constant {
        u: Vec<f64>,
    },
    /// `x ↦ u + alpha (x - u)`.
    Scaled {
        alpha: f64,
        u: Vec<f64>,
    },
    /// `x ↦ F x + b`.
    Affine {
        f: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    /// Sampled common fixed points used by the inequality checks.
    pub samples: usize,
    pub certify_samples: usize,
    pub vi_tol: f64,
    pub gamma_tol: f64,
    pub gamma_tail: usize,
    /// Distance of the limit to the projection oracle (`p = 2`).
    pub oracle_tol: f64,
    /// Generator residuals `‖ẑ - G_i ẑ‖` at the last step.
    pub residual_tol: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            samples: 50,
            certify_samples: crate::semigroup::DEFAULT_CERTIFY_SAMPLES,
            vi_tol: 1e-4,
            gamma_tol: verify::DEFAULT_GAMMA_TOL,
            gamma_tail: 10,
            oracle_tol: 1e-3,
            residual_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Command-line overrides shared by every verb.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

enum Plan {
    Viscosity { cfg: SchemeConfig, f: Contraction },
    Anchor { mu: FiniteMean, x: Vector, n_max: usize, inner_tol: f64, inner_max: usize },
}

/// A validated, certified config ready to run.
pub struct Experiment {
    pub name: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub representation: Representation,
    pub certification: CertificationReport,
    plan: Plan,
}

fn to_vector(space: &LpSpace, what: &str, v: &[f64]) -> Result<Vector> {
    if v.len() != space.dim() {
        return Err(Error::Config(format!("{what}: expected {} entries, got {}", space.dim(), v.len())));
    }
    Ok(Vector::from_column_slice(v))
}

fn to_matrix(space: &LpSpace, what: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = space.dim();
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Config(format!("{what}: expected a {d}x{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn build_map(space: &LpSpace, spec: &MapSpec) -> Result<NonexpansiveMap> {
    match spec {
        MapSpec::Affine { a, b } => {
            NonexpansiveMap::affine(space, to_matrix(space, "affine.a", a)?, to_vector(space, "affine.b", b)?)
        }
        MapSpec::Clamp { lo, hi } => {
            NonexpansiveMap::clamp(to_vector(space, "clamp.lo", lo)?, to_vector(space, "clamp.hi", hi)?)
        }
        MapSpec::Compose { maps } => {
            NonexpansiveMap::compose(maps.iter().map(|m| build_map(space, m)).collect::<Result<_>>()?)
        }
    }
}

fn build_domain(space: &LpSpace, spec: &DomainSpec) -> Result<Domain> {
    Ok(match spec {
        DomainSpec::Whole => Domain::Whole,
        DomainSpec::Box { lo, hi } => {
            Domain::Box { lo: to_vector(space, "domain.lo", lo)?, hi: to_vector(space, "domain.hi", hi)? }
        }
        DomainSpec::Ball { center, radius } => {
            Domain::Ball { center: to_vector(space, "domain.center", center)?, radius: *radius }
        }
    })
}

fn build_contraction(space: &LpSpace, spec: &ContractionSpec) -> Result<Contraction> {
    match spec {
        ContractionSpec::Constant { u } => Ok(Contraction::constant(to_vector(space, "contraction.u", u)?)),
        ContractionSpec::Scaled { alpha, u } => Contraction::toward(*alpha, to_vector(space, "contraction.u", u)?),
        ContractionSpec::Affine { f, b } => {
            Contraction::affine(space, to_matrix(space, "contraction.f", f)?, to_vector(space, "contraction.b", b)?)
        }
    }
}

fn build_epsilon(spec: &EpsilonSpec) -> Result<EpsilonRule> {
    match spec {
        EpsilonSpec::Harmonic => Ok(EpsilonRule::Harmonic),
        EpsilonSpec::Power { gamma } => EpsilonRule::power(*gamma),
        EpsilonSpec::Log { c } => EpsilonRule::log(*c),
    }
    .map_err(|e| Error::Config(e.to_string()))
}

impl Experiment {
    /// Validates `config` and certifies its generators and contraction.
    pub fn new(name: impl Into<String>, config: ExperimentConfig, seed: Option<u64>) -> Result<Self> {
        let seed = seed.unwrap_or(config.seed);
        let space = LpSpace::new(config.space.d, config.space.p).map_err(|e| Error::Config(e.to_string()))?;
        let generators = config.generators.iter().map(|g| build_map(&space, g)).collect::<Result<Vec<_>>>()?;
        let domain = build_domain(&space, &config.domain)?;
        let representation = Representation::new(space, generators, domain)?;
        let certification = representation.certify(config.verify.certify_samples.max(1), seed)?;
        if let Some(reason) = certification.failure_reason() {
            return Err(Error::Certification {
                reason,
                witness: certification.witness.as_ref().map(|w| Vector::from_column_slice(w)),
            });
        }

        let s = &config.scheme;
        let plan = match s.kind {
            SchemeKindSpec::Viscosity => {
                let spec = config
                    .contraction
                    .as_ref()
                    .ok_or_else(|| Error::Config("viscosity scheme needs a [contraction] section".into()))?;
                let f = build_contraction(&space, spec)?;
                let mean = match s.mean {
                    MeanSpec::Cesaro => MeanRule::Cesaro,
                    MeanSpec::CesaroFixed { size } => MeanRule::Fixed(cesaro_mean(size, representation.rank())?),
                };
                let cfg = SchemeConfig {
                    epsilon: build_epsilon(&s.epsilon)?,
                    mean,
                    inner_tol: s.inner_tol,
                    inner_max: s.inner_max,
                    outer_steps: s.outer_steps,
                    outer_tol: s.outer_tol,
                    initial: s.initial.as_deref().map(|v| to_vector(&space, "scheme.initial", v)).transpose()?,
                };
                cfg.validate()?;
                Plan::Viscosity { cfg, f }
            }
            SchemeKindSpec::Anchor => {
                let x = s.anchor.as_deref().ok_or_else(|| Error::Config("anchor scheme needs scheme.anchor".into()))?;
                let size = match s.mean {
                    MeanSpec::CesaroFixed { size } => size,
                    MeanSpec::Cesaro => {
                        return Err(Error::Config(
                            "anchor scheme uses one mean; set mean.rule = \"cesaro_fixed\"".into(),
                        ))
                    }
                };
                if !(s.inner_tol > 0.0) || s.inner_max == 0 || s.outer_steps == 0 {
                    return Err(Error::Config("inner_tol, inner_max and outer_steps must be positive".into()));
                }
                Plan::Anchor {
                    mu: cesaro_mean(size, representation.rank())?,
                    x: to_vector(&space, "scheme.anchor", x)?,
                    n_max: s.outer_steps,
                    inner_tol: s.inner_tol,
                    inner_max: s.inner_max,
                }
            }
        };
        Ok(Self { name: name.into(), config, seed, representation, certification, plan })
    }

    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let config = ExperimentConfig::from_path(path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "experiment".into());
        Self::new(name, config, seed)
    }

    pub fn space(&self) -> &LpSpace {
        self.representation.space()
    }

    pub fn kind(&self) -> SchemeKind {
        match self.plan {
            Plan::Viscosity { .. } => SchemeKind::Viscosity,
            Plan::Anchor { .. } => SchemeKind::Anchor,
        }
    }

    pub fn inner_tol(&self) -> f64 {
        self.config.scheme.inner_tol
    }

    /// The scheme's `f`; the anchor scheme is the case `f ≡ x`.
    pub fn contraction(&self) -> Contraction {
        match &self.plan {
            Plan::Viscosity { f, .. } => f.clone(),
            Plan::Anchor { x, .. } => Contraction::constant(x.clone()),
        }
    }

    pub fn run_scheme(&self) -> Result<Trace> {
        match &self.plan {
            Plan::Viscosity { cfg, f } => run_viscosity(&self.representation, cfg, f),
            Plan::Anchor { mu, x, n_max, inner_tol, inner_max } => {
                run_anchor_with(&self.representation, mu, x, *n_max, *inner_tol, *inner_max)
            }
        }
    }

    /// `T_μ` at outer step `n`.
    pub fn mean_at(&self, n: usize) -> Result<FiniteMean> {
        match &self.plan {
            Plan::Viscosity { cfg, .. } => cfg.mean.mean(n, self.representation.rank()),
            Plan::Anchor { mu, .. } => Ok(mu.clone()),
        }
    }

    pub fn fixed_set(&self) -> Result<FixedSet> {
        self.representation.fixed_set_oracle()
    }

    /// Seeded samples of `Fix(S)`; empty with a warning when no oracle exists.
    pub fn fixed_samples(&self, count: usize) -> (Vec<Vector>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(1));
        match self.fixed_set().and_then(|fs| fs.sample(count, &mut rng)) {
            Ok(s) => (s, Vec::new()),
            Err(e) => (Vec::new(), vec![format!("no fixed-point samples: {e}")]),
        }
    }

    /// `(x, Px)` from the projection oracle; `None` unless `p = 2`.
    pub fn retraction_target(&self) -> Option<(Vector, Vector)> {
        let space = self.space();
        if !space.is_hilbert() {
            return None;
        }
        let fs = self.fixed_set().ok()?;
        match &self.plan {
            Plan::Viscosity { f, .. } => verify::retraction_target(space, &fs, f).ok(),
            Plan::Anchor { x, .. } => verify::projection_oracle(space, &fs, x).ok().map(|px| (x.clone(), px)),
        }
    }

    /// Runs every verification check on `trace`.
    pub fn evaluate(&self, trace: &Trace) -> Result<Evaluation> {
        let space = *self.space();
        let v = &self.config.verify;
        let last = trace.steps.last().ok_or_else(|| Error::InvalidArgument("trace is empty".into()))?;
        let limit = &last.z;
        let f = self.contraction();
        let (samples, mut warnings) = self.fixed_samples(v.samples);
        let target = self.retraction_target();
        if target.is_none() {
            warnings.push("no projection oracle; checks against Px skipped".into());
        }

        let mut report = DiagnosticReport::new();
        let inner = trace.steps.iter().map(|s| s.inner_residual).fold(0.0, f64::max);
        report.push("inner_residual", inner, self.inner_tol());
        let residual = last.generator_residuals.iter().copied().fold(0.0, f64::max);
        report.push("generator_residual", residual, v.residual_tol);

        if !samples.is_empty() {
            report.extend(verify::trace_bounds_check(&space, trace, &f, &samples)?);
            if trace.kind == SchemeKind::Anchor {
                report.extend(verify::anchor_vi_check(&space, trace, &f.apply(limit), &samples)?);
            }
        }

        if let Some((x, px)) = &target {
            report.push("oracle_distance", space.dist(limit, px)?, v.oracle_tol);
            if trace.kind == SchemeKind::Viscosity {
                let slack = SLACK_FACTOR * trace.inner_tol;
                report.extend(verify::final_bound_check(&space, trace, x, px, f.alpha(), slack)?);
                let tail = v.gamma_tail.clamp(1, trace.len());
                report.push("gamma", verify::gamma_estimate(&space, trace, x, px, tail)?, v.gamma_tol);
            }
        }

        if !samples.is_empty() {
            // Without an oracle, x = f(Px) is estimated at Px ≈ ẑ.
            let x = match &target {
                Some((x, _)) => x.clone(),
                None => f.apply(limit),
            };
            let vi = verify::variational_inequality(&space, limit, &x, &samples, v.vi_tol)?;
            report.extend(vi);
        }
        Ok(Evaluation { report, target, samples, warnings })
    }

    /// Fills the per-step diagnostic columns.
    pub fn annotate(&self, trace: &mut Trace, eval: &Evaluation) -> Result<()> {
        let target = eval.target.as_ref().map(|(x, px)| (x, px));
        verify::annotate_trace(self.space(), trace, &self.contraction(), target, &eval.samples)
    }
}

pub struct Evaluation {
    pub report: DiagnosticReport,
    pub target: Option<(Vector, Vector)>,
    pub samples: Vec<Vector>,
    pub warnings: Vec<String>,
}

/// Shortest round-trip formatting; scientific outside `[1e-5, 1e16)`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn trace_header(d: usize, k: usize) -> String {
    let mut cols: Vec<String> =
        ["n", "epsilon", "inner_iters", "inner_residual"].iter().map(|s| s.to_string()).collect();
    cols.extend((1..=d).map(|i| format!("z_{i}")));
    cols.extend((1..=k).map(|i| format!("res_{i}")));
    cols.extend(["mean_residual", "vi_value", "bound6_slack", "gbh_slack"].iter().map(|s| s.to_string()));
    cols.join(",")
}

/// Trace file contents: a header and one row per step, `8 + d + k` columns,
/// LF line endings, empty cells for unknown diagnostics.
pub fn write_trace_csv(trace: &Trace, d: usize, k: usize) -> String {
    let mut out = trace_header(d, k);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    for s in &trace.steps {
        let _ =
            write!(out, "{},{},{},{}", s.n, format_f64(s.epsilon), s.inner_iterations, format_f64(s.inner_residual));
        for v in s.z.iter().chain(s.generator_residuals.iter()) {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        let dg = &s.diagnostics;
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            format_f64(s.mean_residual),
            opt(dg.vi_value),
            opt(dg.bound6_slack),
            opt(dg.gbh_slack)
        );
    }
    out
}

/// Parses a trace file written by [`write_trace_csv`].
pub fn read_trace_csv(text: &str, d: usize, k: usize, kind: SchemeKind, inner_tol: f64) -> Result<Trace> {
    let bad = |line: usize, why: &str| Error::Config(format!("trace line {line}: {why}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidArgument("trace file is empty".into()))?;
    if header != trace_header(d, k) {
        return Err(bad(1, "unexpected header"));
    }
    let cols = 8 + d + k;
    let mut steps: Vec<TraceStep> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(bad(lineno, &format!("expected {cols} columns, found {}", cells.len())));
        }
        let num = |j: usize| -> Result<f64> {
            let v: f64 = cells[j].parse().map_err(|_| bad(lineno, &format!("column {} is not a number", j + 1)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(lineno, "non-finite value"))
            }
        };
        let opt = |j: usize| -> Result<Option<f64>> {
            if cells[j].is_empty() {
                Ok(None)
            } else {
                num(j).map(Some)
            }
        };
        let n: usize = cells[0].parse().map_err(|_| bad(lineno, "bad step index"))?;
        if steps.last().is_some_and(|s| s.n >= n) {
            return Err(bad(lineno, "rows not ordered by n"));
        }
        let inner_residual = num(3)?;
        steps.push(TraceStep {
            n,
            epsilon: num(1)?,
            inner_iterations: cells[2].parse().map_err(|_| bad(lineno, "bad inner_iters"))?,
            inner_residual,
            inner_converged: inner_residual <= inner_tol,
            z: Vector::from_iterator(d, (4..4 + d).map(num).collect::<Result<Vec<_>>>()?),
            generator_residuals: (4 + d..4 + d + k).map(num).collect::<Result<_>>()?,
            mean_residual: num(4 + d + k)?,
            diagnostics: StepDiagnostics {
                vi_value: opt(5 + d + k)?,
                bound6_slack: opt(6 + d + k)?,
                gbh_slack: opt(7 + d + k)?,
            },
        });
    }
    if steps.is_empty() {
        return Err(Error::InvalidArgument("trace file has no steps".into()));
    }
    Ok(Trace { kind, inner_tol, steps, failure: None, stopped_early: false })
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub scheme: String,
    pub seed: u64,
    pub steps: usize,
    pub complete: bool,
    pub stopped_early: bool,
    pub failure: Option<String>,
    pub limit: Vec<f64>,
    pub generator_residuals: Vec<f64>,
    pub mean_residual: f64,
    /// `x` and `Px` from the projection oracle, when available.
    pub x: Option<Vec<f64>>,
    pub oracle: Option<Vec<f64>>,
    pub distance_to_oracle: Option<f64>,
    pub certification: CertificationReport,
    pub warnings: Vec<String>,
    pub verdict: bool,
    pub report: DiagnosticReport,
}

pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub trace: Trace,
    pub summary: Summary,
}

/// Where artifacts go: `--out`, then `output.dir`, then `out/<name>`.
pub fn output_dir(exp: &Experiment, opts: &Options) -> PathBuf {
    opts.out.clone().or_else(|| exp.config.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out").join(&exp.name))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Runs the scheme, writes the trace and summary, and evaluates the checks.
///
/// An inner failure still writes the partial trace and then returns
/// [`Error::InnerNotConverged`].
pub fn run(config: &Path, opts: &Options) -> Result<RunOutcome> {
    let exp = Experiment::load(config, opts.seed)?;
    let out_dir = output_dir(&exp, opts);
    fs::create_dir_all(&out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;

    let mut trace = exp.run_scheme()?;
    let d = exp.space().dim();
    let k = exp.representation.rank();
    let eval = if trace.is_empty() { None } else { Some(exp.evaluate(&trace)?) };
    if let Some(ev) = &eval {
        exp.annotate(&mut trace, ev)?;
    }
    write_file(&out_dir.join(TRACE_FILE), &write_trace_csv(&trace, d, k))?;

    let last = trace.steps.last();
    let (report, target, warnings) = match eval {
        Some(ev) => (ev.report, ev.target, ev.warnings),
        None => (DiagnosticReport::new(), None, Vec::new()),
    };
    let limit = last.map(|s| s.z.clone());
    let summary = Summary {
        name: exp.name.clone(),
        scheme: format!("{:?}", exp.kind()).to_lowercase(),
        seed: exp.seed,
        steps: trace.len(),
        complete: trace.is_complete(),
        stopped_early: trace.stopped_early,
        failure: trace.failure.clone(),
        limit: limit.as_ref().map(|z| z.as_slice().to_vec()).unwrap_or_default(),
        generator_residuals: last.map(|s| s.generator_residuals.clone()).unwrap_or_default(),
        mean_residual: last.map_or(f64::NAN, |s| s.mean_residual),
        x: target.as_ref().map(|(x, _)| x.as_slice().to_vec()),
        oracle: target.as_ref().map(|(_, px)| px.as_slice().to_vec()),
        distance_to_oracle: match (&target, &limit) {
            (Some((_, px)), Some(z)) => Some(exp.space().dist(z, px)?),
            _ => None,
        },
        certification: exp.certification.clone(),
        warnings: exp.certification.warnings.iter().cloned().chain(warnings).collect(),
        verdict: trace.is_complete() && report.passed(),
        report,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    write_file(&out_dir.join(SUMMARY_FILE), &(json + "\n"))?;

    if trace.failure.is_some() {
        let (best, iterations, residual) = last
            .map(|s| (s.z.clone(), s.inner_iterations, s.inner_residual))
            .unwrap_or_else(|| (exp.space().zero(), 0, f64::INFINITY));
        return Err(Error::InnerNotConverged { best, iterations, residual });
    }
    Ok(RunOutcome { out_dir, trace, summary })
}

/// Recomputes every check from the trace file in the output directory and
/// writes `report.json`. Missing or empty traces are errors.
pub fn verify_suite(config: &Path, opts: &Options) -> Result<DiagnosticReport> {
    let exp = Experiment::load(config, opts.seed)?;
    let out_dir = output_dir(&exp, opts);
    let path = out_dir.join(TRACE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut trace = read_trace_csv(&text, exp.space().dim(), exp.representation.rank(), exp.kind(), exp.inner_tol())?;

    // Residual columns are recomputed rather than trusted.
    for s in &mut trace.steps {
        let mu = exp.mean_at(s.n)?;
        s.generator_residuals = exp.representation.generator_residuals(&s.z);
        s.mean_residual = exp.space().dist(&s.z, &apply_mean(&exp.representation, &mu, &s.z)?)?;
    }
    let report = exp.evaluate(&trace)?.report;
    write_file(&out_dir.join(REPORT_FILE), &(report.to_json() + "\n"))?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub steps: usize,
    pub complete: bool,
    pub max_generator_residual: f64,
    pub mean_residual: f64,
    pub distance_to_oracle: Option<f64>,
    pub limit: Vec<f64>,
}

fn with_parameter(mut config: ExperimentConfig, parameter: &str, value: f64) -> Result<ExperimentConfig> {
    let as_count = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("{parameter} needs a positive integer, got {v}")))
        }
    };
    match parameter {
        "gamma" => config.scheme.epsilon = EpsilonSpec::Power { gamma: value },
        "log_c" => config.scheme.epsilon = EpsilonSpec::Log { c: value },
        "outer_steps" => config.scheme.outer_steps = as_count(value)?,
        "inner_tol" => config.scheme.inner_tol = value,
        other => {
            return Err(Error::Config(format!(
                "unknown sweep parameter {other:?}; expected one of {SWEEP_PARAMETERS:?}"
            )))
        }
    }
    Ok(config)
}

/// Runs one scheme per value, concurrently, and writes `sweep.csv`.
pub fn sweep(config: &Path, opts: &Options, parameter: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let base = Experiment::load(config, opts.seed)?;
    for &v in values {
        with_parameter(base.config.clone(), parameter, v)?;
    }
    let rows = values
        .par_iter()
        .map(|&v| {
            let cfg = with_parameter(base.config.clone(), parameter, v)?;
            let exp = Experiment::new(base.name.clone(), cfg, Some(base.seed))?;
            let trace = exp.run_scheme()?;
            let last = trace.steps.last().ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
            let distance = match exp.retraction_target() {
                Some((_, px)) => Some(exp.space().dist(&last.z, &px)?),
                None => None,
            };
            Ok(SweepRow {
                value: v,
                steps: trace.len(),
                complete: trace.is_complete(),
                max_generator_residual: last.generator_residuals.iter().copied().fold(0.0, f64::max),
                mean_residual: last.mean_residual,
                distance_to_oracle: distance,
                limit: last.z.as_slice().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let out_dir = output_dir(&base, opts);
    fs::create_dir_all(&out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    write_file(&out_dir.join(SWEEP_FILE), &write_sweep_csv(parameter, base.space().dim(), &rows))?;
    Ok(rows)
}

pub fn write_sweep_csv(parameter: &str, d: usize, rows: &[SweepRow]) -> String {
    let mut out = format!("{parameter},steps,complete,max_generator_residual,mean_residual,distance_to_oracle");
    for i in 1..=d {
        let _ = write!(out, ",z_{i}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            format_f64(r.value),
            r.steps,
            r.complete,
            format_f64(r.max_generator_residual),
            format_f64(r.mean_residual),
            r.distance_to_oracle.map(format_f64).unwrap_or_default()
        );
        for v in &r.limit {
            let _ = write!(out, ",{}", format_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Certifies the config without running anything.
pub fn certify(config: &Path, opts: &Options) -> Result<CertificationReport> {
    Experiment::load(config, opts.seed).map(|e| e.certification)
}
