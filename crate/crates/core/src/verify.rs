//! Runtime checks of the inequalities the convergence argument rests on.
//!
//! All checks are phrased through `⟨a, J(b)⟩` and carry an explicit slack
//! proportional to the inner tolerance, since trace iterates solve their
//! fixed-point equations only approximately.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp_space::{LpSpace, Vector};
use crate::scheme::{Contraction, SchemeKind, Trace};
use crate::semigroup::{Domain, FixedSet, Representation, SemigroupElement};

pub const DEFAULT_VI_TOL: f64 = 1e-6;
pub const DEFAULT_GAMMA_TOL: f64 = 1e-4;
/// Multiplier `c` in the `c · inner_tol` slack.
pub const SLACK_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// A list of `value ≤ threshold` checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub checks: Vec<Check>,
}

impl DiagnosticReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `value ≤ threshold`; a non-finite value fails.
    pub fn push(&mut self, name: impl Into<String>, value: f64, threshold: f64) -> &mut Self {
        let passed = value.is_finite() && value <= threshold;
        self.checks.push(Check { name: name.into(), value, threshold, passed });
        self
    }

    pub fn extend(&mut self, other: DiagnosticReport) -> &mut Self {
        self.checks.extend(other.checks);
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            passed: bool,
            checks: &'a [Check],
        }
        serde_json::to_string_pretty(&Out { passed: self.passed(), checks: &self.checks }).expect("report serializes")
    }
}

/// `x ∈ F_ε(T_t; D)`, i.e. `x ∈ D` and `‖x - T_t x‖ ≤ ε`.
pub fn approx_fixed_membership(
    rep: &Representation,
    t: &SemigroupElement,
    region: &Domain,
    eps: f64,
    x: &Vector,
) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let sp = rep.space();
    sp.check_vector(x)?;
    region.validate(sp)?;
    if !region.contains(sp, x, 0.0) {
        return Ok(false);
    }
    let tx = rep.apply(t, x)?;
    Ok(sp.dist_unchecked(x, &tx) <= eps)
}

/// Sunny-retraction test: `max_z ⟨x - Px, J(z - Px)⟩ ≤ tol` over `fixed_samples`.
pub fn variational_inequality(
    space: &LpSpace,
    px: &Vector,
    x: &Vector,
    fixed_samples: &[Vector],
    tol: f64,
) -> Result<DiagnosticReport> {
    if fixed_samples.is_empty() {
        return Err(Error::InvalidArgument("variational inequality needs fixed-point samples".into()));
    }
    space.check_vector(px)?;
    space.check_vector(x)?;
    let lever = x - px;
    let mut worst = f64::NEG_INFINITY;
    for z in fixed_samples {
        worst = worst.max(space.pair_with_duality(&lever, &(z - px))?);
    }
    let mut report = DiagnosticReport::new();
    report.push("variational_inequality", worst, tol);
    Ok(report)
}

/// [`variational_inequality`] plus the requirement `Px ∈ Fix(S)`, measured as
/// `max_i ‖Px - G_i Px‖ ≤ fixed_tol`.
///
/// The inequality alone cannot reject a candidate moved off `Fix(S)` along
/// `x - Px`: the pairing only becomes more negative.
pub fn retraction_check(
    rep: &Representation,
    px: &Vector,
    x: &Vector,
    fixed_samples: &[Vector],
    vi_tol: f64,
    fixed_tol: f64,
) -> Result<DiagnosticReport> {
    let mut report = variational_inequality(rep.space(), px, x, fixed_samples, vi_tol)?;
    let off = rep.generator_residuals(px).into_iter().fold(0.0, f64::max);
    report.push("candidate_fixed", off, fixed_tol);
    Ok(report)
}

/// `max` of `⟨x - Px, J(z_n - Px)⟩` over the last `tail` steps; the limsup
/// of this quantity is non-positive along a convergent scheme.
pub fn gamma_estimate(space: &LpSpace, trace: &Trace, x: &Vector, px: &Vector, tail: usize) -> Result<f64> {
    if tail == 0 || tail > trace.len() {
        return Err(Error::InvalidArgument(format!("tail {tail} not in 1..={}", trace.len())));
    }
    let lever = x - px;
    let mut worst = f64::NEG_INFINITY;
    for step in &trace.steps[trace.len() - tail..] {
        worst = worst.max(space.pair_with_duality(&lever, &(&step.z - px))?);
    }
    Ok(worst)
}

/// Per-step check of `‖z_n - Px‖² ≤ 2/(1-α) ⟨x - Px, J(z_n - Px)⟩`, reported
/// as the largest violation beyond `slack · (1 + ‖z_n - Px‖)`.
pub fn final_bound_check(
    space: &LpSpace,
    trace: &Trace,
    x: &Vector,
    px: &Vector,
    alpha: f64,
    slack: f64,
) -> Result<DiagnosticReport> {
    let mut worst = f64::NEG_INFINITY;
    for step in &trace.steps {
        let v = final_bound_gap(space, &step.z, x, px, alpha)?;
        let dist = space.dist_unchecked(&step.z, px);
        worst = worst.max(-v - slack * (1.0 + dist));
    }
    let mut report = DiagnosticReport::new();
    report.push("final_bound", worst.max(0.0), 0.0);
    Ok(report)
}

/// `RHS - LHS` of the final bound at one iterate.
pub fn final_bound_gap(space: &LpSpace, z: &Vector, x: &Vector, px: &Vector, alpha: f64) -> Result<f64> {
    let d = z - px;
    let lhs = space.norm(&d)?.powi(2);
    let rhs = 2.0 / (1.0 - alpha) * space.pair_with_duality(&(x - px), &d)?;
    Ok(rhs - lhs)
}

/// `RHS - LHS` of `‖z - p‖² ≤ 1/(1-α) ⟨f(p) - p, J(z - p)⟩`; the anchor
/// scheme is the case `f ≡ x`, `α = 0`.
pub fn quadratic_bound_gap(space: &LpSpace, z: &Vector, p: &Vector, f: &Contraction) -> Result<f64> {
    let d = z - p;
    let lhs = space.norm(&d)?.powi(2);
    let rhs = space.pair_with_duality(&(f.apply(p) - p), &d)? / (1.0 - f.alpha());
    Ok(rhs - lhs)
}

/// Quadratic bound and the boundedness bound `‖z_n - p‖ ≤ ‖f(p) - p‖/(1-α)`
/// at every step for every sampled `p ∈ Fix(S)`.
pub fn trace_bounds_check(
    space: &LpSpace,
    trace: &Trace,
    f: &Contraction,
    fixed_samples: &[Vector],
) -> Result<DiagnosticReport> {
    if fixed_samples.is_empty() {
        return Err(Error::InvalidArgument("bounds check needs fixed-point samples".into()));
    }
    let slack = SLACK_FACTOR * trace.inner_tol;
    let mut quad = f64::NEG_INFINITY;
    let mut ball = f64::NEG_INFINITY;
    for step in &trace.steps {
        for p in fixed_samples {
            let dist = space.dist(&step.z, p)?;
            let gap = quadratic_bound_gap(space, &step.z, p, f)?;
            quad = quad.max(-gap - slack * (1.0 + dist));
            let radius = space.dist(&f.apply(p), p)? / (1.0 - f.alpha());
            ball = ball.max(dist - radius - slack);
        }
    }
    let mut report = DiagnosticReport::new();
    report.push("quadratic_bound", quad.max(0.0), 0.0);
    report.push("boundedness", ball.max(0.0), 0.0);
    Ok(report)
}

/// Anchor-scheme inequality `⟨z_n - x, J(z_n - z)⟩ ≤ 0` for `z ∈ Fix(S)`.
pub fn anchor_vi_check(
    space: &LpSpace,
    trace: &Trace,
    x: &Vector,
    fixed_samples: &[Vector],
) -> Result<DiagnosticReport> {
    if fixed_samples.is_empty() {
        return Err(Error::InvalidArgument("anchor check needs fixed-point samples".into()));
    }
    let slack = SLACK_FACTOR * trace.inner_tol;
    let mut worst = f64::NEG_INFINITY;
    for step in &trace.steps {
        for z in fixed_samples {
            let v = space.pair_with_duality(&(&step.z - x), &(&step.z - z))?;
            let dist = space.dist_unchecked(&step.z, z);
            worst = worst.max(v - slack * (1.0 + dist));
        }
    }
    let mut report = DiagnosticReport::new();
    report.push("anchor_inequality", worst.max(0.0), 0.0);
    Ok(report)
}

/// Metric projection of `u` onto `Fix(S)`; in a Hilbert space this is the
/// sunny nonexpansive retraction, so it serves as ground truth for `p = 2`.
pub fn projection_oracle(space: &LpSpace, fixed_set: &FixedSet, u: &Vector) -> Result<Vector> {
    if !space.is_hilbert() {
        return Err(Error::Unsupported("projection oracle requires p = 2".into()));
    }
    if fixed_set.space() != space {
        return Err(Error::InvalidArgument("fixed set lives in a different space".into()));
    }
    fixed_set.project(u)
}

/// The pair `(x, Px)` that the viscosity scheme converges to: `x` is the
/// unique fixed point of `f ∘ P`, found by Picard iteration (rate `α`).
pub fn retraction_target(space: &LpSpace, fixed_set: &FixedSet, f: &Contraction) -> Result<(Vector, Vector)> {
    let mut x = f.apply(&projection_oracle(space, fixed_set, &space.zero())?);
    for _ in 0..10_000 {
        let next = f.apply(&projection_oracle(space, fixed_set, &x)?);
        let moved = space.dist(&next, &x)?;
        x = next;
        if moved <= 1e-14 * (1.0 + space.norm(&x)?) {
            break;
        }
    }
    let px = projection_oracle(space, fixed_set, &x)?;
    Ok((x, px))
}

/// Fills the per-step diagnostic columns of `trace`.
///
/// `target` is `(x, Px)` when the retraction value is known; `fixed_samples`
/// feed the quadratic bound (the anchor form when the trace is an anchor run).
pub fn annotate_trace(
    space: &LpSpace,
    trace: &mut Trace,
    f: &Contraction,
    target: Option<(&Vector, &Vector)>,
    fixed_samples: &[Vector],
) -> Result<()> {
    for step in &mut trace.steps {
        let diag = &mut step.diagnostics;
        if let Some((x, px)) = target {
            let d = &step.z - px;
            diag.vi_value = Some(space.pair_with_duality(&(x - px), &d)?);
            diag.gbh_slack = match trace.kind {
                SchemeKind::Viscosity => Some(final_bound_gap(space, &step.z, x, px, f.alpha())?),
                SchemeKind::Anchor => None,
            };
        }
        if !fixed_samples.is_empty() {
            let mut slack = f64::INFINITY;
            for p in fixed_samples {
                slack = slack.min(quadratic_bound_gap(space, &step.z, p, f)?);
            }
            diag.bound6_slack = Some(slack);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp_space::vector;
    use crate::scheme::{run_viscosity, SchemeConfig, StepDiagnostics, TraceStep};
    use crate::semigroup::NonexpansiveMap;

    fn negation_family() -> Representation {
        Representation::new(LpSpace::hilbert(1).unwrap(), vec![NonexpansiveMap::negation(1)], Domain::Whole).unwrap()
    }

    fn diagonal_family() -> Representation {
        Representation::new(
            LpSpace::hilbert(2).unwrap(),
            vec![
                NonexpansiveMap::clamp(vector(&[0.0, 0.0]), vector(&[1.0, 1.0])).unwrap(),
                NonexpansiveMap::swap(2, 0, 1).unwrap(),
            ],
            Domain::Whole,
        )
        .unwrap()
    }

    fn trace_of(points: &[Vector]) -> Trace {
        Trace {
            kind: SchemeKind::Viscosity,
            inner_tol: 1e-10,
            steps: points
                .iter()
                .enumerate()
                .map(|(i, z)| TraceStep {
                    n: i + 1,
                    epsilon: 1.0 / (i as f64 + 2.0),
                    inner_iterations: 1,
                    inner_residual: 0.0,
                    inner_converged: true,
                    z: z.clone(),
                    generator_residuals: vec![],
                    mean_residual: 0.0,
                    diagnostics: StepDiagnostics::default(),
                })
                .collect(),
            failure: None,
            stopped_early: false,
        }
    }

    #[test]
    fn approx_fixed_membership_examples() {
        let rep = negation_family();
        let t = SemigroupElement::unit(1, 0);
        let d = Domain::Box { lo: vector(&[-1.0]), hi: vector(&[1.0]) };
        assert!(approx_fixed_membership(&rep, &t, &d, 0.1, &vector(&[0.0])).unwrap());
        assert!(approx_fixed_membership(&rep, &t, &d, 0.1, &vector(&[0.04])).unwrap());
        assert!(!approx_fixed_membership(&rep, &t, &d, 0.1, &vector(&[0.06])).unwrap());
        assert!(!approx_fixed_membership(&rep, &t, &d, 10.0, &vector(&[1.5])).unwrap());
        assert!(approx_fixed_membership(&rep, &t, &d, 0.0, &vector(&[0.0])).is_err());
    }

    #[test]
    fn variational_inequality_examples() {
        let sp = LpSpace::hilbert(2).unwrap();
        let x = vector(&[1.0, 0.0]);
        let px = vector(&[0.5, 0.5]);
        let r = variational_inequality(&sp, &px, &x, std::slice::from_ref(&px), 1e-6).unwrap();
        assert_eq!(r.checks[0].value, 0.0);
        assert!(r.passed());

        let r = variational_inequality(&sp, &px, &x, &[vector(&[0.0, 0.0])], 1e-6).unwrap();
        assert_eq!(r.checks[0].value, 0.0);
        assert!(r.passed());

        let wrong = vector(&[0.4, 0.4]);
        let r = variational_inequality(&sp, &wrong, &x, &[vector(&[1.0, 1.0])], 1e-6).unwrap();
        assert!((r.checks[0].value - 0.12).abs() < 1e-12);
        assert!(!r.passed());

        assert!(variational_inequality(&sp, &px, &x, &[], 1e-6).is_err());
    }

    #[test]
    fn perturbation_along_the_lever_needs_the_membership_check() {
        let rep = diagonal_family();
        let sp = *rep.space();
        let fs = rep.fixed_set_oracle().unwrap();
        let u = vector(&[1.0, 0.0]);
        let pu = projection_oracle(&sp, &fs, &u).unwrap();
        let lever = &u - &pu;
        let moved = &pu + &lever * (0.05 / lever.norm());
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let samples = fs.sample(50, &mut rng).unwrap();

        let vi = variational_inequality(&sp, &moved, &u, &samples, 1e-4).unwrap();
        assert!(vi.passed());
        assert!(vi.checks[0].value < 0.0);

        let full = retraction_check(&rep, &moved, &u, &samples, 1e-4, 1e-6).unwrap();
        assert!(!full.passed());
        assert!(retraction_check(&rep, &pu, &u, &samples, 1e-4, 1e-6).unwrap().passed());
    }

    #[test]
    fn gamma_examples() {
        let sp = LpSpace::hilbert(2).unwrap();
        let x = vector(&[1.0, 0.0]);
        let px = vector(&[0.5, 0.5]);
        let flat = trace_of(&[px.clone(), px.clone(), px.clone()]);
        assert_eq!(gamma_estimate(&sp, &flat, &x, &px, 2).unwrap(), 0.0);
        assert!(gamma_estimate(&sp, &flat, &x, &px, 4).is_err());
        assert!(gamma_estimate(&sp, &flat, &x, &px, 0).is_err());

        let bad = trace_of(&[&px + (&x - &px)]);
        let g = gamma_estimate(&sp, &bad, &x, &px, 1).unwrap();
        assert!((g - 0.5).abs() < 1e-15);
        assert!(g > DEFAULT_GAMMA_TOL);
    }

    #[test]
    fn gamma_along_negation_scheme_decreases_to_zero() {
        let rep = negation_family();
        let sp = *rep.space();
        let f = Contraction::constant(vector(&[1.0]));
        let trace = run_viscosity(&rep, &SchemeConfig { outer_steps: 400, ..Default::default() }, &f).unwrap();
        let (x, px) = (vector(&[1.0]), vector(&[0.0]));
        let g_early =
            gamma_estimate(&sp, &Trace { steps: trace.steps[..20].to_vec(), ..trace.clone() }, &x, &px, 10).unwrap();
        let g_late = gamma_estimate(&sp, &trace, &x, &px, 10).unwrap();
        // Positive at every finite n (z_n > 0), shrinking like 1/n.
        assert!(g_late > 0.0 && g_late < g_early);
        assert!(g_late < 3e-3);
    }

    #[test]
    fn final_bound_examples() {
        let sp = LpSpace::hilbert(1).unwrap();
        let (x, px) = (vector(&[1.0]), vector(&[0.0]));
        assert!(final_bound_check(&sp, &trace_of(std::slice::from_ref(&px)), &x, &px, 0.0, 1e-9).unwrap().passed());

        // z ∈ (0, 1): z² ≤ 2 z holds.
        let zs: Vec<Vector> = [0.5, 0.2, 0.01].iter().map(|&v| vector(&[v])).collect();
        assert!(final_bound_check(&sp, &trace_of(&zs), &x, &px, 0.0, 1e-9).unwrap().passed());

        // z = Px - 3(x - Px): 9 ≤ -6 fails.
        let r = final_bound_check(&sp, &trace_of(&[vector(&[-3.0])]), &x, &px, 0.0, 1e-9).unwrap();
        assert!(!r.passed());
        assert!((r.checks[0].value - 15.0).abs() < 1e-6);
    }

    #[test]
    fn projection_oracle_examples() {
        let rep = diagonal_family();
        let sp = *rep.space();
        let fs = rep.fixed_set_oracle().unwrap();
        let p = projection_oracle(&sp, &fs, &vector(&[1.0, 0.0])).unwrap();
        assert!((p - vector(&[0.5, 0.5])).amax() < 1e-12);
        let inside = vector(&[0.7, 0.7]);
        assert!((projection_oracle(&sp, &fs, &inside).unwrap() - &inside).amax() < 1e-12);

        let neg2 = Representation::new(LpSpace::hilbert(2).unwrap(), vec![NonexpansiveMap::negation(2)], Domain::Whole)
            .unwrap();
        let p = projection_oracle(neg2.space(), &neg2.fixed_set_oracle().unwrap(), &vector(&[3.0, 4.0])).unwrap();
        assert_eq!(p, vector(&[0.0, 0.0]));
    }

    #[test]
    fn projection_oracle_satisfies_the_vi() {
        let rep = diagonal_family();
        let sp = *rep.space();
        let fs = rep.fixed_set_oracle().unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let samples = fs.sample(50, &mut rng).unwrap();
        for u in [vector(&[1.0, 0.0]), vector(&[3.0, -2.0]), vector(&[-1.0, -0.5]), vector(&[0.2, 0.9])] {
            let pu = projection_oracle(&sp, &fs, &u).unwrap();
            assert!(variational_inequality(&sp, &pu, &u, &samples, 1e-8).unwrap().passed());
        }
    }

    #[test]
    fn retraction_target_for_constant_and_scaled_maps() {
        let rep = diagonal_family();
        let sp = *rep.space();
        let fs = rep.fixed_set_oracle().unwrap();
        let (x, px) = retraction_target(&sp, &fs, &Contraction::constant(vector(&[1.0, 0.0]))).unwrap();
        assert_eq!(x, vector(&[1.0, 0.0]));
        assert!((px - vector(&[0.5, 0.5])).amax() < 1e-12);

        // f(y) = u + ½(y - u), u = (2, 0). With Px = (t, t) the fixed point is
        // x = (1 + t/2, t/2), whose projection has t = min(1, (1 + t)/2) = 1.
        let f = Contraction::toward(0.5, vector(&[2.0, 0.0])).unwrap();
        let (x, px) = retraction_target(&sp, &fs, &f).unwrap();
        assert!((px - vector(&[1.0, 1.0])).amax() < 1e-12);
        assert!((x - vector(&[1.5, 0.5])).amax() < 1e-12);
    }

    #[test]
    fn bounds_hold_on_a_real_trace_and_fail_when_tampered() {
        let rep = diagonal_family();
        let sp = *rep.space();
        let f = Contraction::constant(vector(&[1.0, 0.0]));
        let mut trace = run_viscosity(&rep, &SchemeConfig { outer_steps: 60, ..Default::default() }, &f).unwrap();
        let fs = rep.fixed_set_oracle().unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
        let samples = fs.sample(20, &mut rng).unwrap();
        assert!(trace_bounds_check(&sp, &trace, &f, &samples).unwrap().passed());

        let (x, px) = retraction_target(&sp, &fs, &f).unwrap();
        annotate_trace(&sp, &mut trace, &f, Some((&x, &px)), &samples).unwrap();
        assert!(trace.steps.iter().all(|s| s.diagnostics.bound6_slack.unwrap() >= -1e-9));
        assert!(trace.steps.iter().all(|s| s.diagnostics.gbh_slack.unwrap() >= -1e-9));

        for s in &mut trace.steps {
            s.z.add_scalar_mut(0.1);
        }
        let r = trace_bounds_check(&sp, &trace, &f, &samples).unwrap();
        assert!(!r.get("quadratic_bound").unwrap().passed);
    }

    #[test]
    fn report_json_shape() {
        let mut r = DiagnosticReport::new();
        r.push("a", 0.5, 1.0).push("b", f64::NAN, 1.0);
        assert!(!r.passed());
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["passed"], false);
        assert_eq!(v["checks"][0]["name"], "a");
    }
}
