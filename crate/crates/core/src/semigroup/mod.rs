//! Representations of `S = N^k` (under addition) as nonexpansive maps.
//!
//! A representation is fixed by `k` pairwise commuting generators
//! `G_1, …, G_k`; the element `s = (s_1, …, s_k)` acts as
//!
//! ```text
//! T_s = G_1^{s_1} ∘ G_2^{s_2} ∘ … ∘ G_k^{s_k}
//! ```
//!
//! so `T_0` is the identity and `T_{s+t} = T_s T_t` whenever the generators
//! commute. Commutativity and nonexpansiveness are user claims; [`Representation::certify`]
//! checks them on random samples.

mod fixed_set;
mod map;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp_space::{LpSpace, Vector};

pub use fixed_set::FixedSet;
pub use map::NonexpansiveMap;

/// Tolerance for commutator defects and expansion ratios in [`Representation::certify`].
pub const CERTIFY_TOL: f64 = 1e-9;
/// Default number of random points drawn by certification.
pub const DEFAULT_CERTIFY_SAMPLES: usize = 128;

const MEMBERSHIP_TOL: f64 = 1e-9;

/// Multi-index `s ∈ N^k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SemigroupElement(Vec<usize>);

impl SemigroupElement {
    pub fn new(exponents: Vec<usize>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::InvalidArgument("semigroup element needs k >= 1".into()));
        }
        Ok(Self(exponents))
    }

    pub fn identity(k: usize) -> Self {
        Self(vec![0; k])
    }

    /// The `i`-th generator `e_i`.
    pub fn unit(k: usize, i: usize) -> Self {
        let mut e = vec![0; k];
        e[i] = 1;
        Self(e)
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[usize] {
        &self.0
    }

    /// `|s| = Σ s_i`, the word length.
    pub fn length(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Semigroup product `s + t`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rank() != other.rank() {
            return Err(Error::dims(self.rank(), other.rank()));
        }
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }
}

impl fmt::Display for SemigroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// The closed convex set `C` the maps act on. Balls use the ambient `ℓ^p` norm.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Domain {
    #[default]
    Whole,
    Box {
        lo: Vector,
        hi: Vector,
    },
    Ball {
        center: Vector,
        radius: f64,
    },
}

impl Domain {
    pub fn validate(&self, space: &LpSpace) -> Result<()> {
        match self {
            Domain::Whole => Ok(()),
            Domain::Box { lo, hi } => {
                space.check_dim(lo)?;
                space.check_dim(hi)?;
                if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                    return Err(Error::InvalidArgument("box requires lo <= hi".into()));
                }
                Ok(())
            }
            Domain::Ball { center, radius } => {
                space.check_vector(center)?;
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::InvalidArgument("ball radius must be finite and >= 0".into()));
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, space: &LpSpace, x: &Vector, tol: f64) -> bool {
        match self {
            Domain::Whole => true,
            Domain::Box { lo, hi } => (0..x.len()).all(|i| x[i] >= lo[i] - tol && x[i] <= hi[i] + tol),
            Domain::Ball { center, radius } => space.dist_unchecked(x, center) <= radius + tol * (1.0 + radius),
        }
    }

    /// Draws a point of the domain; `window` bounds the sample when `C = E`.
    pub(crate) fn sample<R: Rng>(&self, space: &LpSpace, window: f64, rng: &mut R) -> Vector {
        let d = space.dim();
        match self {
            Domain::Whole => Vector::from_fn(d, |_, _| rng.random_range(-window..=window)),
            Domain::Box { lo, hi } => Vector::from_fn(d, |i, _| {
                let (l, h) = (lo[i].max(-window), hi[i].min(window));
                let (l, h) = if l <= h { (l, h) } else { (lo[i], hi[i]) };
                if l == h {
                    l
                } else {
                    rng.random_range(l..=h)
                }
            }),
            Domain::Ball { center, radius } => {
                let dir = Vector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
                let n = space.norm_unchecked(&dir);
                if n == 0.0 {
                    return center.clone();
                }
                let r = radius * rng.random_range(0.0..=1.0f64);
                center + dir * (r / n)
            }
        }
    }
}

/// Outcome of [`Representation::certify`].
#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub samples: usize,
    /// `max ‖G_i G_j x - G_j G_i x‖` over samples and generator pairs.
    pub max_commutator_defect: f64,
    /// `max ‖G_i x - G_i y‖ / ‖x - y‖` over sampled pairs.
    pub max_expansion_ratio: f64,
    /// Number of sampled `G_i x` that left `C`.
    pub domain_escapes: usize,
    /// Sample attaining the worst failed check, if any check failed.
    pub witness: Option<Vec<f64>>,
    pub passed: bool,
    /// Non-fatal findings, e.g. an empty common fixed set (unbounded orbits).
    pub warnings: Vec<String>,
}

impl CertificationReport {
    pub fn failure_reason(&self) -> Option<String> {
        if self.passed {
            return None;
        }
        let mut why = Vec::new();
        if self.max_commutator_defect > CERTIFY_TOL {
            why.push(format!("generators do not commute (defect {:.3e})", self.max_commutator_defect));
        }
        if self.max_expansion_ratio > 1.0 + CERTIFY_TOL {
            why.push(format!("a generator is expansive (ratio {:.6})", self.max_expansion_ratio));
        }
        if self.domain_escapes > 0 {
            why.push(format!("{} sampled images left the domain", self.domain_escapes));
        }
        let mut msg = why.join("; ");
        if let Some(w) = &self.witness {
            msg.push_str(&format!(" at witness point {w:?}"));
        }
        Some(msg)
    }
}

#[derive(Debug, Clone)]
pub struct Representation {
    space: LpSpace,
    generators: Vec<NonexpansiveMap>,
    domain: Domain,
}

impl Representation {
    pub fn new(space: LpSpace, generators: Vec<NonexpansiveMap>, domain: Domain) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidArgument("a representation needs k >= 1 generators".into()));
        }
        if let Some(g) = generators.iter().find(|g| g.dim() != space.dim()) {
            return Err(Error::dims(space.dim(), g.dim()));
        }
        domain.validate(&space)?;
        Ok(Self { space, generators, domain })
    }

    /// [`new`](Self::new) followed by [`certify`](Self::certify); a failed
    /// certificate becomes [`Error::Certification`].
    pub fn certified(
        space: LpSpace,
        generators: Vec<NonexpansiveMap>,
        domain: Domain,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let rep = Self::new(space, generators, domain)?;
        let report = rep.certify(samples, seed)?;
        if let Some(reason) = report.failure_reason() {
            return Err(Error::Certification { reason, witness: report.witness.map(Vector::from_vec) });
        }
        Ok(rep)
    }

    pub fn space(&self) -> &LpSpace {
        &self.space
    }

    pub fn generators(&self) -> &[NonexpansiveMap] {
        &self.generators
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Number of generators `k`.
    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn check_point(&self, x: &Vector) -> Result<()> {
        self.space.check_vector(x)?;
        if !self.domain.contains(&self.space, x, MEMBERSHIP_TOL) {
            return Err(Error::Domain(format!("{:?}", x.as_slice())));
        }
        Ok(())
    }

    fn check_element(&self, s: &SemigroupElement) -> Result<()> {
        if s.rank() != self.rank() {
            return Err(Error::dims(self.rank(), s.rank()));
        }
        Ok(())
    }

    /// `T_s x`.
    pub fn apply(&self, s: &SemigroupElement, x: &Vector) -> Result<Vector> {
        self.check_element(s)?;
        self.check_point(x)?;
        Ok(self.apply_unchecked(s, x))
    }

    pub(crate) fn apply_unchecked(&self, s: &SemigroupElement, x: &Vector) -> Vector {
        let mut y = x.clone();
        for (g, &e) in self.generators.iter().zip(s.exponents()).rev() {
            for _ in 0..e {
                y = g.apply(&y);
            }
        }
        y
    }

    /// `G_i x` for the `i`-th generator (zero based).
    pub fn apply_generator(&self, i: usize, x: &Vector) -> Vector {
        self.generators[i].apply(x)
    }

    /// `‖x - G_i x‖` for every generator.
    pub fn generator_residuals(&self, x: &Vector) -> Vec<f64> {
        self.generators.iter().map(|g| self.space.dist_unchecked(x, &g.apply(x))).collect()
    }

    pub(crate) fn sampling_window(&self) -> f64 {
        let s = self.generators.iter().map(|g| g.scale()).fold(1.0, f64::max);
        2.0 * s
    }

    /// Randomized check of the representation axioms: pairwise commutation
    /// (so `T_{s+t} = T_s T_t`), nonexpansiveness, and `G_i(C) ⊂ C`.
    pub fn certify(&self, samples: usize, seed: u64) -> Result<CertificationReport> {
        if samples == 0 {
            return Err(Error::InvalidArgument("certification needs samples >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = self.sampling_window();
        let sp = &self.space;
        let k = self.rank();

        let mut max_defect = 0.0f64;
        let mut defect_witness = None;
        let mut max_ratio = 0.0f64;
        let mut ratio_witness = None;
        let mut escapes = 0;
        let mut escape_witness = None;

        for _ in 0..samples {
            let x = self.domain.sample(sp, window, &mut rng);
            let y = self.domain.sample(sp, window, &mut rng);
            let images: Vec<Vector> = self.generators.iter().map(|g| g.apply(&x)).collect();
            for i in 0..k {
                for j in (i + 1)..k {
                    let ij = self.generators[i].apply(&images[j]);
                    let ji = self.generators[j].apply(&images[i]);
                    let defect = sp.dist_unchecked(&ij, &ji);
                    if defect > max_defect {
                        max_defect = defect;
                        defect_witness = Some(x.clone());
                    }
                }
                let dxy = sp.dist_unchecked(&x, &y);
                if dxy > 0.0 {
                    let ratio = sp.dist_unchecked(&images[i], &self.generators[i].apply(&y)) / dxy;
                    if ratio > max_ratio {
                        max_ratio = ratio;
                        ratio_witness = Some(x.clone());
                    }
                }
                if !self.domain.contains(sp, &images[i], MEMBERSHIP_TOL) {
                    escapes += 1;
                    escape_witness.get_or_insert_with(|| x.clone());
                }
            }
        }

        let commute_ok = max_defect <= CERTIFY_TOL;
        let ratio_ok = max_ratio <= 1.0 + CERTIFY_TOL;
        let passed = commute_ok && ratio_ok && escapes == 0;
        let witness = if !commute_ok {
            defect_witness
        } else if !ratio_ok {
            ratio_witness
        } else {
            escape_witness
        };

        let mut warnings = Vec::new();
        match self.fixed_set_oracle() {
            Err(Error::Infeasible(why)) => {
                warnings.push(format!("common fixed set is empty ({why}); orbits may be unbounded"))
            }
            Err(Error::Unsupported(_)) | Ok(_) => {}
            Err(e) => warnings.push(format!("fixed-set oracle failed: {e}")),
        }

        Ok(CertificationReport {
            samples,
            max_commutator_defect: max_defect,
            max_expansion_ratio: max_ratio,
            domain_escapes: escapes,
            witness: witness.filter(|_| !passed).map(|w| w.as_slice().to_vec()),
            passed,
            warnings,
        })
    }

    /// Exact description of `Fix(S) = ⋂_i {x ∈ C : G_i x = x}`; only affine
    /// and clamp generators are supported.
    pub fn fixed_set_oracle(&self) -> Result<FixedSet> {
        FixedSet::from_representation(self)
    }
}
