//! Implicit fixed-point schemes for commutative semigroups of nonexpansive
//! maps on finite-dimensional `ℓ^p` spaces.
//!
//! A [`Representation`] lifts commuting generators `G_1, …, G_k` to the
//! semigroup `ℕ^k`. Finitely supported means average orbits into `T_μ`, and
//! the viscosity and anchor schemes solve `z = ε f(z) + (1-ε) T_μ z` step by
//! step. The [`verify`] module checks the inequalities that make the limit
//! the sunny nonexpansive retraction onto the common fixed set.

// Guards like `!(x > 0.0)` are written that way so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod lp_space;
pub mod means;
pub mod scheme;
pub mod semigroup;
pub mod verify;

pub use error::{Error, Result};
pub use lp_space::{vector, LpSpace, Vector};
pub use means::{apply_mean, cesaro_mean, regularity_defect, FiniteMean};
pub use scheme::{run_anchor, run_viscosity, solve_implicit, Contraction, EpsilonRule, MeanRule, SchemeConfig, Trace};
pub use semigroup::{Domain, FixedSet, NonexpansiveMap, Representation, SemigroupElement};
