use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lp_space::{LpSpace, Vector};

/// Slack allowed on certified operator norms.
pub const NORM_SLACK: f64 = 1e-12;

/// A nonexpansive self-map of `R^d`, restricted to the kinds whose fixed
/// sets can be described exactly (affine, box clamp) plus compositions.
#[derive(Debug, Clone, PartialEq)]
pub enum NonexpansiveMap {
    /// `x ↦ A x + b` with `‖A‖_p ≤ 1`.
    Affine { a: DMatrix<f64>, b: Vector },
    /// Componentwise clamp into `[lo, hi]`.
    Clamp { lo: Vector, hi: Vector },
    /// Applies the maps in list order: `Compose([f, g])` is `g ∘ f`.
    Compose(Vec<NonexpansiveMap>),
}

impl NonexpansiveMap {
    /// Affine map whose linear part is certified nonexpansive in `space`.
    ///
    /// For `p ≠ 2` the certificate is the interpolation bound, so some
    /// nonexpansive matrices are rejected.
    pub fn affine(space: &LpSpace, a: DMatrix<f64>, b: Vector) -> Result<Self> {
        space.check_vector(&b)?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        let bound = space.operator_norm_bound(&a)?;
        if bound > 1.0 + NORM_SLACK {
            return Err(Error::Certification {
                reason: format!("affine map has operator norm bound {bound:.6} > 1 in l^{}", space.p()),
                witness: None,
            });
        }
        Ok(NonexpansiveMap::Affine { a, b })
    }

    pub fn clamp(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dims(lo.len(), hi.len()));
        }
        if lo.iter().chain(hi.iter()).any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("clamp bound is NaN".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::InvalidArgument("clamp requires lo <= hi".into()));
        }
        Ok(NonexpansiveMap::Clamp { lo, hi })
    }

    pub fn compose(maps: Vec<NonexpansiveMap>) -> Result<Self> {
        let Some(first) = maps.first() else {
            return Err(Error::InvalidArgument("empty composition".into()));
        };
        let d = first.dim();
        if let Some(m) = maps.iter().find(|m| m.dim() != d) {
            return Err(Error::dims(d, m.dim()));
        }
        Ok(NonexpansiveMap::Compose(maps))
    }

    pub fn identity(d: usize) -> Self {
        NonexpansiveMap::Affine { a: DMatrix::identity(d, d), b: Vector::zeros(d) }
    }

    /// `x ↦ -x`.
    pub fn negation(d: usize) -> Self {
        NonexpansiveMap::Affine { a: -DMatrix::identity(d, d), b: Vector::zeros(d) }
    }

    /// Exchange of coordinates `i` and `j`; an isometry for every `p`.
    pub fn swap(d: usize, i: usize, j: usize) -> Result<Self> {
        if i >= d || j >= d {
            return Err(Error::InvalidArgument(format!("swap index out of range for d = {d}")));
        }
        let mut a = DMatrix::identity(d, d);
        a.swap_rows(i, j);
        Ok(NonexpansiveMap::Affine { a, b: Vector::zeros(d) })
    }

    pub fn dim(&self) -> usize {
        match self {
            NonexpansiveMap::Affine { b, .. } => b.len(),
            NonexpansiveMap::Clamp { lo, .. } => lo.len(),
            NonexpansiveMap::Compose(maps) => maps[0].dim(),
        }
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        match self {
            NonexpansiveMap::Affine { a, b } => a * x + b,
            NonexpansiveMap::Clamp { lo, hi } => {
                Vector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].max(lo[i]).min(hi[i])))
            }
            NonexpansiveMap::Compose(maps) => {
                let mut y = x.clone();
                for m in maps {
                    y = m.apply(&y);
                }
                y
            }
        }
    }

    /// Largest absolute value appearing in offsets or bounds; used to size
    /// the sampling window when `C` is the whole space.
    pub(crate) fn scale(&self) -> f64 {
        let amax = |v: &Vector| v.iter().filter(|c| c.is_finite()).fold(0.0f64, |m, c| m.max(c.abs()));
        match self {
            NonexpansiveMap::Affine { b, .. } => amax(b),
            NonexpansiveMap::Clamp { lo, hi } => amax(lo).max(amax(hi)),
            NonexpansiveMap::Compose(maps) => maps.iter().map(|m| m.scale()).fold(0.0, f64::max),
        }
    }
}
