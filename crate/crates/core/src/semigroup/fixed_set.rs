//! Exact description of the common fixed set of affine and clamp generators.
//!
//! Each affine generator `x ↦ A x + b` contributes the linear system
//! `(I - A) x = b`; each clamp contributes its box. The common fixed set is
//! the solution space of the stacked system intersected with the boxes (and
//! with `C`):
//!
//! ```text
//! Fix(S) = { x0 + B y : y ∈ R^r } ∩ [lo, hi] ∩ C
//! ```
//!
//! with `B` an orthonormal basis of the null space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{Domain, NonexpansiveMap, Representation};
use crate::error::{Error, Result};
use crate::lp_space::{LpSpace, Vector};

const RANK_TOL: f64 = 1e-10;
const DYKSTRA_TOL: f64 = 1e-13;
const DYKSTRA_MAX_CYCLES: usize = 200_000;
const FEASIBILITY_TOL: f64 = 1e-8;
const SAMPLE_ATTEMPTS_PER_POINT: usize = 10_000;

#[derive(Debug, Clone)]
pub struct FixedSet {
    space: LpSpace,
    /// Particular solution of the stacked affine system.
    point: Vector,
    /// Orthonormal columns spanning the affine directions (d × r).
    basis: DMatrix<f64>,
    /// Stacked `(I - A_i)` and `b_i`, kept for residual checks.
    system: Option<(DMatrix<f64>, Vector)>,
    bounds: Option<(Vector, Vector)>,
    /// `ℓ^p` ball inherited from a ball-shaped domain.
    ball: Option<(Vector, f64)>,
}

impl FixedSet {
    pub(super) fn from_representation(rep: &Representation) -> Result<Self> {
        let space = *rep.space();
        let d = space.dim();
        let mut rows: Vec<(DMatrix<f64>, Vector)> = Vec::new();
        let mut bounds: Option<(Vector, Vector)> = None;

        let mut meet_box = |lo: &Vector, hi: &Vector| {
            bounds = Some(match bounds.take() {
                None => (lo.clone(), hi.clone()),
                Some((l, h)) => (l.zip_map(lo, f64::max), h.zip_map(hi, f64::min)),
            });
        };

        for g in rep.generators() {
            match g {
                NonexpansiveMap::Affine { a, b } => rows.push((DMatrix::identity(d, d) - a, b.clone())),
                NonexpansiveMap::Clamp { lo, hi } => meet_box(lo, hi),
                NonexpansiveMap::Compose(_) => {
                    return Err(Error::Unsupported("fixed-set oracle handles affine and clamp generators only".into()))
                }
            }
        }
        let mut ball = None;
        match rep.domain() {
            Domain::Whole => {}
            Domain::Box { lo, hi } => meet_box(lo, hi),
            Domain::Ball { center, radius } => ball = Some((center.clone(), *radius)),
        }

        if let Some((lo, hi)) = &bounds {
            if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                return Err(Error::Infeasible("clamp boxes do not intersect".into()));
            }
        }

        let (point, basis, system) = if rows.is_empty() {
            (Vector::zeros(d), DMatrix::identity(d, d), None)
        } else {
            let m = DMatrix::from_fn(rows.len() * d, d, |r, c| rows[r / d].0[(r % d, c)]);
            let rhs = DVector::from_fn(rows.len() * d, |r, _| rows[r / d].1[r % d]);
            let (point, basis) = solve_stacked(&m, &rhs)?;
            (point, basis, Some((m, rhs)))
        };

        let set = FixedSet { space, point, basis, system, bounds, ball };
        set.check_feasible()?;
        Ok(set)
    }

    pub fn space(&self) -> &LpSpace {
        &self.space
    }

    /// Dimension `r` of the affine part.
    pub fn affine_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn point(&self) -> &Vector {
        &self.point
    }

    pub fn bounds(&self) -> Option<(&Vector, &Vector)> {
        self.bounds.as_ref().map(|(l, h)| (l, h))
    }

    fn has_affine_constraint(&self) -> bool {
        self.affine_dim() < self.space.dim()
    }

    /// `max_i |((I - A) x - b)_i|` over the stacked system.
    pub fn affine_residual(&self, x: &Vector) -> f64 {
        match &self.system {
            None => 0.0,
            Some((m, rhs)) => (m * x - rhs).amax(),
        }
    }

    /// Membership up to `tol` (scaled by `1 + ‖x‖∞` for the affine part).
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        if x.len() != self.space.dim() {
            return false;
        }
        if self.affine_residual(x) > tol * (1.0 + x.amax()) {
            return false;
        }
        if let Some((lo, hi)) = &self.bounds {
            if (0..x.len()).any(|i| x[i] < lo[i] - tol || x[i] > hi[i] + tol) {
                return false;
            }
        }
        if let Some((c, r)) = &self.ball {
            if self.space.dist_unchecked(x, c) > r + tol * (1.0 + r) {
                return false;
            }
        }
        true
    }

    fn project_affine(&self, u: &Vector) -> Vector {
        if !self.has_affine_constraint() {
            return u.clone();
        }
        let coeffs = self.basis.transpose() * (u - &self.point);
        &self.point + &self.basis * coeffs
    }

    fn project_box(&self, u: &Vector) -> Vector {
        match &self.bounds {
            None => u.clone(),
            Some((lo, hi)) => Vector::from_fn(u.len(), |i, _| u[i].max(lo[i]).min(hi[i])),
        }
    }

    /// Euclidean projection onto the ball; only meaningful when the ball is
    /// Euclidean too, which the callers guarantee (`p = 2`) or do not rely on.
    fn project_ball(&self, u: &Vector) -> Vector {
        match &self.ball {
            None => u.clone(),
            Some((c, r)) => {
                let diff = u - c;
                let n = diff.norm();
                if n <= *r {
                    u.clone()
                } else {
                    c + diff * (r / n)
                }
            }
        }
    }

    /// Euclidean nearest point of the set to `u`.
    ///
    /// Closed form when only one constraint type is present, Dykstra's
    /// alternating projections otherwise.
    pub(crate) fn euclidean_projection(&self, u: &Vector) -> Vector {
        let affine = self.has_affine_constraint();
        let boxed = self.bounds.is_some();
        let balled = self.ball.is_some();
        match (affine, boxed, balled) {
            (_, false, false) => return self.project_affine(u),
            (false, true, false) => return self.project_box(u),
            (false, false, true) => return self.project_ball(u),
            _ => {}
        }

        let mut projections: Vec<Projection<'_>> = Vec::new();
        if affine {
            projections.push(Box::new(|v| self.project_affine(v)));
        }
        if boxed {
            projections.push(Box::new(|v| self.project_box(v)));
        }
        if balled {
            projections.push(Box::new(|v| self.project_ball(v)));
        }
        dykstra(u, &projections)
    }

    /// Metric projection onto the set. Only for `p = 2`, where it coincides
    /// with the sunny nonexpansive retraction.
    pub fn project(&self, u: &Vector) -> Result<Vector> {
        if !self.space.is_hilbert() {
            return Err(Error::Unsupported(format!(
                "metric projection oracle needs p = 2 (got p = {})",
                self.space.p()
            )));
        }
        self.space.check_vector(u)?;
        Ok(self.euclidean_projection(u))
    }

    fn check_feasible(&self) -> Result<()> {
        let start = match &self.bounds {
            Some((lo, hi)) => (lo + hi) * 0.5,
            None => self.point.clone(),
        };
        let start = start.map(|v| if v.is_finite() { v } else { 0.0 });
        let candidate = self.euclidean_projection(&start);
        if !self.contains(&candidate, FEASIBILITY_TOL) {
            return Err(Error::Infeasible("affine fixed-point system does not meet the clamp boxes / domain".into()));
        }
        Ok(())
    }

    /// Draws `count` points of the set, uniform over the affine
    /// parametrisation `y ↦ x0 + B y` restricted to a bounded window.
    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Result<Vec<Vector>> {
        let d = self.space.dim();
        let r = self.affine_dim();
        if r == 0 {
            return Ok(vec![self.point.clone(); count]);
        }

        let center = self.euclidean_projection(&self.point);
        let radius = match (&self.bounds, &self.ball) {
            (Some((lo, hi)), _) if (hi - lo).iter().all(|v| v.is_finite()) => (hi - lo).norm(),
            (_, Some((_, rad))) => rad * (d as f64).sqrt() * 2.0,
            _ => 1.0 + self.point.amax(),
        };
        // Window centred on a feasible point so the accepted region is non-empty.
        let offset = self.basis.transpose() * (&center - &self.point);

        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count {
            attempts += 1;
            if attempts > SAMPLE_ATTEMPTS_PER_POINT * count.max(1) {
                return Err(Error::Infeasible("rejection sampling of the fixed set made no progress".into()));
            }
            let y = DVector::from_fn(r, |i, _| offset[i] + rng.random_range(-radius..=radius));
            let x = &self.point + &self.basis * y;
            if self.contains(&x, 1e-12) {
                out.push(x);
            }
        }
        Ok(out)
    }
}

/// Minimum-norm solution and null-space basis of `m x = rhs` via SVD.
fn solve_stacked(m: &DMatrix<f64>, rhs: &Vector) -> Result<(Vector, DMatrix<f64>)> {
    let d = m.ncols();
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_TOL * smax.max(1.0);

    let mut point = Vector::zeros(d);
    let mut null_rows = Vec::new();
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        let v = v_t.row(i).transpose();
        if sigma > cutoff {
            point += v * (u.column(i).dot(rhs) / sigma);
        } else {
            null_rows.push(v);
        }
    }
    // Thin SVD of a tall matrix returns all d right singular vectors.
    debug_assert_eq!(svd.singular_values.len(), d);

    let residual = (m * &point - rhs).amax();
    if residual > 1e-9 * (1.0 + rhs.amax()) {
        return Err(Error::Infeasible(format!(
            "generators have no common affine fixed point (residual {residual:.3e})"
        )));
    }
    let basis = if null_rows.is_empty() { DMatrix::zeros(d, 0) } else { DMatrix::from_columns(&null_rows) };
    Ok((point, basis))
}

/// Dykstra's alternating projections onto the intersection of convex sets.
type Projection<'a> = Box<dyn Fn(&Vector) -> Vector + 'a>;

fn dykstra(u: &Vector, projections: &[Projection<'_>]) -> Vector {
    let mut x = u.clone();
    let mut increments = vec![Vector::zeros(u.len()); projections.len()];
    for _ in 0..DYKSTRA_MAX_CYCLES {
        let prev = x.clone();
        for (proj, inc) in projections.iter().zip(increments.iter_mut()) {
            let shifted = &x + &*inc;
            let next = proj(&shifted);
            *inc = shifted - &next;
            x = next;
        }
        if (&x - &prev).amax() <= DYKSTRA_TOL * (1.0 + x.amax()) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp_space::vector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_clamp(d: usize) -> NonexpansiveMap {
        NonexpansiveMap::clamp(Vector::zeros(d), Vector::from_element(d, 1.0)).unwrap()
    }

    fn rep(p: f64, gens: Vec<NonexpansiveMap>, domain: Domain) -> Representation {
        let d = gens[0].dim();
        Representation::new(LpSpace::new(d, p).unwrap(), gens, domain).unwrap()
    }

    #[test]
    fn diagonal_segment() {
        let r = rep(2.0, vec![unit_clamp(2), NonexpansiveMap::swap(2, 0, 1).unwrap()], Domain::Whole);
        let fs = r.fixed_set_oracle().unwrap();
        assert_eq!(fs.affine_dim(), 1);
        for t in [0.0, 0.3, 1.0] {
            assert!(fs.contains(&vector(&[t, t]), 1e-12));
        }
        assert!(!fs.contains(&vector(&[0.3, 0.4]), 1e-12));
        assert!(!fs.contains(&vector(&[1.2, 1.2]), 1e-12));
        let p = fs.project(&vector(&[1.0, 0.0])).unwrap();
        assert!((p - vector(&[0.5, 0.5])).amax() < 1e-12);
        // Beyond the end of the segment the box constraint is active.
        let p = fs.project(&vector(&[3.0, 2.0])).unwrap();
        assert!((p - vector(&[1.0, 1.0])).amax() < 1e-9);
    }

    #[test]
    fn negation_fixes_only_origin() {
        let r = rep(2.0, vec![NonexpansiveMap::negation(1)], Domain::Whole);
        let fs = r.fixed_set_oracle().unwrap();
        assert_eq!(fs.affine_dim(), 0);
        assert!(fs.contains(&vector(&[0.0]), 1e-12));
        assert!(!fs.contains(&vector(&[1e-6]), 1e-12));

        let r2 = rep(2.0, vec![NonexpansiveMap::negation(2)], Domain::Whole);
        let p = r2.fixed_set_oracle().unwrap().project(&vector(&[3.0, 4.0])).unwrap();
        assert_eq!(p, vector(&[0.0, 0.0]));
    }

    #[test]
    fn identity_fixes_the_domain() {
        let r = rep(2.0, vec![NonexpansiveMap::identity(2)], Domain::Whole);
        let fs = r.fixed_set_oracle().unwrap();
        assert_eq!(fs.affine_dim(), 2);
        assert!(fs.contains(&vector(&[123.0, -4.0]), 1e-12));

        let boxed = rep(
            3.0,
            vec![NonexpansiveMap::identity(2)],
            Domain::Box { lo: vector(&[0.0, 0.0]), hi: vector(&[2.0, 2.0]) },
        );
        let fs = boxed.fixed_set_oracle().unwrap();
        assert!(fs.contains(&vector(&[1.5, 0.5]), 1e-12));
        assert!(!fs.contains(&vector(&[2.5, 0.5]), 1e-12));
    }

    #[test]
    fn unsupported_and_infeasible() {
        let comp = NonexpansiveMap::compose(vec![unit_clamp(2), NonexpansiveMap::swap(2, 0, 1).unwrap()]).unwrap();
        assert!(matches!(rep(2.0, vec![comp], Domain::Whole).fixed_set_oracle(), Err(Error::Unsupported(_))));

        let shift = NonexpansiveMap::Affine { a: DMatrix::identity(1, 1), b: vector(&[1.0]) };
        assert!(matches!(rep(2.0, vec![shift], Domain::Whole).fixed_set_oracle(), Err(Error::Infeasible(_))));

        // -x fixes only 0, which lies outside the clamp box [1, 2].
        let far = NonexpansiveMap::clamp(vector(&[1.0]), vector(&[2.0])).unwrap();
        assert!(matches!(
            rep(2.0, vec![NonexpansiveMap::negation(1), far], Domain::Whole).fixed_set_oracle(),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn projection_requires_hilbert_space() {
        let r = rep(3.0, vec![NonexpansiveMap::negation(2)], Domain::Whole);
        assert!(matches!(r.fixed_set_oracle().unwrap().project(&vector(&[1.0, 1.0])), Err(Error::Unsupported(_))));
    }

    #[test]
    fn samples_are_sound_and_spread() {
        let r = rep(2.0, vec![unit_clamp(2), NonexpansiveMap::swap(2, 0, 1).unwrap()], Domain::Whole);
        let fs = r.fixed_set_oracle().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = fs.sample(200, &mut rng).unwrap();
        for p in &pts {
            for res in r.generator_residuals(p) {
                assert!(res <= 1e-9);
            }
        }
        let ts: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        assert!(ts.iter().any(|&t| t < 0.2) && ts.iter().any(|&t| t > 0.8));
    }

    #[test]
    fn dykstra_on_plane_and_box() {
        // Fix = {x1 = x2 = x3} ∩ [0,1]^3 with a 3-cycle permutation.
        let perm = NonexpansiveMap::Affine {
            a: DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]),
            b: Vector::zeros(3),
        };
        let r = rep(2.0, vec![unit_clamp(3), perm], Domain::Whole);
        let fs = r.fixed_set_oracle().unwrap();
        let p = fs.project(&vector(&[3.0, 3.0, 6.0])).unwrap();
        assert!((p - vector(&[1.0, 1.0, 1.0])).amax() < 1e-9);
        let p = fs.project(&vector(&[0.2, 0.5, 0.2])).unwrap();
        assert!((p - vector(&[0.3, 0.3, 0.3])).amax() < 1e-12);
    }
}
