//! The ambient space `E = (R^d, ‖·‖_p)` for `1 < p < ∞`.
//!
//! Elements of `E` and of its dual `E* = (R^d, ‖·‖_q)`, `q = p/(p-1)`, share
//! the same coordinate representation; the pairing is the plain dot product.
//! For these exponents the space is smooth and uniformly convex, so the
//! normalized duality mapping is single valued and given coordinatewise by
//!
//! ```text
//! J(x)_i = ‖x‖_p^(2-p) · |x_i|^(p-1) · sign(x_i)
//! ```
//!
//! which is the gradient of `x ↦ ½‖x‖_p²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates of a point of `E` (or of a functional in `E*`).
pub type Vector = DVector<f64>;

/// Builds a [`Vector`] from a slice.
pub fn vector(coords: &[f64]) -> Vector {
    DVector::from_column_slice(coords)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpSpace {
    d: usize,
    p: f64,
}

impl LpSpace {
    pub fn new(d: usize, p: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidArgument(format!("exponent p = {p} outside (1, inf)")));
        }
        Ok(Self { d, p })
    }

    /// Euclidean space of dimension `d`.
    pub fn hilbert(d: usize) -> Result<Self> {
        Self::new(d, 2.0)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent `q = p / (p - 1)`.
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn is_hilbert(&self) -> bool {
        self.p == 2.0
    }

    pub fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::dims(self.d, x.len()));
        }
        Ok(())
    }

    /// Like [`check_dim`](Self::check_dim) but also rejects NaN / infinite entries.
    pub fn check_vector(&self, x: &Vector) -> Result<()> {
        self.check_dim(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("vector has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn zero(&self) -> Vector {
        DVector::zeros(self.d)
    }

    pub fn norm(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.norm_unchecked(x))
    }

    pub(crate) fn norm_unchecked(&self, x: &Vector) -> f64 {
        lp_norm(x.as_slice(), self.p)
    }

    /// Norm of `x` read as a functional, i.e. its `ℓ^q` norm.
    pub fn dual_norm(&self, f: &Vector) -> Result<f64> {
        self.check_dim(f)?;
        Ok(lp_norm(f.as_slice(), self.q()))
    }

    pub fn dist(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self.dist_unchecked(x, y))
    }

    pub(crate) fn dist_unchecked(&self, x: &Vector, y: &Vector) -> f64 {
        self.norm_unchecked(&(x - y))
    }

    /// Normalized duality mapping; `J(0) = 0`, identity when `p = 2`.
    pub fn duality_map(&self, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        Ok(self.duality_map_unchecked(x))
    }

    pub(crate) fn duality_map_unchecked(&self, x: &Vector) -> Vector {
        if self.p == 2.0 {
            return x.clone();
        }
        let norm = self.norm_unchecked(x);
        if norm == 0.0 {
            return self.zero();
        }
        let p = self.p;
        let scale = norm.powf(2.0 - p);
        x.map(|xi| scale * xi.abs().powf(p - 1.0).copysign(xi))
    }

    /// `⟨x, J(y)⟩`, the quantity every inequality in this crate is phrased in.
    pub fn pair_with_duality(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(x.dot(&self.duality_map_unchecked(y)))
    }

    /// Upper bound on the operator norm of `a` acting on `(R^d, ‖·‖_p)`.
    ///
    /// Exact (largest singular value) for `p = 2`; otherwise the Riesz–Thorin
    /// interpolation bound `‖A‖_1^(1/p) · ‖A‖_∞^(1/q)` between the max column
    /// sum and max row sum norms.
    pub fn operator_norm_bound(&self, a: &DMatrix<f64>) -> Result<f64> {
        if a.nrows() != self.d || a.ncols() != self.d {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{}, expected {}x{}",
                a.nrows(),
                a.ncols(),
                self.d,
                self.d
            )));
        }
        if self.p == 2.0 {
            let sv = a.clone().singular_values();
            return Ok(sv.iter().cloned().fold(0.0, f64::max));
        }
        let col_sum = (0..a.ncols()).map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let row_sum = (0..a.nrows()).map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        Ok(col_sum.powf(1.0 / self.p) * row_sum.powf(1.0 / self.q()))
    }
}

/// Plain dual pairing `⟨x, f⟩ = Σ x_i f_i`.
pub fn pairing(x: &Vector, f: &Vector) -> Result<f64> {
    if x.len() != f.len() {
        return Err(Error::dims(x.len(), f.len()));
    }
    Ok(x.dot(f))
}

fn lp_norm(x: &[f64], p: f64) -> f64 {
    // No rescaling: fine for the desk-scale magnitudes used here, overflows
    // once |x_i|^p exceeds f64::MAX.
    if p == 2.0 {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Central-difference gradient of `½‖·‖_p²`; independent of `duality_map`.
    fn numeric_gradient(p: f64, x: &[f64], h: f64) -> Vec<f64> {
        let half_sq = |v: &[f64]| {
            let n = v.iter().map(|c| c.abs().powf(p)).sum::<f64>().powf(1.0 / p);
            0.5 * n * n
        };
        (0..x.len())
            .map(|i| {
                let mut plus = x.to_vec();
                let mut minus = x.to_vec();
                plus[i] += h;
                minus[i] -= h;
                (half_sq(&plus) - half_sq(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(LpSpace::new(2, 1.0).is_err());
        assert!(LpSpace::new(2, 0.5).is_err());
        assert!(LpSpace::new(2, f64::INFINITY).is_err());
        assert!(LpSpace::new(2, f64::NAN).is_err());
        assert!(LpSpace::new(0, 2.0).is_err());
        assert!(LpSpace::new(1, 1.0001).is_ok());
    }

    #[test]
    fn norm_examples() {
        let e2 = LpSpace::hilbert(2).unwrap();
        assert_eq!(e2.norm(&vector(&[3.0, 4.0])).unwrap(), 5.0);
        for p in [1.5, 2.0, 3.0, 7.0] {
            let sp = LpSpace::new(3, p).unwrap();
            assert_eq!(sp.norm(&sp.zero()).unwrap(), 0.0);
        }
        // 2^(1/4), frozen from a 30-digit evaluation.
        let e4 = LpSpace::new(2, 4.0).unwrap();
        let n = e4.norm(&vector(&[1.0, 1.0])).unwrap();
        assert!((n - 1.189_207_115_002_721).abs() < 1e-15);
    }

    #[test]
    fn norm_rejects_wrong_dimension() {
        let sp = LpSpace::hilbert(2).unwrap();
        assert!(matches!(sp.norm(&vector(&[1.0, 2.0, 3.0])), Err(Error::DimensionMismatch { expected: 2, found: 3 })));
        assert!(pairing(&vector(&[1.0]), &vector(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pairing(&vector(&[1.0, 2.0]), &vector(&[3.0, -1.0])).unwrap(), 1.0);
        assert_eq!(pairing(&vector(&[0.0, 0.0]), &vector(&[3.0, -1.0])).unwrap(), 0.0);
        let e4 = LpSpace::new(2, 4.0).unwrap();
        let x = vector(&[1.0, 1.0]);
        let v = pairing(&x, &e4.duality_map(&x).unwrap()).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn duality_map_examples() {
        let e2 = LpSpace::hilbert(2).unwrap();
        let x = vector(&[3.0, 4.0]);
        assert_eq!(e2.duality_map(&x).unwrap(), x);
        for p in [1.5, 3.0] {
            let sp = LpSpace::new(2, p).unwrap();
            assert_eq!(sp.duality_map(&sp.zero()).unwrap(), sp.zero());
        }

        let e4 = LpSpace::new(2, 4.0).unwrap();
        let j = e4.duality_map(&vector(&[1.0, 1.0])).unwrap();
        let fd = numeric_gradient(4.0, &[1.0, 1.0], 1e-6);
        for i in 0..2 {
            assert!((j[i] - fd[i]).abs() < 1e-6);
            assert!((j[i] - 0.5f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn duality_map_keeps_zero_coordinates() {
        let sp = LpSpace::new(3, 1.5).unwrap();
        let j = sp.duality_map(&vector(&[0.0, -2.0, 1.0])).unwrap();
        assert_eq!(j[0], 0.0);
        assert!(j[1] < 0.0 && j[2] > 0.0);
    }

    #[test]
    fn operator_norm_bounds() {
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        for p in [1.5, 2.0, 4.0] {
            let sp = LpSpace::new(2, p).unwrap();
            assert!((sp.operator_norm_bound(&swap).unwrap() - 1.0).abs() < 1e-12);
        }
        // Averaging matrix: exact norm 1 for p = 2, bound 1 elsewhere.
        let avg = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let sp = LpSpace::new(2, 3.0).unwrap();
        assert!((sp.operator_norm_bound(&avg).unwrap() - 1.0).abs() < 1e-12);
        // Rows sum to 2, columns to 1: interpolation gives 2^(1/q).
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let b = sp.operator_norm_bound(&skew).unwrap();
        assert!((b - 2f64.powf(2.0 / 3.0)).abs() < 1e-12);
    }

    fn space_and_vector() -> impl Strategy<Value = (f64, Vec<f64>)> {
        (prop_oneof![Just(1.5), Just(2.0), Just(3.0), 1.1f64..6.0], prop::collection::vec(-10.0f64..10.0, 1..7))
    }

    proptest! {
        #[test]
        fn duality_map_identities((p, xs) in space_and_vector()) {
            let sp = LpSpace::new(xs.len(), p).unwrap();
            let x = vector(&xs);
            let j = sp.duality_map(&x).unwrap();
            let n = sp.norm(&x).unwrap();
            prop_assert!((x.dot(&j) - n * n).abs() <= 1e-10 * (1.0 + n * n));
            prop_assert!((sp.dual_norm(&j).unwrap() - n).abs() <= 1e-10 * (1.0 + n));
        }

        #[test]
        fn duality_map_positively_homogeneous((p, xs) in space_and_vector(), lambda in 1e-3f64..1e3) {
            let sp = LpSpace::new(xs.len(), p).unwrap();
            let x = vector(&xs);
            let scaled = sp.duality_map(&(&x * lambda)).unwrap();
            let expect = sp.duality_map(&x).unwrap() * lambda;
            for (a, b) in scaled.iter().zip(expect.iter()) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn duality_map_is_gradient((p, xs) in space_and_vector()) {
            // Keep clear of coordinate zeros where |t|^(p-1) is not Lipschitz.
            let xs: Vec<f64> = xs.iter().map(|&v| if v.abs() < 1e-3 { 1e-3f64.copysign(v) + v } else { v }).collect();
            let sp = LpSpace::new(xs.len(), p).unwrap();
            let j = sp.duality_map(&vector(&xs)).unwrap();
            let fd = numeric_gradient(p, &xs, 1e-6);
            for (a, b) in j.iter().zip(fd.iter()) {
                prop_assert!((a - b).abs() <= 1e-5, "J = {a}, fd = {b}");
            }
        }

        #[test]
        fn hilbert_duality_is_identity(xs in prop::collection::vec(-1e3f64..1e3, 1..8)) {
            let sp = LpSpace::hilbert(xs.len()).unwrap();
            let x = vector(&xs);
            let j = sp.duality_map(&x).unwrap();
            for (a, b) in j.iter().zip(x.iter()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }
}
