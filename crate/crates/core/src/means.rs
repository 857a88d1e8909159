//! Finitely supported means on `B(N^k)` and the averaged operator `T_μ`.
//!
//! A finitely supported probability vector `μ` is a mean on all of `B(S)`,
//! and for it `T_μ x = Σ_s μ(s) T_s x` is an honest convex combination of the
//! orbit. The canonical left regular sequence is the Cesàro box mean
//! `μ_n = n^{-k} Σ_{s ∈ {0..n-1}^k} δ_s`, whose defect against a unit shift
//! is `‖l*_{e_i} μ_n - μ_n‖ = 2/n`.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::lp_space::Vector;
use crate::semigroup::{Representation, SemigroupElement};

/// Allowed deviation of `Σ μ(s)` from 1.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// Uniform on `{0..n-1}^k`.
    CesaroBox {
        n: usize,
    },
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMean {
    k: usize,
    /// Sorted lexicographically by semigroup element.
    support: Vec<(SemigroupElement, f64)>,
    shape: Shape,
}

impl FiniteMean {
    pub fn new(k: usize, mut support: Vec<(SemigroupElement, f64)>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("means need k >= 1".into()));
        }
        if support.is_empty() {
            return Err(Error::InvalidArgument("mean with empty support".into()));
        }
        if let Some((s, _)) = support.iter().find(|(s, _)| s.rank() != k) {
            return Err(Error::dims(k, s.rank()));
        }
        if support.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("mean weights must be finite and >= 0".into()));
        }
        support.sort_by(|a, b| a.0.cmp(&b.0));
        if support.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("duplicate support element".into()));
        }
        let mass = kahan_sum(support.iter().map(|(_, w)| *w));
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {mass}, not 1")));
        }
        Ok(Self { k, support, shape: Shape::General })
    }

    pub fn point_mass(s: SemigroupElement) -> Self {
        Self { k: s.rank(), support: vec![(s, 1.0)], shape: Shape::General }
    }

    pub fn rank(&self) -> usize {
        self.k
    }

    pub fn support(&self) -> &[(SemigroupElement, f64)] {
        &self.support
    }

    /// Side length `n` when this is a Cesàro box mean.
    pub fn cesaro_size(&self) -> Option<usize> {
        match self.shape {
            Shape::CesaroBox { n } => Some(n),
            Shape::General => None,
        }
    }

    /// `μ(f) = Σ μ(s) f(s)`.
    pub fn evaluate<F: Fn(&SemigroupElement) -> f64>(&self, f: F) -> f64 {
        kahan_sum(self.support.iter().map(|(s, w)| w * f(s)))
    }

    /// `l*_t μ`, the pushforward of `μ` under `s ↦ t + s`.
    pub fn shifted(&self, shift: &SemigroupElement) -> Result<Self> {
        if shift.rank() != self.k {
            return Err(Error::dims(self.k, shift.rank()));
        }
        let support = self.support.iter().map(|(s, w)| Ok((shift.add(s)?, *w))).collect::<Result<Vec<_>>>()?;
        Ok(Self { k: self.k, support, shape: Shape::General })
    }
}

/// Uniform mean on the box `{0, …, n-1}^k`.
pub fn cesaro_mean(n: usize, k: usize) -> Result<FiniteMean> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument("cesaro_mean needs n >= 1 and k >= 1".into()));
    }
    let count = n.checked_pow(k as u32).ok_or_else(|| Error::InvalidArgument(format!("box {n}^{k} is too large")))?;
    let w = 1.0 / count as f64;
    let support = BoxIndices::new(n, k).map(|s| (SemigroupElement::new(s).expect("k >= 1"), w)).collect();
    Ok(FiniteMean { k, support, shape: Shape::CesaroBox { n } })
}

/// Total-variation distance `‖l*_t μ - μ‖ = Σ_s |l*_t μ(s) - μ(s)|`, exact in
/// the sense that overlapping masses cancel before summation.
pub fn regularity_defect(mu: &FiniteMean, shift: &SemigroupElement) -> Result<f64> {
    let pushed = mu.shifted(shift)?;
    let mut diff: BTreeMap<&SemigroupElement, f64> = BTreeMap::new();
    for (s, w) in &mu.support {
        *diff.entry(s).or_insert(0.0) -= w;
    }
    for (s, w) in &pushed.support {
        *diff.entry(s).or_insert(0.0) += w;
    }
    Ok(kahan_sum(diff.values().map(|v| v.abs())))
}

/// `T_μ x = Σ_s μ(s) T_s x`.
///
/// Cesàro box means are summed axis by axis with exact cycle detection: once
/// an orbit `y, G y, G² y, …` revisits a bit-identical point the remainder of
/// the line is periodic and is accounted for by multiplicities. Without
/// repetitions this costs `n^k` generator applications, like [`mean_orbit_cache`].
pub fn apply_mean(rep: &Representation, mu: &FiniteMean, x: &Vector) -> Result<Vector> {
    if mu.rank() != rep.rank() {
        return Err(Error::dims(rep.rank(), mu.rank()));
    }
    rep.check_point(x)?;
    Ok(apply_mean_unchecked(rep, mu, x))
}

pub(crate) fn apply_mean_unchecked(rep: &Representation, mu: &FiniteMean, x: &Vector) -> Vector {
    match mu.shape {
        Shape::CesaroBox { n } => {
            let total = line_sum(rep, rep.rank(), x, n);
            total / (n as f64).powi(rep.rank() as i32)
        }
        Shape::General => {
            let mut acc = KahanVector::zeros(x.len());
            for (s, w) in &mu.support {
                acc.add_scaled(&rep.apply_unchecked(s, x), *w);
            }
            acc.sum
        }
    }
}

/// `Σ_{m<n} L_{axis-1}(G_axis^m y)` with `L_0 = id`; generator `axis` is one-based.
fn line_sum(rep: &Representation, axis: usize, y: &Vector, n: usize) -> Vector {
    let g = &rep.generators()[axis - 1];
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut orbit: Vec<Vector> = Vec::new();
    let mut cycle: Option<(usize, usize)> = None;
    let mut cur = y.clone();
    for m in 0..n {
        let key: Vec<u64> = cur.iter().map(|v| v.to_bits()).collect();
        if let Some(&start) = seen.get(&key) {
            cycle = Some((start, m - start));
            break;
        }
        seen.insert(key, m);
        if m + 1 < n {
            let next = g.apply(&cur);
            orbit.push(std::mem::replace(&mut cur, next));
        } else {
            orbit.push(cur.clone());
        }
    }

    let mut acc = KahanVector::zeros(y.len());
    for (t, point) in orbit.iter().enumerate() {
        let multiplicity = match cycle {
            Some((start, period)) if t >= start => (n - 1 - t) / period + 1,
            _ => 1,
        };
        let inner = if axis == 1 { point.clone() } else { line_sum(rep, axis - 1, point, n) };
        acc.add_scaled(&inner, multiplicity as f64);
    }
    acc.sum
}

/// All `T_s x` for `s ∈ {0..n-1}^k`, stored in lexicographic order.
#[derive(Debug, Clone)]
pub struct OrbitCache {
    n: usize,
    k: usize,
    entries: Vec<Vector>,
}

impl OrbitCache {
    pub fn get(&self, s: &SemigroupElement) -> Option<&Vector> {
        if s.rank() != self.k || s.exponents().iter().any(|&e| e >= self.n) {
            return None;
        }
        let idx = s.exponents().iter().fold(0, |acc, &e| acc * self.n + e);
        Some(&self.entries[idx])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Iterates `(s, T_s x)` in lexicographic order of `s`.
    pub fn iter(&self) -> impl Iterator<Item = (SemigroupElement, &Vector)> {
        BoxIndices::new(self.n, self.k).map(|s| SemigroupElement::new(s).expect("k >= 1")).zip(self.entries.iter())
    }

    /// Uniform average of the table, i.e. `T_{μ_n} x` for the Cesàro box mean.
    pub fn average(&self) -> Vector {
        let w = 1.0 / self.entries.len() as f64;
        let mut acc = KahanVector::zeros(self.entries[0].len());
        for e in &self.entries {
            acc.add_scaled(e, w);
        }
        acc.sum
    }
}

/// Tabulates the orbit over the Cesàro box by dynamic programming: the entry
/// for `s` is `G_j` applied to the entry for `s - e_j`, `j` the first nonzero
/// coordinate, which reproduces the composition order of [`Representation::apply`].
pub fn mean_orbit_cache(rep: &Representation, n: usize, x: &Vector) -> Result<OrbitCache> {
    if n == 0 {
        return Err(Error::InvalidArgument("orbit cache needs n >= 1".into()));
    }
    rep.check_point(x)?;
    let k = rep.rank();
    let count = n.checked_pow(k as u32).ok_or_else(|| Error::InvalidArgument(format!("box {n}^{k} is too large")))?;
    let mut entries: Vec<Vector> = Vec::with_capacity(count);
    let strides: Vec<usize> = (0..k).map(|j| n.pow((k - 1 - j) as u32)).collect();
    for (idx, s) in BoxIndices::new(n, k).enumerate() {
        let entry = match s.iter().position(|&e| e > 0) {
            None => x.clone(),
            Some(j) => rep.apply_generator(j, &entries[idx - strides[j]]),
        };
        entries.push(entry);
    }
    Ok(OrbitCache { n, k, entries })
}

/// Lexicographic enumeration of `{0..n-1}^k`, last coordinate fastest.
struct BoxIndices {
    n: usize,
    next: Option<Vec<usize>>,
}

impl BoxIndices {
    fn new(n: usize, k: usize) -> Self {
        Self { n, next: (n > 0).then(|| vec![0; k]) }
    }
}

impl Iterator for BoxIndices {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for i in (0..succ.len()).rev() {
            succ[i] += 1;
            if succ[i] < self.n {
                self.next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(current)
    }
}

struct KahanVector {
    sum: Vector,
    comp: Vector,
}

impl KahanVector {
    fn zeros(d: usize) -> Self {
        Self { sum: Vector::zeros(d), comp: Vector::zeros(d) }
    }

    fn add_scaled(&mut self, v: &Vector, w: f64) {
        for i in 0..v.len() {
            let y = w * v[i] - self.comp[i];
            let t = self.sum[i] + y;
            self.comp[i] = (t - self.sum[i]) - y;
            self.sum[i] = t;
        }
    }
}

fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}
