//! Linear subspaces of ℝⁿ stored as orthonormal column frames.
//!
//! Every constructor funnels through [`Subspace::span`], which decides the
//! rank from the singular values of the spanning set and then rebuilds the
//! frame from the orthogonal projector alone. Two spanning sets of the same
//! subspace therefore produce the same frame (up to rounding), which keeps
//! reports deterministic and makes coordinate subspaces come out with
//! coordinate frames.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Numeric thresholds shared by every rank and residual decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Relative singular-value cutoff used for rank decisions.
    pub rank_rel_tol: f64,
    /// Max-norm cutoff for matrix and vector residuals.
    pub residual_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rank_rel_tol: 1e-9,
            residual_tol: 1e-9,
        }
    }
}

impl Tolerance {
    pub fn new(rank_rel_tol: f64, residual_tol: f64) -> Result<Self> {
        let t = Self {
            rank_rel_tol,
            residual_tol,
        };
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [("rank_rel_tol", self.rank_rel_tol), ("residual_tol", self.residual_tol)] {
            if !(v > 0.0 && v < 1e-2) {
                return Err(Error::InvalidTolerance(format!("{name} = {v} must lie in (0, 1e-2)")));
            }
        }
        Ok(())
    }
}

/// A linear subspace of ℝⁿ. The frame is `n × d` with orthonormal columns;
/// `d = 0` is the zero subspace.
#[derive(Clone, Debug)]
pub struct Subspace {
    n: usize,
    frame: DMatrix<f64>,
}

impl PartialEq for Subspace {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.frame == other.frame
    }
}

impl Subspace {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            frame: DMatrix::zeros(n, 0),
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            n,
            frame: DMatrix::identity(n, n),
        }
    }

    /// Span of the standard basis vectors with the given 0-based indices.
    pub fn coordinate(n: usize, indices: &[usize]) -> Self {
        let mut idx: Vec<usize> = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        let mut frame = DMatrix::zeros(n, idx.len());
        for (col, &i) in idx.iter().enumerate() {
            frame[(i, col)] = 1.0;
        }
        Self { n, frame }
    }

    /// Orthonormalizes a list of vectors (all of length `n`).
    pub fn from_vectors(n: usize, vectors: &[Vec<f64>], tol: &Tolerance) -> Result<Self> {
        let mut m = DMatrix::zeros(n, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
            m.set_column(j, &DVector::from_column_slice(v));
        }
        Ok(Self::span(&m, tol))
    }

    /// Column span of `m` (an `n × m` matrix).
    pub fn span(m: &DMatrix<f64>, tol: &Tolerance) -> Self {
        let n = m.nrows();
        if m.ncols() == 0 || n == 0 {
            return Self::zero(n);
        }
        let svd = linalg::svd(m);
        let smax = svd.s.iter().fold(0.0_f64, |a, &s| a.max(s));
        if !(smax > 0.0) {
            return Self::zero(n);
        }
        let keep: Vec<usize> = (0..svd.s.len()).filter(|&i| svd.s[i] > tol.rank_rel_tol * smax).collect();
        let mut basis = DMatrix::zeros(n, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            basis.set_column(c, &svd.u.column(i));
        }
        let projector = &basis * basis.transpose();
        Self {
            n,
            frame: canonical_frame(&projector, keep.len(), tol.rank_rel_tol),
        }
    }

    /// Builds a subspace from columns already known to be orthonormal,
    /// re-deriving the canonical frame.
    pub fn from_orthonormal(frame: DMatrix<f64>, tol: &Tolerance) -> Self {
        let d = frame.ncols();
        let projector = &frame * frame.transpose();
        Self {
            n: frame.nrows(),
            frame: canonical_frame(&projector, d, tol.rank_rel_tol),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.n
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Frame vectors as rows, the JSON layout.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|j| self.frame.column(j).iter().copied().collect())
            .collect()
    }

    pub fn projection(&self) -> DMatrix<f64> {
        &self.frame * self.frame.transpose()
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.frame * (self.frame.transpose() * x)
    }

    /// Frame coordinates of the orthogonal projection of `x`.
    pub fn coords(&self, x: &DVector<f64>) -> DVector<f64> {
        self.frame.transpose() * x
    }

    pub fn embed(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.frame * y
    }

    pub fn complement(&self) -> Self {
        let d = self.n - self.dim();
        let q = DMatrix::identity(self.n, self.n) - self.projection();
        Self {
            n: self.n,
            frame: canonical_frame(&q, d, 1e-9),
        }
    }

    /// Intersection via the null space of `P_{B⊥}` restricted to `A`: the
    /// singular values of `F_{B⊥}ᵀ F_A` are the sines of the principal angles.
    pub fn intersect(&self, other: &Self, tol: &Tolerance) -> Result<Self> {
        self.same_ambient(other)?;
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(self.n));
        }
        if other.is_full() {
            return Ok(self.clone());
        }
        if self.is_full() {
            return Ok(other.clone());
        }
        let (small, large) = if self.dim() <= other.dim() {
            (self, other)
        } else {
            (other, self)
        };
        let perp = large.complement();
        let svd = linalg::svd(&(perp.frame.transpose() * &small.frame));
        let null: Vec<usize> = (0..svd.s.len()).filter(|&i| svd.s[i] <= tol.rank_rel_tol).collect();
        if null.is_empty() {
            return Ok(Self::zero(self.n));
        }
        let mut basis = DMatrix::zeros(self.n, null.len());
        for (c, &i) in null.iter().enumerate() {
            basis.set_column(c, &(&small.frame * svd.v.column(i)));
        }
        Ok(Self::span(&basis, tol))
    }

    pub fn sum(&self, other: &Self, tol: &Tolerance) -> Result<Self> {
        self.same_ambient(other)?;
        let mut m = DMatrix::zeros(self.n, self.dim() + other.dim());
        m.view_mut((0, 0), (self.n, self.dim())).copy_from(&self.frame);
        m.view_mut((0, self.dim()), (self.n, other.dim())).copy_from(&other.frame);
        Ok(Self::span(&m, tol))
    }

    pub fn sum_all<'a>(n: usize, parts: impl IntoIterator<Item = &'a Subspace>, tol: &Tolerance) -> Result<Self> {
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for p in parts {
            if p.n != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.n,
                });
            }
            cols.extend(p.frame.column_iter().map(|c| c.into_owned()));
        }
        if cols.is_empty() {
            return Ok(Self::zero(n));
        }
        Ok(Self::span(&DMatrix::from_columns(&cols), tol))
    }

    /// `true` iff every frame vector of `other` lies in `self`.
    pub fn contains(&self, other: &Self, tol: &Tolerance) -> Result<bool> {
        self.same_ambient(other)?;
        if other.dim() > self.dim() {
            return Ok(false);
        }
        let p = self.projection();
        for b in other.frame.column_iter() {
            let r = &p * b - b;
            if r.norm() > tol.residual_tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Residual of `x` off the subspace is at most `residual_tol · max(1, |x|)`.
    pub fn contains_vector(&self, x: &DVector<f64>, tol: &Tolerance) -> bool {
        x.len() == self.n && (x - self.project(x)).norm() <= tol.residual_tol * x.norm().max(1.0)
    }

    pub fn equals(&self, other: &Self, tol: &Tolerance) -> Result<bool> {
        Ok(self.dim() == other.dim() && self.contains(other, tol)? && other.contains(self, tol)?)
    }

    /// Largest |⟨a, b⟩| over frame vectors a of `self`, b of `other`.
    pub fn max_overlap(&self, other: &Self) -> f64 {
        if self.is_zero() || other.is_zero() {
            return 0.0;
        }
        linalg::max_abs(&(self.frame.transpose() * &other.frame))
    }

    /// Orders by (dim, lexicographic frame entries).
    pub fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dim().cmp(&other.dim()).then_with(|| {
            for (a, b) in self.frame.iter().zip(other.frame.iter()) {
                // column-major iteration: first vector first
                let o = b.total_cmp(a);
                if o != std::cmp::Ordering::Equal {
                    return o;
                }
            }
            std::cmp::Ordering::Equal
        })
    }

    fn same_ambient(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(())
    }
}

/// Pivoted Gram–Schmidt over the columns of a projector, choosing at each
/// step the column with the largest residual (ties go to the lowest index),
/// then fixing signs so each vector's first significant entry is positive.
fn canonical_frame(projector: &DMatrix<f64>, d: usize, sign_tol: f64) -> DMatrix<f64> {
    let n = projector.nrows();
    let mut residual = projector.clone();
    let mut frame = DMatrix::zeros(n, d);
    for k in 0..d {
        let norms: Vec<f64> = residual.column_iter().map(|c| c.norm()).collect();
        let best = norms.iter().fold(0.0_f64, |a, &v| a.max(v));
        let pick = norms
            .iter()
            .position(|&v| v >= best * (1.0 - 1e-9))
            .expect("projector has remaining rank");
        let mut v = residual.column(pick).into_owned();
        // twice is enough
        for _ in 0..2 {
            for j in 0..k {
                let q = frame.column(j);
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        if let Some(first) = v.iter().find(|x| x.abs() > sign_tol) {
            if *first < 0.0 {
                v = -v;
            }
        }
        // rounding dust would otherwise leak into exact frames
        v.apply(|x| {
            if x.abs() < 1e-15 {
                *x = 0.0;
            }
        });
        frame.set_column(k, &v);
        let coeffs = v.transpose() * &residual;
        residual -= &v * coeffs;
    }
    frame
}

#[derive(Serialize, Deserialize)]
struct SubspaceRepr {
    n: usize,
    frame: Vec<Vec<f64>>,
}

impl Serialize for Subspace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SubspaceRepr {
            n: self.n,
            frame: self.rows(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Subspace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = SubspaceRepr::deserialize(d)?;
        if repr.n == 0 {
            return Err(serde::de::Error::custom("ambient dimension must be positive"));
        }
        Subspace::from_vectors(repr.n, &repr.frame, &Tolerance::default()).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn sub(n: usize, vs: &[&[f64]]) -> Subspace {
        let v: Vec<Vec<f64>> = vs.iter().map(|x| x.to_vec()).collect();
        Subspace::from_vectors(n, &v, &tol()).unwrap()
    }

    #[test]
    fn collinear_input_gives_a_line() {
        let s = sub(2, &[&[1.0, 0.0], &[2.0, 0.0]]);
        assert_eq!(s.dim(), 1);
        assert!((s.frame()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(s.frame()[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn empty_input_is_zero_subspace() {
        let s = Subspace::from_vectors(3, &[], &tol()).unwrap();
        assert!(s.is_zero());
        assert_eq!(s.ambient_dim(), 3);
    }

    #[test]
    fn sub_tolerance_noise_is_dropped() {
        let s = sub(2, &[&[1.0, 1e-15]]);
        assert_eq!(s.dim(), 1);
        assert!((s.frame()[(0, 0)] - 1.0).abs() < 1e-9);
        assert!(s.frame()[(1, 0)].abs() < 1e-9);
    }

    #[test]
    fn mismatched_vector_lengths_are_rejected() {
        let v = vec![vec![1.0, 0.0], vec![1.0, 0.0, 0.0]];
        assert!(matches!(
            Subspace::from_vectors(2, &v, &tol()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(Subspace::zero(3).projection(), DMatrix::zeros(3, 3));
        assert_eq!(Subspace::full(3).projection(), DMatrix::identity(3, 3));
        let s = sub(2, &[&[1.0, 1.0]]);
        let p = s.projection();
        for v in p.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn intersection_examples() {
        let xy = Subspace::coordinate(3, &[0, 1]);
        let yz = Subspace::coordinate(3, &[1, 2]);
        let i = xy.intersect(&yz, &tol()).unwrap();
        assert!(i.equals(&Subspace::coordinate(3, &[1]), &tol()).unwrap());
        assert_eq!(xy.intersect(&xy, &tol()).unwrap(), xy);
        let diag = sub(3, &[&[1.0, 1.0, 1.0]]);
        assert!(xy.intersect(&diag, &tol()).unwrap().is_zero());
    }

    #[test]
    fn complement_examples() {
        let e1 = Subspace::coordinate(3, &[0]);
        assert_eq!(e1.complement(), Subspace::coordinate(3, &[1, 2]));
        assert!(Subspace::full(4).complement().is_zero());
        assert_eq!(Subspace::zero(4).complement(), Subspace::full(4));
    }

    #[test]
    fn sum_and_containment_examples() {
        let e1 = Subspace::coordinate(2, &[0]);
        let e2 = Subspace::coordinate(2, &[1]);
        assert_eq!(e1.sum(&e2, &tol()).unwrap(), Subspace::full(2));
        assert!(Subspace::full(2).contains(&sub(2, &[&[0.3, -2.0]]), &tol()).unwrap());
        assert!(!e1.contains(&sub(2, &[&[1.0, 1.0]]), &tol()).unwrap());
    }

    #[test]
    fn frame_is_independent_of_spanning_set() {
        let a = sub(3, &[&[1.0, 1.0, 0.0], &[1.0, -1.0, 0.0]]);
        assert_eq!(a, Subspace::coordinate(3, &[0, 1]));
        let b = sub(4, &[&[0.5, 0.75_f64.sqrt(), 0.0, 0.0], &[0.0, 0.0, 0.5, 0.75_f64.sqrt()]]);
        let c = sub(4, &[&[1.0, 3.0_f64.sqrt(), 1.0, 3.0_f64.sqrt()], &[1.0, 3.0_f64.sqrt(), -1.0, -(3.0_f64.sqrt())]]);
        assert!((b.frame() - c.frame()).abs().max() < 1e-12);
    }

    #[test]
    fn json_round_trip_canonicalizes() {
        let s: Subspace = serde_json::from_str(r#"{"n":3,"frame":[[2,0,0],[0,0,-3]]}"#).unwrap();
        assert_eq!(s, Subspace::coordinate(3, &[0, 2]));
        let back: Subspace = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn tolerance_bounds() {
        assert!(Tolerance::new(1e-9, 1e-9).is_ok());
        assert!(Tolerance::new(0.0, 1e-9).is_err());
        assert!(Tolerance::new(1e-9, 0.5).is_err());
    }

    fn random_subspace(n: usize, d: usize, seed: &[f64]) -> Subspace {
        let m = DMatrix::from_iterator(n, d, seed.iter().copied().cycle().take(n * d));
        Subspace::span(&m, &Tolerance::default())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn complement_properties(n in 1usize..=8, d in 0usize..=8,
                                 entries in proptest::collection::vec(-1.0f64..1.0, 64)) {
            let d = d.min(n);
            let a = random_subspace(n, d, &entries);
            let c = a.complement();
            prop_assert_eq!(a.dim() + c.dim(), n);
            let sum = a.projection() + c.projection();
            prop_assert!((sum - DMatrix::<f64>::identity(n, n)).abs().max() < 1e-9);
            prop_assert!(c.complement().equals(&a, &tol()).unwrap());
            let p = a.projection();
            prop_assert!((&p * &p - &p).abs().max() < 1e-9);
            prop_assert!((p.trace() - a.dim() as f64).abs() < 1e-9);
        }

        #[test]
        fn lattice_properties(n in 1usize..=8, da in 0usize..=8, db in 0usize..=8,
                              ea in proptest::collection::vec(-1.0f64..1.0, 64),
                              eb in proptest::collection::vec(-1.0f64..1.0, 64),
                              shared in 0usize..=3) {
            // share a few columns so intersections are non-trivial
            let da = da.min(n);
            let db = db.min(n);
            let ma = DMatrix::from_iterator(n, da, ea.iter().copied().take(n * da));
            let mut mb = DMatrix::from_iterator(n, db, eb.iter().copied().take(n * db));
            for j in 0..shared.min(da).min(db) {
                let col = ma.column(j).into_owned();
                mb.set_column(j, &col);
            }
            let a = Subspace::span(&ma, &tol());
            let b = Subspace::span(&mb, &tol());
            let i = a.intersect(&b, &tol()).unwrap();
            let s = a.sum(&b, &tol()).unwrap();
            prop_assert!(a.contains(&i, &tol()).unwrap());
            prop_assert!(b.contains(&i, &tol()).unwrap());
            prop_assert!(s.contains(&a, &tol()).unwrap());
            prop_assert!(s.contains(&b, &tol()).unwrap());
            prop_assert_eq!(i.dim() + s.dim(), a.dim() + b.dim());
            // De Morgan
            let lhs = i.complement();
            let rhs = a.complement().sum(&b.complement(), &tol()).unwrap();
            prop_assert!(lhs.equals(&rhs, &tol()).unwrap());
        }
    }
}
