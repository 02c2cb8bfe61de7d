//! Critical subspaces, the indecomposable decomposition and the
//! independent/dependent splitting of a geometric datum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datum::{Entry, GeometricDatum, RankOneDatum};
use crate::error::{Error, Result};
use crate::linalg::{cluster_sorted, sorted_eigen};
use crate::subspace::{Subspace, Tolerance};

/// Above this many entries the 2^k sign patterns are not enumerated.
pub const MAX_PATTERN_ENTRIES: usize = 24;

/// `1 − μ` below this marks an eigenvector of the averaging map as commuting.
const COMMUTANT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub subspace: Subspace,
    pub weighted_dim_sum: f64,
    pub dim: usize,
    pub intersection_dims: Vec<usize>,
    pub is_critical: bool,
    pub splitting_ok: bool,
    pub tolerance: Tolerance,
}

pub fn is_critical(d: &GeometricDatum, v: &Subspace, tol: &Tolerance) -> Result<CriticalityReport> {
    d.require_validated()?;
    if v.ambient_dim() != d.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: d.ambient_dim(),
            got: v.ambient_dim(),
        });
    }
    if v.is_zero() {
        return Err(Error::ZeroSubspace);
    }
    let perp = v.complement();
    let mut sum = 0.0;
    let mut dims = Vec::with_capacity(d.len());
    let mut splitting_ok = true;
    for en in d.entries() {
        let inside = en.e.intersect(v, tol)?.dim();
        let outside = en.e.intersect(&perp, tol)?.dim();
        sum += en.c * inside as f64;
        dims.push(inside);
        if inside + outside != en.e.dim() {
            splitting_ok = false;
        }
    }
    let near_integer = (sum - sum.round()).abs() <= 1e-6;
    let by_count = near_integer && (sum - v.dim() as f64).abs() < 0.5;
    if by_count != splitting_ok {
        return Err(Error::Inconsistent(format!(
            "weighted dimension sum {sum} vs dim {} disagrees with the splitting test",
            v.dim()
        )));
    }
    Ok(CriticalityReport {
        subspace: v.clone(),
        weighted_dim_sum: sum,
        dim: v.dim(),
        intersection_dims: dims,
        is_critical: by_count && splitting_ok,
        splitting_ok,
        tolerance: *tol,
    })
}

/// Connected components of the non-orthogonality graph on the frame vectors,
/// each sorted, ordered by smallest member.
pub fn bowtie_classes(r: &RankOneDatum, tol: &Tolerance) -> Vec<Vec<usize>> {
    let k = r.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..k {
        for j in i + 1..k {
            if r.vectors[i].dot(&r.vectors[j]).abs() > tol.residual_tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; k];
    for i in 0..k {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = classes.len();
            classes.push(Vec::new());
        }
        classes[slot[root]].push(i);
    }
    classes
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Decomposition {
    pub pieces: Vec<Subspace>,
    /// Orthogonal critical decompositions are not unique for this datum; the
    /// pieces are the ones induced by the canonical frames.
    pub canonical_only: bool,
    pub rank_one_classes: Vec<Vec<usize>>,
}

/// Splits ℝⁿ into pairwise orthogonal indecomposable critical subspaces.
///
/// Starts from the spans of the bowtie classes of the canonical expansion and
/// refines any piece whose restricted datum still commutes with a
/// non-scalar symmetric operator.
pub fn indecomposable_decomposition(d: &GeometricDatum, tol: &Tolerance) -> Result<Decomposition> {
    let r = d.rank_one_expansion()?;
    let n = d.ambient_dim();
    let classes = bowtie_classes(&r, tol);
    let mut work: Vec<Subspace> = classes
        .iter()
        .map(|cls| {
            let cols: Vec<DVector<f64>> = cls.iter().map(|&j| r.vectors[j].clone()).collect();
            Subspace::span(&DMatrix::from_columns(&cols), tol)
        })
        .collect();
    work.reverse();
    let mut pieces = Vec::new();
    while let Some(v) = work.pop() {
        let basis = symmetric_commutant(d, v.frame());
        if basis.len() <= 1 {
            pieces.push(v);
            continue;
        }
        let mut x = DMatrix::zeros(v.dim(), v.dim());
        for (j, b) in basis.iter().enumerate() {
            // irrational spacing keeps the combination generic
            x += b * (1.0 + (j as f64 * 0.618_033_988_749_895).fract());
        }
        let (vals, vecs) = sorted_eigen(&x);
        let groups = cluster_sorted(&vals, 1e-6);
        if groups.len() == 1 {
            pieces.push(v);
            continue;
        }
        let mut split = Vec::new();
        for g in groups {
            let cols = v.frame() * vecs.columns(g.start, g.len());
            split.push(Subspace::from_orthonormal(cols, tol));
        }
        for s in split.into_iter().rev() {
            work.push(s);
        }
    }
    let whole = symmetric_commutant(d, &DMatrix::identity(n, n)).len();
    for p in &pieces {
        if !is_critical(d, p, tol)?.is_critical {
            return Err(Error::Inconsistent("decomposition piece is not critical".into()));
        }
    }
    Ok(Decomposition {
        canonical_only: whole > pieces.len(),
        pieces,
        rank_one_classes: classes,
    })
}

/// Basis of the symmetric operators on `span(frame)` commuting with every
/// compressed projector `Fᵀ P_{E_i} F`.
///
/// These are the fixed points of `X ↦ Σ c_i Q_i X Q_i`, a self-adjoint
/// contraction whose eigenvalue-1 space is exactly the commutant.
pub fn symmetric_commutant(d: &GeometricDatum, frame: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let m = frame.ncols();
    if m == 0 {
        return Vec::new();
    }
    let qs: Vec<(f64, DMatrix<f64>)> = d
        .entries()
        .iter()
        .map(|en| {
            let g = frame.transpose() * en.e.frame();
            (en.c, &g * g.transpose())
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a..m).map(move |b| (a, b))).collect();
    let p = pairs.len();
    let basis_el = |a: usize, b: usize| -> DMatrix<f64> {
        let mut s = DMatrix::zeros(m, m);
        if a == b {
            s[(a, a)] = 1.0;
        } else {
            let w = std::f64::consts::FRAC_1_SQRT_2;
            s[(a, b)] = w;
            s[(b, a)] = w;
        }
        s
    };
    let coords = |x: &DMatrix<f64>| -> DVector<f64> {
        DVector::from_iterator(
            p,
            pairs.iter().map(|&(a, b)| {
                if a == b {
                    x[(a, a)]
                } else {
                    std::f64::consts::SQRT_2 * x[(a, b)]
                }
            }),
        )
    };
    let mut psi = DMatrix::zeros(p, p);
    for (col, &(a, b)) in pairs.iter().enumerate() {
        let mut img = DMatrix::zeros(m, m);
        for (c, q) in &qs {
            let qa = q.column(a);
            let qb = q.column(b);
            if a == b {
                img += (qa * qa.transpose()) * *c;
            } else {
                img += (qa * qb.transpose() + qb * qa.transpose()) * (*c * std::f64::consts::FRAC_1_SQRT_2);
            }
        }
        psi.set_column(col, &coords(&img));
    }
    let (vals, vecs) = sorted_eigen(&psi);
    let mut out = Vec::new();
    for (j, &mu) in vals.iter().enumerate().rev() {
        if 1.0 - mu > COMMUTANT_TOL {
            break;
        }
        let mut x = DMatrix::zeros(m, m);
        for (i, &(a, b)) in pairs.iter().enumerate() {
            x += basis_el(a, b) * vecs[(i, j)];
        }
        out.push(x);
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndependentSubspace {
    pub subspace: Subspace,
    /// Entries with `E_i ⊇ F_j`.
    pub owners: Vec<usize>,
    pub weight_sum: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructureReport {
    pub independent_subspaces: Vec<IndependentSubspace>,
    pub dependent_subspace: Subspace,
    pub weight_sums_ok: bool,
    pub indecomposable_decomposition: Vec<Subspace>,
    pub decomposition_canonical_only: bool,
    pub rank_one_classes: Vec<Vec<usize>>,
    pub tolerance: Tolerance,
}

/// Nonzero intersections `∩ E_i^{(ε(i))}` over sign patterns ε, found by a
/// depth-first walk that drops a branch as soon as its intersection is {0}.
pub fn independent_subspaces(
    d: &GeometricDatum,
    tol: &Tolerance,
) -> Result<(Vec<IndependentSubspace>, Subspace)> {
    d.require_validated()?;
    let k = d.len();
    if k > MAX_PATTERN_ENTRIES {
        return Err(Error::CapExceeded {
            name: "k",
            value: k,
            limit: MAX_PATTERN_ENTRIES,
        });
    }
    let n = d.ambient_dim();
    let complements: Vec<Subspace> = d.entries().iter().map(|e| e.e.complement()).collect();
    let mut found: Vec<(Subspace, Vec<usize>)> = Vec::new();
    // stack of (next entry, running intersection, owners so far)
    let mut stack = vec![(0usize, Subspace::full(n), Vec::<usize>::new())];
    while let Some((i, s, owners)) = stack.pop() {
        if i == k {
            found.push((s, owners));
            continue;
        }
        let out = s.intersect(&complements[i], tol)?;
        if !out.is_zero() {
            stack.push((i + 1, out, owners.clone()));
        }
        let inside = s.intersect(&d.entries()[i].e, tol)?;
        if !inside.is_zero() {
            let mut o = owners;
            o.push(i);
            stack.push((i + 1, inside, o));
        }
    }
    found.sort_by(|a, b| a.0.canonical_cmp(&b.0));
    let subspaces: Vec<IndependentSubspace> = found
        .into_iter()
        .map(|(s, owners)| IndependentSubspace {
            weight_sum: owners.iter().map(|&i| d.entries()[i].c).sum(),
            subspace: s,
            owners,
        })
        .collect();
    let dependent = Subspace::sum_all(n, subspaces.iter().map(|f| &f.subspace), tol)?.complement();
    Ok((subspaces, dependent))
}

pub fn analyze(d: &GeometricDatum, tol: &Tolerance) -> Result<StructureReport> {
    let (independent, dependent) = independent_subspaces(d, tol)?;
    let decomposition = indecomposable_decomposition(d, tol)?;
    Ok(StructureReport {
        weight_sums_ok: independent.iter().all(|f| (f.weight_sum - 1.0).abs() <= 1e-9),
        independent_subspaces: independent,
        dependent_subspace: dependent,
        indecomposable_decomposition: decomposition.pieces,
        decomposition_canonical_only: decomposition.canonical_only,
        rank_one_classes: decomposition.rank_one_classes,
        tolerance: *tol,
    })
}

/// The datum `(E_i ∩ V, c_i)` written in the coordinates of V's frame.
pub fn restrict_datum(d: &GeometricDatum, v: &Subspace, tol: &Tolerance) -> Result<GeometricDatum> {
    let rep = is_critical(d, v, tol)?;
    if !rep.is_critical {
        return Err(Error::NotCritical(format!(
            "weighted dimension sum {} for a subspace of dimension {}",
            rep.weighted_dim_sum, rep.dim
        )));
    }
    let f = v.frame();
    let mut entries = Vec::new();
    for en in d.entries() {
        let w = en.e.intersect(v, tol)?;
        if w.is_zero() {
            continue;
        }
        entries.push(Entry {
            c: en.c,
            e: Subspace::span(&(f.transpose() * w.frame()), tol),
        });
    }
    GeometricDatum::validated(v.dim(), entries, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use std::f64::consts::PI;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn whole_space_is_critical() {
        let d = gen::r4_example();
        let rep = is_critical(&d, &Subspace::full(4), &tol()).unwrap();
        assert!(rep.is_critical && rep.splitting_ok);
        assert!((rep.weighted_dim_sum - 4.0).abs() < 1e-12);
    }

    #[test]
    fn r4_planes_are_critical() {
        let d = gen::r4_example();
        for t in [0.0, 0.3, PI / 4.0, PI / 2.0, 1.234] {
            let rep = is_critical(&d, &gen::r4_critical_plane(t), &tol()).unwrap();
            assert!(rep.is_critical, "t = {t}");
            assert!((rep.weighted_dim_sum - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_critical_line() {
        let d = gen::r4_example();
        let v = Subspace::coordinate(4, &[0]);
        let rep = is_critical(&d, &v, &tol()).unwrap();
        assert!(!rep.is_critical && !rep.splitting_ok);
        assert!((rep.weighted_dim_sum - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn loomis_whitney_axis_is_critical() {
        let d = gen::loomis_whitney(3);
        let rep = is_critical(&d, &Subspace::coordinate(3, &[0]), &tol()).unwrap();
        assert!(rep.is_critical);
        assert!((rep.weighted_dim_sum - 1.0).abs() < 1e-15);
        assert_eq!(rep.intersection_dims, vec![0, 1, 1]);
    }

    #[test]
    fn zero_subspace_rejected() {
        let d = gen::axis_datum(2);
        assert!(matches!(is_critical(&d, &Subspace::zero(2), &tol()), Err(Error::ZeroSubspace)));
    }

    #[test]
    fn bowtie_examples() {
        let r = gen::axis_datum(3).rank_one_expansion().unwrap();
        assert_eq!(bowtie_classes(&r, &tol()), vec![vec![0], vec![1], vec![2]]);
        let r = gen::plane_lines(&[0.0, PI / 3.0, 2.0 * PI / 3.0], 2.0 / 3.0)
            .rank_one_expansion()
            .unwrap();
        assert_eq!(bowtie_classes(&r, &tol()), vec![vec![0, 1, 2]]);
        let r = gen::r4_example().rank_one_expansion().unwrap();
        let classes = bowtie_classes(&r, &tol());
        assert_eq!(classes.len(), 2);
        for cls in &classes {
            assert_eq!(cls.len(), 3);
            let first = &r.vectors[cls[0]];
            let in_u = first[0].abs() + first[1].abs() > 0.5;
            for &j in cls {
                let v = &r.vectors[j];
                assert_eq!(v[0].abs() + v[1].abs() > 0.5, in_u);
            }
        }
    }

    #[test]
    fn decomposition_examples() {
        let d = gen::axis_datum(3);
        let dec = indecomposable_decomposition(&d, &tol()).unwrap();
        assert_eq!(dec.pieces.len(), 3);
        assert!(!dec.canonical_only);

        let d = gen::r4_example();
        let dec = indecomposable_decomposition(&d, &tol()).unwrap();
        assert_eq!(dec.pieces.len(), 2);
        assert!(dec.canonical_only);
        let u = Subspace::coordinate(4, &[0, 1]);
        let v = Subspace::coordinate(4, &[2, 3]);
        assert!(dec.pieces.iter().any(|p| p.equals(&u, &tol()).unwrap()));
        assert!(dec.pieces.iter().any(|p| p.equals(&v, &tol()).unwrap()));
    }

    #[test]
    fn r4_plus_axis_has_three_pieces() {
        let (u, v) = gen::r4_vectors();
        let lift = |x: &DVector<f64>| DVector::from_fn(5, |i, _| if i < 4 { x[i] } else { 0.0 });
        let mut entries: Vec<Entry> = (0..3)
            .map(|i| Entry {
                c: 2.0 / 3.0,
                e: Subspace::span(&DMatrix::from_columns(&[lift(&u[i]), lift(&v[i])]), &tol()),
            })
            .collect();
        entries.push(Entry {
            c: 1.0,
            e: Subspace::coordinate(5, &[4]),
        });
        let d = GeometricDatum::validated(5, entries, &tol()).unwrap();
        let dec = indecomposable_decomposition(&d, &tol()).unwrap();
        assert_eq!(dec.pieces.len(), 3);
        let mut dims: Vec<usize> = dec.pieces.iter().map(|p| p.dim()).collect();
        dims.sort();
        assert_eq!(dims, vec![1, 2, 2]);
    }

    #[test]
    fn mixed_frames_are_refined_by_the_commutant() {
        // E_i = span{u_i, v_i} but each given with a differently rotated
        // basis, so the expansion graph is connected.
        let (u, v) = gen::r4_vectors();
        let entries: Vec<Entry> = (0..3)
            .map(|i| {
                let a = 0.4 * (i + 1) as f64;
                let p = &u[i] * a.cos() + &v[i] * a.sin();
                let q = &u[i] * (-a.sin()) + &v[i] * a.cos();
                Entry {
                    c: 2.0 / 3.0,
                    e: Subspace::from_orthonormal(DMatrix::from_columns(&[p, q]), &tol()),
                }
            })
            .collect();
        let d = GeometricDatum::validated(4, entries, &tol()).unwrap();
        let dec = indecomposable_decomposition(&d, &tol()).unwrap();
        assert_eq!(dec.pieces.len(), 2);
        assert!(dec.canonical_only);
        for p in &dec.pieces {
            assert!(is_critical(&d, p, &tol()).unwrap().is_critical);
            assert_eq!(p.dim(), 2);
        }
    }

    #[test]
    fn independent_subspace_examples() {
        let d = gen::loomis_whitney(3);
        let (f, dep) = independent_subspaces(&d, &tol()).unwrap();
        assert!(dep.is_zero());
        assert_eq!(f.len(), 3);
        for (j, fj) in f.iter().enumerate() {
            assert_eq!(fj.subspace, Subspace::coordinate(3, &[j]));
            assert!((fj.weight_sum - 1.0).abs() < 1e-15);
            assert_eq!(fj.owners.len(), 2);
        }

        let d = gen::r4_example();
        let (f, dep) = independent_subspaces(&d, &tol()).unwrap();
        assert!(f.is_empty());
        assert!(dep.is_full());

        let d = gen::holder(3, &[0.25, 0.75]);
        let (f, dep) = independent_subspaces(&d, &tol()).unwrap();
        assert_eq!(f.len(), 1);
        assert!(f[0].subspace.is_full());
        assert_eq!(f[0].owners, vec![0, 1]);
        assert!(dep.is_zero());
    }

    #[test]
    fn restriction_examples() {
        let d = gen::axis_datum(3);
        let r = restrict_datum(&d, &Subspace::coordinate(3, &[0, 1]), &tol()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.ambient_dim(), 2);

        let d = gen::r4_example();
        let r = restrict_datum(&d, &Subspace::coordinate(4, &[0, 1]), &tol()).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.entries().iter().all(|e| e.e.dim() == 1 && (e.c - 2.0 / 3.0).abs() < 1e-15));

        let d = gen::loomis_whitney(3);
        let r = restrict_datum(&d, &Subspace::coordinate(3, &[0]), &tol()).unwrap();
        assert_eq!(r.weights(), vec![0.5, 0.5]);
        assert!(r.entries().iter().all(|e| e.e.is_full()));

        let bad = Subspace::coordinate(4, &[0]);
        assert!(matches!(
            restrict_datum(&gen::r4_example(), &bad, &tol()),
            Err(Error::NotCritical(_))
        ));
    }
}
