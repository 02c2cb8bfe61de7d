use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{induced_one_cover, require_valid, UniformCover};
use crate::error::{Error, Result};
use crate::linalg::{combinations, svd};
use crate::subspace::{Subspace, Tolerance};

pub const MAX_POLYTOPE_DIM: usize = 4;
const MAX_POLYTOPE_POINTS: usize = 64;
const REL_EPS: f64 = 1e-9;

/// `normal · x ≤ offset`, unit normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Convex hull of finitely many points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointPolytope {
    n: usize,
    vertices: Vec<DVector<f64>>,
}

#[derive(Deserialize, Serialize)]
struct PolytopeRepr {
    n: usize,
    vertices: Vec<Vec<f64>>,
}

fn eps_for(points: &[DVector<f64>]) -> f64 {
    REL_EPS * points.iter().map(|p| p.amax()).fold(1.0, f64::max)
}

fn dedup(points: Vec<DVector<f64>>, eps: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| (q - &p).amax() <= eps) {
            out.push(p);
        }
    }
    out
}

fn affine_rank(points: &[DVector<f64>], eps: f64) -> usize {
    if points.len() < 2 {
        return 0;
    }
    let cols: Vec<DVector<f64>> = points[1..].iter().map(|p| p - &points[0]).collect();
    svd(&DMatrix::from_columns(&cols))
        .s
        .iter().filter(|&&v| v > eps).count()
}

/// Hyperplane through `d` points of ℝ^d, by cofactor expansion.
fn hyperplane(pts: &[&DVector<f64>]) -> Option<(DVector<f64>, f64)> {
    let d = pts[0].len();
    let p0 = pts[0];
    let rows = DMatrix::from_fn(d - 1, d, |i, j| pts[i + 1][j] - p0[j]);
    let mut normal = DVector::zeros(d);
    for k in 0..d {
        let minor = rows.clone().remove_column(k);
        let det = if d == 1 { 1.0 } else { minor.determinant() };
        normal[k] = if k % 2 == 0 { det } else { -det };
    }
    let norm = normal.norm();
    if !(norm > 0.0) {
        return None;
    }
    normal /= norm;
    let offset = normal.dot(p0);
    Some((normal, offset))
}

/// Supporting hyperplanes of the hull of `points` (affinely spanning ℝ^d).
fn hull_facets(points: &[DVector<f64>], eps: f64) -> Vec<(DVector<f64>, f64)> {
    let d = points[0].len();
    if d == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return vec![(DVector::from_vec(vec![1.0]), hi), (DVector::from_vec(vec![-1.0]), -lo)];
    }
    let mut out: Vec<(DVector<f64>, f64)> = Vec::new();
    for idx in combinations(points.len(), d) {
        let pts: Vec<&DVector<f64>> = idx.iter().map(|&i| &points[i]).collect();
        let Some((mut a, mut b)) = hyperplane(&pts) else {
            continue;
        };
        let (mut above, mut below) = (false, false);
        for p in points {
            let s = a.dot(p) - b;
            above |= s > eps;
            below |= s < -eps;
        }
        if above && below {
            continue;
        }
        if above {
            a = -a;
            b = -b;
        }
        if !out.iter().any(|(c, e)| (c - &a).amax() <= 1e-7 && (e - b).abs() <= 1e-7 * b.abs().max(1.0)) {
            out.push((a, b));
        }
    }
    out
}

/// Volume of the hull of `points` in ℝ^d as a fan of pyramids over the facets.
fn hull_volume(points: &[DVector<f64>], parallel: bool) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let d = first.len();
    let eps = eps_for(points);
    let points = dedup(points.to_vec(), eps);
    if points.len() < d + 1 || affine_rank(&points, eps) < d {
        return 0.0;
    }
    if d == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return hi - lo;
    }
    let centre = points.iter().fold(DVector::zeros(d), |acc, p| acc + p) / points.len() as f64;
    let facets = hull_facets(&points, eps);
    let pyramid = |(a, b): &(DVector<f64>, f64)| -> f64 {
        let on: Vec<&DVector<f64>> = points.iter().filter(|p| (a.dot(*p) - b).abs() <= eps).collect();
        let basis = Subspace::span(&DMatrix::from_column_slice(d, 1, a.as_slice()), &Tolerance::default())
            .complement()
            .frame()
            .clone();
        let local: Vec<DVector<f64>> = on.iter().map(|p| basis.transpose() * (*p - on[0])).collect();
        let area = hull_volume(&local, false);
        (b - a.dot(&centre)) * area / d as f64
    };
    let parts: Vec<f64> = if parallel {
        facets.par_iter().map(pyramid).collect()
    } else {
        facets.iter().map(pyramid).collect()
    };
    parts.iter().sum()
}

impl PointPolytope {
    pub fn new(n: usize, vertices: Vec<Vec<f64>>) -> Result<Self> {
        if n == 0 || n > MAX_POLYTOPE_DIM {
            return Err(Error::CapExceeded {
                name: "polytope dimension",
                value: n,
                limit: MAX_POLYTOPE_DIM,
            });
        }
        if vertices.len() > MAX_POLYTOPE_POINTS {
            return Err(Error::CapExceeded {
                name: "polytope vertices",
                value: vertices.len(),
                limit: MAX_POLYTOPE_POINTS,
            });
        }
        let mut pts = Vec::with_capacity(vertices.len());
        for v in vertices {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidBody("vertex coordinates must be finite".into()));
            }
            pts.push(DVector::from_vec(v));
        }
        let eps = eps_for(&pts);
        let pts = dedup(pts, eps);
        if pts.len() < n + 1 || affine_rank(&pts, eps) < n {
            return Err(Error::InvalidBody("vertices do not affinely span the space".into()));
        }
        Ok(Self { n, vertices: pts })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: PolytopeRepr = serde_json::from_str(text).map_err(crate::datum::json_error)?;
        Self::new(r.n, r.vertices)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(PolytopeRepr {
            n: self.n,
            vertices: self.vertices.iter().map(|v| v.iter().copied().collect()).collect(),
        })
        .expect("plain data")
    }

    /// `conv{±λ_j e_j}`.
    pub fn cross_polytope(lambda: &[f64]) -> Result<Self> {
        let n = lambda.len();
        let mut v = Vec::new();
        for (j, &l) in lambda.iter().enumerate() {
            for s in [1.0, -1.0] {
                let mut p = vec![0.0; n];
                p[j] = s * l;
                v.push(p);
            }
        }
        Self::new(n, v)
    }

    /// `Π [−a_j, a_j]`.
    pub fn cube(half: &[f64]) -> Result<Self> {
        let n = half.len();
        let v = (0..1usize << n)
            .map(|mask| (0..n).map(|j| if mask & (1 << j) != 0 { half[j] } else { -half[j] }).collect())
            .collect();
        Self::new(n, v)
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> Vec<Facet> {
        hull_facets(&self.vertices, eps_for(&self.vertices))
            .into_iter()
            .map(|(a, b)| Facet {
                normal: a.iter().copied().collect(),
                offset: b,
            })
            .collect()
    }

    pub fn volume(&self) -> f64 {
        hull_volume(&self.vertices, true)
    }

    /// Every facet offset is positive, i.e. `o ∈ int K`.
    pub fn has_interior_origin(&self) -> bool {
        let eps = eps_for(&self.vertices);
        self.facets().iter().all(|f| f.offset > eps)
    }

    /// Minkowski gauge `min{t ≥ 0 : x ∈ tK}`; needs the origin inside.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        self.facets()
            .iter()
            .map(|f| f.normal.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() / f.offset)
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64], facets: &[Facet]) -> bool {
        let eps = eps_for(&self.vertices);
        facets
            .iter()
            .all(|f| f.normal.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() <= f.offset + eps)
    }

    /// Vertices of `K ∩ span{e_j : j ∈ block}` (1-based), in block coordinates,
    /// by enumerating vertices of the restricted facet inequalities.
    pub fn section(&self, block: &[usize]) -> Vec<DVector<f64>> {
        let m = block.len();
        if m == self.n {
            return self.vertices.clone();
        }
        let eps = eps_for(&self.vertices);
        let rows: Vec<(DVector<f64>, f64)> = self
            .facets()
            .into_iter()
            .map(|f| (DVector::from_iterator(m, block.iter().map(|&j| f.normal[j - 1])), f.offset))
            .filter(|(a, _)| a.amax() > 1e-12)
            .collect();
        let mut pts = Vec::new();
        for idx in combinations(rows.len(), m) {
            let a = DMatrix::from_fn(m, m, |i, j| rows[idx[i]].0[j]);
            let b = DVector::from_iterator(m, idx.iter().map(|&i| rows[i].1));
            let lu = a.lu();
            if lu.determinant().abs() < 1e-12 {
                continue;
            }
            let Some(y) = lu.solve(&b) else {
                continue;
            };
            if rows.iter().all(|(a, b)| a.dot(&y) <= b + eps) {
                pts.push(y);
            }
        }
        dedup(pts, eps)
    }

    pub fn section_volume(&self, block: &[usize]) -> f64 {
        hull_volume(&self.section(block), false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvCertificate {
    pub partition: Vec<Vec<usize>>,
    /// `|conv ∪_j (K ∩ F_j)|`.
    pub volume: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub samples: usize,
    pub seed: u64,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualBtResult {
    pub lhs: f64,
    pub rhs: f64,
    pub volume: f64,
    pub section_volumes: Vec<f64>,
    pub holds: bool,
    /// `K` equals the hull of its sections along the induced partition.
    pub equality: bool,
    pub conv_certificate: ConvCertificate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<McEstimate>,
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

/// `|K|^s` against `(Π |σ_i|! / (n!)^s) Π |K ∩ E_{σ_i}|`.
pub fn dual_bt_check(k: &PointPolytope, c: &UniformCover, mc_samples: usize, seed: u64) -> Result<DualBtResult> {
    require_valid(c)?;
    if c.n != k.n {
        return Err(Error::DimensionMismatch { expected: c.n, got: k.n });
    }
    if !k.has_interior_origin() {
        return Err(Error::Precondition("the origin must be an interior point of K".into()));
    }
    let volume = k.volume();
    let section_volumes: Vec<f64> = c
        .sets
        .iter()
        .map(|s| if s.len() == c.n { volume } else { k.section_volume(s) })
        .collect();
    let lhs = volume.powi(c.s as i32);
    let coeff = c.sets.iter().map(|s| factorial(s.len())).product::<f64>() / factorial(c.n).powi(c.s as i32);
    let rhs = coeff * section_volumes.iter().product::<f64>();

    let partition = induced_one_cover(c)?;
    let mut pts = Vec::new();
    for b in &partition {
        for y in k.section(b) {
            let mut x = DVector::zeros(c.n);
            for (&j, v) in b.iter().zip(y.iter()) {
                x[j - 1] = *v;
            }
            pts.push(x);
        }
    }
    let conv = hull_volume(&pts, true);
    let relative_gap = (volume - conv).abs() / volume;
    let mc = (mc_samples > 0).then(|| monte_carlo(k, mc_samples, seed));
    Ok(DualBtResult {
        lhs,
        rhs,
        volume,
        section_volumes,
        holds: lhs >= rhs * (1.0 - REL_EPS),
        equality: relative_gap <= REL_EPS,
        conv_certificate: ConvCertificate {
            partition,
            volume: conv,
            relative_gap,
        },
        mc,
    })
}

/// Hit-or-miss estimate of `|K|` over its bounding box.
fn monte_carlo(k: &PointPolytope, samples: usize, seed: u64) -> McEstimate {
    let n = k.n;
    let lo: Vec<f64> = (0..n).map(|j| k.vertices.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..n).map(|j| k.vertices.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let facets = k.facets();
    let mut rng = crate::gen::rng(seed);
    let mut hits = 0usize;
    let mut x = vec![0.0; n];
    for _ in 0..samples {
        for j in 0..n {
            x[j] = rng.random_range(lo[j]..=hi[j]);
        }
        if k.contains(&x, &facets) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    McEstimate {
        samples,
        seed,
        estimate: p * box_vol,
        std_error: box_vol * (p * (1.0 - p) / samples as f64).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lw() -> UniformCover {
        UniformCover::new(3, 2, vec![vec![2, 3], vec![1, 3], vec![1, 2]])
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn volumes() {
        assert!(close(PointPolytope::cross_polytope(&[1.0, 1.0, 1.0]).unwrap().volume(), 4.0 / 3.0));
        assert!(close(PointPolytope::cube(&[1.0, 1.0, 1.0]).unwrap().volume(), 8.0));
        assert!(close(PointPolytope::cross_polytope(&[1.0, 2.0, 1.0, 3.0]).unwrap().volume(), 16.0 * 6.0 / 24.0));
        let simplex = PointPolytope::new(3, vec![vec![0.0; 3], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert!(close(simplex.volume(), 1.0 / 6.0));
        assert!(!simplex.has_interior_origin());
    }

    #[test]
    fn interior_points_are_ignored() {
        let mut v = vec![vec![0.1, 0.2], vec![0.0, 0.0]];
        v.extend([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]].map(|p| p.to_vec()));
        let k = PointPolytope::new(2, v).unwrap();
        assert!(close(k.volume(), 4.0));
        assert_eq!(k.facets().len(), 4);
    }

    #[test]
    fn sections() {
        let k = PointPolytope::cross_polytope(&[1.0, 2.0, 1.0]).unwrap();
        assert!(close(k.section_volume(&[1, 2]), 4.0));
        assert!(close(k.section_volume(&[1, 3]), 2.0));
        assert!(close(k.section_volume(&[2]), 4.0));
        let cube = PointPolytope::cube(&[1.0, 1.0, 1.0]).unwrap();
        assert!(close(cube.section_volume(&[2, 3]), 4.0));
    }

    #[test]
    fn cross_polytope_equality() {
        let r = dual_bt_check(&PointPolytope::cross_polytope(&[1.0, 1.0, 1.0]).unwrap(), &lw(), 0, 0).unwrap();
        assert!(close(r.lhs, 16.0 / 9.0) && close(r.rhs, 16.0 / 9.0));
        assert!(r.equality && r.holds);
        let r = dual_bt_check(&PointPolytope::cross_polytope(&[1.0, 2.0, 1.0]).unwrap(), &lw(), 0, 0).unwrap();
        assert!(close(r.lhs, 256.0 / 36.0) && close(r.rhs, 256.0 / 36.0));
        assert!(r.equality);
    }

    #[test]
    fn cube_is_strict() {
        let r = dual_bt_check(&PointPolytope::cube(&[1.0, 1.0, 1.0]).unwrap(), &lw(), 20_000, 3).unwrap();
        assert!(close(r.lhs, 64.0) && close(r.rhs, 128.0 / 9.0));
        assert!(r.holds && !r.equality);
        let mc = r.mc.unwrap();
        assert!((mc.estimate - 8.0).abs() < 1e-12, "the box is the cube itself");
    }

    #[test]
    fn origin_must_be_interior() {
        let k = PointPolytope::cube(&[1.0, 1.0, 1.0]).unwrap();
        let shifted = PointPolytope::new(3, k.vertices().iter().map(|v| v.iter().map(|x| x + 1.0).collect()).collect()).unwrap();
        assert!(matches!(dual_bt_check(&shifted, &lw(), 0, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn rejects_flat_bodies() {
        assert!(PointPolytope::new(3, vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 0.0]]).is_err());
    }
}
