//! Named example data and seeded random generators.
//!
//! Random data are assembled from orthogonal blocks, each of which resolves
//! the identity on its own span, and then rotated by a random orthogonal
//! matrix. Block spans (and their sums) are therefore known critical
//! subspaces, which the tests use to build equality cases.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datum::{Entry, GeometricDatum};
use crate::subspace::{Subspace, Tolerance};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tol() -> Tolerance {
    Tolerance::default()
}

fn vectors_span(n: usize, vs: &[DVector<f64>]) -> Subspace {
    if vs.is_empty() {
        return Subspace::zero(n);
    }
    Subspace::span(&DMatrix::from_columns(vs), &tol())
}

/// `E_i = span{e_i}`, `c_i = 1`.
pub fn axis_datum(n: usize) -> GeometricDatum {
    let entries = (0..n)
        .map(|i| Entry {
            c: 1.0,
            e: Subspace::coordinate(n, &[i]),
        })
        .collect();
    GeometricDatum::validated(n, entries, &tol()).expect("axis datum is valid")
}

/// Coordinate hyperplanes `[n] ∖ {i}` with weight `1/(n-1)`.
pub fn loomis_whitney(n: usize) -> GeometricDatum {
    assert!(n >= 2);
    let entries = (0..n)
        .map(|i| {
            let idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            Entry {
                c: 1.0 / (n - 1) as f64,
                e: Subspace::coordinate(n, &idx),
            }
        })
        .collect();
    GeometricDatum::validated(n, entries, &tol()).expect("Loomis-Whitney datum is valid")
}

/// Copies of the full space with the given weights (which must sum to 1).
pub fn holder(n: usize, weights: &[f64]) -> GeometricDatum {
    let entries = weights
        .iter()
        .map(|&c| Entry {
            c,
            e: Subspace::full(n),
        })
        .collect();
    GeometricDatum::validated(n, entries, &tol()).expect("weights sum to 1")
}

/// The six-vector datum on ℝ⁴: `E_i = span{u_i, v_i}`, `c_i = 2/3`, with the
/// `u_i` at 0°, 60°, 120° in the first coordinate plane and the `v_i` the
/// same pattern in the second.
pub fn r4_example() -> GeometricDatum {
    let (u, v) = r4_vectors();
    let entries = (0..3)
        .map(|i| Entry {
            c: 2.0 / 3.0,
            e: vectors_span(4, &[u[i].clone(), v[i].clone()]),
        })
        .collect();
    GeometricDatum::validated(4, entries, &tol()).expect("R4 example is valid")
}

pub fn r4_vectors() -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let h = 3.0_f64.sqrt() / 2.0;
    let u = vec![
        DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
        DVector::from_vec(vec![0.5, h, 0.0, 0.0]),
        DVector::from_vec(vec![-0.5, h, 0.0, 0.0]),
    ];
    let v = u
        .iter()
        .map(|x| DVector::from_vec(vec![0.0, 0.0, x[0], x[1]]))
        .collect();
    (u, v)
}

/// `V_t = span{cos t·u_i + sin t·v_i}`.
pub fn r4_critical_plane(t: f64) -> Subspace {
    let (u, v) = r4_vectors();
    let w: Vec<DVector<f64>> = u.iter().zip(&v).map(|(a, b)| a * t.cos() + b * t.sin()).collect();
    vectors_span(4, &w)
}

/// Lines through the origin of ℝ² at the given angles (radians).
pub fn plane_lines(angles: &[f64], c: f64) -> GeometricDatum {
    let entries = angles
        .iter()
        .map(|&a| Entry {
            c,
            e: vectors_span(2, &[DVector::from_vec(vec![a.cos(), a.sin()])]),
        })
        .collect();
    GeometricDatum::validated(2, entries, &tol()).expect("line frame is tight")
}

/// Uniformly distributed orthogonal matrix.
pub fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    q
}

/// A random valid datum together with the spans of its building blocks.
#[derive(Clone, Debug)]
pub struct RandomDatum {
    pub datum: GeometricDatum,
    pub blocks: Vec<Subspace>,
}

#[derive(Clone, Copy, Debug)]
pub struct DatumShape {
    pub n: usize,
    /// Allow plane blocks with two copies (the ℝ⁴ pattern).
    pub lifted: bool,
    /// Skip the final rotation, keeping blocks on coordinate axes.
    pub aligned: bool,
}

impl DatumShape {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            lifted: true,
            aligned: false,
        }
    }
}

pub fn random_datum<R: Rng>(shape: DatumShape, rng: &mut R) -> RandomDatum {
    let n = shape.n;
    let mut entries: Vec<(f64, Vec<DVector<f64>>)> = Vec::new();
    let mut blocks: Vec<Vec<DVector<f64>>> = Vec::new();
    let basis = |i: usize| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
    let mut next = 0;
    while next < n {
        let left = n - next;
        let kind = rng.random_range(0..3);
        if kind == 1 && left >= 2 {
            let copies = if shape.lifted && left >= 4 && rng.random_bool(0.5) { 2 } else { 1 };
            let m = rng.random_range(3..=5);
            let planes: Vec<(usize, f64)> = (0..copies)
                .map(|q| (next + 2 * q, rng.random_range(0.0..PI)))
                .collect();
            for j in 0..m {
                let vs = planes
                    .iter()
                    .map(|&(p, th)| {
                        let a = th + PI * j as f64 / m as f64;
                        basis(p) * a.cos() + basis(p + 1) * a.sin()
                    })
                    .collect();
                entries.push((2.0 / m as f64, vs));
            }
            blocks.push((next..next + 2 * copies).map(basis).collect());
            next += 2 * copies;
        } else if kind == 2 {
            let d = rng.random_range(1..=left.min(3));
            let m = rng.random_range(2..=3);
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let span: Vec<DVector<f64>> = (next..next + d).map(basis).collect();
            for w in raw {
                entries.push((w / total, span.clone()));
            }
            blocks.push(span);
            next += d;
        } else {
            let g = rng.random_range(1..=left.min(3));
            let span: Vec<DVector<f64>> = (next..next + g).map(basis).collect();
            entries.push((1.0, span.clone()));
            blocks.push(span);
            next += g;
        }
    }
    let q = if shape.aligned {
        DMatrix::identity(n, n)
    } else {
        random_orthogonal(n, rng)
    };
    let rotate = |vs: &[DVector<f64>]| -> Vec<DVector<f64>> { vs.iter().map(|v| &q * v).collect() };
    let entries = entries
        .into_iter()
        .map(|(c, vs)| Entry {
            c,
            e: vectors_span(n, &rotate(&vs)),
        })
        .collect();
    let datum = GeometricDatum::validated(n, entries, &tol()).expect("block construction resolves the identity");
    let blocks = blocks.iter().map(|b| vectors_span(n, &rotate(b))).collect();
    RandomDatum { datum, blocks }
}

/// Symmetric positive definite matrix with spectrum in `[lo, hi]`.
pub fn random_spd<R: Rng>(d: usize, lo: f64, hi: f64, rng: &mut R) -> DMatrix<f64> {
    let q = random_orthogonal(d, rng);
    let diag = DVector::from_fn(d, |_, _| rng.random_range(lo..hi));
    &q * DMatrix::from_diagonal(&diag) * q.transpose()
}

/// `Φ = Σ λ_b P_{block b}` with independent eigenvalues per block.
pub fn block_operator<R: Rng>(blocks: &[Subspace], lo: f64, hi: f64, rng: &mut R) -> DMatrix<f64> {
    let n = blocks[0].ambient_dim();
    let mut phi = DMatrix::zeros(n, n);
    for b in blocks {
        phi += b.projection() * rng.random_range(lo..hi);
    }
    phi
}
