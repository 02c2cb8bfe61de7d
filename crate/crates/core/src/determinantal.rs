//! Determinant inequalities for Parseval frames and their higher-rank form,
//! with structural equality detection, the Cauchy–Binet expansion and the
//! constrained quadratic minimum behind the Gaussian extremizers.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datum::{GeometricDatum, RankOneDatum};
use crate::error::{Error, Result};
use crate::linalg::{binomial, check_symmetric, cluster_sorted, combinations, max_abs, sorted_eigen, spd_log_det};
use crate::structure::{bowtie_classes, is_critical};
use crate::subspace::{Subspace, Tolerance};

pub const MAX_MINORS: u128 = 1_000_000;

/// Relative tolerance for "t is constant on a class".
const CLASS_CONSTANT_TOL: f64 = 1e-9;
/// Relative gap separating eigenvalue clusters of Φ.
const EIGEN_CLUSTER_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// Classes on which `t` is constant.
    Partition { classes: Vec<Vec<usize>> },
    /// `Φ = Σ c_i A_i P_{E_i}`, rows.
    Phi { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetCheckResult {
    pub lhs: f64,
    pub rhs: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub log_gap: f64,
    /// `log_gap ≥ −residual_tol`.
    pub holds: bool,
    pub equality: bool,
    pub equality_certificate: Option<Certificate>,
    pub tolerance: Tolerance,
}

fn check_positive(t: &[f64], expected: usize) -> Result<()> {
    if t.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: t.len(),
        });
    }
    if let Some((i, v)) = t.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::NonPositive(format!("t[{i}] = {v}")));
    }
    Ok(())
}

/// `det(Σ c_i t_i u_i u_iᵀ) ≥ Π t_i^{c_i}`, with equality exactly when `t` is
/// constant on every bowtie class.
/// `log det Σ c_i t_i u_i u_iᵀ` from a QR of the rows `√(c_i t_i) u_iᵀ`,
/// largest first; forming the sum first loses digits when `t` spreads widely.
fn weighted_log_det(r: &RankOneDatum, t: &[f64]) -> Result<f64> {
    let (k, n) = (r.len(), r.n);
    let w: Vec<f64> = r.weights.iter().zip(t).map(|(c, ti)| c * ti).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
    if k < n {
        return Err(Error::NotPositiveDefinite("Σ c_i t_i u_i u_iᵀ".into()));
    }
    let b = DMatrix::from_fn(k, n, |i, j| w[order[i]].sqrt() * r.vectors[order[i]][j]);
    let rr = b.qr().r();
    let mut acc = 0.0;
    for i in 0..n {
        let d = rr[(i, i)].abs();
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite("Σ c_i t_i u_i u_iᵀ".into()));
        }
        acc += 2.0 * d.ln();
    }
    Ok(acc)
}

pub fn ball_barthe_check(r: &RankOneDatum, t: &[f64], tol: &Tolerance) -> Result<DetCheckResult> {
    check_positive(t, r.len())?;
    let log_lhs = weighted_log_det(r, t)?;
    let log_rhs: f64 = r.weights.iter().zip(t).map(|(c, ti)| c * ti.ln()).sum();
    let classes = bowtie_classes(r, tol);
    let equality = classes.iter().all(|cls| {
        let (lo, hi) = cls
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &j| (lo.min(t[j]), hi.max(t[j])));
        hi - lo <= CLASS_CONSTANT_TOL * hi
    });
    let log_gap = log_lhs - log_rhs;
    Ok(DetCheckResult {
        lhs: log_lhs.exp(),
        rhs: log_rhs.exp(),
        log_lhs,
        log_rhs,
        log_gap,
        holds: log_gap >= -tol.residual_tol,
        equality,
        equality_certificate: equality.then_some(Certificate::Partition { classes }),
        tolerance: *tol,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Minor {
    pub subset: Vec<usize>,
    /// `det[√c_i u_i]_{i∈I}²`.
    pub weight: f64,
    pub t_product: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CauchyBinet {
    pub minors: Vec<Minor>,
    pub weight_total: f64,
    /// `Σ_{I∋i} d_I` per vector.
    pub marginals: Vec<f64>,
    pub sum: f64,
    pub det: f64,
    pub weights_ok: bool,
    pub marginals_ok: bool,
    pub matches_det: bool,
}

pub fn cauchy_binet_expansion(r: &RankOneDatum, t: &[f64]) -> Result<CauchyBinet> {
    check_positive(t, r.len())?;
    let (k, n) = (r.len(), r.n);
    let count = binomial(k, n).unwrap_or(u128::MAX);
    if count > MAX_MINORS {
        return Err(Error::CapExceeded {
            name: "C(k, n)",
            value: usize::try_from(count).unwrap_or(usize::MAX),
            limit: MAX_MINORS as usize,
        });
    }
    let v = r.scaled_matrix();
    let minors: Vec<Minor> = combinations(k, n)
        .into_par_iter()
        .map(|subset| {
            let cols: Vec<DVector<f64>> = subset.iter().map(|&i| v.column(i).into_owned()).collect();
            let det = if cols.is_empty() {
                1.0
            } else {
                DMatrix::from_columns(&cols).determinant()
            };
            Minor {
                t_product: subset.iter().map(|&i| t[i]).product(),
                weight: det * det,
                subset,
            }
        })
        .collect();
    let mut marginals = vec![0.0; k];
    let mut weight_total = 0.0;
    let mut sum = 0.0;
    for m in &minors {
        weight_total += m.weight;
        sum += m.weight * m.t_product;
        for &i in &m.subset {
            marginals[i] += m.weight;
        }
    }
    let det = weighted_log_det(r, t)?.exp();
    let marginals_ok = marginals.iter().zip(&r.weights).all(|(m, c)| (m - c).abs() <= 1e-9);
    Ok(CauchyBinet {
        weights_ok: (weight_total - 1.0).abs() <= 1e-9,
        marginals_ok,
        matches_det: (sum - det).abs() <= 1e-9 * det.abs().max(f64::MIN_POSITIVE),
        minors,
        weight_total,
        marginals,
        sum,
        det,
    })
}

fn check_operators(d: &GeometricDatum, a: &[DMatrix<f64>], tol: &Tolerance) -> Result<()> {
    if a.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            got: a.len(),
        });
    }
    for (i, (ai, en)) in a.iter().zip(d.entries()).enumerate() {
        if ai.nrows() != en.e.dim() || ai.ncols() != en.e.dim() {
            return Err(Error::DimensionMismatch {
                expected: en.e.dim(),
                got: ai.nrows(),
            });
        }
        check_symmetric(ai, tol.residual_tol, &format!("A[{i}]"))?;
    }
    Ok(())
}

/// `Σ c_i F_i A_i F_iᵀ`, i.e. `Σ c_i Ã_i P_{E_i}` in ambient coordinates.
pub fn assemble_operator(d: &GeometricDatum, a: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = d.ambient_dim();
    let mut m = DMatrix::zeros(n, n);
    for (ai, en) in a.iter().zip(d.entries()) {
        let f = en.e.frame();
        m += f * ai * f.transpose() * en.c;
    }
    m
}

/// Each eigenspace of Φ (after clustering) is a critical subspace.
pub fn eigenspaces_critical(d: &GeometricDatum, phi: &DMatrix<f64>, tol: &Tolerance) -> Result<bool> {
    for space in eigenspaces(phi, tol) {
        if !is_critical(d, &space, tol)?.is_critical {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn eigenspaces(phi: &DMatrix<f64>, tol: &Tolerance) -> Vec<Subspace> {
    let (vals, vecs) = sorted_eigen(phi);
    cluster_sorted(&vals, EIGEN_CLUSTER_TOL)
        .into_iter()
        .map(|g| Subspace::span(&vecs.columns(g.start, g.len()).into_owned(), tol))
        .collect()
}

/// `det(Σ c_i A_i P_{E_i}) ≥ Π det(A_i)^{c_i}` for `A_i` given in the frame
/// coordinates of `E_i`.
pub fn determinantal_high_check(d: &GeometricDatum, a: &[DMatrix<f64>], tol: &Tolerance) -> Result<DetCheckResult> {
    d.require_validated()?;
    check_operators(d, a, tol)?;
    let mut log_rhs = 0.0;
    for (i, (ai, en)) in a.iter().zip(d.entries()).enumerate() {
        log_rhs += en.c * spd_log_det(ai, &format!("A[{i}]"))?;
    }
    let m = assemble_operator(d, a);
    let log_lhs = spd_log_det(&m, "Σ c_i A_i P_i")?;
    let scale = max_abs(&m).max(1.0);
    let restricts = a.iter().zip(d.entries()).all(|(ai, en)| {
        let f = en.e.frame();
        max_abs(&(&m * f - f * ai)) <= tol.residual_tol * scale
    });
    let equality = restricts && eigenspaces_critical(d, &m, tol)?;
    let log_gap = log_lhs - log_rhs;
    Ok(DetCheckResult {
        lhs: log_lhs.exp(),
        rhs: log_rhs.exp(),
        log_lhs,
        log_rhs,
        log_gap,
        holds: log_gap >= -tol.residual_tol,
        equality,
        equality_certificate: equality.then(|| Certificate::Phi { matrix: rows(&m) }),
        tolerance: *tol,
    })
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinNormResult {
    /// `Σ c_i ‖Φ x_i‖²` at the optimum.
    pub min_value: f64,
    /// `‖Φ x‖²`.
    pub target: f64,
    /// Optimal `x_i ∈ E_i` in ambient coordinates.
    pub minimizers: Vec<Vec<f64>>,
    pub feasibility_residual: f64,
    pub membership_residual: f64,
    /// Objective at `x_i = P_{E_i} x`.
    pub projection_value: f64,
    pub projection_is_minimizer: bool,
}

/// `min Σ c_i ‖Φ x_i‖²` subject to `Σ c_i x_i = x`, `x_i ∈ E_i`, solved through
/// the KKT system in frame coordinates.
pub fn min_norm_decomposition(
    d: &GeometricDatum,
    phi: &DMatrix<f64>,
    x: &DVector<f64>,
    tol: &Tolerance,
) -> Result<MinNormResult> {
    d.require_validated()?;
    let n = d.ambient_dim();
    if phi.nrows() != n || phi.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: phi.nrows(),
        });
    }
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    check_symmetric(phi, tol.residual_tol, "Φ")?;
    spd_log_det(phi, "Φ")?;

    let phi2 = phi * phi;
    let dims: Vec<usize> = d.entries().iter().map(|e| e.e.dim()).collect();
    let total: usize = dims.iter().sum();
    let mut kkt = DMatrix::zeros(total + n, total + n);
    let mut offset = 0;
    for en in d.entries() {
        let f = en.e.frame();
        let di = f.ncols();
        let h = f.transpose() * &phi2 * f * (2.0 * en.c);
        kkt.view_mut((offset, offset), (di, di)).copy_from(&h);
        let cf = f * en.c;
        kkt.view_mut((total, offset), (n, di)).copy_from(&cf);
        kkt.view_mut((offset, total), (di, n)).copy_from(&cf.transpose());
        offset += di;
    }
    let mut rhs = DVector::zeros(total + n);
    rhs.rows_mut(total, n).copy_from(x);
    let sol = kkt
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("singular KKT system".into()))?;
    let kkt_residual = (&kkt * &sol - &rhs).amax();
    if !(kkt_residual <= 1e-8 * (1.0 + rhs.amax())) {
        return Err(Error::Internal(format!("KKT residual {kkt_residual:.3e}")));
    }

    let mut minimizers = Vec::with_capacity(d.len());
    let mut min_value = 0.0;
    let mut combo = DVector::zeros(n);
    let mut membership_residual = 0.0_f64;
    let mut projection_value = 0.0;
    offset = 0;
    for en in d.entries() {
        let f = en.e.frame();
        let xi = f * sol.rows(offset, f.ncols());
        offset += f.ncols();
        min_value += en.c * (phi * &xi).norm_squared();
        combo += &xi * en.c;
        membership_residual = membership_residual.max((en.e.project(&xi) - &xi).norm());
        projection_value += en.c * (phi * en.e.project(x)).norm_squared();
        minimizers.push(xi.iter().copied().collect());
    }
    let target = (phi * x).norm_squared();
    Ok(MinNormResult {
        projection_is_minimizer: (projection_value - min_value).abs() <= 1e-9 * min_value.max(1.0),
        min_value,
        target,
        minimizers,
        feasibility_residual: (combo - x).norm(),
        membership_residual,
        projection_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use std::f64::consts::PI;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn lines() -> RankOneDatum {
        gen::plane_lines(&[0.0, PI / 3.0, 2.0 * PI / 3.0], 2.0 / 3.0)
            .rank_one_expansion()
            .unwrap()
    }

    #[test]
    fn constant_t_is_equality() {
        let r = gen::r4_example().rank_one_expansion().unwrap();
        let res = ball_barthe_check(&r, &[3.0; 6], &tol()).unwrap();
        assert!(res.equality);
        assert!((res.lhs - 81.0).abs() < 1e-10);
        assert!((res.rhs - 81.0).abs() < 1e-10);
    }

    #[test]
    fn class_constant_t_on_r4() {
        let r = gen::r4_example().rank_one_expansion().unwrap();
        // expansion order is (u1, v1, u2, v2, u3, v3)
        let t: Vec<f64> = r
            .vectors
            .iter()
            .map(|v| if v[0].abs() + v[1].abs() > 0.5 { 1.0 } else { 2.0 })
            .collect();
        let res = ball_barthe_check(&r, &t, &tol()).unwrap();
        assert!(res.equality);
        assert!((res.lhs - 4.0).abs() < 1e-12);
        assert!((res.rhs - 4.0).abs() < 1e-12);
    }

    #[test]
    fn strict_case_on_three_lines() {
        let r = lines();
        let t = [1.0, 1.0, 4.0];
        let res = ball_barthe_check(&r, &t, &tol()).unwrap();
        assert!(!res.equality);
        assert!((res.lhs - 3.0).abs() < 1e-12);
        assert!((res.rhs - 4.0_f64.powf(2.0 / 3.0)).abs() < 1e-12);
        let cb = cauchy_binet_expansion(&r, &t).unwrap();
        assert!((cb.sum - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_t_rejected() {
        let r = lines();
        assert!(matches!(ball_barthe_check(&r, &[1.0, 0.0, 1.0], &tol()), Err(Error::NonPositive(_))));
    }

    #[test]
    fn cauchy_binet_examples() {
        let r = gen::axis_datum(3).rank_one_expansion().unwrap();
        let cb = cauchy_binet_expansion(&r, &[2.0, 3.0, 5.0]).unwrap();
        assert_eq!(cb.minors.len(), 1);
        assert!((cb.sum - 30.0).abs() < 1e-12);

        let cb = cauchy_binet_expansion(&lines(), &[1.0; 3]).unwrap();
        for m in &cb.minors {
            assert!((m.weight - 1.0 / 3.0).abs() < 1e-14);
        }
        assert!(cb.weights_ok && cb.marginals_ok && cb.matches_det);

        let r = gen::r4_example().rank_one_expansion().unwrap();
        let cb = cauchy_binet_expansion(&r, &[1.0; 6]).unwrap();
        assert_eq!(cb.minors.len(), 15);
        for m in &cb.minors {
            let us = m.subset.iter().filter(|&&j| r.vectors[j][0].abs() + r.vectors[j][1].abs() > 0.5).count();
            if us == 2 {
                assert!(m.weight > 1e-3);
            } else {
                assert!(m.weight < 1e-15);
            }
        }
        assert!(cb.marginals.iter().all(|m| (m - 2.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn minor_cap() {
        let d = gen::holder(6, &[1.0 / 8.0; 8]);
        let r = d.rank_one_expansion().unwrap();
        // C(48, 6) > 10^7
        assert!(matches!(
            cauchy_binet_expansion(&r, &vec![1.0; 48]),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn identity_operators_give_equality() {
        let d = gen::loomis_whitney(3);
        let a = vec![DMatrix::identity(2, 2); 3];
        let res = determinantal_high_check(&d, &a, &tol()).unwrap();
        assert!(res.equality);
        let Some(Certificate::Phi { matrix }) = res.equality_certificate else {
            panic!("missing certificate")
        };
        for (i, row) in matrix.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn r4_block_operators_give_equality() {
        let d = gen::r4_example();
        let (a, b) = (1.7, 0.3);
        let phi = Subspace::coordinate(4, &[0, 1]).projection() * a + Subspace::coordinate(4, &[2, 3]).projection() * b;
        let ops: Vec<DMatrix<f64>> = d
            .entries()
            .iter()
            .map(|e| e.e.frame().transpose() * &phi * e.e.frame())
            .collect();
        let res = determinantal_high_check(&d, &ops, &tol()).unwrap();
        assert!(res.equality);
        assert!(res.log_gap.abs() < 1e-12);
    }

    #[test]
    fn mismatched_operators_are_strict() {
        let d = gen::loomis_whitney(3);
        let a: Vec<DMatrix<f64>> = [1.0, 2.0, 5.0].iter().map(|&s| DMatrix::identity(2, 2) * s).collect();
        let res = determinantal_high_check(&d, &a, &tol()).unwrap();
        assert!(!res.equality);
        assert!(res.log_gap > 1e-3);
        let bad = vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]); 3];
        assert!(matches!(determinantal_high_check(&d, &bad, &tol()), Err(Error::NotSymmetric(_))));
        let neg = vec![DMatrix::identity(2, 2) * -1.0; 3];
        assert!(matches!(
            determinantal_high_check(&d, &neg, &tol()),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn min_norm_identity() {
        let d = gen::r4_example();
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]);
        let res = min_norm_decomposition(&d, &DMatrix::identity(4, 4), &x, &tol()).unwrap();
        assert!((res.min_value - x.norm_squared()).abs() < 1e-12);
        assert!(res.projection_is_minimizer);
        for (xi, en) in res.minimizers.iter().zip(d.entries()) {
            let p = en.e.project(&x);
            assert!(xi.iter().zip(p.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn min_norm_r4_blocks() {
        let d = gen::r4_example();
        let phi = Subspace::coordinate(4, &[0, 1]).projection() * 2.0 + Subspace::coordinate(4, &[2, 3]).projection() * 3.0;
        let (u, v) = gen::r4_vectors();
        let x = &u[0] + &v[0];
        let res = min_norm_decomposition(&d, &phi, &x, &tol()).unwrap();
        assert!((res.min_value - 13.0).abs() < 1e-10);
        assert!((res.target - 13.0).abs() < 1e-12);
        assert!(res.projection_is_minimizer);
    }

    #[test]
    fn min_norm_rotated_axes_is_strict() {
        let d = gen::loomis_whitney(3);
        let q = gen::random_orthogonal(3, &mut gen::rng(3));
        let phi = &q * DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0])) * q.transpose();
        let x = DVector::from_vec(vec![0.7, -0.2, 1.1]);
        let res = min_norm_decomposition(&d, &phi, &x, &tol()).unwrap();
        assert!(res.min_value < res.target - 1e-6);
        assert!(!res.projection_is_minimizer);
        assert!(res.feasibility_residual < 1e-9);
        assert!(res.membership_residual < 1e-9);
    }
}
