use nalgebra::{DMatrix, DVector};

use super::{Density, DensityKind, Factor};
use crate::datum::GeometricDatum;
use crate::error::{Error, Result};
use crate::linalg::{cluster_sorted, max_abs, sorted_eigen, spd_log_det, symmetrize};
use crate::structure::{is_critical, StructureReport};
use crate::subspace::{Subspace, Tolerance};

/// Ingredients of an extremizer. Vectors live in ℝⁿ; empty vectors mean
/// zeros (or ones for `theta`).
#[derive(Clone, Debug, Default)]
pub struct ExtremizerParams {
    /// Quadratic form on the dependent subspace, zero on its complement.
    pub a: Option<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub theta: Vec<f64>,
    /// One density per independent subspace, on that subspace.
    pub h: Vec<Density>,
}

/// `f_i(x) = θ_i exp(−⟨A Px, Px − b_i⟩) Π_{F_j ⊆ E_i} h_j(P_{F_j}(x − w_i))`
/// with `P` the projection onto the dependent subspace, returned on `E_i`.
pub fn build_extremizer(
    d: &GeometricDatum,
    report: &StructureReport,
    params: &ExtremizerParams,
    tol: &Tolerance,
) -> Result<Vec<Density>> {
    d.require_validated()?;
    let n = d.ambient_dim();
    let k = d.len();
    let indep = &report.independent_subspaces;
    let dep = &report.dependent_subspace;
    if params.h.len() != indep.len() {
        return Err(Error::DimensionMismatch {
            expected: indep.len(),
            got: params.h.len(),
        });
    }
    for (name, len) in [("b", params.b.len()), ("w", params.w.len()), ("theta", params.theta.len())] {
        if len != 0 && len != k {
            return Err(Error::Precondition(format!("{name} needs {k} entries, got {len}")));
        }
    }
    for (j, (fj, hj)) in indep.iter().zip(&params.h).enumerate() {
        if !hj.domain.equals(&fj.subspace, tol)? {
            return Err(Error::InvalidDensity(format!("h[{j}] is not on its independent subspace")));
        }
        if fj.owners.len() >= 2 && !hj.is_log_concave() {
            return Err(Error::Precondition(format!(
                "h[{j}] must be log-concave: its subspace lies in {} of the E_i",
                fj.owners.len()
            )));
        }
    }
    let a_dep = match (&params.a, dep.is_zero()) {
        (_, true) => None,
        (None, false) => {
            return Err(Error::Precondition("a quadratic form A on the dependent subspace is required".into()));
        }
        (Some(a), false) => {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
            }
            let p = dep.projection();
            let scale = max_abs(a).max(1.0);
            if max_abs(&(a - &p * a * &p)) > tol.residual_tol * scale || max_abs(&(a - a.transpose())) > tol.residual_tol * scale {
                return Err(Error::Precondition("A must be symmetric and supported on the dependent subspace".into()));
            }
            let f = dep.frame();
            let restricted = symmetrize(&(f.transpose() * a * f));
            spd_log_det(&restricted, "A on the dependent subspace")?;
            let (vals, vecs) = sorted_eigen(&restricted);
            for r in cluster_sorted(&vals, 1e-6) {
                let cols: Vec<DVector<f64>> = r.map(|c| f * vecs.column(c)).collect();
                let space = Subspace::span(&DMatrix::from_columns(&cols), tol);
                if !is_critical(d, &space, tol)?.is_critical {
                    return Err(Error::Precondition("eigenspaces of A must be critical".into()));
                }
            }
            Some(a)
        }
    };

    let mut out = Vec::with_capacity(k);
    for (i, en) in d.entries().iter().enumerate() {
        let e = &en.e;
        let ef = e.frame();
        let w = params.w.get(i).cloned().unwrap_or_else(|| DVector::zeros(n));
        if w.len() != n || !e.contains_vector(&w, tol) {
            return Err(Error::Precondition(format!("w[{i}] must lie in E_{i}")));
        }
        let mut factors = Vec::new();
        let mut covered = 0;
        for (fj, hj) in indep.iter().zip(&params.h) {
            if !fj.owners.contains(&i) {
                continue;
            }
            let r = fj.subspace.frame().transpose() * hj.domain.frame();
            let frame = ef.transpose() * fj.subspace.frame() * &r;
            let offset = r.transpose() * fj.subspace.frame().transpose() * &w;
            let dim = fj.subspace.dim();
            covered += dim;
            factors.push(Factor {
                frame,
                offset,
                density: hj.clone().with_domain(Subspace::full(dim))?,
            });
        }
        let mut scale = params.theta.get(i).copied().unwrap_or(1.0);
        let di = e.intersect(dep, tol)?;
        if !di.is_zero() {
            let a = a_dep.expect("dependent subspace is nonzero");
            let b = params.b.get(i).cloned().unwrap_or_else(|| DVector::zeros(n));
            if b.len() != n || !di.contains_vector(&b, tol) {
                return Err(Error::Precondition(format!("b[{i}] must lie in E_{i} ∩ F_dep")));
            }
            let df = di.frame();
            let ad = symmetrize(&(df.transpose() * a * df));
            let beta = df.transpose() * &b;
            scale *= (0.25 * (beta.transpose() * &ad * &beta)[(0, 0)]).exp();
            let g = Density::gaussian(
                Subspace::full(di.dim()),
                ad / std::f64::consts::PI,
                Some(beta * 0.5),
                1.0,
            )?;
            covered += di.dim();
            factors.push(Factor {
                frame: ef.transpose() * df,
                offset: DVector::zeros(di.dim()),
                density: g,
            });
        }
        if covered != e.dim() {
            return Err(Error::Inconsistent(format!(
                "E_{i} has dimension {} but its pieces cover {covered}",
                e.dim()
            )));
        }
        out.push(Density::new(e.clone(), scale, DensityKind::Factorized(factors))?);
    }
    Ok(out)
}
