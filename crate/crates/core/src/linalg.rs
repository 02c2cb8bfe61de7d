//! Small dense helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest absolute entry of `m - mᵀ`, relative to the largest entry of `m`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = max_abs(m).max(1.0);
    max_abs(&(m - m.transpose())) / scale
}

pub fn check_symmetric(m: &DMatrix<f64>, tol: f64, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSymmetric(format!("{what} is {}x{}", m.nrows(), m.ncols())));
    }
    let a = asymmetry(m);
    if a > tol {
        return Err(Error::NotSymmetric(format!("{what}: relative asymmetry {a:.3e}")));
    }
    Ok(())
}

/// Log-determinant of a symmetric positive definite matrix via Cholesky.
pub fn spd_log_det(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let sym = symmetrize(m);
    let chol = sym
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Groups sorted eigenvalues whose consecutive relative gap is below `rel_tol`.
/// Returns index ranges into the sorted eigenvalue list.
pub fn cluster_sorted(values: &[f64], rel_tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    if values.is_empty() {
        return out;
    }
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut start = 0;
    for i in 1..values.len() {
        if (values[i] - values[i - 1]).abs() > rel_tol * scale {
            out.push(start..i);
            start = i;
        }
    }
    out.push(start..values.len());
    out
}

/// Principal square root of a symmetric positive definite matrix.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sorted_eigen(m);
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite("square root of non-PD matrix".into()));
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|v| v.sqrt())));
    Ok(&vecs * d * vecs.transpose())
}

/// Thin singular value decomposition `a = U diag(s) Vᵀ` by one-sided Jacobi
/// rotations. `u` has the shape of `a`, `v` is square; columns of `u` whose
/// singular value is zero are left zero. Singular values are not sorted.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

// nalgebra 0.35's bidiagonal SVD loses accuracy on some rank-deficient
// inputs (reconstruction errors near 1e-3), which breaks rank decisions.
pub fn svd(a: &DMatrix<f64>) -> Svd {
    let p = a.ncols();
    let mut w = a.clone();
    let mut v = DMatrix::identity(p, p);
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..p {
            for j in i + 1..p {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, i, j, c, s);
                rotate_columns(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut u = DMatrix::zeros(a.nrows(), p);
    let mut s = Vec::with_capacity(p);
    for j in 0..p {
        let norm = w.column(j).norm();
        if norm > 0.0 {
            u.set_column(j, &(w.column(j) / norm));
        }
        s.push(norm);
    }
    Svd { u, s, v }
}

fn rotate_columns(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let a = m[(r, i)];
        let b = m[(r, j)];
        m[(r, i)] = c * a - s * b;
        m[(r, j)] = s * a + c * b;
    }
}

pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // rightmost position that can still advance
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_enumerates_all_subsets() {
        let c = combinations(5, 3);
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], vec![0, 1, 2]);
        assert_eq!(c[9], vec![2, 3, 4]);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(4, 4), vec![vec![0, 1, 2, 3]]);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn binomial_matches_small_values() {
        assert_eq!(binomial(6, 4), Some(15));
        assert_eq!(binomial(12, 6), Some(924));
        assert_eq!(binomial(3, 5), Some(0));
    }

    #[test]
    fn clustering_groups_repeated_eigenvalues() {
        let groups = cluster_sorted(&[1.0, 1.0 + 1e-12, 2.0, 3.0, 3.0], 1e-6);
        assert_eq!(groups, vec![0..2, 2..3, 3..5]);
    }

    #[test]
    fn jacobi_svd_reconstructs_rank_deficient_input() {
        let mut a = DMatrix::from_fn(7, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let c0 = a.column(0).into_owned();
        a.set_column(5, &c0);
        let d = svd(&a);
        let rec = &d.u * DMatrix::from_diagonal(&DVector::from_vec(d.s.clone())) * d.v.transpose();
        assert!(max_abs(&(rec - &a)) < 1e-13);
        assert!(d.s.iter().any(|&x| x < 1e-13));
        let vtv = d.v.transpose() * &d.v;
        assert!(max_abs(&(vtv - DMatrix::identity(6, 6))) < 1e-14);
    }

    #[test]
    fn log_det_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!((spd_log_det(&m, "m").unwrap() - 6.0_f64.ln()).abs() < 1e-14);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0]));
        assert!(spd_log_det(&bad, "bad").is_err());
    }
}
