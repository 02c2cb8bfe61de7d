//! Nonnegative integrable functions on a subspace, written in the
//! coordinates of the subspace's frame.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{check_symmetric, max_abs, spd_log_det};
use crate::subspace::{Subspace, Tolerance};

/// Highest coordinate dimension for sampled densities.
pub const MAX_GRID_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct GridData {
    /// Lower corner of the first cell.
    pub lo: Vec<f64>,
    pub h: f64,
    pub shape: Vec<usize>,
    /// Cell values, last coordinate fastest.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    /// Orthonormal columns spanning the factor inside the domain coordinates.
    pub frame: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// Lives on ℝ^{frame.ncols()}.
    pub density: Density,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DensityKind {
    /// `exp(−π ⟨A(y−b), y−b⟩)`.
    Gaussian { a: DMatrix<f64>, center: DVector<f64> },
    /// Piecewise constant on cells.
    Grid(GridData),
    /// Indicator of a union of disjoint boxes.
    Boxes(Vec<BoxSet>),
    /// `Π_j g_j(G_jᵀ y − o_j)` over pairwise orthogonal factors spanning the domain.
    Factorized(Vec<Factor>),
    Mixture(Vec<Density>),
}

/// `scale · kind(y)` for `y` in the frame coordinates of `domain`.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    pub domain: Subspace,
    pub scale: f64,
    pub kind: DensityKind,
}

fn q_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

impl GridData {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.shape.len()];
        for a in (0..self.shape.len().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.shape[a + 1];
        }
        s
    }

    pub fn cell_index(&self, y: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for (a, st) in self.strides().into_iter().enumerate() {
            let t = (y[a] - self.lo[a]) / self.h;
            if !(t >= 0.0) || t >= self.shape[a] as f64 {
                return None;
            }
            flat += (t as usize).min(self.shape[a] - 1) * st;
        }
        Some(flat)
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.cell_index(y).map_or(0.0, |i| self.values[i])
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn center(&self, mut flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for a in (0..self.dim()).rev() {
            let i = flat % self.shape[a];
            flat /= self.shape[a];
            out[a] = self.lo[a] + (i as f64 + 0.5) * self.h;
        }
        out
    }

    fn check(&self) -> Result<()> {
        let d = self.shape.len();
        if d == 0 || d > MAX_GRID_DIM || self.lo.len() != d {
            return Err(Error::InvalidDensity(format!("grid dimension {d} unsupported")));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidDensity("grid cell size must be positive".into()));
        }
        let count: usize = self.shape.iter().product();
        if count != self.values.len() {
            return Err(Error::InvalidDensity(format!(
                "grid has {} values for {count} cells",
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidDensity("grid values must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

impl BoxSet {
    fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    fn contains(&self, y: &[f64]) -> bool {
        self.lo.iter().zip(&self.hi).zip(y).all(|((l, h), v)| *v >= *l && *v <= *h)
    }

    fn overlaps(&self, other: &BoxSet) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(other.lo.iter().zip(&other.hi))
            .all(|((l1, h1), (l2, h2))| l1.max(*l2) < h1.min(*h2))
    }
}

impl Density {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn gaussian(domain: Subspace, a: DMatrix<f64>, center: Option<DVector<f64>>, scale: f64) -> Result<Self> {
        let d = domain.dim();
        let center = center.unwrap_or_else(|| DVector::zeros(d));
        Self::new(domain, scale, DensityKind::Gaussian { a, center })
    }

    /// `exp(−π|y|²)` on `domain`.
    pub fn standard_gaussian(domain: Subspace) -> Self {
        let d = domain.dim();
        Self::gaussian(domain, DMatrix::identity(d, d), None, 1.0).expect("identity is positive definite")
    }

    pub fn indicator(domain: Subspace, boxes: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let boxes = boxes.into_iter().map(|(lo, hi)| BoxSet { lo, hi }).collect();
        Self::new(domain, 1.0, DensityKind::Boxes(boxes))
    }

    pub fn new(domain: Subspace, scale: f64, kind: DensityKind) -> Result<Self> {
        let f = Self { domain, scale, kind };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidDensity("domain must be nonzero".into()));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidDensity(format!("scale {} must be positive", self.scale)));
        }
        match &self.kind {
            DensityKind::Gaussian { a, center } => {
                if a.nrows() != d || a.ncols() != d || center.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: a.nrows(),
                    });
                }
                check_symmetric(a, 1e-9, "Gaussian matrix")?;
                spd_log_det(a, "Gaussian matrix")?;
            }
            DensityKind::Grid(g) => {
                g.check()?;
                if g.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: g.dim() });
                }
            }
            DensityKind::Boxes(bs) => {
                if bs.is_empty() {
                    return Err(Error::InvalidDensity("no boxes".into()));
                }
                for b in bs {
                    if b.lo.len() != d || b.hi.len() != d {
                        return Err(Error::DimensionMismatch { expected: d, got: b.lo.len() });
                    }
                    if b.lo.iter().zip(&b.hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
                        return Err(Error::InvalidDensity("box bounds must satisfy lo < hi".into()));
                    }
                }
                for (i, b) in bs.iter().enumerate() {
                    if bs[i + 1..].iter().any(|o| b.overlaps(o)) {
                        return Err(Error::InvalidDensity("boxes must be disjoint".into()));
                    }
                }
            }
            DensityKind::Factorized(fs) => {
                if fs.is_empty() {
                    return Err(Error::InvalidDensity("no factors".into()));
                }
                let mut all = Vec::new();
                for f in fs {
                    if f.frame.nrows() != d || f.frame.ncols() != f.density.dim() || f.offset.len() != f.density.dim() {
                        return Err(Error::InvalidDensity("factor frame does not match its density".into()));
                    }
                    all.extend(f.frame.column_iter().map(|c| c.into_owned()));
                }
                if all.len() != d {
                    return Err(Error::InvalidDensity(format!(
                        "factors span {} of {d} dimensions",
                        all.len()
                    )));
                }
                let g = DMatrix::from_columns(&all);
                if max_abs(&(g.transpose() * &g - DMatrix::identity(d, d))) > 1e-9 {
                    return Err(Error::InvalidDensity("factor frames are not orthonormal".into()));
                }
            }
            DensityKind::Mixture(cs) => {
                if cs.is_empty() {
                    return Err(Error::InvalidDensity("empty mixture".into()));
                }
                if cs.iter().any(|c| c.dim() != d) {
                    return Err(Error::InvalidDensity("mixture components differ in dimension".into()));
                }
            }
        }
        Ok(())
    }

    /// Natural log of the value at `y`, `−∞` where it vanishes.
    pub fn log_eval(&self, y: &[f64]) -> f64 {
        let base = match &self.kind {
            DensityKind::Gaussian { a, center } => {
                let r = DVector::from_iterator(y.len(), y.iter().zip(center.iter()).map(|(v, c)| v - c));
                -std::f64::consts::PI * (r.transpose() * a * &r)[(0, 0)]
            }
            DensityKind::Grid(g) => g.value(y).ln(),
            DensityKind::Boxes(bs) => {
                if bs.iter().any(|b| b.contains(y)) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            DensityKind::Factorized(fs) => {
                let yv = DVector::from_column_slice(y);
                let mut acc = 0.0;
                for f in fs {
                    let u = f.frame.transpose() * &yv - &f.offset;
                    acc += f.density.log_eval(u.as_slice());
                    if acc == f64::NEG_INFINITY {
                        break;
                    }
                }
                acc
            }
            DensityKind::Mixture(cs) => cs.iter().map(|c| c.eval(y)).sum::<f64>().ln(),
        };
        self.scale.ln() + base
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.log_eval(y).exp()
    }

    pub fn mass(&self) -> f64 {
        let base = match &self.kind {
            DensityKind::Gaussian { a, .. } => (-0.5 * spd_log_det(a, "").unwrap_or(f64::INFINITY)).exp(),
            DensityKind::Grid(g) => g.values.iter().sum::<f64>() * g.cell_volume(),
            DensityKind::Boxes(bs) => bs.iter().map(BoxSet::volume).sum(),
            DensityKind::Factorized(fs) => fs.iter().map(|f| f.density.mass()).product(),
            DensityKind::Mixture(cs) => cs.iter().map(Density::mass).sum(),
        };
        self.scale * base
    }

    /// Upper bound on the fraction of mass outside `[−r, r]^d`.
    pub fn tail_fraction(&self, r: f64) -> f64 {
        let t = match &self.kind {
            DensityKind::Gaussian { a, center } => {
                let cov = a.clone().try_inverse().unwrap_or_else(|| DMatrix::zeros(a.nrows(), a.ncols()));
                (0..center.len())
                    .map(|i| {
                        let sigma = (cov[(i, i)] / (2.0 * std::f64::consts::PI)).sqrt();
                        q_tail((r - center[i]) / sigma) + q_tail((r + center[i]) / sigma)
                    })
                    .sum()
            }
            DensityKind::Grid(g) => {
                let total: f64 = g.values.iter().sum();
                if total == 0.0 {
                    return 0.0;
                }
                let outside: f64 = g
                    .values
                    .iter()
                    .enumerate()
                    .filter(|(i, v)| {
                        **v > 0.0 && g.center(*i).iter().any(|c| c.abs() + 0.5 * g.h > r)
                    })
                    .map(|(_, v)| v)
                    .sum();
                outside / total
            }
            DensityKind::Boxes(bs) => {
                let total: f64 = bs.iter().map(BoxSet::volume).sum();
                let outside: f64 = bs
                    .iter()
                    .filter(|b| b.lo.iter().chain(&b.hi).any(|v| v.abs() > r))
                    .map(BoxSet::volume)
                    .sum();
                outside / total
            }
            DensityKind::Factorized(fs) => {
                let o = fs.iter().map(|f| f.offset.norm_squared()).sum::<f64>().sqrt();
                let rho = (r - o) / (self.dim() as f64).sqrt();
                if rho <= 0.0 {
                    return 1.0;
                }
                fs.iter().map(|f| f.density.tail_fraction(rho)).sum()
            }
            DensityKind::Mixture(cs) => {
                let total = self.mass() / self.scale;
                cs.iter().map(|c| c.mass() * c.tail_fraction(r)).sum::<f64>() / total
            }
        };
        t.min(1.0)
    }

    /// Per-coordinate interval containing the support, clipped to `[−r, r]`.
    pub fn support_box(&self, r: f64) -> Vec<(f64, f64)> {
        let d = self.dim();
        let clip = |lo: f64, hi: f64| (lo.max(-r), hi.min(r));
        match &self.kind {
            DensityKind::Grid(g) => {
                let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
                for (i, v) in g.values.iter().enumerate() {
                    if *v > 0.0 {
                        for (a, c) in g.center(i).into_iter().enumerate() {
                            out[a].0 = out[a].0.min(c - 0.5 * g.h);
                            out[a].1 = out[a].1.max(c + 0.5 * g.h);
                        }
                    }
                }
                out.into_iter().map(|(l, h)| clip(l, h)).collect()
            }
            DensityKind::Boxes(bs) => (0..d)
                .map(|a| {
                    let lo = bs.iter().map(|b| b.lo[a]).fold(f64::INFINITY, f64::min);
                    let hi = bs.iter().map(|b| b.hi[a]).fold(f64::NEG_INFINITY, f64::max);
                    clip(lo, hi)
                })
                .collect(),
            DensityKind::Mixture(cs) => {
                let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
                for c in cs {
                    for (a, (l, h)) in c.support_box(r).into_iter().enumerate() {
                        out[a].0 = out[a].0.min(l);
                        out[a].1 = out[a].1.max(h);
                    }
                }
                out
            }
            _ => vec![(-r, r); d],
        }
    }

    /// Cumulative distribution (unnormalized) of a density on a line.
    pub fn cdf(&self, y: f64) -> Result<f64> {
        self.require_line()?;
        let base = match &self.kind {
            DensityKind::Gaussian { a, center } => {
                let sigma = (1.0 / (2.0 * std::f64::consts::PI * a[(0, 0)])).sqrt();
                (1.0 / a[(0, 0)].sqrt()) * q_tail((center[0] - y) / sigma)
            }
            DensityKind::Grid(g) => {
                let t = (y - g.lo[0]) / g.h;
                if t <= 0.0 {
                    0.0
                } else {
                    let full = (t.floor() as usize).min(g.shape[0]);
                    let mut acc: f64 = g.values[..full].iter().sum();
                    if full < g.shape[0] {
                        acc += g.values[full] * (t - full as f64);
                    }
                    acc * g.h
                }
            }
            DensityKind::Boxes(bs) => bs.iter().map(|b| (y.min(b.hi[0]) - b.lo[0]).max(0.0)).sum(),
            DensityKind::Factorized(fs) => {
                let f = &fs[0];
                let s = f.frame[(0, 0)];
                let u = s * y - f.offset[0];
                if s > 0.0 {
                    f.density.cdf(u)?
                } else {
                    f.density.sf(u)?
                }
            }
            DensityKind::Mixture(cs) => {
                let mut acc = 0.0;
                for c in cs {
                    acc += c.cdf(y)?;
                }
                acc
            }
        };
        Ok(self.scale * base)
    }

    /// Mass to the right of `y` on a line, accurate in the upper tail.
    pub fn sf(&self, y: f64) -> Result<f64> {
        self.require_line()?;
        match &self.kind {
            DensityKind::Gaussian { a, center } => {
                let sigma = (1.0 / (2.0 * std::f64::consts::PI * a[(0, 0)])).sqrt();
                Ok(self.scale * (1.0 / a[(0, 0)].sqrt()) * q_tail((y - center[0]) / sigma))
            }
            DensityKind::Factorized(fs) => {
                let f = &fs[0];
                let s = f.frame[(0, 0)];
                let u = s * y - f.offset[0];
                Ok(self.scale * if s > 0.0 { f.density.sf(u)? } else { f.density.cdf(u)? })
            }
            DensityKind::Mixture(cs) => {
                let mut acc = 0.0;
                for c in cs {
                    acc += c.sf(y)?;
                }
                Ok(self.scale * acc)
            }
            _ => Ok((self.mass() - self.cdf(y)?).max(0.0)),
        }
    }

    fn require_line(&self) -> Result<()> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(format!(
                "distribution functions need a 1-dimensional density, got {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Whether the density is log-concave. Sampled densities are tested by
    /// discrete midpoint concavity of the log along axis and diagonal
    /// directions, with a convex (gap-free) support along the same lines.
    pub fn is_log_concave(&self) -> bool {
        match &self.kind {
            DensityKind::Gaussian { .. } => true,
            DensityKind::Grid(g) => grid_log_concave(g),
            DensityKind::Boxes(bs) => {
                if bs.len() == 1 {
                    return true;
                }
                if self.dim() != 1 {
                    return false;
                }
                let mut iv: Vec<(f64, f64)> = bs.iter().map(|b| (b.lo[0], b.hi[0])).collect();
                iv.sort_by(|a, b| a.0.total_cmp(&b.0));
                iv.windows(2).all(|w| w[1].0 <= w[0].1)
            }
            DensityKind::Factorized(fs) => fs.iter().all(|f| f.density.is_log_concave()),
            DensityKind::Mixture(cs) => cs.len() == 1 && cs[0].is_log_concave(),
        }
    }

    /// Same density written on a rotated copy of the coordinates: `frame`
    /// gives the domain's frame in the new coordinates.
    pub fn with_domain(mut self, domain: Subspace) -> Result<Self> {
        if domain.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: domain.dim(),
            });
        }
        self.domain = domain;
        Ok(self)
    }

    /// Samples the density at cell centres of the grid `{lo + (i+½)h}`
    /// covering `[c − r, c + r]^d`, anchored to multiples of `h`. Boxes are
    /// averaged over each cell instead, which keeps their mass exact.
    pub fn to_grid(&self, h: f64, r: f64, center: &[f64]) -> Result<GridData> {
        let d = self.dim();
        if d > MAX_GRID_DIM {
            return Err(Error::Unsupported(format!("cannot sample a {d}-dimensional density")));
        }
        if let DensityKind::Grid(g) = &self.kind {
            if (g.h - h).abs() <= 1e-12 * h {
                let mut g = g.clone();
                g.values.iter_mut().for_each(|v| *v *= self.scale);
                return Ok(g);
            }
        }
        let mut lo = Vec::with_capacity(d);
        let mut shape = Vec::with_capacity(d);
        for &c in center.iter().take(d) {
            let a = ((c - r) / h).floor();
            let b = ((c + r) / h).ceil();
            lo.push(a * h);
            shape.push((b - a).max(1.0) as usize);
        }
        let count: usize = shape.iter().product();
        if count > 50_000_000 {
            return Err(Error::Unsupported(format!("sampling grid of {count} cells is too large")));
        }
        let mut g = GridData {
            lo,
            h,
            shape,
            values: vec![0.0; count],
        };
        if let DensityKind::Boxes(bs) = &self.kind {
            for i in 0..count {
                let c = g.center(i);
                let covered: f64 = bs
                    .iter()
                    .map(|b| {
                        (0..d)
                            .map(|a| ((c[a] + 0.5 * h).min(b.hi[a]) - (c[a] - 0.5 * h).max(b.lo[a])).max(0.0) / h)
                            .product::<f64>()
                    })
                    .sum();
                g.values[i] = self.scale * covered;
            }
            return Ok(g);
        }
        for i in 0..count {
            let c = g.center(i);
            g.values[i] = self.eval(&c);
        }
        Ok(g)
    }

    /// Centre of mass for Gaussians and factorized Gaussians, the support
    /// midpoint otherwise; used to place sampling grids.
    pub fn rough_center(&self) -> Vec<f64> {
        match &self.kind {
            DensityKind::Gaussian { center, .. } => center.iter().copied().collect(),
            DensityKind::Factorized(fs) => {
                let mut y = DVector::zeros(self.dim());
                for f in fs {
                    let c = DVector::from_vec(f.density.rough_center());
                    y += &f.frame * (c + &f.offset);
                }
                y.iter().copied().collect()
            }
            _ => self
                .support_box(f64::INFINITY)
                .into_iter()
                .map(|(l, h)| if l.is_finite() && h.is_finite() { 0.5 * (l + h) } else { 0.0 })
                .collect(),
        }
    }

    /// Collapses Gaussians and factorized products of Gaussians into a single
    /// Gaussian `(scale, A, center)`.
    pub fn as_gaussian(&self) -> Option<(f64, DMatrix<f64>, DVector<f64>)> {
        match &self.kind {
            DensityKind::Gaussian { a, center } => Some((self.scale, a.clone(), center.clone())),
            DensityKind::Factorized(fs) => {
                let d = self.dim();
                let mut a = DMatrix::zeros(d, d);
                let mut center = DVector::zeros(d);
                let mut scale = self.scale;
                for f in fs {
                    let (s, af, cf) = f.density.as_gaussian()?;
                    scale *= s;
                    a += &f.frame * af * f.frame.transpose();
                    center += &f.frame * (cf + &f.offset);
                }
                Some((scale, a, center))
            }
            _ => None,
        }
    }
}

fn grid_log_concave(g: &GridData) -> bool {
    let d = g.dim();
    let strides = g.strides();
    let mut dirs: Vec<Vec<i64>> = Vec::new();
    for a in 0..d {
        let mut e = vec![0; d];
        e[a] = 1;
        dirs.push(e);
        for b in a + 1..d {
            for s in [1, -1] {
                let mut e = vec![0; d];
                e[a] = 1;
                e[b] = s;
                dirs.push(e);
            }
        }
    }
    let idx = |flat: usize| -> Vec<i64> {
        let mut out = vec![0; d];
        let mut f = flat;
        for a in (0..d).rev() {
            out[a] = (f % g.shape[a]) as i64;
            f /= g.shape[a];
        }
        out
    };
    let at = |p: &[i64]| -> Option<f64> {
        let mut flat = 0;
        for a in 0..d {
            if p[a] < 0 || p[a] >= g.shape[a] as i64 {
                return None;
            }
            flat += p[a] as usize * strides[a];
        }
        Some(g.values[flat])
    };
    for flat in 0..g.values.len() {
        let p = idx(flat);
        let v = g.values[flat];
        for e in &dirs {
            let fwd: Vec<i64> = p.iter().zip(e).map(|(x, s)| x + s).collect();
            let bwd: Vec<i64> = p.iter().zip(e).map(|(x, s)| x - s).collect();
            let (Some(vf), Some(vb)) = (at(&fwd), at(&bwd)) else {
                continue;
            };
            if v == 0.0 {
                // a hole between two support points breaks convexity
                if vf > 0.0 && vb > 0.0 {
                    return false;
                }
                continue;
            }
            if vf > 0.0 && vb > 0.0 && vf.ln() + vb.ln() > 2.0 * v.ln() + 1e-9 {
                return false;
            }
        }
    }
    // support must be gap-free along every axis line
    for a in 0..d {
        for flat in 0..g.values.len() {
            let p = idx(flat);
            if p[a] != 0 {
                continue;
            }
            let mut state = 0;
            for i in 0..g.shape[a] {
                let mut q = p.clone();
                q[a] = i as i64;
                let pos = at(&q).unwrap_or(0.0) > 0.0;
                state = match (state, pos) {
                    (0, true) => 1,
                    (1, false) => 2,
                    (2, true) => return false,
                    (s, _) => s,
                };
            }
        }
    }
    true
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct FactorSpec {
    /// Frame vectors (rows) in the domain coordinates.
    pub frame: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    pub density: DensitySpec,
}

/// JSON form of a density; the domain is supplied by context.
#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Gaussian {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Grid {
        lo: Vec<f64>,
        h: f64,
        shape: Vec<usize>,
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Boxes {
        boxes: Vec<BoxSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Factorized {
        factors: Vec<FactorSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Mixture {
        components: Vec<DensitySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl DensitySpec {
    pub fn into_density(self, domain: Subspace) -> Result<Density> {
        let d = domain.dim();
        let (scale, kind) = match self {
            DensitySpec::Gaussian { a, center, scale } => {
                let a = matrix_from_rows(&a, "A")?;
                let center = DVector::from_vec(center.unwrap_or_else(|| vec![0.0; d]));
                (scale, DensityKind::Gaussian { a, center })
            }
            DensitySpec::Grid {
                lo,
                h,
                shape,
                values,
                scale,
            } => (scale, DensityKind::Grid(GridData { lo, h, shape, values })),
            DensitySpec::Boxes { boxes, scale } => (
                scale,
                DensityKind::Boxes(boxes.into_iter().map(|b| BoxSet { lo: b.lo, hi: b.hi }).collect()),
            ),
            DensitySpec::Factorized { factors, scale } => {
                let mut out = Vec::with_capacity(factors.len());
                for f in factors {
                    let rows = matrix_from_rows(&f.frame, "factor frame")?;
                    let frame = rows.transpose();
                    let k = frame.ncols();
                    let offset = DVector::from_vec(f.offset.unwrap_or_else(|| vec![0.0; k]));
                    let density = f.density.into_density(Subspace::full(k))?;
                    out.push(Factor { frame, offset, density });
                }
                (scale, DensityKind::Factorized(out))
            }
            DensitySpec::Mixture { components, scale } => {
                let mut out = Vec::with_capacity(components.len());
                for c in components {
                    out.push(c.into_density(domain.clone())?);
                }
                (scale, DensityKind::Mixture(out))
            }
        };
        Density::new(domain, scale.unwrap_or(1.0), kind)
    }

    pub fn from_density(f: &Density) -> Self {
        let scale = (f.scale != 1.0).then_some(f.scale);
        match &f.kind {
            DensityKind::Gaussian { a, center } => DensitySpec::Gaussian {
                a: crate::determinantal::rows(a),
                center: Some(center.iter().copied().collect()),
                scale,
            },
            DensityKind::Grid(g) => DensitySpec::Grid {
                lo: g.lo.clone(),
                h: g.h,
                shape: g.shape.clone(),
                values: g.values.clone(),
                scale,
            },
            DensityKind::Boxes(bs) => DensitySpec::Boxes {
                boxes: bs
                    .iter()
                    .map(|b| BoxSpec {
                        lo: b.lo.clone(),
                        hi: b.hi.clone(),
                    })
                    .collect(),
                scale,
            },
            DensityKind::Factorized(fs) => DensitySpec::Factorized {
                factors: fs
                    .iter()
                    .map(|x| FactorSpec {
                        frame: crate::determinantal::rows(&x.frame.transpose()),
                        offset: Some(x.offset.iter().copied().collect()),
                        density: DensitySpec::from_density(&x.density),
                    })
                    .collect(),
                scale,
            },
            DensityKind::Mixture(cs) => DensitySpec::Mixture {
                components: cs.iter().map(DensitySpec::from_density).collect(),
                scale,
            },
        }
    }
}

/// Parses `{"densities": [...]}` or a bare array, attaching each density to
/// the matching subspace.
pub fn densities_from_json(text: &str, domains: &[Subspace]) -> Result<Vec<Density>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum File {
        Wrapped { densities: Vec<DensitySpec> },
        Bare(Vec<DensitySpec>),
    }
    let file: File = serde_json::from_str(text).map_err(crate::datum::json_error)?;
    let specs = match file {
        File::Wrapped { densities } => densities,
        File::Bare(v) => v,
    };
    if specs.len() != domains.len() {
        return Err(Error::DimensionMismatch {
            expected: domains.len(),
            got: specs.len(),
        });
    }
    specs
        .into_iter()
        .zip(domains)
        .map(|(s, d)| s.into_density(d.clone()))
        .collect()
}

/// Convolution on the common domain. Gaussians combine in closed form,
/// matching factorized products convolve factor by factor, and everything
/// else is sampled on a grid of cell size `h` and summed directly.
pub fn convolve_density(f: &Density, g: &Density, h: f64, tol: &Tolerance) -> Result<Density> {
    if !f.domain.equals(&g.domain, tol)? {
        return Err(Error::InvalidDensity("convolution needs a common domain".into()));
    }
    let domain = f.domain.clone();
    if let (DensityKind::Gaussian { a: af, center: bf }, DensityKind::Gaussian { a: ag, center: bg }) = (&f.kind, &g.kind) {
        let cov = af.clone().try_inverse().ok_or_else(|| Error::Internal("inverse".into()))?
            + ag.clone().try_inverse().ok_or_else(|| Error::Internal("inverse".into()))?;
        let a = cov.try_inverse().ok_or_else(|| Error::Internal("inverse".into()))?;
        let a = crate::linalg::symmetrize(&a);
        let mass = f.mass() * g.mass();
        let scale = mass * (0.5 * spd_log_det(&a, "convolved Gaussian")?).exp();
        return Density::gaussian(domain, a, Some(bf + bg), scale);
    }
    if let Some(out) = factorwise(f, g, h, tol)? {
        return Ok(out);
    }
    if let Some(out) = factorwise(g, f, h, tol)? {
        return Ok(out);
    }
    let d = f.dim();
    let r_of = |x: &Density| -> f64 {
        let mut r = 1.0;
        while x.tail_fraction(r) > 1e-13 && r < 1e4 {
            r *= 1.5;
        }
        r
    };
    let gf = f.to_grid(h, r_of(f), &f.rough_center())?;
    let gg = g.to_grid(h, r_of(g), &g.rough_center())?;
    let shape: Vec<usize> = gf.shape.iter().zip(&gg.shape).map(|(a, b)| a + b - 1).collect();
    let lo: Vec<f64> = gf.lo.iter().zip(&gg.lo).map(|(a, b)| a + b + 0.5 * h).collect();
    let count: usize = shape.iter().product();
    let mut values = vec![0.0; count];
    let out_strides = {
        let mut s = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * shape[a + 1];
        }
        s
    };
    let unflat = |mut i: usize, sh: &[usize]| -> Vec<usize> {
        let mut out = vec![0; sh.len()];
        for a in (0..sh.len()).rev() {
            out[a] = i % sh[a];
            i /= sh[a];
        }
        out
    };
    let vol = gf.cell_volume();
    for (i, &vf) in gf.values.iter().enumerate() {
        if vf == 0.0 {
            continue;
        }
        let pi = unflat(i, &gf.shape);
        for (j, &vg) in gg.values.iter().enumerate() {
            if vg == 0.0 {
                continue;
            }
            let pj = unflat(j, &gg.shape);
            let flat: usize = (0..d).map(|a| (pi[a] + pj[a]) * out_strides[a]).sum();
            values[flat] += vf * vg * vol;
        }
    }
    Density::new(domain, 1.0, DensityKind::Grid(GridData { lo, h, shape, values }))
}

/// `f` factorized and `g` either factorized along the same frames or a
/// Gaussian that splits along them.
fn factorwise(f: &Density, g: &Density, h: f64, tol: &Tolerance) -> Result<Option<Density>> {
    let DensityKind::Factorized(ff) = &f.kind else {
        return Ok(None);
    };
    let split: Vec<(Density, DVector<f64>)> = match &g.kind {
        DensityKind::Factorized(gf) => {
            if gf.len() != ff.len() {
                return Ok(None);
            }
            let mut out = Vec::new();
            for (a, b) in ff.iter().zip(gf) {
                if a.frame.shape() != b.frame.shape() || max_abs(&(&a.frame - &b.frame)) > 1e-9 {
                    return Ok(None);
                }
                out.push((b.density.clone(), b.offset.clone()));
            }
            out
        }
        DensityKind::Gaussian { a, center } => {
            let mut out = Vec::new();
            for (i, x) in ff.iter().enumerate() {
                for (j, y) in ff.iter().enumerate() {
                    if i != j && max_abs(&(x.frame.transpose() * a * &y.frame)) > 1e-12 * max_abs(a).max(1.0) {
                        return Ok(None);
                    }
                }
                let block = x.frame.transpose() * a * &x.frame;
                let c = x.frame.transpose() * center;
                let k = x.frame.ncols();
                out.push((Density::gaussian(Subspace::full(k), block, Some(c), 1.0)?, DVector::zeros(k)));
            }
            out
        }
        _ => return Ok(None),
    };
    let mut factors = Vec::with_capacity(ff.len());
    for (x, (gd, goff)) in ff.iter().zip(split) {
        let conv = convolve_density(&x.density, &gd, h, tol)?;
        factors.push(Factor {
            frame: x.frame.clone(),
            offset: &x.offset + goff,
            density: conv,
        });
    }
    Density::new(f.domain.clone(), f.scale * g.scale, DensityKind::Factorized(factors)).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Subspace {
        Subspace::full(1)
    }

    #[test]
    fn masses() {
        let g = Density::gaussian(line(), DMatrix::from_element(1, 1, 4.0), None, 3.0).unwrap();
        assert!((g.mass() - 1.5).abs() < 1e-15);
        let b = Density::indicator(line(), vec![(vec![0.0], vec![1.0]), (vec![2.0], vec![3.0])]).unwrap();
        assert_eq!(b.mass(), 2.0);
        assert!(!b.is_log_concave());
        let b = Density::indicator(line(), vec![(vec![0.0], vec![1.0]), (vec![1.0], vec![3.0])]).unwrap();
        assert!(b.is_log_concave());
    }

    #[test]
    fn overlapping_boxes_rejected() {
        assert!(Density::indicator(line(), vec![(vec![0.0], vec![2.0]), (vec![1.0], vec![3.0])]).is_err());
    }

    #[test]
    fn gaussian_cdf_is_consistent() {
        let g = Density::gaussian(line(), DMatrix::from_element(1, 1, 0.25), Some(DVector::from_vec(vec![1.0])), 2.0).unwrap();
        let m = g.mass();
        assert!((g.cdf(1.0).unwrap() - 0.5 * m).abs() < 1e-14);
        for y in [-3.0, 0.0, 2.5, 7.0] {
            assert!((g.cdf(y).unwrap() + g.sf(y).unwrap() - m).abs() < 1e-13);
        }
        // sf stays accurate far in the tail
        assert!(g.sf(20.0).unwrap() > 0.0);
    }

    #[test]
    fn grid_cdf_is_piecewise_linear() {
        let g = GridData {
            lo: vec![0.0],
            h: 0.5,
            shape: vec![4],
            values: vec![1.0, 2.0, 0.0, 2.0],
        };
        let f = Density::new(line(), 1.0, DensityKind::Grid(g)).unwrap();
        assert_eq!(f.mass(), 2.5);
        assert!((f.cdf(0.25).unwrap() - 0.25).abs() < 1e-15);
        assert!((f.cdf(1.25).unwrap() - 1.5).abs() < 1e-15);
        assert!((f.cdf(9.0).unwrap() - 2.5).abs() < 1e-15);
        assert!(!f.is_log_concave());
    }

    #[test]
    fn log_concavity_of_sampled_gaussian() {
        let g = Density::standard_gaussian(Subspace::full(2));
        let grid = g.to_grid(0.1, 2.0, &[0.0, 0.0]).unwrap();
        let s = Density::new(Subspace::full(2), 1.0, DensityKind::Grid(grid)).unwrap();
        assert!(s.is_log_concave());
        let mix = Density::new(
            line(),
            1.0,
            DensityKind::Mixture(vec![
                Density::gaussian(line(), DMatrix::identity(1, 1), Some(DVector::from_vec(vec![-2.0])), 1.0).unwrap(),
                Density::gaussian(line(), DMatrix::identity(1, 1), Some(DVector::from_vec(vec![2.0])), 1.0).unwrap(),
            ]),
        )
        .unwrap();
        let grid = mix.to_grid(0.05, 5.0, &[0.0]).unwrap();
        let s = Density::new(line(), 1.0, DensityKind::Grid(grid)).unwrap();
        assert!(!s.is_log_concave());
    }

    #[test]
    fn gaussian_convolution_doubles_covariance() {
        let g = Density::standard_gaussian(line());
        let c = convolve_density(&g, &g, 0.01, &Tolerance::default()).unwrap();
        let (scale, a, center) = c.as_gaussian().unwrap();
        assert!((a[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(center[0].abs() < 1e-15);
        assert!((scale * (1.0 / a[(0, 0)]).sqrt() - 1.0).abs() < 1e-12);
        assert!((c.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indicator_convolution_is_a_triangle() {
        let b = Density::indicator(line(), vec![(vec![0.0], vec![1.0])]).unwrap();
        let c = convolve_density(&b, &b, 0.01, &Tolerance::default()).unwrap();
        assert!((c.mass() - 1.0).abs() < 1e-9);
        for (x, want) in [(0.5, 0.5), (1.0, 1.0), (1.5, 0.5)] {
            assert!((c.eval(&[x + 1e-9]) - want).abs() < 0.02, "x = {x}");
        }
        assert_eq!(c.eval(&[2.5]), 0.0);
    }

    #[test]
    fn spec_round_trip() {
        let text = r#"{"kind":"factorized","factors":[{"frame":[[0,1],[1,0]],"density":{"kind":"gaussian","A":[[2,0],[0,1]]}}],"scale":2}"#;
        let spec: DensitySpec = serde_json::from_str(text).unwrap();
        let f = spec.into_density(Subspace::full(2)).unwrap();
        assert!((f.eval(&[0.0, 0.0]) - 2.0).abs() < 1e-15);
        let back = DensitySpec::from_density(&f).into_density(Subspace::full(2)).unwrap();
        assert_eq!(back, f);
    }
}
