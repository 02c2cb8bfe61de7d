//! Monotone transport on the line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrals::{Density, DensityKind};

/// Samples `(x_m, T(x_m))` of a nondecreasing map on a uniform grid.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MonotoneMap {
    pub h: f64,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
}

impl MonotoneMap {
    /// Piecewise-linear interpolation, constant beyond the end samples.
    pub fn eval(&self, x: f64) -> f64 {
        let (first, last) = (self.xs[0], *self.xs.last().unwrap());
        if x <= first {
            return self.ts[0];
        }
        if x >= last {
            return *self.ts.last().unwrap();
        }
        let i = self.xs.partition_point(|&v| v <= x).max(1) - 1;
        let i = i.min(self.xs.len() - 2);
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ts[i] + t * (self.ts[i + 1] - self.ts[i])
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// `[x_first, x_last]`.
    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }
}

/// Exact piecewise-linear distribution function of a sampled density.
struct Table {
    edges: Vec<f64>,
    cum: Vec<f64>,
}

enum Cdf<'a> {
    Exact(&'a Density),
    Table(Table),
}

impl<'a> Cdf<'a> {
    fn new(f: &'a Density) -> Self {
        match &f.kind {
            DensityKind::Grid(g) => {
                let mut cum = Vec::with_capacity(g.shape[0] + 1);
                let mut acc = 0.0;
                cum.push(0.0);
                for v in &g.values {
                    acc += v * g.h * f.scale;
                    cum.push(acc);
                }
                let edges = (0..=g.shape[0]).map(|i| g.lo[0] + i as f64 * g.h).collect();
                Cdf::Table(Table { edges, cum })
            }
            _ => Cdf::Exact(f),
        }
    }

    fn cdf(&self, y: f64) -> f64 {
        match self {
            Cdf::Exact(f) => f.cdf(y).unwrap_or(f64::NAN),
            Cdf::Table(t) => {
                let n = t.edges.len();
                if y <= t.edges[0] {
                    return 0.0;
                }
                if y >= t.edges[n - 1] {
                    return t.cum[n - 1];
                }
                let i = t.edges.partition_point(|&e| e <= y) - 1;
                let s = (y - t.edges[i]) / (t.edges[i + 1] - t.edges[i]);
                t.cum[i] + s * (t.cum[i + 1] - t.cum[i])
            }
        }
    }

    fn sf(&self, y: f64) -> f64 {
        match self {
            Cdf::Exact(f) => f.sf(y).unwrap_or(f64::NAN),
            Cdf::Table(t) => (t.cum.last().unwrap() - self.cdf(y)).max(0.0),
        }
    }

    /// `inf{y : F(y) ≥ u}`, with the target given either as a lower mass
    /// `u` or (in the upper half) as the remaining mass `s`.
    fn inverse(&self, lower: Option<f64>, upper: Option<f64>, start: f64) -> f64 {
        if let (Cdf::Table(t), Some(u)) = (self, lower) {
            // first edge whose cumulative mass reaches u; flat runs resolve to their left end
            let i = t.cum.partition_point(|&c| c < u);
            if i == 0 {
                return t.edges[0];
            }
            if i >= t.cum.len() {
                return *t.edges.last().unwrap();
            }
            let (c0, c1) = (t.cum[i - 1], t.cum[i]);
            let s = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
            return t.edges[i - 1] + s * (t.edges[i] - t.edges[i - 1]);
        }
        let reached = |y: f64| match (lower, upper) {
            (Some(u), _) => self.cdf(y) >= u,
            (None, Some(s)) => self.sf(y) <= s,
            _ => unreachable!(),
        };
        let mut step = 1.0;
        let (mut lo, mut hi) = (start - step, start + step);
        while reached(lo) && lo > -1e300 {
            step *= 2.0;
            lo = start - step;
        }
        step = 1.0;
        while !reached(hi) && hi < 1e300 {
            step *= 2.0;
            hi = start + step;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if reached(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

fn require_line(f: &Density, name: &str) -> Result<()> {
    if f.dim() != 1 {
        return Err(Error::Unsupported(format!("{name} must be a density on a line, got dimension {}", f.dim())));
    }
    if !(f.mass() > 0.0 && f.mass().is_finite()) {
        return Err(Error::InvalidDensity(format!("{name} has mass {}", f.mass())));
    }
    Ok(())
}

/// `T = F_f⁻¹ ∘ F_g` sampled at `a + m h`, pushing `g` forward to `f`
/// (both normalized). Samples where `F_g` is 0 or 1 are dropped.
pub fn brenier_1d(f: &Density, g: &Density, interval: (f64, f64), h: f64) -> Result<MonotoneMap> {
    require_line(f, "target")?;
    require_line(g, "source")?;
    let (a, b) = interval;
    if !(h > 0.0 && a.is_finite() && b.is_finite() && b > a) {
        return Err(Error::Precondition(format!("bad transport grid [{a}, {b}] with h = {h}")));
    }
    let steps = ((b - a) / h).round() as usize;
    if steps > 50_000_000 {
        return Err(Error::CapExceeded {
            name: "transport samples",
            value: steps,
            limit: 50_000_000,
        });
    }
    let (mf, mg) = (f.mass(), g.mass());
    let cf = Cdf::new(f);
    let cg = Cdf::new(g);
    let start = f.rough_center()[0];
    let mut xs = Vec::with_capacity(steps + 1);
    let mut ts = Vec::with_capacity(steps + 1);
    for m in 0..=steps {
        let x = a + m as f64 * h;
        let lower = cg.cdf(x) / mg;
        let upper = cg.sf(x) / mg;
        if !(lower > 0.0 && upper > 0.0) {
            continue;
        }
        let t = if lower <= 0.5 {
            cf.inverse(Some(lower * mf), None, start)
        } else {
            cf.inverse(None, Some(upper * mf), start)
        };
        if t.is_finite() {
            xs.push(x);
            ts.push(t);
        }
    }
    if xs.len() < 3 {
        return Err(Error::Precondition("the source has almost no mass on the interval".into()));
    }
    Ok(MonotoneMap { h, xs, ts })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResidualReport {
    /// `max |ĝ(x) − T'(x) f̂(T(x))|` over interior samples, hats meaning normalized.
    pub max_residual: f64,
    pub at: f64,
    /// First-order bound expected from the grid: `h` times the largest
    /// finite-difference slope of either side.
    pub expected_bound: f64,
    pub h: f64,
}

pub fn monge_ampere_residual(t: &MonotoneMap, f: &Density, g: &Density) -> Result<ResidualReport> {
    require_line(f, "target")?;
    require_line(g, "source")?;
    let (mf, mg) = (f.mass(), g.mass());
    let h = t.h;
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let mut at = Vec::new();
    for m in 1..t.len().saturating_sub(1) {
        let contiguous = (t.xs[m + 1] - t.xs[m - 1] - 2.0 * h).abs() <= 1e-9 * h.max(1.0);
        if !contiguous {
            continue;
        }
        let deriv = (t.ts[m + 1] - t.ts[m - 1]) / (2.0 * h);
        lhs.push(g.eval(&[t.xs[m]]) / mg);
        rhs.push(deriv * f.eval(&[t.ts[m]]) / mf);
        at.push(t.xs[m]);
    }
    let mut max_residual: f64 = 0.0;
    let mut where_ = f64::NAN;
    for i in 0..lhs.len() {
        let r = (lhs[i] - rhs[i]).abs();
        if r > max_residual || where_.is_nan() {
            max_residual = r;
            where_ = at[i];
        }
    }
    let slope = |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(0.0, f64::max);
    Ok(ResidualReport {
        max_residual,
        at: where_,
        expected_bound: h * slope(&lhs).max(slope(&rhs)),
        h,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GrowthReport {
    /// `sup |T(x)| / √(1 + x²)` over the samples.
    pub sup_ratio: f64,
    pub argmax: f64,
    /// `|T(x)| / |x|` does not increase over the outer tenth of samples at either end.
    pub growth_bounded: bool,
}

pub fn linear_growth_estimate(t: &MonotoneMap) -> GrowthReport {
    let mut sup_ratio = f64::NEG_INFINITY;
    let mut argmax = f64::NAN;
    for (x, v) in t.xs.iter().zip(&t.ts) {
        let r = v.abs() / (1.0 + x * x).sqrt();
        if r > sup_ratio {
            sup_ratio = r;
            argmax = *x;
        }
    }
    let n = t.len();
    let tail = (n / 10).max(2).min(n);
    let ratio = |i: usize| {
        let x = t.xs[i];
        (x.abs() > 1e-12).then(|| t.ts[i].abs() / x.abs())
    };
    let non_increasing = |idx: &mut dyn Iterator<Item = usize>| {
        let vals: Vec<f64> = idx.filter_map(ratio).collect();
        vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12)
    };
    let right = non_increasing(&mut (n - tail..n));
    let left = non_increasing(&mut (0..tail).rev());
    GrowthReport {
        sup_ratio,
        argmax,
        growth_bounded: right && left,
    }
}
