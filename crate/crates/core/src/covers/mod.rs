//! Uniform covers of `[n]`, their induced partitions, and the
//! Bollobás–Thomason inequality with its dual.

mod bt;
mod polytope;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datum::{Entry, GeometricDatum};
use crate::error::{Error, Result};
use crate::subspace::{Subspace, Tolerance};

pub use bt::{bt_check, random_voxel_body, BtResult, SplitPart, VoxelBody};
pub use polytope::{dual_bt_check, ConvCertificate, DualBtResult, Facet, McEstimate, PointPolytope};

/// Cap on the number of sets for pattern enumeration.
pub const MAX_COVER_SETS: usize = 24;
/// Cap on the ground set size.
pub const MAX_COVER_N: usize = 32;

/// Sets are 1-based, as in `{"n": 3, "s": 2, "sets": [[2,3],[1,3],[1,2]]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformCover {
    pub n: usize,
    pub s: usize,
    pub sets: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverValidation {
    pub valid: bool,
    /// How many sets contain each element, in element order.
    pub multiplicities: Vec<usize>,
}

impl UniformCover {
    pub fn new(n: usize, s: usize, sets: Vec<Vec<usize>>) -> Self {
        Self { n, s, sets }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(crate::datum::json_error)
    }

    pub fn k(&self) -> usize {
        self.sets.len()
    }

    /// Bitmasks with bit `j − 1` set for element `j`.
    pub fn masks(&self) -> Result<Vec<u64>> {
        self.sets
            .iter()
            .enumerate()
            .map(|(i, set)| {
                let mut m = 0u64;
                for &j in set {
                    if j == 0 || j > self.n {
                        return Err(Error::InvalidCover(format!("set {i} has element {j} outside 1..={}", self.n)));
                    }
                    m |= 1 << (j - 1);
                }
                Ok(m)
            })
            .collect()
    }

    fn full_mask(&self) -> u64 {
        if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        }
    }
}

/// Counts multiplicities exactly. Empty sets, out-of-range elements and
/// structural problems are errors; a wrong multiplicity is `valid = false`.
pub fn validate_cover(c: &UniformCover) -> Result<CoverValidation> {
    if c.n == 0 || c.n > MAX_COVER_N {
        return Err(Error::InvalidCover(format!("n = {} must lie in 1..={MAX_COVER_N}", c.n)));
    }
    if c.s == 0 {
        return Err(Error::InvalidCover("s must be at least 1".into()));
    }
    if c.sets.is_empty() {
        return Err(Error::InvalidCover("no sets".into()));
    }
    let masks = c.masks()?;
    if let Some(i) = masks.iter().position(|&m| m == 0) {
        return Err(Error::InvalidCover(format!("set {i} is empty")));
    }
    for (i, set) in c.sets.iter().enumerate() {
        let mut seen = set.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != set.len() {
            return Err(Error::InvalidCover(format!("set {i} repeats an element")));
        }
    }
    let multiplicities: Vec<usize> = (0..c.n)
        .map(|j| masks.iter().filter(|&&m| m & (1 << j) != 0).count())
        .collect();
    Ok(CoverValidation {
        valid: multiplicities.iter().all(|&m| m == c.s),
        multiplicities,
    })
}

fn require_valid(c: &UniformCover) -> Result<Vec<u64>> {
    let v = validate_cover(c)?;
    if !v.valid {
        return Err(Error::InvalidCover(format!(
            "not {}-uniform: multiplicities {:?}",
            c.s, v.multiplicities
        )));
    }
    c.masks()
}

/// Nonempty patterns `∩ σ_i^{ε(i)}`, found depth first with empty branches
/// pruned, each as a sorted 1-based block; blocks ordered by least element.
pub fn induced_one_cover(c: &UniformCover) -> Result<Vec<Vec<usize>>> {
    let masks = require_valid(c)?;
    if masks.len() > MAX_COVER_SETS {
        return Err(Error::CapExceeded {
            name: "k",
            value: masks.len(),
            limit: MAX_COVER_SETS,
        });
    }
    let full = c.full_mask();
    let mut blocks = Vec::new();
    let mut stack = vec![(0usize, full)];
    while let Some((i, m)) = stack.pop() {
        if i == masks.len() {
            blocks.push(m);
            continue;
        }
        for next in [m & masks[i], m & !masks[i]] {
            if next != 0 {
                stack.push((i + 1, next));
            }
        }
    }
    let mut union = 0u64;
    for &b in &blocks {
        if union & b != 0 {
            return Err(Error::Internal("induced blocks overlap".into()));
        }
        union |= b;
    }
    if union != full {
        return Err(Error::Internal("induced blocks miss an element".into()));
    }
    let mut out: Vec<Vec<usize>> = blocks
        .into_iter()
        .map(|b| (0..c.n).filter(|j| b & (1 << j) != 0).map(|j| j + 1).collect())
        .collect();
    out.sort_by_key(|b| b[0]);
    Ok(out)
}

/// `E_i = span{e_j : j ∈ σ_i}` with weight `1/s`.
pub fn make_datum_from_cover(c: &UniformCover) -> Result<GeometricDatum> {
    require_valid(c)?;
    let entries = c
        .sets
        .iter()
        .map(|set| Entry {
            c: 1.0 / c.s as f64,
            e: Subspace::coordinate(c.n, &set.iter().map(|j| j - 1).collect::<Vec<_>>()),
        })
        .collect();
    GeometricDatum::validated(c.n, entries, &Tolerance::default())
}

/// A uniform cover of `[n]` by at most `max_k` sets: each element joins `s`
/// distinct sets drawn at random, and sets left empty are dropped.
pub fn random_cover<R: Rng>(n: usize, max_k: usize, rng: &mut R) -> UniformCover {
    let k = rng.random_range(1..=max_k.max(1));
    let s = rng.random_range(1..=k);
    let mut sets = vec![Vec::new(); k];
    for j in 1..=n {
        let mut idx: Vec<usize> = (0..k).collect();
        for t in 0..s {
            let pick = rng.random_range(t..k);
            idx.swap(t, pick);
            sets[idx[t]].push(j);
        }
    }
    sets.retain(|s| !s.is_empty());
    for set in &mut sets {
        set.sort_unstable();
    }
    UniformCover { n, s, sets }
}
