use std::collections::BTreeSet;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{induced_one_cover, require_valid, UniformCover};
use crate::error::{Error, Result};

pub const MAX_VOXEL_DIM: usize = 4;

/// A finite union of unit cells `[z, z + 1]`, `z ∈ ℤⁿ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelBody {
    n: usize,
    cells: BTreeSet<Vec<i64>>,
}

#[derive(Deserialize, Serialize)]
struct VoxelRepr {
    n: usize,
    cells: Vec<Vec<i64>>,
}

impl VoxelBody {
    pub fn new(n: usize, cells: impl IntoIterator<Item = Vec<i64>>) -> Result<Self> {
        if n == 0 || n > MAX_VOXEL_DIM {
            return Err(Error::InvalidBody(format!("voxel dimension {n} must lie in 1..={MAX_VOXEL_DIM}")));
        }
        let cells: BTreeSet<Vec<i64>> = cells.into_iter().collect();
        if cells.is_empty() {
            return Err(Error::InvalidBody("no cells".into()));
        }
        if let Some(c) = cells.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: c.len() });
        }
        Ok(Self { n, cells })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: VoxelRepr = serde_json::from_str(text).map_err(crate::datum::json_error)?;
        Self::new(r.n, r.cells)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(VoxelRepr {
            n: self.n,
            cells: self.cells.iter().cloned().collect(),
        })
        .expect("plain data")
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn volume(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = &Vec<i64>> {
        self.cells.iter()
    }

    /// Distinct cells of the projection onto the 1-based coordinates in `block`.
    pub fn project(&self, block: &[usize]) -> BTreeSet<Vec<i64>> {
        self.cells.iter().map(|c| block.iter().map(|&j| c[j - 1]).collect()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPart {
    pub block: Vec<usize>,
    pub cells: Vec<Vec<i64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BtResult {
    /// `|K|^s`, exact decimal.
    pub lhs: String,
    /// `Π |P_{σ_i} K|`, exact decimal.
    pub rhs: String,
    pub volume: usize,
    pub projections: Vec<usize>,
    pub holds: bool,
    pub equality: bool,
    pub partition: Vec<Vec<usize>>,
    /// Projections onto the induced blocks whose product rebuilds `K`.
    pub split_certificate: Option<Vec<SplitPart>>,
}

pub fn bt_check(k: &VoxelBody, c: &UniformCover) -> Result<BtResult> {
    require_valid(c)?;
    if c.n != k.n {
        return Err(Error::DimensionMismatch { expected: c.n, got: k.n });
    }
    let volume = k.volume();
    let lhs = BigUint::from(volume).pow(c.s as u32);
    let projections: Vec<usize> = c.sets.iter().map(|s| k.project(s).len()).collect();
    let rhs = projections.iter().fold(BigUint::from(1u32), |acc, &p| acc * BigUint::from(p));
    let partition = induced_one_cover(c)?;
    let parts: Vec<BTreeSet<Vec<i64>>> = partition.iter().map(|b| k.project(b)).collect();
    let product_size = parts.iter().fold(BigUint::from(1u32), |acc, p| acc * BigUint::from(p.len()));
    // K always sits inside the product of its projections, so equal sizes
    // already force equality; the rebuild below confirms it cell by cell
    let split_certificate = if product_size == BigUint::from(volume) && rebuilds(k, &partition, &parts) {
        Some(
            partition
                .iter()
                .zip(&parts)
                .map(|(b, p)| SplitPart {
                    block: b.clone(),
                    cells: p.iter().cloned().collect(),
                })
                .collect(),
        )
    } else {
        None
    };
    Ok(BtResult {
        holds: lhs <= rhs,
        equality: lhs == rhs,
        lhs: lhs.to_string(),
        rhs: rhs.to_string(),
        volume,
        projections,
        partition,
        split_certificate,
    })
}

fn rebuilds(k: &VoxelBody, blocks: &[Vec<usize>], parts: &[BTreeSet<Vec<i64>>]) -> bool {
    let mut built: Vec<Vec<i64>> = vec![vec![0; k.n]];
    for (b, p) in blocks.iter().zip(parts) {
        let mut next = Vec::with_capacity(built.len() * p.len());
        for cell in &built {
            for q in p {
                let mut c = cell.clone();
                for (&j, &v) in b.iter().zip(q) {
                    c[j - 1] = v;
                }
                next.push(c);
            }
        }
        built = next;
    }
    let built: BTreeSet<Vec<i64>> = built.into_iter().collect();
    built == k.cells
}

/// Random cells in a small box; about a third of the time a product of
/// random pieces over a random coordinate split, which tends to give equality.
pub fn random_voxel_body<R: Rng>(n: usize, max_cells: usize, rng: &mut R) -> VoxelBody {
    let side = rng.random_range(2..=6i64);
    if rng.random_bool(1.0 / 3.0) && n > 1 {
        let cut = rng.random_range(1..n);
        let mut coords: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            coords.swap(i, rng.random_range(0..=i));
        }
        let (a, b) = coords.split_at(cut);
        let budget = (max_cells as f64).sqrt().floor().max(1.0) as usize;
        let pa = random_cells(a.len(), side, budget, rng);
        let pb = random_cells(b.len(), side, budget, rng);
        let mut cells = Vec::new();
        for x in &pa {
            for y in &pb {
                let mut c = vec![0; n];
                for (&j, v) in a.iter().zip(x) {
                    c[j] = *v;
                }
                for (&j, v) in b.iter().zip(y) {
                    c[j] = *v;
                }
                cells.push(c);
            }
        }
        return VoxelBody::new(n, cells).expect("nonempty product");
    }
    VoxelBody::new(n, random_cells(n, side, max_cells, rng)).expect("nonempty cells")
}

fn random_cells<R: Rng>(n: usize, side: i64, max_cells: usize, rng: &mut R) -> Vec<Vec<i64>> {
    let count = rng.random_range(1..=max_cells.max(1));
    (0..count).map(|_| (0..n).map(|_| rng.random_range(0..side)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lw() -> UniformCover {
        UniformCover::new(3, 2, vec![vec![2, 3], vec![1, 3], vec![1, 2]])
    }

    #[test]
    fn unit_cube() {
        let k = VoxelBody::new(3, [vec![0, 0, 0]]).unwrap();
        let r = bt_check(&k, &lw()).unwrap();
        assert_eq!((r.lhs.as_str(), r.rhs.as_str()), ("1", "1"));
        assert!(r.equality && r.split_certificate.is_some());
    }

    #[test]
    fn tromino_is_strict() {
        let k = VoxelBody::new(3, [vec![0, 0, 0], vec![1, 0, 0], vec![0, 1, 0]]).unwrap();
        let r = bt_check(&k, &lw()).unwrap();
        // projections: onto x2x3 two cells, onto x1x3 two cells, onto x1x2 three cells
        assert_eq!(r.projections, vec![2, 2, 3]);
        assert_eq!((r.lhs.as_str(), r.rhs.as_str()), ("9", "12"));
        assert!(r.holds && !r.equality && r.split_certificate.is_none());
    }

    #[test]
    fn product_body_splits() {
        let a = [[0, 0], [1, 0], [0, 1], [2, 2], [1, 1]];
        let cells = a.iter().flat_map(|p| [0, 3].map(|z| vec![p[0], p[1], z]));
        let k = VoxelBody::new(3, cells).unwrap();
        let c = UniformCover::new(3, 2, vec![vec![1, 2], vec![3], vec![1, 2, 3]]);
        let r = bt_check(&k, &c).unwrap();
        assert_eq!((r.lhs.as_str(), r.rhs.as_str()), ("100", "100"));
        assert!(r.equality);
        let cert = r.split_certificate.unwrap();
        assert_eq!(cert[0].block, vec![1, 2]);
        assert_eq!(cert[0].cells.len(), 5);
        assert_eq!(cert[1].cells, vec![vec![0], vec![3]]);
    }

    #[test]
    fn json_round_trip() {
        let k = VoxelBody::from_json(r#"{"n": 2, "cells": [[0, 1], [0, 0], [0, 1]]}"#).unwrap();
        assert_eq!(k.volume(), 2);
        assert_eq!(VoxelBody::from_json(&k.to_json_value().to_string()).unwrap(), k);
        assert!(VoxelBody::from_json(r#"{"n": 2, "cells": [[0]]}"#).is_err());
    }
}
