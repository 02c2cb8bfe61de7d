//! Brascamp–Lieb and Barthe functionals: closed forms for Gaussians, grid
//! sup-convolution, extremizers and convolution.

mod density;
mod extremizer;
mod gaussian;
mod supconv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::Tolerance;

pub use density::{
    convolve_density, densities_from_json, BoxSet, Density, DensityKind, DensitySpec, Factor, GridData, MAX_GRID_DIM,
};
pub use extremizer::{build_extremizer, ExtremizerParams};
pub use gaussian::{gaussian_barthe_eval, gaussian_bl_eval, gaussian_supconv_closed_form};
pub use supconv::{supconv_eval, MAX_SUPCONV_EVALS};

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `lhs ≤ rhs`.
    BrascampLieb,
    /// `lhs ≥ rhs`.
    Barthe,
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Grid,
}

/// Output cell size and half-width of the coordinate box `[−r, r]`.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub h: f64,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(h: f64, half_width: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0 && half_width.is_finite() && half_width > h) {
            return Err(Error::Parse(format!("bad grid h={h}, box=±{half_width}")));
        }
        Ok(Self { h, half_width })
    }

    /// Parses `h=0.05,box=±4` (also `box=4` or `box=+-4`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut h = None;
        let mut r = None;
        for part in text.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value in grid spec, got {part:?}")))?;
            let v = v.trim().trim_start_matches('±').trim_start_matches("+-");
            let v: f64 = v
                .parse()
                .map_err(|_| Error::Parse(format!("bad number {v:?} in grid spec")))?;
            match k.trim() {
                "h" => h = Some(v),
                "box" => r = Some(v),
                other => return Err(Error::Parse(format!("unknown grid key {other:?}"))),
            }
        }
        match (h, r) {
            (Some(h), Some(r)) => Self::new(h, r),
            _ => Err(Error::Parse("grid spec needs both h and box".into())),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct IneqEvaluation {
    pub direction: Direction,
    pub method: Method,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Relative error bound on `lhs / rhs`.
    pub est_error: f64,
    /// The inequality in its direction, allowing `est_error`.
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhs_interval: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equality: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Set when the sup-convolution may reach outside the grid box.
    #[serde(default)]
    pub truncated: bool,
    pub tolerance: Tolerance,
}

impl IneqEvaluation {
    fn judge(&mut self) {
        self.holds = match self.direction {
            Direction::BrascampLieb => self.lhs <= self.rhs * (1.0 + self.est_error),
            Direction::Barthe => self.lhs >= self.rhs * (1.0 - self.est_error),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_parsing() {
        assert_eq!(GridSpec::parse("h=0.05,box=±4").unwrap(), GridSpec { h: 0.05, half_width: 4.0 });
        assert_eq!(GridSpec::parse("box=+-2, h=0.5").unwrap(), GridSpec { h: 0.5, half_width: 2.0 });
        assert!(GridSpec::parse("h=0.05").is_err());
        assert!(GridSpec::parse("h=-1,box=2").is_err());
    }
}
