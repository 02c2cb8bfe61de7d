//! Structure theory and numeric verification for geometric Brascamp–Lieb data.

pub mod covers;
pub mod datum;
pub mod determinantal;
pub mod error;
pub mod gen;
pub mod integrals;
pub mod linalg;
pub mod structure;
pub mod subspace;
pub mod transport;

pub use covers::{PointPolytope, UniformCover, VoxelBody};
pub use datum::{Entry, GeometricDatum, RankOneDatum, ValidationReport};
pub use determinantal::{Certificate, DetCheckResult};
pub use error::{Error, Result};
pub use integrals::{Density, GridSpec, IneqEvaluation};
pub use structure::{CriticalityReport, StructureReport};
pub use subspace::{Subspace, Tolerance};
