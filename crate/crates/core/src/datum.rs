//! Geometric Brascamp–Lieb data: subspaces `E_i ⊂ ℝⁿ` with weights `c_i > 0`
//! resolving the identity, `Σ c_i P_{E_i} = I_n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::subspace::{Subspace, Tolerance};

pub const MAX_ENTRIES: usize = 64;
pub const MAX_DIM: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub c: f64,
    pub e: Subspace,
}

#[derive(Clone, Debug)]
pub struct GeometricDatum {
    n: usize,
    entries: Vec<Entry>,
    validated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_valid: bool,
    pub defect: f64,
    pub trace_defect: f64,
    pub dims: Vec<usize>,
    pub tolerance: Tolerance,
}

impl GeometricDatum {
    /// Checks structural invariants only; call [`GeometricDatum::validate`]
    /// before using the datum in analysis.
    pub fn new(n: usize, entries: Vec<Entry>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDatum("ambient dimension must be positive".into()));
        }
        if n > MAX_DIM {
            return Err(Error::CapExceeded {
                name: "n",
                value: n,
                limit: MAX_DIM,
            });
        }
        if entries.is_empty() {
            return Err(Error::InvalidDatum("at least one entry required".into()));
        }
        if entries.len() > MAX_ENTRIES {
            return Err(Error::CapExceeded {
                name: "k",
                value: entries.len(),
                limit: MAX_ENTRIES,
            });
        }
        for (i, en) in entries.iter().enumerate() {
            if en.e.ambient_dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: en.e.ambient_dim(),
                });
            }
            if en.e.is_zero() {
                return Err(Error::InvalidDatum(format!("entry {i}: subspace is {{0}}")));
            }
            if !(en.c.is_finite() && en.c > 0.0) {
                return Err(Error::InvalidDatum(format!("entry {i}: weight {} must be positive", en.c)));
            }
        }
        Ok(Self {
            n,
            entries,
            validated: false,
        })
    }

    /// Builds and validates in one step, failing if the identity is not resolved.
    pub fn validated(n: usize, entries: Vec<Entry>, tol: &Tolerance) -> Result<Self> {
        let mut d = Self::new(n, entries)?;
        let rep = d.validate(tol);
        if !rep.is_valid {
            return Err(Error::InvalidDatum(format!(
                "Σ c_i P_i deviates from the identity by {:.3e}",
                rep.defect
            )));
        }
        Ok(d)
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.c).collect()
    }

    pub fn is_validated(&self) -> bool {
        self.validated
    }

    pub fn require_validated(&self) -> Result<()> {
        if self.validated {
            Ok(())
        } else {
            Err(Error::Unvalidated)
        }
    }

    /// `Σ c_i P_{E_i}`.
    pub fn frame_operator(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n, self.n);
        for en in &self.entries {
            s += en.e.projection() * en.c;
        }
        s
    }

    pub fn validate(&mut self, tol: &Tolerance) -> ValidationReport {
        let defect = max_abs(&(self.frame_operator() - DMatrix::identity(self.n, self.n)));
        let weighted: f64 = self.entries.iter().map(|e| e.c * e.e.dim() as f64).sum();
        let is_valid = defect <= tol.residual_tol;
        self.validated = is_valid;
        ValidationReport {
            is_valid,
            defect,
            trace_defect: (weighted - self.n as f64).abs(),
            dims: self.entries.iter().map(|e| e.e.dim()).collect(),
            tolerance: *tol,
        }
    }

    /// Every frame vector of every `E_i`, carrying the weight `c_i`.
    pub fn rank_one_expansion(&self) -> Result<RankOneDatum> {
        self.require_validated()?;
        let mut vectors = Vec::new();
        let mut weights = Vec::new();
        let mut origin = Vec::new();
        for (i, en) in self.entries.iter().enumerate() {
            for (b, col) in en.e.frame().column_iter().enumerate() {
                vectors.push(col.into_owned());
                weights.push(en.c);
                origin.push((i, b));
            }
        }
        Ok(RankOneDatum {
            n: self.n,
            vectors,
            weights,
            origin,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: DatumRepr = serde_json::from_str(text).map_err(json_error)?;
        repr.into_datum()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("datum serializes")
    }
}

/// A Parseval frame: unit vectors `u_j` with `Σ c_j u_j u_jᵀ = I_n`.
#[derive(Clone, Debug)]
pub struct RankOneDatum {
    pub n: usize,
    pub vectors: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    /// `(entry index, frame column)` each vector came from.
    pub origin: Vec<(usize, usize)>,
}

impl RankOneDatum {
    /// Normalizes the given vectors and checks the Parseval identity.
    pub fn new(n: usize, vectors: Vec<DVector<f64>>, weights: Vec<f64>, tol: &Tolerance) -> Result<Self> {
        if vectors.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.len(),
                got: weights.len(),
            });
        }
        let mut unit = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
            let norm = v.norm();
            if norm == 0.0 {
                return Err(Error::ZeroSubspace);
            }
            unit.push(v / norm);
        }
        if weights.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
            return Err(Error::InvalidDatum("weights must be positive".into()));
        }
        let k = unit.len();
        let r = Self {
            n,
            vectors: unit,
            weights,
            origin: (0..k).map(|j| (j, 0)).collect(),
        };
        let defect = r.parseval_defect();
        if defect > tol.residual_tol {
            return Err(Error::InvalidDatum(format!("Parseval defect {defect:.3e}")));
        }
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `Σ c_j t_j u_j u_jᵀ`.
    pub fn weighted_sum(&self, t: &[f64]) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n, self.n);
        for ((u, &c), &tj) in self.vectors.iter().zip(&self.weights).zip(t) {
            s += u * u.transpose() * (c * tj);
        }
        s
    }

    pub fn parseval_defect(&self) -> f64 {
        let ones = vec![1.0; self.len()];
        max_abs(&(self.weighted_sum(&ones) - DMatrix::identity(self.n, self.n)))
    }

    /// The matrix with columns `√c_j u_j`.
    pub fn scaled_matrix(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self
            .vectors
            .iter()
            .zip(&self.weights)
            .map(|(u, &c)| u * c.sqrt())
            .collect();
        if cols.is_empty() {
            return DMatrix::zeros(self.n, 0);
        }
        DMatrix::from_columns(&cols)
    }
}

/// Parses a weight given as a number, a decimal string, or `"p/q"`.
pub fn parse_weight(text: &str) -> Result<f64> {
    let t = text.trim();
    let value = if let Some((p, q)) = t.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| Error::Parse(format!("bad numerator in {t:?}")))?;
        let q: f64 = q.trim().parse().map_err(|_| Error::Parse(format!("bad denominator in {t:?}")))?;
        p / q
    } else {
        t.parse().map_err(|_| Error::Parse(format!("bad weight {t:?}")))?
    };
    if !value.is_finite() {
        return Err(Error::Parse(format!("weight {t:?} is not finite")));
    }
    Ok(value)
}

/// Renders a serde_json error with its position.
pub fn json_error(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightRepr {
    Number(f64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct EntryRepr {
    c: WeightRepr,
    #[serde(rename = "E")]
    e: Subspace,
}

#[derive(Serialize, Deserialize)]
struct DatumRepr {
    n: usize,
    entries: Vec<EntryRepr>,
}

impl DatumRepr {
    fn into_datum(self) -> Result<GeometricDatum> {
        let mut entries = Vec::with_capacity(self.entries.len());
        for er in self.entries {
            let c = match er.c {
                WeightRepr::Number(v) => v,
                WeightRepr::Text(s) => parse_weight(&s)?,
            };
            entries.push(Entry { c, e: er.e });
        }
        GeometricDatum::new(self.n, entries)
    }
}

impl Serialize for GeometricDatum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DatumRepr {
            n: self.n,
            entries: self
                .entries
                .iter()
                .map(|e| EntryRepr {
                    c: WeightRepr::Number(e.c),
                    e: e.e.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GeometricDatum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        DatumRepr::deserialize(d)?.into_datum().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn axis_datum_is_exact() {
        let mut d = gen::axis_datum(4);
        let rep = d.validate(&tol());
        assert!(rep.is_valid);
        assert_eq!(rep.defect, 0.0);
        assert_eq!(rep.dims, vec![1, 1, 1, 1]);
        let r = d.rank_one_expansion().unwrap();
        for (j, u) in r.vectors.iter().enumerate() {
            assert_eq!(u, &DVector::from_fn(4, |i, _| if i == j { 1.0 } else { 0.0 }));
        }
    }

    #[test]
    fn r4_example_validates() {
        let mut d = gen::r4_example();
        let rep = d.validate(&tol());
        assert!(rep.is_valid, "{rep:?}");
        assert!(rep.defect < 1e-12);
        assert!(rep.trace_defect < 1e-12);
        let r = d.rank_one_expansion().unwrap();
        assert_eq!(r.len(), 6);
        assert!(r.weights.iter().all(|&c| (c - 2.0 / 3.0).abs() < 1e-15));
        assert!(r.parseval_defect() < 1e-12);
    }

    #[test]
    fn single_line_in_plane_is_invalid() {
        let e = Subspace::coordinate(2, &[0]);
        let mut d = GeometricDatum::new(2, vec![Entry { c: 0.9, e }]).unwrap();
        let rep = d.validate(&tol());
        assert!(!rep.is_valid);
        assert!(rep.defect >= 0.1);
        assert!(matches!(d.rank_one_expansion(), Err(Error::Unvalidated)));
    }

    #[test]
    fn holder_expansion_has_four_vectors() {
        let e = Subspace::full(2);
        let d = GeometricDatum::validated(
            2,
            vec![Entry { c: 0.5, e: e.clone() }, Entry { c: 0.5, e }],
            &tol(),
        )
        .unwrap();
        let r = d.rank_one_expansion().unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.parseval_defect() < 1e-15);
    }

    #[test]
    fn weights_parse_in_all_forms() {
        assert_eq!(parse_weight("2/3").unwrap(), 2.0 / 3.0);
        assert_eq!(parse_weight(" 0.5 ").unwrap(), 0.5);
        assert!(parse_weight("1/0").is_err());
        assert!(parse_weight("abc").is_err());
        let d = GeometricDatum::from_json(
            r#"{"n":2,"entries":[{"c":"1/2","E":{"n":2,"frame":[[1,0],[0,1]]}},
                                {"c":0.5,"E":{"n":2,"frame":[[0,3],[1,0]]}}]}"#,
        )
        .unwrap();
        assert_eq!(d.weights(), vec![0.5, 0.5]);
        assert!(!d.is_validated());
    }

    #[test]
    fn json_errors_carry_position() {
        let err = GeometricDatum::from_json("{\"n\": 2,\n \"entries\": [}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn caps_are_enforced() {
        let e = Subspace::full(40);
        assert!(matches!(
            GeometricDatum::new(40, vec![Entry { c: 1.0, e }]),
            Err(Error::CapExceeded { name: "n", .. })
        ));
        let e = Subspace::full(1);
        let entries = vec![Entry { c: 1.0 / 65.0, e }; 65];
        assert!(matches!(
            GeometricDatum::new(1, entries),
            Err(Error::CapExceeded { name: "k", .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let d = gen::r4_example();
        let text = serde_json::to_string(&d).unwrap();
        let back = GeometricDatum::from_json(&text).unwrap();
        for (a, b) in back.entries().iter().zip(d.entries()) {
            assert_eq!(a.c, b.c);
            assert!((a.e.frame() - b.e.frame()).abs().max() < 1e-14);
        }
    }
}
