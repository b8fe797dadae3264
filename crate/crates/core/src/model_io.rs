//! JSON model container.
//!
//! Layout (version 1):
//!
//! | field            | content                                                     |
//! |------------------|-------------------------------------------------------------|
//! | `format`         | always `"cfqp-model"`                                       |
//! | `version`        | container version, currently `1`                            |
//! | `precision`      | `32` or `64`                                                |
//! | `problem_digest` | SHA-256 of the canonical problem JSON                       |
//! | `n`, `m1`, `m2`  | problem dimensions                                          |
//! | `sign_rule`      | `"per-entry"` or `"block"`                                  |
//! | `root_term`      | `"rectified"` (default when absent) or `"linear"`           |
//! | `regions`        | `id`, `active_set`, `parent`, `witness`, `w0`, `grad_x`, `grad_lambda` |
//! | `incidence`      | `(row, col, signs)` triplets                                |
//! | `direction`      | `k × m2` matrix of `±1` or `0`                              |
//! | `base_inverse`   | `(n+m1) × (n+m1)` inverse of the base Jacobian              |
//!
//! Every float is written as a 64-bit decimal that parses back to the same
//! bits, so 32-bit weights survive the round trip exactly as well.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{
    ClosedFormModel, Coefficients, IncidenceEntry, RegionEntry, RootTerm, SignRule,
};
use crate::problem::{ActiveSet, MpQpProblem, ParameterPoint, RegionSlopes};
use crate::real::{Precision, Real};

pub const MODEL_FORMAT: &str = "cfqp-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    precision: Precision,
    problem_digest: String,
    n: usize,
    m1: usize,
    m2: usize,
    sign_rule: SignRule,
    #[serde(default)]
    root_term: RootTerm,
    regions: Vec<RegionRecord>,
    incidence: Vec<IncidenceEntry>,
    direction: Vec<Vec<i8>>,
    base_inverse: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionRecord {
    id: usize,
    active_set: ActiveSet,
    parent: Option<usize>,
    witness: Vec<f64>,
    w0: Vec<Vec<f64>>,
    grad_x: Vec<Vec<f64>>,
    grad_lambda: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    precision: Precision,
}

fn rows<T: Real>(m: &Matrix<T>) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|v| v.to_f64_lossless()).collect())
        .collect()
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedModel(msg.into())
}

fn matrix<T: Real>(name: &str, data: &[Vec<f64>], r: usize, c: usize) -> Result<Matrix<T>> {
    if data.len() != r || data.iter().any(|row| row.len() != c) {
        return Err(malformed(format!("{name} is not {r}x{c}")));
    }
    let values: Vec<T> = data.iter().flatten().map(|&v| T::of(v)).collect();
    if data
        .iter()
        .flatten()
        .zip(&values)
        .any(|(&v, w)| w.to_f64_lossless() != v)
    {
        return Err(malformed(format!(
            "{name} holds values not representable at {}",
            T::PRECISION
        )));
    }
    Matrix::from_row_major(r, c, values)
}

pub fn serialize<T: Real>(model: &ClosedFormModel<T>) -> Vec<u8> {
    let (n, m1, m2) = model.dims;
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        precision: T::PRECISION,
        problem_digest: model.digest.clone(),
        n,
        m1,
        m2,
        sign_rule: model.sign_rule,
        root_term: model.root_term,
        regions: model
            .regions
            .iter()
            .map(|r| RegionRecord {
                id: r.id,
                active_set: r.active_set.clone(),
                parent: r.parent,
                witness: r.witness.stacked().to_vec(),
                w0: rows(&r.slopes.grad_mu),
                grad_x: rows(&r.slopes.grad_x),
                grad_lambda: rows(&r.slopes.grad_lambda),
            })
            .collect(),
        incidence: model.incidence(),
        direction: model.direction.clone(),
        base_inverse: rows(&model.base_inverse),
    };
    serde_json::to_vec(&file).expect("model serializes")
}

/// Precision tag of a serialized model, after checking format and version.
pub fn peek_precision(bytes: &[u8]) -> Result<Precision> {
    let h: Header = serde_json::from_slice(bytes).map_err(|e| malformed(e.to_string()))?;
    check_header(&h.format, h.version)?;
    Ok(h.precision)
}

fn check_header(format: &str, version: u32) -> Result<()> {
    if format != MODEL_FORMAT {
        return Err(malformed(format!("unknown format {format:?}")));
    }
    if version != MODEL_VERSION {
        return Err(malformed(format!("unsupported model version {version}")));
    }
    Ok(())
}

/// Restores a model and binds it to `problem`, rejecting mismatched digests and inconsistent structure.
pub fn deserialize<T: Real>(bytes: &[u8], problem: &MpQpProblem) -> Result<ClosedFormModel<T>> {
    let f: ModelFile = serde_json::from_slice(bytes).map_err(|e| malformed(e.to_string()))?;
    check_header(&f.format, f.version)?;
    if f.precision != T::PRECISION {
        return Err(malformed(format!(
            "model is {} but {} was requested",
            f.precision,
            T::PRECISION
        )));
    }
    if f.problem_digest != problem.digest() {
        return Err(Error::DigestMismatch {
            model: f.problem_digest,
            problem: problem.digest().to_string(),
        });
    }
    let (n, m1, m2, d) = (problem.n(), problem.m1(), problem.m2(), problem.d());
    if (f.n, f.m1, f.m2) != (n, m1, m2) {
        return Err(malformed("dimensions differ from the problem"));
    }
    if f.regions.is_empty() {
        return Err(malformed("model has no regions"));
    }
    if f.direction.len() != f.regions.len()
        || f.direction
            .iter()
            .any(|r| r.len() != m2 || r.iter().any(|&s| !(-1..=1).contains(&s)))
    {
        return Err(malformed(
            "direction must be k x m2 with entries -1, 0 or +1",
        ));
    }
    let mut regions = Vec::with_capacity(f.regions.len());
    for (i, r) in f.regions.into_iter().enumerate() {
        if r.id != i {
            return Err(malformed(format!("region {i} carries id {}", r.id)));
        }
        match r.parent {
            None if i != 0 => return Err(malformed(format!("region {i} has no parent"))),
            Some(p) if p >= i => return Err(malformed(format!("region {i} has parent {p}"))),
            _ => {}
        }
        let active_set = ActiveSet::new(r.active_set.indices().to_vec(), m2)
            .map_err(|e| malformed(e.to_string()))?;
        let slopes = RegionSlopes {
            grad_x: matrix("grad_x", &r.grad_x, n, d)?,
            grad_lambda: matrix("grad_lambda", &r.grad_lambda, m1, d)?,
            grad_mu: matrix("w0", &r.w0, m2, d)?,
            active_set: active_set.clone(),
        };
        let witness = ParameterPoint::from_stacked(problem, r.witness)
            .map_err(|e| malformed(e.to_string()))?;
        regions.push(RegionEntry {
            id: i,
            active_set,
            slopes,
            parent: r.parent,
            witness,
        });
    }
    let model = ClosedFormModel {
        digest: f.problem_digest,
        dims: (n, m1, m2),
        sign_rule: f.sign_rule,
        root_term: f.root_term,
        regions,
        direction: f.direction,
        base_inverse: matrix("base_inverse", &f.base_inverse, n + m1, n + m1)?,
        coef: Coefficients::new(problem),
    };
    if model.incidence() != f.incidence {
        return Err(malformed(
            "incidence triplets disagree with parents and direction",
        ));
    }
    Ok(model)
}

pub fn save<T: Real>(model: &ClosedFormModel<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serialize(model))?;
    Ok(())
}

pub fn load<T: Real>(path: impl AsRef<Path>, problem: &MpQpProblem) -> Result<ClosedFormModel<T>> {
    deserialize(&std::fs::read(path)?, problem)
}

/// A model of either precision, as read from disk.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Single(ClosedFormModel<f32>),
    Double(ClosedFormModel<f64>),
}

impl AnyModel {
    pub fn from_bytes(bytes: &[u8], problem: &MpQpProblem) -> Result<Self> {
        Ok(match peek_precision(bytes)? {
            Precision::Single => AnyModel::Single(deserialize(bytes, problem)?),
            Precision::Double => AnyModel::Double(deserialize(bytes, problem)?),
        })
    }

    pub fn load(path: impl AsRef<Path>, problem: &MpQpProblem) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?, problem)
    }

    pub fn precision(&self) -> Precision {
        match self {
            AnyModel::Single(_) => Precision::Single,
            AnyModel::Double(_) => Precision::Double,
        }
    }

    /// The model at 64-bit; 32-bit weights are widened exactly.
    pub fn to_double(&self) -> ClosedFormModel<f64> {
        match self {
            AnyModel::Single(m) => m.cast(),
            AnyModel::Double(m) => m.clone(),
        }
    }

    /// The model at 32-bit; 64-bit weights are rounded.
    pub fn to_single(&self) -> ClosedFormModel<f32> {
        match self {
            AnyModel::Single(m) => m.clone(),
            AnyModel::Double(m) => m.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::scalar_tracking;
    use crate::init_model;

    fn sample() -> (MpQpProblem, Vec<u8>) {
        let p = scalar_tracking();
        let t0 = ParameterPoint::from_stacked(&p, vec![0.0, 3.0, 0.0]).unwrap();
        let m = init_model::<f64>(&p, &ActiveSet::empty(), &t0).unwrap();
        (p, serialize(&m))
    }

    fn edit(bytes: &[u8], f: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
        let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
        f(&mut v);
        serde_json::to_vec(&v).unwrap()
    }

    #[test]
    fn root_term_is_stored_and_defaults_to_rectified() {
        let (p, bytes) = sample();
        let m: ClosedFormModel = deserialize(&bytes, &p).unwrap();
        let linear = serialize(&m.with_root_term(RootTerm::Linear));
        assert_eq!(
            deserialize::<f64>(&linear, &p).unwrap().root_term(),
            RootTerm::Linear
        );
        let legacy = edit(&linear, |v| {
            v.as_object_mut().unwrap().remove("root_term");
        });
        assert_eq!(
            deserialize::<f64>(&legacy, &p).unwrap().root_term(),
            RootTerm::Rectified
        );
    }

    #[test]
    fn peek_reads_precision() {
        let (p, bytes) = sample();
        assert_eq!(peek_precision(&bytes).unwrap(), Precision::Double);
        let single = serialize(&deserialize::<f64>(&bytes, &p).unwrap().cast::<f32>());
        assert_eq!(peek_precision(&single).unwrap(), Precision::Single);
        assert_eq!(
            AnyModel::from_bytes(&single, &p).unwrap().precision(),
            Precision::Single
        );
    }

    #[test]
    fn wrong_precision_is_rejected() {
        let (p, bytes) = sample();
        assert!(matches!(
            deserialize::<f32>(&bytes, &p),
            Err(Error::MalformedModel(_))
        ));
    }

    #[test]
    fn header_is_checked() {
        let (p, bytes) = sample();
        let v2 = edit(&bytes, |v| v["version"] = 2.into());
        assert!(matches!(
            deserialize::<f64>(&v2, &p),
            Err(Error::MalformedModel(_))
        ));
        let other = edit(&bytes, |v| v["format"] = "other".into());
        assert!(peek_precision(&other).is_err());
    }

    #[test]
    fn tampered_structure_is_rejected() {
        let (p, bytes) = sample();
        let bad_sign = edit(&bytes, |v| v["direction"][0][0] = 2.into());
        assert!(deserialize::<f64>(&bad_sign, &p).is_err());
        let bad_inc = edit(&bytes, |v| v["incidence"][0]["signs"][0] = (-1).into());
        assert!(deserialize::<f64>(&bad_inc, &p).is_err());
        let truncated = &bytes[..bytes.len() / 2];
        assert!(matches!(
            deserialize::<f64>(truncated, &p),
            Err(Error::MalformedModel(_))
        ));
    }

    #[test]
    fn digest_binds_problem() {
        let (_, bytes) = sample();
        let other = crate::fixtures::transport_2d();
        assert!(matches!(
            deserialize::<f64>(&bytes, &other),
            Err(Error::DigestMismatch { .. })
        ));
    }
}
