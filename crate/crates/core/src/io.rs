//! Instance files, planted sidecars and instance hashing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{CaseKind, ModelError, TrsInstance};
use crate::scalar::Scalar;
use crate::solver::GroundTruth;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("instance file declares n = {n} but A has {a_len} entries and b has {b_len}")]
    Shape { n: usize, a_len: usize, b_len: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Parse { line: e.line(), column: e.column(), msg: e.to_string() }
    }
}

/// On-disk instance: `A` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_hint: Option<CaseKind>,
}

impl InstanceFile {
    pub fn from_instance<T: Scalar>(inst: &TrsInstance<T>, seed: Option<u64>, case_hint: Option<CaseKind>) -> Self {
        Self {
            n: inst.n(),
            a: inst.a().as_slice().iter().map(|v| v.to_f64_lossy()).collect(),
            b: inst.b().iter().map(|v| v.to_f64_lossy()).collect(),
            seed,
            case_hint,
        }
    }

    pub fn to_instance<T: Scalar>(&self) -> Result<TrsInstance<T>, IoError> {
        if self.a.len() != self.n * self.n || self.b.len() != self.n {
            return Err(IoError::Shape { n: self.n, a_len: self.a.len(), b_len: self.b.len() });
        }
        let a = self.a.iter().map(|&v| T::lit(v)).collect();
        let b = self.b.iter().map(|&v| T::lit(v)).collect();
        Ok(TrsInstance::from_rows(self.n, a, b)?)
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

/// Hex SHA-256 over `n` and the little-endian bytes of `A` and `b`.
pub fn instance_hash<T: Scalar>(inst: &TrsInstance<T>) -> String {
    let mut h = Sha256::new();
    h.update((inst.n() as u64).to_le_bytes());
    for v in inst.a().as_slice().iter().chain(inst.b()) {
        h.update(v.to_f64_lossy().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Planted ground truth written next to a generated instance.
pub type PlantedFile = GroundTruth<f64>;

pub fn planted_to_json(truth: &PlantedFile) -> String {
    serde_json::to_string_pretty(truth).expect("ground truth serializes")
}

pub fn planted_from_json(text: &str) -> Result<PlantedFile, IoError> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GenSpec};

    #[test]
    fn round_trip() {
        let p = generate::<f64>(&GenSpec::new(4, CaseKind::Hard2i, 3)).unwrap();
        let f = InstanceFile::from_instance(&p.inst, Some(3), Some(CaseKind::Hard2i));
        let g = InstanceFile::parse(&f.to_json()).unwrap();
        assert_eq!(f, g);
        let back: TrsInstance<f64> = g.to_instance().unwrap();
        assert_eq!(back, p.inst);
        assert_eq!(instance_hash(&back), instance_hash(&p.inst));
        let t = planted_from_json(&planted_to_json(&p.planted)).unwrap();
        assert_eq!(t, p.planted);
    }

    #[test]
    fn parse_error_has_line() {
        match InstanceFile::parse("{\n \"n\": 2,\n \"A\": [1, 0, 0\n") {
            Err(IoError::Parse { line, .. }) => assert!(line >= 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shape_mismatch() {
        let f = InstanceFile { n: 2, a: vec![1.0; 3], b: vec![0.0; 2], seed: None, case_hint: None };
        assert!(matches!(f.to_instance::<f64>(), Err(IoError::Shape { .. })));
    }

    #[test]
    fn hash_depends_on_data() {
        let a = TrsInstance::from_rows(2, vec![-1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0]).unwrap();
        let b = TrsInstance::from_rows(2, vec![-1.0, 0.0, 0.0, 1.0], vec![1.0, 1e-300]).unwrap();
        assert_ne!(instance_hash(&a), instance_hash(&b));
        assert_eq!(instance_hash(&a).len(), 64);
    }
}
