use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ids::PerturbationId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbeddingVectorError {
    #[error("embedding vector must have at least one component")]
    Empty,
    #[error("declared dim {declared} does not match {actual} values")]
    DimMismatch { declared: usize, actual: usize },
    #[error("embedding component {index} is not finite")]
    NonFinite { index: usize },
}

/// A point in a named embedding space. Components are stored as produced
/// by the provider; normalization happens inside the similarity routine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmbedding")]
pub struct EmbeddingVector {
    values: Vec<f64>,
    dim: usize,
    space_tag: String,
}

#[derive(Deserialize)]
struct RawEmbedding {
    values: Vec<f64>,
    dim: usize,
    space_tag: String,
}

impl TryFrom<RawEmbedding> for EmbeddingVector {
    type Error = EmbeddingVectorError;

    fn try_from(raw: RawEmbedding) -> Result<Self, Self::Error> {
        if raw.dim != raw.values.len() {
            return Err(EmbeddingVectorError::DimMismatch {
                declared: raw.dim,
                actual: raw.values.len(),
            });
        }
        Self::new(raw.values, raw.space_tag)
    }
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, space_tag: impl Into<String>) -> Result<Self, EmbeddingVectorError> {
        if values.is_empty() {
            return Err(EmbeddingVectorError::Empty);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingVectorError::NonFinite { index });
        }
        Ok(Self { dim: values.len(), values, space_tag: space_tag.into() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn space_tag(&self) -> &str {
        &self.space_tag
    }

    /// The same direction with every component multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, EmbeddingVectorError> {
        Self::new(self.values.iter().map(|v| v * factor).collect(), self.space_tag.clone())
    }
}

/// One entry of a ranking: which perturbation, how similar, and where it
/// landed (rank 1 is the top).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDescriptor {
    pub perturbation_id: PerturbationId,
    pub score: f64,
    pub rank: u32,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_empty() {
        assert_eq!(EmbeddingVector::new(vec![], "t"), Err(EmbeddingVectorError::Empty));
        assert_eq!(
            EmbeddingVector::new(vec![1.0, f64::NAN], "t"),
            Err(EmbeddingVectorError::NonFinite { index: 1 })
        );
    }

    #[test]
    fn deserialization_checks_declared_dim() {
        let err = serde_json::from_str::<EmbeddingVector>(
            r#"{"values":[1.0,2.0],"dim":3,"space_tag":"t"}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("declared dim 3"));
        let ok: EmbeddingVector =
            serde_json::from_str(r#"{"values":[1.0,2.0],"dim":2,"space_tag":"t"}"#).unwrap();
        assert_eq!(ok.dim(), 2);
    }
}
