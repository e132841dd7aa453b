//! Cosine similarity and descriptor ranking.
//!
//! Ranking compares every perturbation's text embedding against the image
//! embedding of the current primary reference. Ties are broken by
//! perturbation id, ascending, so reruns never depend on input order.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::canonical_hash;
use crate::model::{EmbeddingVector, PerturbationId, RankedDescriptor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("dimension mismatch: expected {expected}, got {got}{}", offender_suffix(.perturbation_id))]
    DimensionMismatch { expected: usize, got: usize, perturbation_id: Option<PerturbationId> },
    #[error("embedding space mismatch: expected {expected:?}, got {got:?}{}", offender_suffix(.perturbation_id))]
    SpaceMismatch { expected: String, got: String, perturbation_id: Option<PerturbationId> },
    #[error("zero-norm vector{}", offender_suffix(.perturbation_id))]
    ZeroNormVector { perturbation_id: Option<PerturbationId> },
    #[error("perturbation id {0} appears more than once")]
    DuplicatePerturbation(PerturbationId),
    #[error("nothing to rank")]
    Empty,
}

fn offender_suffix(id: &Option<PerturbationId>) -> String {
    id.as_ref().map(|id| format!(" ({id})")).unwrap_or_default()
}

/// Cosine similarity before clamping. Exposed so callers can measure
/// floating-point overshoot; use [`cosine_similarity`] for ranking.
pub fn cosine_similarity_unclamped(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RankError> {
    if a.dim() != b.dim() {
        return Err(RankError::DimensionMismatch { expected: a.dim(), got: b.dim(), perturbation_id: None });
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(RankError::ZeroNormVector { perturbation_id: None });
    }
    // sqrt(a)*sqrt(b) rather than sqrt(a*b): the product of squared norms
    // underflows or overflows for very small or very large vectors.
    // IEEE multiplication is commutative, so swapping arguments is exact.
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RankError> {
    cosine_similarity_unclamped(a, b).map(|s| s.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    ByPerturbationId,
}

/// Which end of the similarity scale gets rank 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPolarity {
    /// Most similar to the current image first.
    #[default]
    CompatibilityFirst,
    /// Least similar first.
    NoveltyFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingInput {
    pub image_embedding: EmbeddingVector,
    pub perturbation_embeddings: Vec<(PerturbationId, EmbeddingVector)>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub descriptors: Vec<RankedDescriptor>,
    pub input_fingerprint: String,
}

impl RankingInput {
    pub fn new(image_embedding: EmbeddingVector, perturbation_embeddings: Vec<(PerturbationId, EmbeddingVector)>) -> Self {
        Self { image_embedding, perturbation_embeddings, tie_break: TieBreak::ByPerturbationId }
    }

    /// Content hash of the input, independent of how it was assembled.
    pub fn fingerprint(&self) -> String {
        canonical_hash(self).expect("ranking input serializes")
    }

    fn check(&self) -> Result<(), RankError> {
        if self.perturbation_embeddings.is_empty() {
            return Err(RankError::Empty);
        }
        let image = &self.image_embedding;
        let mut seen = HashSet::new();
        for (id, v) in &self.perturbation_embeddings {
            if !seen.insert(id) {
                return Err(RankError::DuplicatePerturbation(id.clone()));
            }
            if v.dim() != image.dim() {
                return Err(RankError::DimensionMismatch {
                    expected: image.dim(),
                    got: v.dim(),
                    perturbation_id: Some(id.clone()),
                });
            }
            if v.space_tag() != image.space_tag() {
                return Err(RankError::SpaceMismatch {
                    expected: image.space_tag().to_owned(),
                    got: v.space_tag().to_owned(),
                    perturbation_id: Some(id.clone()),
                });
            }
        }
        Ok(())
    }
}

fn is_zero(v: &EmbeddingVector) -> bool {
    v.values().iter().all(|x| *x == 0.0)
}

pub fn rank_descriptors(input: &RankingInput) -> Result<RankingResult, RankError> {
    rank_descriptors_with(input, RankPolarity::CompatibilityFirst)
}

/// Ranks with an explicit polarity. Ties always resolve by ascending id.
pub fn rank_descriptors_with(input: &RankingInput, polarity: RankPolarity) -> Result<RankingResult, RankError> {
    input.check()?;

    if is_zero(&input.image_embedding) {
        return Err(RankError::ZeroNormVector { perturbation_id: None });
    }
    let mut scored = Vec::with_capacity(input.perturbation_embeddings.len());
    for (id, v) in &input.perturbation_embeddings {
        if is_zero(v) {
            return Err(RankError::ZeroNormVector { perturbation_id: Some(id.clone()) });
        }
        scored.push((id, cosine_similarity(&input.image_embedding, v)?));
    }

    scored.sort_by(|(id_a, a), (id_b, b)| {
        let by_score = match polarity {
            RankPolarity::CompatibilityFirst => b.total_cmp(a),
            RankPolarity::NoveltyFirst => a.total_cmp(b),
        };
        match by_score {
            Ordering::Equal => id_a.cmp(id_b),
            other => other,
        }
    });

    let descriptors = scored
        .into_iter()
        .enumerate()
        .map(|(i, (id, score))| RankedDescriptor { perturbation_id: id.clone(), score, rank: i as u32 + 1 })
        .collect();

    Ok(RankingResult { descriptors, input_fingerprint: input.fingerprint() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec(), "test").unwrap()
    }

    #[test]
    fn identical_unit_vectors() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0, 0.0]), &v(&[1.0, 0.0, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn orthogonal_vectors() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn forty_five_degrees() {
        let expected = std::f64::consts::FRAC_1_SQRT_2;
        let got = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn errors_on_bad_inputs() {
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(RankError::DimensionMismatch { expected: 1, got: 2, .. })
        ));
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(RankError::ZeroNormVector { .. })
        ));
    }

    #[test]
    fn ties_fall_back_to_id_order() {
        let input = RankingInput::new(
            v(&[1.0, 2.0]),
            ["c", "a", "b"].iter().map(|id| (PerturbationId::new(*id), v(&[3.0, -1.0]))).collect(),
        );
        let ids: Vec<_> = rank_descriptors(&input)
            .unwrap()
            .descriptors
            .into_iter()
            .map(|d| d.perturbation_id.to_string())
            .collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn single_candidate_gets_rank_one() {
        let input = RankingInput::new(v(&[1.0, 1.0]), vec![(PerturbationId::new("p"), v(&[1.0, 0.0]))]);
        let result = rank_descriptors(&input).unwrap();
        assert_eq!(result.descriptors.len(), 1);
        assert_eq!(result.descriptors[0].rank, 1);
        assert_eq!(result.descriptors[0].score, cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap());
    }

    #[test]
    fn zero_norm_candidate_is_named() {
        let input = RankingInput::new(
            v(&[1.0, 1.0]),
            vec![(PerturbationId::new("ok"), v(&[1.0, 0.0])), (PerturbationId::new("bad"), v(&[0.0, 0.0]))],
        );
        assert_eq!(
            rank_descriptors(&input),
            Err(RankError::ZeroNormVector { perturbation_id: Some(PerturbationId::new("bad")) })
        );
    }

    #[test]
    fn mismatched_space_is_rejected() {
        let other = EmbeddingVector::new(vec![1.0, 0.0], "other").unwrap();
        let input = RankingInput::new(v(&[1.0, 1.0]), vec![(PerturbationId::new("p"), other)]);
        assert!(matches!(rank_descriptors(&input), Err(RankError::SpaceMismatch { .. })));
    }

    #[test]
    fn novelty_first_reverses_order() {
        let input = RankingInput::new(
            v(&[1.0, 0.0]),
            vec![(PerturbationId::new("near"), v(&[1.0, 0.1])), (PerturbationId::new("far"), v(&[-1.0, 0.2]))],
        );
        let first = |p| rank_descriptors_with(&input, p).unwrap().descriptors[0].perturbation_id.to_string();
        assert_eq!(first(RankPolarity::CompatibilityFirst), "near");
        assert_eq!(first(RankPolarity::NoveltyFirst), "far");
    }
}
