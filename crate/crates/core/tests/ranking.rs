//! Ranking checked against an exact integer oracle.
//!
//! Vectors are drawn on a grid of multiples of 2^-20, so every dot product
//! and squared norm is an exact integer in units of 2^-40. Cosine values
//! are then compared exactly by cross-multiplying squares.

use std::cmp::Ordering;

use num_bigint::BigInt;
use proptest::prelude::*;
use thematic_core::model::{EmbeddingVector, PerturbationId};
use thematic_core::ranking::{
    cosine_similarity, cosine_similarity_unclamped, rank_descriptors, rank_descriptors_with, RankError,
    RankPolarity, RankingInput,
};

const GRID: f64 = (1u64 << 20) as f64;
const TAG: &str = "test";

fn to_vec(ints: &[i64]) -> EmbeddingVector {
    EmbeddingVector::new(ints.iter().map(|&i| i as f64 / GRID).collect(), TAG).unwrap()
}

fn dot(a: &[i64], b: &[i64]) -> i128 {
    a.iter().zip(b).map(|(&x, &y)| x as i128 * y as i128).sum()
}

/// Exact comparison of cos(img, a) and cos(img, b).
fn cmp_cos(img: &[i64], a: &[i64], b: &[i64]) -> Ordering {
    let (da, db) = (dot(img, a), dot(img, b));
    let (na, nb) = (BigInt::from(dot(a, a)), BigInt::from(dot(b, b)));
    let sign = |d: i128| d.signum();
    match sign(da).cmp(&sign(db)) {
        Ordering::Equal => {}
        other => return other,
    }
    // Same sign: compare da^2 * nb with db^2 * na, flipped when negative.
    let lhs = BigInt::from(da) * BigInt::from(da) * &nb;
    let rhs = BigInt::from(db) * BigInt::from(db) * &na;
    if da < 0 {
        rhs.cmp(&lhs)
    } else {
        lhs.cmp(&rhs)
    }
}

/// Ids sorted best first, ties ascending by id: a plain insertion sort so
/// it shares nothing with the implementation.
fn oracle(img: &[i64], candidates: &[(String, Vec<i64>)]) -> Vec<String> {
    let mut out: Vec<&(String, Vec<i64>)> = Vec::new();
    for c in candidates {
        let pos = out
            .iter()
            .position(|o| match cmp_cos(img, &c.1, &o.1) {
                Ordering::Greater => true,
                Ordering::Equal => c.0 < o.0,
                Ordering::Less => false,
            })
            .unwrap_or(out.len());
        out.insert(pos, c);
    }
    out.into_iter().map(|c| c.0.clone()).collect()
}

fn nonzero(dim: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-(1i64 << 20)..=(1i64 << 20), dim).prop_filter("non-zero", |v| v.iter().any(|&x| x != 0))
}

fn instance() -> impl Strategy<Value = (Vec<i64>, Vec<(String, Vec<i64>)>)> {
    (1usize..=128, 1usize..=64).prop_flat_map(|(dim, n)| {
        (nonzero(dim), prop::collection::vec(nonzero(dim), n), prop::collection::vec(any::<prop::sample::Index>(), 0..4))
            .prop_map(|(img, mut vecs, dupes)| {
                // Copy some vectors over others so exact ties occur.
                let n = vecs.len();
                for d in dupes {
                    let (from, to) = (d.index(n), (d.index(n) + 1) % n);
                    vecs[to] = vecs[from].clone();
                }
                let candidates = vecs.into_iter().enumerate().map(|(i, v)| (format!("p{i:03}"), v)).collect();
                (img, candidates)
            })
    })
}

fn input(img: &[i64], candidates: &[(String, Vec<i64>)]) -> RankingInput {
    RankingInput::new(to_vec(img), candidates.iter().map(|(id, v)| (PerturbationId::new(id.as_str()), to_vec(v))).collect())
}

fn ranked_ids(input: &RankingInput) -> Vec<String> {
    rank_descriptors(input).unwrap().descriptors.into_iter().map(|d| d.perturbation_id.to_string()).collect()
}

fn unit(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-12)
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_exact_oracle((img, candidates) in instance()) {
        let input = input(&img, &candidates);
        let result = rank_descriptors(&input).unwrap();
        let ranks: Vec<u32> = result.descriptors.iter().map(|d| d.rank).collect();
        prop_assert_eq!(ranks, (1..=candidates.len() as u32).collect::<Vec<_>>());
        prop_assert!(result.descriptors.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert_eq!(ranked_ids(&input), oracle(&img, &candidates));
    }

    #[test]
    fn input_order_does_not_matter((img, candidates) in instance(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = candidates.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(ranked_ids(&input(&img, &candidates)), ranked_ids(&input(&img, &shuffled)));
    }

    #[test]
    fn scaling_the_image_keeps_the_order((img, candidates) in instance()) {
        let base = input(&img, &candidates);
        let reference = rank_descriptors(&base).unwrap();
        for factor in [1e-3, 1.0, 1e3] {
            let scaled = RankingInput::new(base.image_embedding.scaled(factor).unwrap(), base.perturbation_embeddings.clone());
            let result = rank_descriptors(&scaled).unwrap();
            for (a, b) in reference.descriptors.iter().zip(&result.descriptors) {
                prop_assert_eq!(&a.perturbation_id, &b.perturbation_id);
                prop_assert!((a.score - b.score).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(
        (a, b) in (1usize..64).prop_flat_map(|d| (prop::collection::vec(-1e6f64..1e6, d), prop::collection::vec(-1e6f64..1e6, d)))
    ) {
        prop_assume!(a.iter().any(|&x| x != 0.0) && b.iter().any(|&x| x != 0.0));
        let a = EmbeddingVector::new(a, TAG).unwrap();
        let b = EmbeddingVector::new(b, TAG).unwrap();
        let ab = cosine_similarity(&a, &b).unwrap();
        prop_assert_eq!(ab.to_bits(), cosine_similarity(&b, &a).unwrap().to_bits());
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn unit_vectors_barely_overshoot(a in unit(32), b in unit(32)) {
        let a = EmbeddingVector::new(a, TAG).unwrap();
        let b = EmbeddingVector::new(b, TAG).unwrap();
        let raw = cosine_similarity_unclamped(&a, &b).unwrap();
        prop_assert!(raw.abs() <= 1.0 + 1e-9);
        prop_assert_eq!(raw.to_bits(), cosine_similarity_unclamped(&b, &a).unwrap().to_bits());
        let same = cosine_similarity_unclamped(&a, &a).unwrap();
        prop_assert!((same - 1.0).abs() < 1e-9);
        prop_assert!(cosine_similarity(&a, &a).unwrap() <= 1.0);
    }
}

#[test]
fn worked_examples() {
    let v = |x: &[f64]| EmbeddingVector::new(x.to_vec(), TAG).unwrap();
    assert_eq!(cosine_similarity(&v(&[1.0, 0.0, 0.0]), &v(&[1.0, 0.0, 0.0])).unwrap(), 1.0);
    assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
    // 1/sqrt(2) = 0.70710678118654752440...
    let s = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
    assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
}

#[test]
fn identical_embeddings_rank_by_id() {
    let e = EmbeddingVector::new(vec![0.3, -0.2, 0.9], TAG).unwrap();
    let ids = ["w.right.3", "w.left.1", "w.right.1", "w.left.6"];
    let input = RankingInput::new(
        EmbeddingVector::new(vec![1.0, 2.0, 3.0], TAG).unwrap(),
        ids.iter().map(|id| (PerturbationId::new(*id), e.clone())).collect(),
    );
    assert_eq!(ranked_ids(&input), ["w.left.1", "w.left.6", "w.right.1", "w.right.3"]);
}

#[test]
fn single_candidate_gets_rank_one() {
    let img = EmbeddingVector::new(vec![1.0, 1.0], TAG).unwrap();
    let p = EmbeddingVector::new(vec![1.0, 0.0], TAG).unwrap();
    let result = rank_descriptors(&RankingInput::new(img.clone(), vec![("only".into(), p.clone())])).unwrap();
    assert_eq!(result.descriptors.len(), 1);
    assert_eq!(result.descriptors[0].rank, 1);
    assert_eq!(result.descriptors[0].score, cosine_similarity(&img, &p).unwrap());
}

#[test]
fn novelty_first_reverses_scores_but_not_ties() {
    let img = EmbeddingVector::new(vec![1.0, 0.0], TAG).unwrap();
    let near = EmbeddingVector::new(vec![1.0, 0.1], TAG).unwrap();
    let far = EmbeddingVector::new(vec![0.0, 1.0], TAG).unwrap();
    let input = RankingInput::new(img, vec![("b".into(), near.clone()), ("a".into(), near), ("c".into(), far)]);
    let ids = |p| -> Vec<String> {
        rank_descriptors_with(&input, p).unwrap().descriptors.into_iter().map(|d| d.perturbation_id.to_string()).collect()
    };
    assert_eq!(ids(RankPolarity::CompatibilityFirst), ["a", "b", "c"]);
    assert_eq!(ids(RankPolarity::NoveltyFirst), ["c", "a", "b"]);
}

#[test]
fn errors_name_the_culprit() {
    let img = EmbeddingVector::new(vec![1.0, 0.0], TAG).unwrap();
    let zero = EmbeddingVector::new(vec![0.0, 0.0], TAG).unwrap();
    let three = EmbeddingVector::new(vec![1.0, 0.0, 0.0], TAG).unwrap();
    let ok = EmbeddingVector::new(vec![0.0, 1.0], TAG).unwrap();

    let err = rank_descriptors(&RankingInput::new(img.clone(), vec![("a".into(), ok.clone()), ("z".into(), zero.clone())]));
    assert!(matches!(err, Err(RankError::ZeroNormVector { perturbation_id: Some(id) }) if id.as_str() == "z"));

    let err = rank_descriptors(&RankingInput::new(img.clone(), vec![("d".into(), three)]));
    assert!(matches!(err, Err(RankError::DimensionMismatch { expected: 2, got: 3, .. })));

    let err = rank_descriptors(&RankingInput::new(zero, vec![("a".into(), ok)]));
    assert!(matches!(err, Err(RankError::ZeroNormVector { perturbation_id: None })));

    assert!(matches!(rank_descriptors(&RankingInput::new(img, vec![])), Err(RankError::Empty)));
}
