use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ids::{dedup_key, AxisId, PerturbationId, ThemeId};

/// Number of perturbations on every axis.
pub const PERTURBATIONS_PER_AXIS: usize = 12;
/// Perturbations on each side of an axis; also the strongest intensity rank.
pub const PERTURBATIONS_PER_DIRECTION: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThemeSource {
    Extracted,
    UserAdded,
}

/// A high-level attribute of an image (a mood, a style, a tone).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub id: ThemeId,
    pub label: String,
    pub source: ThemeSource,
}

impl Theme {
    pub fn new(label: &str, source: ThemeSource) -> Self {
        let label = super::ids::normalize_label(label);
        Self { id: ThemeId::for_label(&label), label, source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Left, Direction::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A graded descriptor pushing a theme toward one pole.
///
/// `intensity_rank` runs from 1 (mildest) to 6 (strongest toward the pole).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub id: PerturbationId,
    pub axis_id: AxisId,
    pub label: String,
    pub direction: Direction,
    pub intensity_rank: u8,
}

impl Perturbation {
    pub fn id_for(axis: &AxisId, direction: Direction, rank: u8) -> PerturbationId {
        PerturbationId::new(format!("{axis}.{direction}.{rank}"))
    }
}

/// A bipolar semantic axis: two poles with six graded perturbations each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeAxis {
    pub id: AxisId,
    pub theme: Theme,
    pub left_pole_label: String,
    pub right_pole_label: String,
    pub perturbations: Vec<Perturbation>,
}

impl ThemeAxis {
    pub fn perturbation(&self, id: &PerturbationId) -> Option<&Perturbation> {
        self.perturbations.iter().find(|p| &p.id == id)
    }

    /// Perturbations on `direction`, mildest first.
    pub fn side(&self, direction: Direction) -> Vec<&Perturbation> {
        let mut side: Vec<_> =
            self.perturbations.iter().filter(|p| p.direction == direction).collect();
        side.sort_by_key(|p| p.intensity_rank);
        side
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum AxisViolation {
    EmptyThemeLabel,
    WrongPerturbationCount { got: usize },
    UnbalancedSplit { left: usize, right: usize },
    IntensityRankOutOfRange { perturbation_id: PerturbationId, rank: u8 },
    DuplicateIntensityRank { direction: Direction, rank: u8 },
    MissingIntensityRank { direction: Direction, rank: u8 },
    DuplicateLabel { label: String },
    EmptyLabel { perturbation_id: PerturbationId },
    DuplicatePerturbationId { perturbation_id: PerturbationId },
    ForeignAxisId { perturbation_id: PerturbationId },
    IdenticalPoles { label: String },
}

impl fmt::Display for AxisViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyThemeLabel => write!(f, "theme label is empty"),
            Self::WrongPerturbationCount { got } => {
                write!(f, "expected {PERTURBATIONS_PER_AXIS} perturbations, got {got}")
            }
            Self::UnbalancedSplit { left, right } => {
                write!(f, "expected 6 left and 6 right, got {left} left and {right} right")
            }
            Self::IntensityRankOutOfRange { perturbation_id, rank } => {
                write!(f, "{perturbation_id} has intensity rank {rank} outside 1..=6")
            }
            Self::DuplicateIntensityRank { direction, rank } => {
                write!(f, "intensity rank {rank} repeated on the {direction} side")
            }
            Self::MissingIntensityRank { direction, rank } => {
                write!(f, "intensity rank {rank} missing on the {direction} side")
            }
            Self::DuplicateLabel { label } => write!(f, "label {label:?} appears more than once"),
            Self::EmptyLabel { perturbation_id } => write!(f, "{perturbation_id} has an empty label"),
            Self::DuplicatePerturbationId { perturbation_id } => {
                write!(f, "perturbation id {perturbation_id} is not unique")
            }
            Self::ForeignAxisId { perturbation_id } => {
                write!(f, "{perturbation_id} belongs to a different axis")
            }
            Self::IdenticalPoles { label } => write!(f, "both poles are labelled {label:?}"),
        }
    }
}

/// Checks every structural invariant of a [`ThemeAxis`] and reports all of
/// the violations found, not just the first.
pub fn validate_axis(axis: &ThemeAxis) -> Result<(), Vec<AxisViolation>> {
    let mut violations = Vec::new();

    if axis.theme.label.trim().is_empty() {
        violations.push(AxisViolation::EmptyThemeLabel);
    }
    if axis.perturbations.len() != PERTURBATIONS_PER_AXIS {
        violations.push(AxisViolation::WrongPerturbationCount { got: axis.perturbations.len() });
    }

    let left = axis.perturbations.iter().filter(|p| p.direction == Direction::Left).count();
    let right = axis.perturbations.len() - left;
    if left != PERTURBATIONS_PER_DIRECTION || right != PERTURBATIONS_PER_DIRECTION {
        violations.push(AxisViolation::UnbalancedSplit { left, right });
    }

    for direction in Direction::BOTH {
        let mut seen = BTreeSet::new();
        let mut duplicated = BTreeSet::new();
        for p in axis.perturbations.iter().filter(|p| p.direction == direction) {
            if !(1..=PERTURBATIONS_PER_DIRECTION as u8).contains(&p.intensity_rank) {
                violations.push(AxisViolation::IntensityRankOutOfRange {
                    perturbation_id: p.id.clone(),
                    rank: p.intensity_rank,
                });
            } else if !seen.insert(p.intensity_rank) {
                duplicated.insert(p.intensity_rank);
            }
        }
        for rank in duplicated {
            violations.push(AxisViolation::DuplicateIntensityRank { direction, rank });
        }
        // An empty side is already reported as an unbalanced split.
        if !seen.is_empty() {
            for rank in 1..=PERTURBATIONS_PER_DIRECTION as u8 {
                if !seen.contains(&rank) {
                    violations.push(AxisViolation::MissingIntensityRank { direction, rank });
                }
            }
        }
    }

    let mut labels = HashSet::new();
    let mut ids = HashSet::new();
    for p in &axis.perturbations {
        if p.label.trim().is_empty() {
            violations.push(AxisViolation::EmptyLabel { perturbation_id: p.id.clone() });
        } else if !labels.insert(dedup_key(&p.label)) {
            violations.push(AxisViolation::DuplicateLabel { label: p.label.clone() });
        }
        if !ids.insert(&p.id) {
            violations.push(AxisViolation::DuplicatePerturbationId { perturbation_id: p.id.clone() });
        }
        if p.axis_id != axis.id {
            violations.push(AxisViolation::ForeignAxisId { perturbation_id: p.id.clone() });
        }
    }

    if dedup_key(&axis.left_pole_label) == dedup_key(&axis.right_pole_label) {
        violations.push(AxisViolation::IdenticalPoles { label: axis.left_pole_label.clone() });
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
