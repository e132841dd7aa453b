use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::axis::ThemeAxis;
use super::ids::{AxisId, ImageId, SessionId};
use super::prompt::PromptSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageOrigin {
    Uploaded,
    Generated,
}

/// A node of the lineage tree. Image bytes live in the blob store under
/// `payload_hash`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: ImageId,
    pub payload_hash: String,
    pub origin: ImageOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<ImageId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_used: Option<PromptSpec>,
}

impl ImageRef {
    pub fn uploaded(payload_hash: impl Into<String>) -> Self {
        let payload_hash = payload_hash.into();
        Self {
            id: ImageId::for_root(&payload_hash),
            payload_hash,
            origin: ImageOrigin::Uploaded,
            parent_id: None,
            prompt_used: None,
        }
    }
}

/// One editing session: the lineage tree, which node is being edited, the
/// axes on offer and where each axis handle currently sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    /// Insertion ordered; never shrinks.
    pub images: Vec<ImageRef>,
    pub primary_ref: ImageId,
    pub axes: Vec<ThemeAxis>,
    pub navigation: BTreeMap<AxisId, f64>,
    /// Scene descriptions per image, filled lazily and never overwritten.
    #[serde(default)]
    pub base_descriptions: BTreeMap<ImageId, String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Session {
    /// A fresh session rooted at an uploaded image, every handle at 0.
    pub fn new(id: SessionId, root: ImageRef, axes: Vec<ThemeAxis>, now: DateTime<Utc>) -> Self {
        let navigation = axes.iter().map(|a| (a.id.clone(), 0.0)).collect();
        Self {
            id,
            primary_ref: root.id.clone(),
            images: vec![root],
            axes,
            navigation,
            base_descriptions: BTreeMap::new(),
            created_at: now,
            updated_at: now,
        }
    }

    pub fn image(&self, id: &ImageId) -> Option<&ImageRef> {
        self.images.iter().find(|i| &i.id == id)
    }

    pub fn primary(&self) -> &ImageRef {
        self.image(&self.primary_ref).expect("primary_ref resolves in a checked session")
    }

    pub fn root(&self) -> Option<&ImageRef> {
        self.images.iter().find(|i| i.origin == ImageOrigin::Uploaded)
    }

    pub fn axis(&self, id: &AxisId) -> Option<&ThemeAxis> {
        self.axes.iter().find(|a| &a.id == id)
    }

    pub fn children_of<'a>(&'a self, parent: &'a ImageId) -> impl Iterator<Item = &'a ImageRef> + 'a {
        self.images.iter().filter(move |i| i.parent_id.as_ref() == Some(parent))
    }

    /// Parent chain from `id` up to the root, starting with `id` itself.
    /// Stops early on a dangling parent or a cycle.
    pub fn ancestry(&self, id: &ImageId) -> Vec<ImageId> {
        let mut chain = Vec::new();
        let mut seen = HashSet::new();
        let mut cursor = self.image(id);
        while let Some(img) = cursor {
            if !seen.insert(img.id.clone()) {
                break;
            }
            chain.push(img.id.clone());
            cursor = img.parent_id.as_ref().and_then(|p| self.image(p));
        }
        chain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum LineageViolation {
    NoRoot,
    MultipleRoots { image_ids: Vec<ImageId> },
    DuplicateImageId { image_id: ImageId },
    DanglingParent { image_id: ImageId, parent_id: ImageId },
    UploadedWithParent { image_id: ImageId },
    UploadedWithPrompt { image_id: ImageId },
    GeneratedWithoutParent { image_id: ImageId },
    GeneratedWithoutPrompt { image_id: ImageId },
    Cycle { image_id: ImageId },
    UnresolvedPrimary { primary_ref: ImageId },
    UnknownNavigationAxis { axis_id: AxisId },
    NavigationOutOfRange { axis_id: AxisId, position: f64 },
    DuplicateAxisId { axis_id: AxisId },
}

impl fmt::Display for LineageViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoRoot => write!(f, "session has no uploaded root image"),
            Self::MultipleRoots { image_ids } => write!(f, "multiple root images: {image_ids:?}"),
            Self::DuplicateImageId { image_id } => write!(f, "image id {image_id} is not unique"),
            Self::DanglingParent { image_id, parent_id } => {
                write!(f, "{image_id} names missing parent {parent_id}")
            }
            Self::UploadedWithParent { image_id } => write!(f, "uploaded image {image_id} has a parent"),
            Self::UploadedWithPrompt { image_id } => write!(f, "uploaded image {image_id} has a prompt"),
            Self::GeneratedWithoutParent { image_id } => {
                write!(f, "generated image {image_id} has no parent")
            }
            Self::GeneratedWithoutPrompt { image_id } => {
                write!(f, "generated image {image_id} has no prompt")
            }
            Self::Cycle { image_id } => write!(f, "parent links from {image_id} form a cycle"),
            Self::UnresolvedPrimary { primary_ref } => {
                write!(f, "primary reference {primary_ref} is not in the session")
            }
            Self::UnknownNavigationAxis { axis_id } => {
                write!(f, "navigation names unknown axis {axis_id}")
            }
            Self::NavigationOutOfRange { axis_id, position } => {
                write!(f, "navigation position {position} on {axis_id} is outside [-1, 1]")
            }
            Self::DuplicateAxisId { axis_id } => write!(f, "axis id {axis_id} is not unique"),
        }
    }
}

/// Verifies that a session's images form one rooted tree, that the primary
/// reference resolves and that navigation state only names known axes with
/// in-range positions.
pub fn lineage_check(session: &Session) -> Result<(), Vec<LineageViolation>> {
    let mut violations = Vec::new();
    let mut by_id: HashMap<&ImageId, &ImageRef> = HashMap::new();
    for img in &session.images {
        if by_id.insert(&img.id, img).is_some() {
            violations.push(LineageViolation::DuplicateImageId { image_id: img.id.clone() });
        }
    }

    let roots: Vec<ImageId> = session
        .images
        .iter()
        .filter(|i| i.origin == ImageOrigin::Uploaded)
        .map(|i| i.id.clone())
        .collect();
    match roots.len() {
        0 => violations.push(LineageViolation::NoRoot),
        1 => {}
        _ => violations.push(LineageViolation::MultipleRoots { image_ids: roots }),
    }

    for img in &session.images {
        match img.origin {
            ImageOrigin::Uploaded => {
                if img.parent_id.is_some() {
                    violations.push(LineageViolation::UploadedWithParent { image_id: img.id.clone() });
                }
                if img.prompt_used.is_some() {
                    violations.push(LineageViolation::UploadedWithPrompt { image_id: img.id.clone() });
                }
            }
            ImageOrigin::Generated => {
                if img.prompt_used.is_none() {
                    violations
                        .push(LineageViolation::GeneratedWithoutPrompt { image_id: img.id.clone() });
                }
                match &img.parent_id {
                    None => violations
                        .push(LineageViolation::GeneratedWithoutParent { image_id: img.id.clone() }),
                    Some(parent) if !by_id.contains_key(parent) => {
                        violations.push(LineageViolation::DanglingParent {
                            image_id: img.id.clone(),
                            parent_id: parent.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
    }

    // Every chain of existing parents must terminate; a revisit means a cycle.
    for img in &session.images {
        let mut seen = HashSet::new();
        let mut cursor = Some(img);
        while let Some(node) = cursor {
            if !seen.insert(&node.id) {
                violations.push(LineageViolation::Cycle { image_id: img.id.clone() });
                break;
            }
            cursor = node.parent_id.as_ref().and_then(|p| by_id.get(p).copied());
        }
    }

    if !by_id.contains_key(&session.primary_ref) {
        violations.push(LineageViolation::UnresolvedPrimary { primary_ref: session.primary_ref.clone() });
    }

    let mut axis_ids = HashSet::new();
    for axis in &session.axes {
        if !axis_ids.insert(&axis.id) {
            violations.push(LineageViolation::DuplicateAxisId { axis_id: axis.id.clone() });
        }
    }
    for (axis_id, &position) in &session.navigation {
        if !axis_ids.contains(axis_id) {
            violations.push(LineageViolation::UnknownNavigationAxis { axis_id: axis_id.clone() });
        }
        if !(-1.0..=1.0).contains(&position) {
            violations.push(LineageViolation::NavigationOutOfRange { axis_id: axis_id.clone(), position });
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
