use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canonical::sha256_hex;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: impl Into<String>) -> Self {
                Self(raw.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(raw: &str) -> Self {
                Self(raw.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(raw: String) -> Self {
                Self(raw)
            }
        }
    };
}

id_type!(
    /// Session identifier.
    SessionId
);
id_type!(ThemeId);
id_type!(AxisId);
id_type!(
    /// Perturbation identifier. Ranking ties are broken by comparing these
    /// lexicographically, so the derived `Ord` is part of the ranking contract.
    PerturbationId
);
id_type!(ImageId);

/// Collapses runs of whitespace and trims both ends.
pub fn normalize_label(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Key used for case-insensitive, whitespace-normalizing deduplication.
pub fn dedup_key(raw: &str) -> String {
    normalize_label(raw).to_lowercase()
}

impl ThemeId {
    /// Stable id derived from the theme label, so the same label always maps
    /// to the same id and two themes in a session never share one.
    pub fn for_label(label: &str) -> Self {
        Self(format!("theme-{}", &sha256_hex(dedup_key(label).as_bytes())[..12]))
    }
}

impl AxisId {
    pub fn for_theme(theme: &ThemeId) -> Self {
        Self(format!("axis-{}", &sha256_hex(theme.as_str().as_bytes())[..12]))
    }
}

impl ImageId {
    /// Id of an uploaded root image.
    pub fn for_root(payload_hash: &str) -> Self {
        Self(format!("img-{}", &sha256_hex(format!("root/{payload_hash}").as_bytes())[..16]))
    }

    /// Id of a generated image. `ordinal` counts earlier siblings that share
    /// the same parent and payload, keeping ids distinct when a generator
    /// returns identical bytes twice.
    pub fn for_generated(parent: &ImageId, payload_hash: &str, ordinal: usize) -> Self {
        let seed = format!("{parent}/{payload_hash}/{ordinal}");
        Self(format!("img-{}", &sha256_hex(seed.as_bytes())[..16]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_collapses_whitespace() {
        assert_eq!(normalize_label("  golden \t hour "), "golden hour");
        assert_eq!(dedup_key(" Calm"), dedup_key("calm"));
    }

    #[test]
    fn theme_ids_ignore_case() {
        assert_eq!(ThemeId::for_label("Serene"), ThemeId::for_label(" serene "));
        assert_ne!(ThemeId::for_label("serene"), ThemeId::for_label("calm"));
    }

    #[test]
    fn sibling_ordinal_changes_image_id() {
        let parent = ImageId::new("img-root");
        assert_ne!(
            ImageId::for_generated(&parent, "abc", 0),
            ImageId::for_generated(&parent, "abc", 1)
        );
    }
}
