//! Thematic axes for navigating image variations.
//!
//! An uploaded image is turned into a handful of themes by a language
//! model. Each theme becomes a bipolar [`ThemeAxis`](model::ThemeAxis) with
//! six graded perturbations towards each pole. Moving a handle along an
//! axis unlocks perturbations, ranks them against the current reference by
//! cosine similarity, and injects the best ones into a generation prompt.
//!
//! The crate is split along those steps:
//!
//! - [`themes`] extracts keywords and builds axes.
//! - [`embeddings`] and [`ranking`] score perturbations against an image.
//! - [`orchestrator`] turns gestures into prompts and generated images.
//! - [`sessions`] ties the above to durable storage.
//! - [`providers`] talks to the language model, embedder and generator,
//!   either over HTTP or from a recorded fixture file.

pub mod canonical;
pub mod clock;
pub mod embeddings;
pub mod instructions;
pub mod model;
pub mod orchestrator;
pub mod providers;
pub mod ranking;
pub mod sessions;
pub mod store;
pub mod testkit;
pub mod themes;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/axes.md")]
    struct Axes;
    #[doc = include_str!("../../../book/src/ranking.md")]
    struct Ranking;
    #[doc = include_str!("../../../book/src/positions.md")]
    struct Positions;
    #[doc = include_str!("../../../book/src/sessions.md")]
    struct Sessions;
    #[doc = include_str!("../../../book/src/providers.md")]
    struct Providers;
}
