//! Domain types shared by every stage of the pipeline.
//!
//! Everything here is a plain value: no I/O, no provider calls. Each type
//! serializes to canonical JSON with the field names used on the wire.

mod axis;
mod embedding;
mod ids;
mod prompt;
mod session;

pub use axis::{
    validate_axis, AxisViolation, Direction, Perturbation, Theme, ThemeAxis, ThemeSource,
    PERTURBATIONS_PER_AXIS, PERTURBATIONS_PER_DIRECTION,
};
pub use embedding::{EmbeddingVector, EmbeddingVectorError, RankedDescriptor};
pub use ids::{dedup_key, normalize_label, AxisId, ImageId, PerturbationId, SessionId, ThemeId};
pub use prompt::{InjectedDescriptor, PromptSpec, PromptTemplate, TemplateError, CURRENT_TEMPLATE_VERSION};
pub use session::{lineage_check, ImageOrigin, ImageRef, LineageViolation, Session};
