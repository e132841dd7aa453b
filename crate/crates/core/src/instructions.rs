//! Versioned instruction templates sent to the language model.
//!
//! A template id has the form `name@vN`. Slots are written `{slot}` in the
//! template text and filled from the request's slot map.

use std::collections::BTreeMap;

use thiserror::Error;

pub const EXTRACT_KEYWORDS: &str = "extract_keywords@v1";
pub const CLASSIFY_KEYWORDS: &str = "classify_keywords@v1";
pub const AXIS_POLES: &str = "axis_poles@v1";
pub const AXIS_PERTURBATIONS: &str = "axis_perturbations@v1";
pub const DESCRIBE_IMAGE: &str = "describe_image@v1";

const TEMPLATES: &[(&str, &str)] = &[
    (EXTRACT_KEYWORDS, include_str!("../templates/extract_keywords.v1.txt")),
    (CLASSIFY_KEYWORDS, include_str!("../templates/classify_keywords.v1.txt")),
    (AXIS_POLES, include_str!("../templates/axis_poles.v1.txt")),
    (AXIS_PERTURBATIONS, include_str!("../templates/axis_perturbations.v1.txt")),
    (DESCRIBE_IMAGE, include_str!("../templates/describe_image.v1.txt")),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstructionError {
    #[error("unknown instruction template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template} has no value for slot {{{slot}}}")]
    MissingSlot { template: String, slot: String },
}

pub fn template_text(id: &str) -> Result<&'static str, InstructionError> {
    TEMPLATES
        .iter()
        .find(|(tid, _)| *tid == id)
        .map(|(_, text)| *text)
        .ok_or_else(|| InstructionError::UnknownTemplate(id.to_owned()))
}

/// Slot names referenced by a template, in order of first appearance.
pub fn slot_names(text: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        rest = &rest[start + 1..];
        let Some(end) = rest.find('}') else { break };
        let name = &rest[..end];
        if !name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c == '_') && !names.contains(&name) {
            names.push(name);
        }
    }
    names
}

pub fn render(id: &str, slots: &BTreeMap<String, String>) -> Result<String, InstructionError> {
    let text = template_text(id)?;
    let mut out = text.to_owned();
    for name in slot_names(text) {
        let value = slots.get(name).ok_or_else(|| InstructionError::MissingSlot {
            template: id.to_owned(),
            slot: name.to_owned(),
        })?;
        out = out.replace(&format!("{{{name}}}"), value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbation_template_slots() {
        let text = template_text(AXIS_PERTURBATIONS).unwrap();
        assert_eq!(slot_names(text), ["theme", "left_pole", "right_pole", "per_direction"]);
    }

    #[test]
    fn json_examples_are_not_slots() {
        assert!(slot_names(template_text(EXTRACT_KEYWORDS).unwrap()).is_empty());
        assert_eq!(slot_names(template_text(CLASSIFY_KEYWORDS).unwrap()), ["keywords"]);
    }

    #[test]
    fn rendering_fills_slots_and_reports_missing_ones() {
        let mut slots = BTreeMap::new();
        slots.insert("theme".to_owned(), "serene".to_owned());
        let text = render(AXIS_POLES, &slots).unwrap();
        assert!(text.contains("\"serene\""));
        assert!(matches!(render(AXIS_PERTURBATIONS, &slots), Err(InstructionError::MissingSlot { .. })));
        assert!(render("nope@v1", &slots).is_err());
    }
}
