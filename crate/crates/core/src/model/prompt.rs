use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ids::AxisId;

pub const CURRENT_TEMPLATE_VERSION: &str = "prompt-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedDescriptor {
    pub label: String,
    pub axis_id: AxisId,
}

/// Everything the generator is told: the scene, plus the ranked descriptors
/// (rank 1 first) that steer it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub base_description: String,
    pub injected_descriptors: Vec<InjectedDescriptor>,
    pub template_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown prompt template version {0:?}")]
    UnknownVersion(String),
    #[error("prompt template asset is malformed: {0}")]
    Malformed(String),
}

/// A prompt frame with `{base}` and `{descriptors}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub frame: String,
    /// Descriptor clause; `{list}` receives the labels joined by `separator`.
    pub descriptors: String,
    pub separator: String,
}

const BUILTIN_TEMPLATES: &[&str] = &[include_str!("../../templates/prompt.v1.toml")];

impl PromptTemplate {
    pub fn parse(asset: &str) -> Result<Self, TemplateError> {
        let template: PromptTemplate =
            toml::from_str(asset).map_err(|e| TemplateError::Malformed(e.to_string()))?;
        if !template.frame.contains("{base}") || !template.frame.contains("{descriptors}") {
            return Err(TemplateError::Malformed("frame needs {base} and {descriptors}".into()));
        }
        if !template.descriptors.contains("{list}") {
            return Err(TemplateError::Malformed("descriptors clause needs {list}".into()));
        }
        Ok(template)
    }

    /// Looks up a template shipped with the crate.
    pub fn builtin(version: &str) -> Result<&'static PromptTemplate, TemplateError> {
        static PARSED: OnceLock<Vec<PromptTemplate>> = OnceLock::new();
        PARSED
            .get_or_init(|| {
                BUILTIN_TEMPLATES
                    .iter()
                    .map(|asset| PromptTemplate::parse(asset).expect("shipped template parses"))
                    .collect()
            })
            .iter()
            .find(|t| t.version == version)
            .ok_or_else(|| TemplateError::UnknownVersion(version.to_owned()))
    }

    pub fn render(&self, spec: &PromptSpec) -> String {
        let clause = if spec.injected_descriptors.is_empty() {
            String::new()
        } else {
            let list = spec
                .injected_descriptors
                .iter()
                .map(|d| d.label.as_str())
                .collect::<Vec<_>>()
                .join(&self.separator);
            self.descriptors.replace("{list}", &list)
        };
        // Substitute {descriptors} first so a base description that happens
        // to contain the literal text "{descriptors}" is left alone.
        let (head, tail) = self.frame.split_once("{base}").expect("checked at parse");
        format!(
            "{}{}{}",
            head.replace("{descriptors}", &clause),
            spec.base_description,
            tail.replace("{descriptors}", &clause)
        )
    }
}

impl PromptSpec {
    pub fn new(base_description: impl Into<String>, injected_descriptors: Vec<InjectedDescriptor>) -> Self {
        Self {
            base_description: base_description.into(),
            injected_descriptors,
            template_version: CURRENT_TEMPLATE_VERSION.to_owned(),
        }
    }

    /// The prompt string sent to the generator. Pure: equal specs always
    /// produce byte-identical strings.
    pub fn render(&self) -> Result<String, TemplateError> {
        Ok(PromptTemplate::builtin(&self.template_version)?.render(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(labels: &[&str]) -> PromptSpec {
        PromptSpec::new(
            "a quiet beach at dusk",
            labels
                .iter()
                .map(|l| InjectedDescriptor { label: (*l).into(), axis_id: AxisId::new("axis-1") })
                .collect(),
        )
    }

    #[test]
    fn golden_prompt_string() {
        let rendered = spec(&["serene", "soft light"]).render().unwrap();
        let golden = include_str!("../../tests/golden/prompt-v1.txt");
        assert_eq!(rendered, golden.trim_end_matches('\n'));
    }

    #[test]
    fn no_descriptors_leaves_base_unchanged() {
        assert_eq!(spec(&[]).render().unwrap(), "a quiet beach at dusk");
    }

    #[test]
    fn base_containing_slot_text_is_not_expanded() {
        let mut s = spec(&["serene"]);
        s.base_description = "literal {descriptors}".into();
        assert_eq!(s.render().unwrap(), "literal {descriptors}, evoking serene");
    }

    #[test]
    fn unknown_version_is_an_error() {
        let mut s = spec(&[]);
        s.template_version = "prompt-v0".into();
        assert_eq!(s.render(), Err(TemplateError::UnknownVersion("prompt-v0".into())));
    }

    #[test]
    fn malformed_templates_are_rejected() {
        assert!(PromptTemplate::parse("version = 'x'\nframe = '{base}'\ndescriptors = '{list}'\nseparator = ','").is_err());
        assert!(PromptTemplate::parse("nonsense").is_err());
    }
}
