use std::path::Path;

use serde::Deserialize;

use super::GenerationRequest;
use crate::corpus::Program;
use crate::error::PromptError;
use crate::filters::fence_for;
use crate::lexer::AnnotatedProgram;

const DEFAULT_TEMPLATES: &str = include_str!("../../prompts/v1.toml");

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct StageTemplate {
    pub system: String,
    pub user: String,
}

/// Versioned prompt text for both generation stages.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct PromptTemplates {
    pub version: String,
    pub stage1: StageTemplate,
    pub stage2: StageTemplate,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        toml::from_str(DEFAULT_TEMPLATES).expect("bundled prompt templates parse")
    }
}

impl PromptTemplates {
    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        toml::from_str(text).map_err(|e| PromptError::Template(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Substitutes `{name}` placeholders in one left-to-right pass.
fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .filter(|&c| after[..c].bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_'));
        match close {
            Some(c) if c > 0 => {
                let name = &after[..c];
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| PromptError::Template(format!("unknown placeholder {{{name}}}")))?;
                out.push_str(value);
                rest = &after[c + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn with_newline(text: &str) -> std::borrow::Cow<'_, str> {
    if text.ends_with('\n') {
        text.into()
    } else {
        format!("{text}\n").into()
    }
}

/// Builds stage requests from templates plus model settings.
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    pub templates: PromptTemplates,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self {
            templates: PromptTemplates::default(),
            model_name: "deepseek-chat".into(),
            temperature: 0.0,
            max_tokens: 4096,
        }
    }
}

impl PromptBuilder {
    fn request(&self, system: String, user: String) -> GenerationRequest {
        GenerationRequest {
            system_prompt: system,
            user_prompt: user,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            model_name: self.model_name.clone(),
        }
    }

    /// Asks for comments to be inserted into `source` without touching its code.
    pub fn stage1(&self, source: &Program) -> Result<GenerationRequest, PromptError> {
        let lang = source.language;
        let body = with_newline(&source.source_text);
        let fence = fence_for(&body);
        let vars = [
            ("language", lang.id()),
            ("marker", lang.line_comment_marker()),
            ("fence", fence.as_str()),
            ("source", body.as_ref()),
        ];
        Ok(self.request(
            render(&self.templates.stage1.system, &vars)?,
            render(&self.templates.stage1.user, &vars)?,
        ))
    }

    /// Asks for `target` to be rewritten around the comments of `annotated_source`.
    pub fn stage2(
        &self,
        annotated_source: &AnnotatedProgram,
        target: &Program,
    ) -> Result<GenerationRequest, PromptError> {
        if annotated_source.k() == 0 {
            return Err(PromptError::NoComments(annotated_source.program.problem_id.clone()));
        }
        let src_lang = annotated_source.language();
        let tgt_lang = target.language;
        let source_body = with_newline(&annotated_source.program.source_text);
        let target_body = with_newline(&target.source_text);
        let source_fence = fence_for(&source_body);
        let target_fence = fence_for(&target_body);
        let k = annotated_source.k().to_string();
        let vars = [
            ("source_language", src_lang.id()),
            ("source_marker", src_lang.line_comment_marker()),
            ("target_language", tgt_lang.id()),
            ("target_marker", tgt_lang.line_comment_marker()),
            ("k", k.as_str()),
            ("source_fence", source_fence.as_str()),
            ("annotated_source", source_body.as_ref()),
            ("target_fence", target_fence.as_str()),
            ("target", target_body.as_ref()),
        ];
        Ok(self.request(
            render(&self.templates.stage2.system, &vars)?,
            render(&self.templates.stage2.user, &vars)?,
        ))
    }
}

pub fn build_stage1_prompt(source: &Program) -> GenerationRequest {
    PromptBuilder::default()
        .stage1(source)
        .expect("bundled stage 1 template renders")
}

pub fn build_stage2_prompt(
    annotated_source: &AnnotatedProgram,
    target: &Program,
) -> Result<GenerationRequest, PromptError> {
    PromptBuilder::default().stage2(annotated_source, target)
}
