//! Prompt templates with `{slot}` placeholders. `{{` and `}}` are literal braces.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{template}` has no value for slot `{slot}`")]
    MissingSlot { template: String, slot: String },
    #[error("template `{template}`: unbalanced brace at byte {at}")]
    Unbalanced { template: String, at: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! prompt {
    ($name:literal) => {
        Template { name: $name, text: include_str!(concat!("../assets/prompts/", $name, ".txt")) }
    };
}

pub const BENCHGEN_EXT: Template = prompt!("benchgen_ext");
pub const BENCHGEN_INT: Template = prompt!("benchgen_int");
pub const BENCHGEN_DST: Template = prompt!("benchgen_dst");
pub const BENCHGEN_ERR: Template = prompt!("benchgen_err");
pub const BENCHGEN_REPAIR: Template = prompt!("benchgen_repair");
pub const PHASE2_PROBE: Template = prompt!("phase2_probe");
pub const MC_REQUIREMENTS: Template = prompt!("mc_requirements");
pub const MC_PATTERNS: Template = prompt!("mc_patterns");
pub const MC_FRAMEWORK: Template = prompt!("mc_framework");
pub const MC_EVALUATION: Template = prompt!("mc_evaluation");
pub const MC_CODEGEN: Template = prompt!("mc_codegen");
pub const MC_OPTIMIZATION: Template = prompt!("mc_optimization");
pub const STRATEGY_DIRECT: Template = prompt!("strategy_direct");
pub const STRATEGY_COT: Template = prompt!("strategy_cot");
pub const STRATEGY_PLAN: Template = prompt!("strategy_plan");

pub const ALL: [Template; 15] = [
    BENCHGEN_EXT,
    BENCHGEN_INT,
    BENCHGEN_DST,
    BENCHGEN_ERR,
    BENCHGEN_REPAIR,
    PHASE2_PROBE,
    MC_REQUIREMENTS,
    MC_PATTERNS,
    MC_FRAMEWORK,
    MC_EVALUATION,
    MC_CODEGEN,
    MC_OPTIMIZATION,
    STRATEGY_DIRECT,
    STRATEGY_COT,
    STRATEGY_PLAN,
];

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(template: &Template) -> Result<Vec<Piece<'static>>, TemplateError> {
    let text = template.text;
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    let unbalanced = |at| TemplateError::Unbalanced { template: template.name.to_string(), at };
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&text[start..i + 1]));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&text[start..i + 1]));
                i += 2;
                start = i;
            }
            b'{' => {
                let close = text[i..].find('}').ok_or_else(|| unbalanced(i))? + i;
                out.push(Piece::Text(&text[start..i]));
                out.push(Piece::Slot(&text[i + 1..close]));
                i = close + 1;
                start = i;
            }
            b'}' => return Err(unbalanced(i)),
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&text[start..]));
    Ok(out)
}

impl Template {
    /// Slot names in order of first appearance.
    pub fn slots(&self) -> Result<Vec<&'static str>, TemplateError> {
        let mut seen = BTreeSet::new();
        Ok(pieces(self)?
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) if seen.insert(s) => Some(s),
                _ => None,
            })
            .collect())
    }

    /// Substitute every slot; values are inserted verbatim.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len());
        for piece in pieces(self)? {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(slot) => {
                    let value = values.iter().find(|(k, _)| *k == slot).map(|(_, v)| *v).ok_or_else(|| {
                        TemplateError::MissingSlot { template: self.name.to_string(), slot: slot.to_string() }
                    })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}
