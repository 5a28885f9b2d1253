//! SQL-generation, retry and visualization prompts.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

pub const SQL_GENERATION_TEMPLATE: &str = include_str!("../templates/sql_generation.txt");
pub const VIZ_TEMPLATE: &str = include_str!("../templates/viz.txt");

const SCHEMA_SECTION: &str = "### Here is the information about the tables:\n{schema_info}\n\n";
const COT_SUFFIX: &str = " Let's think step-by-step.";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error("placeholder {{{0}}} has no value")]
    Unfilled(String),
    #[error("cannot build a retry prompt from a {0:?} prompt")]
    WrongKind(PromptKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    SqlGeneration,
    SqlRetry,
    Viz,
}

impl PromptKind {
    pub fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            PromptKind::SqlGeneration => &["fewshot_demo", "question", "schema_info"],
            PromptKind::SqlRetry => &["error_message", "failed_sql", "fewshot_demo", "question", "schema_info"],
            PromptKind::Viz => &["columns", "question", "viz_names"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptBundle {
    pub text: String,
    pub kind: PromptKind,
    pub placeholders_filled: BTreeSet<String>,
    pub token_estimate: usize,
}

impl PromptBundle {
    fn new(text: String, kind: PromptKind, filled: BTreeSet<String>) -> Self {
        let token_estimate = estimate_tokens(&text);
        Self {
            text,
            kind,
            placeholders_filled: filled,
            token_estimate,
        }
    }
}

/// Roughly four characters per token. Only used for logging.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Substitutes `{name}` placeholders in one left-to-right pass, so braces in
/// the substituted values are never interpreted.
fn fill(template: &str, values: &[(&str, &str)]) -> Result<(String, BTreeSet<String>), PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut filled = BTreeSet::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            let value = values
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::Unfilled(name.to_string()))?;
            out.push_str(value);
            filled.insert(name.to_string());
            rest = &after[name_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok((out, filled))
}

pub fn build_sql_prompt(
    schema_block: &str,
    demo_block: &str,
    question: &str,
    include_schema: bool,
    include_cot: bool,
) -> Result<PromptBundle, PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::MissingInput("question"));
    }
    if include_schema && schema_block.trim().is_empty() {
        return Err(PromptError::MissingInput("schema_info"));
    }
    let mut template = SQL_GENERATION_TEMPLATE.to_string();
    if !include_schema {
        template = template.replacen(SCHEMA_SECTION, "", 1);
    }
    if !include_cot {
        template = template
            .strip_suffix(COT_SUFFIX)
            .expect("template ends with the chain-of-thought cue")
            .to_string();
    }
    let (text, mut filled) = fill(
        &template,
        &[
            ("schema_info", schema_block),
            ("fewshot_demo", demo_block),
            ("question", question),
        ],
    )?;
    // omitted by the ablation switch rather than left unfilled
    filled.insert("schema_info".to_string());
    Ok(PromptBundle::new(text, PromptKind::SqlGeneration, filled))
}

pub fn build_retry_prompt(
    previous: &PromptBundle,
    failed_sql: &str,
    error_message: &str,
) -> Result<PromptBundle, PromptError> {
    if previous.kind == PromptKind::Viz {
        return Err(PromptError::WrongKind(previous.kind));
    }
    if error_message.trim().is_empty() {
        return Err(PromptError::MissingInput("error_message"));
    }
    let text = format!(
        "{}\n\n### Your previous query failed.\nQuery: {failed_sql}\nError: {error_message}\n\
         Produce a corrected DuckDB query in the same fenced format.",
        previous.text
    );
    let mut filled = previous.placeholders_filled.clone();
    filled.insert("failed_sql".to_string());
    filled.insert("error_message".to_string());
    Ok(PromptBundle::new(text, PromptKind::SqlRetry, filled))
}

pub fn build_viz_prompt<S: AsRef<str>>(
    viz_names: &[&str],
    columns: &[S],
    question: &str,
) -> Result<PromptBundle, PromptError> {
    if viz_names.is_empty() {
        return Err(PromptError::MissingInput("viz_names"));
    }
    if columns.is_empty() {
        return Err(PromptError::MissingInput("columns"));
    }
    if question.trim().is_empty() {
        return Err(PromptError::MissingInput("question"));
    }
    let columns = columns.iter().map(|c| c.as_ref()).collect::<Vec<_>>().join("\n");
    let names = viz_names.join(", ");
    let (text, filled) = fill(
        VIZ_TEMPLATE,
        &[("viz_names", &names), ("columns", &columns), ("question", question)],
    )?;
    Ok(PromptBundle::new(text, PromptKind::Viz, filled))
}
