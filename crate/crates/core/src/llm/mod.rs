//! Generative-model protocol: prompt construction, answer parsing, and the
//! fallback that scores unclear answers as wrong.

mod answer;
mod client;
mod stand_in;

pub use answer::{finalize_prediction, parse_answer, parse_answer_with, Outcome, ParsedAnswer, Prediction, Provenance, RefusalList};
pub use client::{ServiceClient, ServiceConfig, ServiceError};
pub use stand_in::{CallRecord, Fault, ReplyRule, StandInScript, StandInServer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compose::{CombinationMethod, CombinedInput};
use crate::corpus::UtteranceKey;

#[derive(Debug, Error, PartialEq)]
pub enum LlmError {
    #[error("prompts are built from paragraph input, got {0:?}")]
    WrongCombinationMethod(CombinationMethod),
    #[error("invalid categories: {0}")]
    InvalidCategories(String),
    #[error("unknown category name `{0}`")]
    UnknownCategoryName(String),
}

pub fn default_categories() -> Vec<String> {
    vec!["high".to_string(), "low".to_string()]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub prompt_text: String,
    pub categories: Vec<String>,
    pub key: Option<UtteranceKey>,
}

pub fn validate_categories(categories: &[String]) -> Result<(), LlmError> {
    if categories.is_empty() {
        return Err(LlmError::InvalidCategories("no categories".into()));
    }
    for (i, c) in categories.iter().enumerate() {
        if c.trim().is_empty() || c.trim() != c {
            return Err(LlmError::InvalidCategories(format!("`{c}` is blank or padded")));
        }
        if c.to_lowercase() != *c {
            return Err(LlmError::InvalidCategories(format!("`{c}` is not lowercase")));
        }
        if categories[..i].contains(c) {
            return Err(LlmError::InvalidCategories(format!("`{c}` repeated")));
        }
    }
    Ok(())
}

/// Wraps a paragraph in the classification prompt:
///
/// ```text
/// Given a description: {text}
/// Given sentiment categories of [high, low].
/// Which sentiment category does the given description belong to?
/// ```
pub fn build_prompt(
    input: &CombinedInput,
    categories: &[String],
    key: Option<UtteranceKey>,
) -> Result<PromptRequest, LlmError> {
    if input.method != CombinationMethod::Paragraph {
        return Err(LlmError::WrongCombinationMethod(input.method));
    }
    validate_categories(categories)?;
    let prompt_text = format!(
        "Given a description: {}\nGiven sentiment categories of [{}].\nWhich sentiment category does the given description belong to?",
        input.text,
        categories.join(", ")
    );
    Ok(PromptRequest {
        prompt_text,
        categories: categories.to_vec(),
        key,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::ModalitySet;

    fn para(text: &str) -> CombinedInput {
        CombinedInput {
            text: text.to_string(),
            method: CombinationMethod::Paragraph,
            modalities: "L".parse::<ModalitySet>().unwrap(),
        }
    }

    #[test]
    fn prompt_layout() {
        let p = build_prompt(&para("The speaker says: \"It's real\"."), &default_categories(), None)
            .unwrap();
        assert_eq!(
            p.prompt_text,
            "Given a description: The speaker says: \"It's real\".\n\
             Given sentiment categories of [high, low].\n\
             Which sentiment category does the given description belong to?"
        );
    }

    #[test]
    fn separator_input_rejected() {
        let mut input = para("x");
        input.method = CombinationMethod::Separator;
        assert_eq!(
            build_prompt(&input, &default_categories(), None),
            Err(LlmError::WrongCombinationMethod(CombinationMethod::Separator))
        );
    }

    #[test]
    fn bad_categories() {
        assert!(matches!(
            build_prompt(&para("x"), &[], None),
            Err(LlmError::InvalidCategories(_))
        ));
        let dup = vec!["high".to_string(), "high".to_string()];
        assert!(build_prompt(&para("x"), &dup, None).is_err());
        let upper = vec!["High".to_string()];
        assert!(build_prompt(&para("x"), &upper, None).is_err());
    }
}
