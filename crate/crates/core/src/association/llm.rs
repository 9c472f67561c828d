//! Prompt construction and reply parsing for the LLM baseline.
//!
//! No provider client lives here: prompts are emitted for an external runner
//! and its replies are fed back through [`LlmReplyScorer`].

use std::collections::HashMap;

use thiserror::Error;

use super::{PairScorer, ScorerError, ScoringContext};
use crate::model::Block;

pub const LLM_PROMPT_TEMPLATE: &str = "You are an expert in document analysis. Your task is to determine whether the provided text block is a descriptive explanation of the given table block.
Please reply with only a single number:

Reply `1' if the text block describes or explains the table block.

Reply `0' if the text block is unrelated to the table block.

Here is the content:

- Table Block:
  [table_content]

- Text Block:
  [text_content]";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("{0} content is empty")]
    EmptyContent(&'static str),
    #[error("reply is not a single 0 or 1: {0:?}")]
    ParseFailure(String),
}

pub fn build_llm_prompt(table_text: &str, text_text: &str) -> Result<String, PromptError> {
    if table_text.trim().is_empty() {
        return Err(PromptError::EmptyContent("table"));
    }
    if text_text.trim().is_empty() {
        return Err(PromptError::EmptyContent("text"));
    }
    Ok(LLM_PROMPT_TEMPLATE
        .replace("[table_content]", table_text)
        .replace("[text_content]", text_text))
}

/// `true` for related ("1"), `false` for unrelated ("0").
pub fn parse_llm_reply(reply: &str) -> Result<bool, PromptError> {
    match reply.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(PromptError::ParseFailure(other.to_string())),
    }
}

/// Replays recorded replies keyed by `(table_block_id, text_block_id)`.
#[derive(Debug, Clone, Default)]
pub struct LlmReplyScorer {
    replies: HashMap<(String, String), String>,
}

impl LlmReplyScorer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, table_block_id: &str, text_block_id: &str, reply: impl Into<String>) {
        self.replies
            .insert((table_block_id.to_string(), text_block_id.to_string()), reply.into());
    }
}

impl PairScorer for LlmReplyScorer {
    fn score_pairs(
        &self,
        _ctx: &ScoringContext<'_>,
        pairs: &[(&Block, &Block)],
    ) -> Result<Vec<f64>, ScorerError> {
        pairs
            .iter()
            .map(|(t, s)| {
                let key = (t.block_id.clone(), s.block_id.clone());
                let reply = self.replies.get(&key).ok_or_else(|| {
                    ScorerError::Reply(format!("no reply for pair ({}, {})", key.0, key.1))
                })?;
                let related = parse_llm_reply(reply).map_err(|e| {
                    ScorerError::Reply(format!("pair ({}, {}): {e}", key.0, key.1))
                })?;
                Ok(if related { 1.0 } else { 0.0 })
            })
            .collect()
    }
}
