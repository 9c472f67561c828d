//! Table–text association scoring.
//!
//! A scorer maps `(table block, text block)` pairs to a probability `p` that
//! the text describes the table; [`decide`] turns a probability into a
//! related/unrelated label. Three scorers ship here:
//!
//! * [`HeuristicScorer`] — native, deterministic: an explicit reference to the
//!   table's number scores 1, otherwise a down-weighted TF-IDF cosine.
//! * [`RemoteScorer`] — client for a model server speaking the JSON scoring
//!   protocol (`POST /score`, `POST /score_query`).
//! * [`LlmReplyScorer`] — replays binary replies collected for the prompts
//!   produced by [`build_llm_prompt`].

mod lexical;
mod llm;
mod numbers;
mod remote;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Block, Document};

pub use lexical::{lexical_score, tokenize, DocumentVocabulary, TfIdfVector};
pub use llm::{build_llm_prompt, parse_llm_reply, LlmReplyScorer, PromptError, LLM_PROMPT_TEMPLATE};
pub use numbers::{extract_table_numbers, own_table_number, table_number_mentions, TableNumberRefs};
pub use remote::{PairText, RemoteScorer, ScoreQueryRequest, ScoreRequest, ScoreResponse, WireError};

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_LEXICAL_WEIGHT: f64 = 0.9;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    Heuristic,
    Remote,
    LlmBaseline,
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerKind::Heuristic => "heuristic",
            ScorerKind::Remote => "remote",
            ScorerKind::LlmBaseline => "llm-baseline",
        })
    }
}

impl FromStr for ScorerKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heuristic" => Ok(ScorerKind::Heuristic),
            "remote" => Ok(ScorerKind::Remote),
            "llm-baseline" | "llm-prompt" => Ok(ScorerKind::LlmBaseline),
            other => Err(ConfigError(format!("unknown scorer {other:?}"))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid scorer configuration: {0}")]
pub struct ConfigError(pub String);

/// Scoring and thresholding configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    /// Decision threshold; a pair is related iff `p >= theta`.
    pub theta: f64,
    pub scorer_kind: ScorerKind,
    /// Weight applied to the lexical score when no number match is found.
    pub lexical_weight: f64,
    pub remote_endpoint: Option<String>,
    /// Pairs per scorer call.
    pub batch_size: usize,
    /// Worker threads used for scoring batches; results never depend on it.
    pub jobs: usize,
    /// Restrict candidates to text blocks within this many pages of the table.
    pub page_window: Option<u32>,
    /// Append the table's related text to its OCR text when scoring queries.
    pub query_with_related_text: bool,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            scorer_kind: ScorerKind::Heuristic,
            lexical_weight: DEFAULT_LEXICAL_WEIGHT,
            remote_endpoint: None,
            batch_size: DEFAULT_BATCH_SIZE,
            jobs: 1,
            page_window: None,
            query_with_related_text: false,
        }
    }
}

impl ScorerConfig {
    pub fn with_theta(theta: f64) -> Self {
        Self { theta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ConfigError(format!("theta {} outside [0, 1]", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.lexical_weight) {
            return Err(ConfigError(format!(
                "lexical_weight {} outside [0, 1]",
                self.lexical_weight
            )));
        }
        if self.batch_size == 0 {
            return Err(ConfigError("batch_size must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(ConfigError("jobs must be positive".into()));
        }
        if self.scorer_kind == ScorerKind::Remote && self.remote_endpoint.is_none() {
            return Err(ConfigError("remote scorer requires an endpoint".into()));
        }
        Ok(())
    }
}

/// A scored `(table, text)` pair with its thresholded label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub table_block_id: String,
    pub text_block_id: String,
    pub score: f64,
    pub label: u8,
}

impl ScoredPair {
    pub fn new(table: &Block, text: &Block, score: f64, cfg: &ScorerConfig) -> Self {
        Self {
            table_block_id: table.block_id.clone(),
            text_block_id: text.block_id.clone(),
            score,
            label: decide(score, cfg),
        }
    }
}

/// 1 iff `score >= cfg.theta` (inclusive boundary).
pub fn decide(score: f64, cfg: &ScorerConfig) -> u8 {
    u8::from(score >= cfg.theta)
}

/// Number match first, lexical similarity otherwise.
///
/// Returns 1.0 when `table_number` is known and the text explicitly
/// references it; otherwise `lexical_weight * lexical_score`.
pub fn heuristic_score(
    table_text: &str,
    table_number: Option<u32>,
    text: &str,
    vocab: &DocumentVocabulary,
    cfg: &ScorerConfig,
) -> f64 {
    if let Some(n) = table_number {
        if extract_table_numbers(text).contains(n) {
            return 1.0;
        }
    }
    cfg.lexical_weight * lexical_score(table_text, text, vocab)
}

/// Failure of a scorer backend.
#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("query text is empty")]
    EmptyQuery,
    #[error("llm reply error: {0}")]
    Reply(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Per-document state handed to scorers.
pub struct ScoringContext<'a> {
    pub doc: &'a Document,
    pub vocab: &'a DocumentVocabulary,
    pub cfg: &'a ScorerConfig,
}

impl<'a> ScoringContext<'a> {
    pub fn new(doc: &'a Document, vocab: &'a DocumentVocabulary, cfg: &'a ScorerConfig) -> Self {
        Self { doc, vocab, cfg }
    }
}

/// Scores table–text pairs. Implementations return exactly one probability in
/// `[0, 1]` per input pair, in input order.
pub trait PairScorer: Sync {
    fn score_pairs(
        &self,
        ctx: &ScoringContext<'_>,
        pairs: &[(&Block, &Block)],
    ) -> Result<Vec<f64>, ScorerError>;
}

/// Scores a natural-language query against table texts. Scores are arbitrary
/// reals; only their order matters.
pub trait QueryScorer: Sync {
    fn score_query(
        &self,
        ctx: &ScoringContext<'_>,
        query: &str,
        table_texts: &[String],
    ) -> Result<Vec<f64>, ScorerError>;
}

impl<F> PairScorer for F
where
    F: Fn(&Block, &Block) -> f64 + Sync,
{
    fn score_pairs(
        &self,
        _ctx: &ScoringContext<'_>,
        pairs: &[(&Block, &Block)],
    ) -> Result<Vec<f64>, ScorerError> {
        Ok(pairs.iter().map(|(t, s)| self(t, s)).collect())
    }
}

/// Native number-match + TF-IDF scorer.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicScorer;

impl PairScorer for HeuristicScorer {
    fn score_pairs(
        &self,
        ctx: &ScoringContext<'_>,
        pairs: &[(&Block, &Block)],
    ) -> Result<Vec<f64>, ScorerError> {
        Ok(pairs
            .iter()
            .map(|(table, text)| {
                heuristic_score(
                    &table.text,
                    own_table_number(&table.text),
                    &text.text,
                    ctx.vocab,
                    ctx.cfg,
                )
            })
            .collect())
    }
}

impl QueryScorer for HeuristicScorer {
    fn score_query(
        &self,
        ctx: &ScoringContext<'_>,
        query: &str,
        table_texts: &[String],
    ) -> Result<Vec<f64>, ScorerError> {
        if query.trim().is_empty() {
            return Err(ScorerError::EmptyQuery);
        }
        let q = ctx.vocab.vectorize(query);
        Ok(table_texts
            .iter()
            .map(|t| q.cosine(&ctx.vocab.vectorize(t)))
            .collect())
    }
}
