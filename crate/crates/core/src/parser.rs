//! Table-centric semantic parsing.
//!
//! Every Table block is an anchor; every Text/List block anywhere in the
//! document is a candidate. Each (anchor, candidate) pair is scored exactly
//! once and the related set of a table is the candidates whose score clears
//! the threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{
    decide, ConfigError, DocumentVocabulary, PairScorer, ScorerConfig, ScorerError, ScoringContext,
};
use crate::canonical;
use crate::model::{Block, Document};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedEntry {
    pub table_block_id: String,
    pub page_id: u32,
    /// Candidate ids with `score >= theta`, in `(page_id, block_id)` order.
    pub related: Vec<String>,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedDocument {
    pub doc_id: String,
    pub entries: Vec<ParsedEntry>,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scorer returned {got} scores for {want} pairs")]
    ScoreCount { got: usize, want: usize },
    #[error("scorer returned invalid probability {0}")]
    ScoreRange(f64),
    #[error("malformed parse result: {0}")]
    Malformed(String),
}

/// Candidate text blocks for `table` under the configured page window.
fn candidates<'a>(table: &Block, texts: &[&'a Block], window: Option<u32>) -> Vec<&'a Block> {
    match window {
        None => texts.to_vec(),
        Some(w) => texts
            .iter()
            .copied()
            .filter(|s| s.page_id.abs_diff(table.page_id) <= w)
            .collect(),
    }
}

/// Computes the related-text set of every table in `doc`.
///
/// All-or-nothing: any scorer failure aborts the whole parse.
pub fn parse_semantics<S: PairScorer + ?Sized>(
    doc: &Document,
    scorer: &S,
    cfg: &ScorerConfig,
) -> Result<ParsedDocument, ParseError> {
    let vocab = DocumentVocabulary::from_document(doc);
    parse_with_vocabulary(doc, &vocab, scorer, cfg)
}

pub fn parse_with_vocabulary<S: PairScorer + ?Sized>(
    doc: &Document,
    vocab: &DocumentVocabulary,
    scorer: &S,
    cfg: &ScorerConfig,
) -> Result<ParsedDocument, ParseError> {
    if !(0.0..=1.0).contains(&cfg.theta) {
        return Err(ConfigError(format!("theta {} outside [0, 1]", cfg.theta)).into());
    }
    let tables = doc.tables();
    let texts = doc.text_blocks();

    let mut pairs: Vec<(&Block, &Block)> = Vec::new();
    for &table in &tables {
        for text in candidates(table, &texts, cfg.page_window) {
            pairs.push((table, text));
        }
    }

    let ctx = ScoringContext::new(doc, vocab, cfg);
    let scores = score_all(&ctx, scorer, &pairs, cfg.batch_size.max(1), cfg.jobs.max(1))?;

    let mut by_table: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for ((table, text), score) in pairs.iter().zip(scores) {
        by_table
            .entry(table.block_id.as_str())
            .or_default()
            .insert(text.block_id.clone(), score);
    }

    let entries = tables
        .iter()
        .map(|table| {
            let scores = by_table.remove(table.block_id.as_str()).unwrap_or_default();
            let related = candidates(table, &texts, cfg.page_window)
                .into_iter()
                .filter(|s| decide(scores[&s.block_id], cfg) == 1)
                .map(|s| s.block_id.clone())
                .collect();
            ParsedEntry {
                table_block_id: table.block_id.clone(),
                page_id: table.page_id,
                related,
                scores,
            }
        })
        .collect();

    Ok(ParsedDocument {
        doc_id: doc.doc_id.clone(),
        entries,
    })
}

/// Scores `pairs` in batches spread over `jobs` threads; output is in pair order.
fn score_all<S: PairScorer + ?Sized>(
    ctx: &ScoringContext<'_>,
    scorer: &S,
    pairs: &[(&Block, &Block)],
    batch_size: usize,
    jobs: usize,
) -> Result<Vec<f64>, ParseError> {
    let batches: Vec<&[(&Block, &Block)]> = pairs.chunks(batch_size).collect();
    let run = |batch: &[(&Block, &Block)]| -> Result<Vec<f64>, ParseError> {
        let scores = scorer.score_pairs(ctx, batch)?;
        if scores.len() != batch.len() {
            return Err(ParseError::ScoreCount { got: scores.len(), want: batch.len() });
        }
        if let Some(&bad) = scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ParseError::ScoreRange(bad));
        }
        Ok(scores)
    };

    let results: Vec<Result<Vec<f64>, ParseError>> = if jobs <= 1 || batches.len() <= 1 {
        batches.iter().map(|b| run(b)).collect()
    } else {
        let per_worker = batches.len().div_ceil(jobs);
        std::thread::scope(|s| {
            let handles: Vec<_> = batches
                .chunks(per_worker)
                .map(|group| {
                    let run = &run;
                    s.spawn(move || group.iter().map(|b| run(b)).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("scoring worker panicked"))
                .collect()
        })
    };

    let mut out = Vec::with_capacity(pairs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Recomputes related sets from stored scores at a new threshold.
pub fn rethreshold(parsed: &ParsedDocument, doc: &Document, theta: f64) -> ParsedDocument {
    let order: BTreeMap<&str, (u32, &str)> = doc
        .blocks()
        .map(|b| (b.block_id.as_str(), (b.page_id, b.block_id.as_str())))
        .collect();
    let mut out = parsed.clone();
    for entry in &mut out.entries {
        let mut related: Vec<&String> = entry
            .scores
            .iter()
            .filter(|(_, &p)| p >= theta)
            .map(|(id, _)| id)
            .collect();
        related.sort_by_key(|id| order.get(id.as_str()).copied().unwrap_or((u32::MAX, id)));
        entry.related = related.into_iter().cloned().collect();
    }
    out
}

/// Canonical JSON for a parse result.
pub fn export_parse(parsed: &ParsedDocument) -> Vec<u8> {
    canonical::to_canonical_bytes(parsed)
}

pub fn import_parse(raw: &[u8]) -> Result<ParsedDocument, ParseError> {
    let parsed: ParsedDocument =
        serde_json::from_slice(raw).map_err(|e| ParseError::Malformed(e.to_string()))?;
    for entry in &parsed.entries {
        if let Some(missing) = entry.related.iter().find(|id| !entry.scores.contains_key(*id)) {
            return Err(ParseError::Malformed(format!(
                "table {}: related block {missing} has no score",
                entry.table_block_id
            )));
        }
    }
    Ok(parsed)
}
