//! Query-driven table retrieval: score every table of a document against a
//! natural-language query and return the top K with their related text.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{DocumentVocabulary, QueryScorer, ScorerConfig, ScorerError, ScoringContext};
use crate::model::{Block, BlockType, Document};
use crate::parser::ParsedDocument;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    #[serde(default)]
    pub gold_table_id: Option<String>,
    #[serde(default)]
    pub doc_id: Option<String>,
}

impl Query {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            text: text.into(),
            gold_table_id: None,
            doc_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTable {
    pub table_block_id: String,
    pub page_id: u32,
    pub score: f64,
    pub related_text: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRanking {
    pub query_id: String,
    pub k: usize,
    pub ranked: Vec<RankedTable>,
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("K must be at least 1")]
    InvalidK,
    #[error("query text is empty")]
    EmptyQuery,
    #[error("score for table {0} is NaN")]
    NanScore(String),
    #[error("block {0} is not a table")]
    NotATable(String),
    #[error("parse result is for document {parsed:?}, not {doc:?}")]
    Mismatch { parsed: String, doc: String },
    #[error("scorer returned {got} scores for {want} tables")]
    ScoreCount { got: usize, want: usize },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// One relevance score per table, in input order.
pub fn score_query_tables<S: QueryScorer + ?Sized>(
    query: &Query,
    tables: &[&Block],
    doc: &Document,
    scorer: &S,
    cfg: &ScorerConfig,
) -> Result<Vec<f64>, RetrievalError> {
    let texts: Vec<String> = tables.iter().map(|t| t.text.clone()).collect();
    score_query_texts(query, tables, &texts, doc, scorer, cfg)
}

fn score_query_texts<S: QueryScorer + ?Sized>(
    query: &Query,
    tables: &[&Block],
    texts: &[String],
    doc: &Document,
    scorer: &S,
    cfg: &ScorerConfig,
) -> Result<Vec<f64>, RetrievalError> {
    if query.text.trim().is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    if let Some(t) = tables.iter().find(|t| t.kind != BlockType::Table) {
        return Err(RetrievalError::NotATable(t.block_id.clone()));
    }
    if tables.is_empty() {
        return Ok(Vec::new());
    }
    let vocab = DocumentVocabulary::from_document(doc);
    let ctx = ScoringContext::new(doc, &vocab, cfg);
    let scores = scorer.score_query(&ctx, &query.text, texts)?;
    if scores.len() != tables.len() {
        return Err(RetrievalError::ScoreCount { got: scores.len(), want: tables.len() });
    }
    Ok(scores)
}

/// Heap entry ordered so that the *worst* candidate sits on top of a max-heap.
struct Candidate<'a> {
    score: f64,
    table: &'a Block,
}

impl Candidate<'_> {
    /// Total order on ranking quality: higher score first, then earlier
    /// `(page_id, block_id)`. `Less` means "ranks better".
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.table.page_id.cmp(&other.table.page_id))
            .then_with(|| self.table.block_id.cmp(&other.table.block_id))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate<'_> {}
impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

/// Highest-scoring `min(k, N)` tables, score descending, ties broken by
/// `(page_id, block_id)` ascending. Independent of input order.
pub fn top_k<'a>(scored: &[(&'a Block, f64)], k: usize) -> Result<Vec<(&'a Block, f64)>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let mut heap: BinaryHeap<Candidate<'a>> = BinaryHeap::with_capacity(k + 1);
    for &(table, score) in scored {
        if score.is_nan() {
            return Err(RetrievalError::NanScore(table.block_id.clone()));
        }
        // -0.0 and 0.0 must tie.
        let score = if score == 0.0 { 0.0 } else { score };
        let cand = Candidate { score, table };
        if heap.len() < k {
            heap.push(cand);
        } else if let Some(worst) = heap.peek() {
            if cand < *worst {
                heap.pop();
                heap.push(cand);
            }
        }
    }
    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .map(|c| (c.table, c.score))
        .collect())
}

/// Scores the document's tables for `query` and returns the top K, each with
/// the related text found by the parse.
pub fn retrieve<S: QueryScorer + ?Sized>(
    parsed: &ParsedDocument,
    doc: &Document,
    query: &Query,
    k: usize,
    scorer: &S,
    cfg: &ScorerConfig,
) -> Result<RetrievalRanking, RetrievalError> {
    if parsed.doc_id != doc.doc_id {
        return Err(RetrievalError::Mismatch {
            parsed: parsed.doc_id.clone(),
            doc: doc.doc_id.clone(),
        });
    }
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let related_of = |table_id: &str| -> Vec<String> {
        parsed
            .entries
            .iter()
            .find(|e| e.table_block_id == table_id)
            .map(|e| e.related.clone())
            .unwrap_or_default()
    };
    let tables = doc.tables();
    let texts: Vec<String> = tables
        .iter()
        .map(|t| {
            if !cfg.query_with_related_text {
                return t.text.clone();
            }
            let mut text = t.text.clone();
            for id in related_of(&t.block_id) {
                if let Some(b) = doc.block(&id) {
                    text.push('\n');
                    text.push_str(&b.text);
                }
            }
            text
        })
        .collect();
    let scores = score_query_texts(query, &tables, &texts, doc, scorer, cfg)?;
    let scored: Vec<(&Block, f64)> = tables.iter().copied().zip(scores).collect();
    let ranked = top_k(&scored, k)?
        .into_iter()
        .map(|(table, score)| RankedTable {
            table_block_id: table.block_id.clone(),
            page_id: table.page_id,
            score,
            related_text: related_of(&table.block_id),
        })
        .collect();
    Ok(RetrievalRanking {
        query_id: query.query_id.clone(),
        k,
        ranked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::HeuristicScorer;
    use crate::model::{BBox, Page};
    use proptest::prelude::*;

    fn table(id: &str, page: u32) -> Block {
        Block {
            block_id: id.into(),
            page_id: page,
            kind: BlockType::Table,
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            text: String::new(),
        }
    }

    fn ids(v: &[(&Block, f64)]) -> Vec<String> {
        v.iter().map(|(b, _)| b.block_id.clone()).collect()
    }

    #[test]
    fn picks_highest_two() {
        let t: Vec<Block> = (0..3).map(|i| table(&format!("t{i}"), 0)).collect();
        let scored = vec![(&t[0], 0.2), (&t[1], 0.9), (&t[2], 0.5)];
        assert_eq!(ids(&top_k(&scored, 2).unwrap()), ["t1", "t2"]);
    }

    #[test]
    fn ties_follow_page_then_id() {
        let t = [table("b", 1), table("a", 1), table("z", 0)];
        let scored: Vec<_> = t.iter().map(|b| (b, 0.5)).collect();
        assert_eq!(ids(&top_k(&scored, 3).unwrap()), ["z", "a", "b"]);
    }

    #[test]
    fn invalid_inputs() {
        let t = table("t", 0);
        assert!(matches!(top_k(&[(&t, 1.0)], 0), Err(RetrievalError::InvalidK)));
        assert!(matches!(top_k(&[(&t, f64::NAN)], 1), Err(RetrievalError::NanScore(_))));
        assert!(top_k(&[], 3).unwrap().is_empty());
    }

    fn doc_with_tables(texts: &[&str]) -> Document {
        let blocks = texts
            .iter()
            .enumerate()
            .map(|(i, text)| Block {
                block_id: format!("t{i:02}"),
                page_id: 0,
                kind: BlockType::Table,
                bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
                text: text.to_string(),
            })
            .collect();
        Document {
            doc_id: "d".into(),
            source: "s".into(),
            pages: vec![Page { page_id: 0, width_px: 10.0, height_px: 10.0, blocks }],
        }
    }

    #[test]
    fn heuristic_query_scoring_prefers_exact_text() {
        let doc = doc_with_tables(&["ablation results on imagenet", "runtime memory usage"]);
        let cfg = ScorerConfig::default();
        let tables = doc.tables();
        let q = Query::new("q", "ablation results on imagenet");
        let s = score_query_tables(&q, &tables, &doc, &HeuristicScorer, &cfg).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);
        assert!(score_query_tables(&q, &[], &doc, &HeuristicScorer, &cfg).unwrap().is_empty());
        let empty = Query::new("q", "  ");
        assert!(matches!(
            score_query_tables(&empty, &tables, &doc, &HeuristicScorer, &cfg),
            Err(RetrievalError::EmptyQuery)
        ));
    }

    #[test]
    fn retrieve_rejects_mismatched_parse() {
        let doc = doc_with_tables(&["x"]);
        let parsed = ParsedDocument { doc_id: "other".into(), entries: vec![] };
        let q = Query::new("q", "x");
        assert!(matches!(
            retrieve(&parsed, &doc, &q, 1, &HeuristicScorer, &ScorerConfig::default()),
            Err(RetrievalError::Mismatch { .. })
        ));
    }

    fn oracle(scored: &[(&Block, f64)], k: usize) -> Vec<String> {
        let mut all = scored.to_vec();
        all.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(a.0.page_id.cmp(&b.0.page_id))
                .then(a.0.block_id.cmp(&b.0.block_id))
        });
        all.truncate(k);
        ids(&all)
    }

    proptest! {
        #[test]
        fn matches_sort_oracle_and_nests(scores in prop::collection::vec(0u8..5, 0..30), k in 1usize..10, shift in -100i32..100) {
            let tables: Vec<Block> = (0..scores.len()).map(|i| table(&format!("t{i}"), (i % 3) as u32)).collect();
            let scored: Vec<_> = tables.iter().zip(scores.iter()).map(|(t, &s)| (t, s as f64)).collect();
            let got = top_k(&scored, k).unwrap();
            prop_assert_eq!(ids(&got), oracle(&scored, k));
            prop_assert_eq!(got.len(), k.min(scored.len()));
            let bigger = ids(&top_k(&scored, k + 1).unwrap());
            prop_assert!(ids(&got).iter().all(|id| bigger.contains(id)));
            let shifted: Vec<_> = scored.iter().map(|(t, s)| (*t, s + shift as f64)).collect();
            prop_assert_eq!(ids(&top_k(&shifted, k).unwrap()), ids(&got));
            let mut reversed = scored.clone();
            reversed.reverse();
            prop_assert_eq!(ids(&top_k(&reversed, k).unwrap()), ids(&got));
        }
    }
}
