//! Table-centric semantic document parsing.
//!
//! Input is a layout-analyzed [`Document`] (pages of typed, OCR'd blocks).
//! From it the crate
//!
//! * links every table to the text blocks that describe it ([`parser`]),
//! * ranks a document's tables against a natural-language query ([`retrieval`]),
//! * turns human annotations into balanced training pairs ([`dataset`]),
//! * and scores all of the above ([`evaluation`]).
//!
//! Scoring is pluggable through [`association::PairScorer`] and
//! [`association::QueryScorer`]: a native heuristic, a remote model server, or
//! replayed LLM replies.

pub mod association;
pub mod canonical;
pub mod dataset;
pub mod evaluation;
pub mod model;
pub mod parser;
pub mod retrieval;
pub mod synth;

pub use association::{
    decide, extract_table_numbers, heuristic_score, lexical_score, DocumentVocabulary,
    HeuristicScorer, PairScorer, QueryScorer, RemoteScorer, ScoredPair, ScorerConfig, ScorerError,
    ScorerKind,
};
pub use dataset::{
    build_training_pairs, completeness_check, merge_annotations, split_train_test,
    AnnotationTriplet, ConflictRecord, TrainingSample,
};
pub use evaluation::{
    confusion, doc_level, latency_batches, prf, recall_at_k, ConfusionCounts, DocLevelResult,
    LatencyReport, Ratio,
};
pub use model::{
    canonicalize, corpus_stats, parse_document_json, select_blocks, BBox, Block, BlockType,
    CorpusStats, Document, ModelError, Page,
};
pub use parser::{export_parse, import_parse, parse_semantics, ParsedDocument, ParsedEntry};
pub use retrieval::{retrieve, score_query_tables, top_k, Query, RankedTable, RetrievalRanking};
