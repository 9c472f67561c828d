//! Document and block data model.
//!
//! A [`Document`] is the output of an external layout-analysis and OCR pass:
//! an ordered list of pages, each holding the layout [`Block`]s detected on it.
//! Documents are validated on ingestion and normalized so that pages are
//! ordered by `page_id` and blocks within a page by `block_id`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;

/// Layout category assigned to a block by the upstream detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockType {
    Text,
    List,
    Table,
    Title,
    Figure,
}

impl BlockType {
    pub const ALL: [BlockType; 5] = [
        BlockType::Text,
        BlockType::List,
        BlockType::Table,
        BlockType::Title,
        BlockType::Figure,
    ];

    /// Kinds that count as descriptive text: Text and List blocks.
    pub const TEXTUAL: [BlockType; 2] = [BlockType::Text, BlockType::List];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockType::Text => "Text",
            BlockType::List => "List",
            BlockType::Table => "Table",
            BlockType::Title => "Title",
            BlockType::Figure => "Figure",
        }
    }

    pub fn is_textual(self) -> bool {
        matches!(self, BlockType::Text | BlockType::List)
    }
}

impl fmt::Display for BlockType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BlockType::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::Schema(format!("unknown block type {s:?}")))
    }
}

/// Axis-aligned box `(x0, y0, x1, y1)` in rendered-page pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    fn check(&self, page_width: f64, page_height: f64) -> Result<(), String> {
        let coords = [self.x0, self.y0, self.x1, self.y1];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err("negative coordinate".into());
        }
        if self.x0 > self.x1 || self.y0 > self.y1 {
            return Err("inverted box".into());
        }
        if self.x1 > page_width || self.y1 > page_height {
            return Err(format!("box exceeds page size {page_width}x{page_height}"));
        }
        Ok(())
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// One detected layout region.
///
/// `page_id` is not part of the block's JSON record; it is filled in from the
/// enclosing page during ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub block_id: String,
    #[serde(skip)]
    pub page_id: u32,
    #[serde(rename = "type")]
    pub kind: BlockType,
    pub bbox: BBox,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub page_id: u32,
    pub width_px: f64,
    pub height_px: f64,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source: String,
    pub pages: Vec<Page>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("geometry error in block {block_id:?} on page {page_id}: {reason}")]
    Geometry {
        block_id: String,
        page_id: u32,
        reason: String,
    },
    #[error("duplicate block id {0:?}")]
    DuplicateId(String),
}

/// Parses and validates a document from raw JSON bytes.
///
/// The returned document is normalized: pages sorted by `page_id`, blocks by
/// `block_id`, and every block's `page_id` set from its page.
pub fn parse_document_json(raw: &[u8]) -> Result<Document, ModelError> {
    let text = std::str::from_utf8(raw).map_err(|e| ModelError::Schema(format!("invalid UTF-8: {e}")))?;
    let doc: Document =
        serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))?;
    doc.normalized()
}

/// Deterministic byte serialization; see [`crate::canonical`].
pub fn canonicalize(doc: &Document) -> Vec<u8> {
    let mut doc = doc.clone();
    doc.sort();
    canonical::to_canonical_bytes(&doc)
}

/// Blocks whose kind is in `kinds`, in `(page_id, block_id)` order.
///
/// `&[BlockType::Table]` yields the table anchors; [`BlockType::TEXTUAL`]
/// yields the candidate text blocks.
pub fn select_blocks<'a>(doc: &'a Document, kinds: &[BlockType]) -> Vec<&'a Block> {
    if kinds.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<&Block> = doc
        .blocks()
        .filter(|b| kinds.contains(&b.kind))
        .collect();
    out.sort_by(|a, b| (a.page_id, &a.block_id).cmp(&(b.page_id, &b.block_id)));
    out
}

impl Document {
    /// Sorts, stamps page ids onto blocks and validates every invariant.
    pub fn normalized(mut self) -> Result<Document, ModelError> {
        self.sort();
        for page in &mut self.pages {
            for block in &mut page.blocks {
                block.page_id = page.page_id;
            }
        }
        self.validate()?;
        Ok(self)
    }

    fn sort(&mut self) {
        self.pages.sort_by_key(|p| p.page_id);
        for page in &mut self.pages {
            page.blocks.sort_by(|a, b| a.block_id.cmp(&b.block_id));
        }
    }

    /// Checks the document invariants without modifying it.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = HashSet::new();
        for (expected, page) in self.pages.iter().enumerate() {
            if page.page_id as usize != expected {
                return Err(ModelError::Schema(format!(
                    "page ids must be contiguous from 0; found {} at position {expected}",
                    page.page_id
                )));
            }
            if !(page.width_px.is_finite() && page.width_px > 0.0)
                || !(page.height_px.is_finite() && page.height_px > 0.0)
            {
                return Err(ModelError::Schema(format!(
                    "page {} has non-positive size",
                    page.page_id
                )));
            }
            for block in &page.blocks {
                if block.page_id != page.page_id {
                    return Err(ModelError::Schema(format!(
                        "block {:?} carries page_id {} but sits on page {}",
                        block.block_id, block.page_id, page.page_id
                    )));
                }
                if !seen.insert(block.block_id.as_str()) {
                    return Err(ModelError::DuplicateId(block.block_id.clone()));
                }
                block
                    .bbox
                    .check(page.width_px, page.height_px)
                    .map_err(|reason| ModelError::Geometry {
                        block_id: block.block_id.clone(),
                        page_id: page.page_id,
                        reason,
                    })?;
                if block.kind == BlockType::Figure && !block.text.is_empty() {
                    return Err(ModelError::Schema(format!(
                        "Figure block {:?} must have empty text",
                        block.block_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// All blocks in page order.
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.pages.iter().flat_map(|p| p.blocks.iter())
    }

    pub fn block(&self, block_id: &str) -> Option<&Block> {
        self.blocks().find(|b| b.block_id == block_id)
    }

    /// Index from block id to block.
    pub fn block_index(&self) -> BTreeMap<&str, &Block> {
        self.blocks().map(|b| (b.block_id.as_str(), b)).collect()
    }

    pub fn tables(&self) -> Vec<&Block> {
        select_blocks(self, &[BlockType::Table])
    }

    pub fn text_blocks(&self) -> Vec<&Block> {
        select_blocks(self, &BlockType::TEXTUAL)
    }
}

/// Counts for one source (or the whole corpus).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub n_pdf: u64,
    pub n_page: u64,
    pub n_table_block: u64,
    /// Text plus List blocks.
    pub n_text_block: u64,
}

impl std::ops::AddAssign for SourceCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.n_pdf += rhs.n_pdf;
        self.n_page += rhs.n_page;
        self.n_table_block += rhs.n_table_block;
        self.n_text_block += rhs.n_text_block;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_source: BTreeMap<String, SourceCounts>,
    pub total: SourceCounts,
}

pub fn corpus_stats<'a, I>(docs: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut stats = CorpusStats::default();
    for doc in docs {
        let mut counts = SourceCounts {
            n_pdf: 1,
            n_page: doc.pages.len() as u64,
            ..SourceCounts::default()
        };
        for block in doc.blocks() {
            match block.kind {
                BlockType::Table => counts.n_table_block += 1,
                BlockType::Text | BlockType::List => counts.n_text_block += 1,
                BlockType::Title | BlockType::Figure => {}
            }
        }
        *stats.per_source.entry(doc.source.clone()).or_default() += counts;
    }
    stats.total = stats
        .per_source
        .values()
        .fold(SourceCounts::default(), |mut acc, c| {
            acc += *c;
            acc
        });
    stats
}
