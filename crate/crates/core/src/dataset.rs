//! Annotation triplets, two-annotator consensus, completeness checks and
//! balanced training-pair construction.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::model::{BlockType, Document};

/// Annotator id written on merged, reconciled triplets.
pub const CONSENSUS_ANNOTATOR: &str = "consensus";

/// `<table, page, related paragraphs>` as recorded by one annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTriplet {
    pub doc_id: String,
    pub table_id: String,
    pub page_id: u32,
    pub related_paragraphs: BTreeSet<String>,
    pub annotator_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub doc_id: String,
    pub table_block_id: String,
    pub text_block_id: String,
    pub label: u8,
    pub table_text: String,
    pub text_text: String,
}

/// A `(table, text)` pair on which annotators disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub table_id: String,
    pub text_block_id: String,
    /// Annotator id → `true` if that annotator marked the pair related.
    pub labels: BTreeMap<String, bool>,
    pub resolution: Option<bool>,
    pub resolver_note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessWarning {
    pub table_id: String,
    pub page_id: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("annotations reference different documents: {0:?} vs {1:?}")]
    DocumentMismatch(String, String),
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("block {0:?} is not a Text/List block of the document")]
    UnknownParagraph(String),
    #[error("unresolved conflict on ({table_id}, {text_block_id})")]
    Unresolved { table_id: String, text_block_id: String },
    #[error("invalid split ratio {0}:{1}")]
    InvalidRatio(u32, u32),
    #[error("malformed record on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

fn single_doc_id<'a, I>(triplets: I) -> Result<Option<&'a str>, DatasetError>
where
    I: IntoIterator<Item = &'a AnnotationTriplet>,
{
    let mut doc: Option<&str> = None;
    for t in triplets {
        match doc {
            None => doc = Some(&t.doc_id),
            Some(d) if d != t.doc_id => {
                return Err(DatasetError::DocumentMismatch(d.to_string(), t.doc_id.clone()))
            }
            _ => {}
        }
    }
    Ok(doc)
}

/// Per-table union of related paragraphs plus the table's page.
fn by_table(triplets: &[AnnotationTriplet]) -> BTreeMap<&str, (u32, BTreeSet<&str>)> {
    let mut out: BTreeMap<&str, (u32, BTreeSet<&str>)> = BTreeMap::new();
    for t in triplets {
        let entry = out.entry(&t.table_id).or_insert((t.page_id, BTreeSet::new()));
        entry.1.extend(t.related_paragraphs.iter().map(String::as_str));
    }
    out
}

fn annotator_of(triplets: &[AnnotationTriplet], fallback: &str) -> String {
    triplets
        .first()
        .map(|t| t.annotator_id.clone())
        .unwrap_or_else(|| fallback.to_string())
}

/// Merges two annotators' triplets.
///
/// A paragraph omitted by an annotator counts as "unrelated". Pairs both
/// annotators mark related enter the consensus; pairs exactly one marks
/// related become conflicts. Every table either annotator mentions gets a
/// consensus triplet, possibly with an empty related set.
pub fn merge_annotations(
    a1: &[AnnotationTriplet],
    a2: &[AnnotationTriplet],
) -> Result<(Vec<AnnotationTriplet>, Vec<ConflictRecord>), DatasetError> {
    let d1 = single_doc_id(a1)?;
    let d2 = single_doc_id(a2)?;
    let doc_id = match (d1, d2) {
        (Some(x), Some(y)) if x != y => {
            return Err(DatasetError::DocumentMismatch(x.to_string(), y.to_string()))
        }
        (Some(x), _) | (None, Some(x)) => x.to_string(),
        (None, None) => return Ok((Vec::new(), Vec::new())),
    };
    let name1 = annotator_of(a1, "annotator-1");
    let name2 = annotator_of(a2, "annotator-2");
    let m1 = by_table(a1);
    let m2 = by_table(a2);
    let empty = BTreeSet::new();

    let tables: BTreeSet<&str> = m1.keys().chain(m2.keys()).copied().collect();
    let mut consensus = Vec::new();
    let mut conflicts = Vec::new();
    for table in tables {
        let (page1, s1) = m1.get(table).map(|(p, s)| (Some(*p), s)).unwrap_or((None, &empty));
        let (page2, s2) = m2.get(table).map(|(p, s)| (Some(*p), s)).unwrap_or((None, &empty));
        let page_id = page1.or(page2).unwrap_or_default();
        consensus.push(AnnotationTriplet {
            doc_id: doc_id.clone(),
            table_id: table.to_string(),
            page_id,
            related_paragraphs: s1.intersection(s2).map(|s| s.to_string()).collect(),
            annotator_id: CONSENSUS_ANNOTATOR.to_string(),
        });
        for para in s1.symmetric_difference(s2) {
            conflicts.push(ConflictRecord {
                table_id: table.to_string(),
                text_block_id: para.to_string(),
                labels: BTreeMap::from([
                    (name1.clone(), s1.contains(para)),
                    (name2.clone(), s2.contains(para)),
                ]),
                resolution: None,
                resolver_note: String::new(),
            });
        }
    }
    Ok((consensus, conflicts))
}

/// Applies resolved conflicts to a consensus. Fails if any conflict is
/// still unresolved.
pub fn apply_resolutions(
    consensus: &[AnnotationTriplet],
    conflicts: &[ConflictRecord],
) -> Result<Vec<AnnotationTriplet>, DatasetError> {
    let mut out = consensus.to_vec();
    for c in conflicts {
        let related = c.resolution.ok_or_else(|| DatasetError::Unresolved {
            table_id: c.table_id.clone(),
            text_block_id: c.text_block_id.clone(),
        })?;
        let triplet = out
            .iter_mut()
            .find(|t| t.table_id == c.table_id)
            .ok_or_else(|| DatasetError::UnknownTable(c.table_id.clone()))?;
        if related {
            triplet.related_paragraphs.insert(c.text_block_id.clone());
        } else {
            triplet.related_paragraphs.remove(&c.text_block_id);
        }
    }
    Ok(out)
}

/// Checks that triplets reference this document's tables and text blocks.
pub fn validate_triplets(doc: &Document, triplets: &[AnnotationTriplet]) -> Result<(), DatasetError> {
    let index = doc.block_index();
    for t in triplets {
        if t.doc_id != doc.doc_id {
            return Err(DatasetError::DocumentMismatch(doc.doc_id.clone(), t.doc_id.clone()));
        }
        match index.get(t.table_id.as_str()) {
            Some(b) if b.kind == BlockType::Table => {}
            _ => return Err(DatasetError::UnknownTable(t.table_id.clone())),
        }
        for p in &t.related_paragraphs {
            match index.get(p.as_str()) {
                Some(b) if b.kind.is_textual() => {}
                _ => return Err(DatasetError::UnknownParagraph(p.clone())),
            }
        }
    }
    Ok(())
}

/// One warning per Table block that has no related paragraph.
pub fn completeness_check(doc: &Document, triplets: &[AnnotationTriplet]) -> Vec<CompletenessWarning> {
    let annotated: BTreeSet<&str> = triplets
        .iter()
        .filter(|t| !t.related_paragraphs.is_empty())
        .map(|t| t.table_id.as_str())
        .collect();
    doc.tables()
        .into_iter()
        .filter(|t| !annotated.contains(t.block_id.as_str()))
        .map(|t| CompletenessWarning {
            table_id: t.block_id.clone(),
            page_id: t.page_id,
        })
        .collect()
}

/// Balanced positive/negative pairs for one document.
///
/// Per table (in document order): one positive per related paragraph, then
/// `min(#positives, #available)` negatives drawn without replacement from the
/// document's other Text/List blocks. Deterministic for a fixed seed.
pub fn build_training_pairs(
    doc: &Document,
    triplets: &[AnnotationTriplet],
    seed: u64,
) -> Result<Vec<TrainingSample>, DatasetError> {
    validate_triplets(doc, triplets)?;
    let related = by_table(triplets);
    let texts = doc.text_blocks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    for table in doc.tables() {
        let Some((_, positives)) = related.get(table.block_id.as_str()) else {
            continue;
        };
        if positives.is_empty() {
            continue;
        }
        let sample = |text: &crate::model::Block, label: u8| TrainingSample {
            doc_id: doc.doc_id.clone(),
            table_block_id: table.block_id.clone(),
            text_block_id: text.block_id.clone(),
            label,
            table_text: table.text.clone(),
            text_text: text.text.clone(),
        };
        let (pos, neg): (Vec<&crate::model::Block>, Vec<&crate::model::Block>) = texts
            .iter()
            .copied()
            .partition(|b| positives.contains(b.block_id.as_str()));
        out.extend(pos.iter().map(|b| sample(b, 1)));

        let n_neg = pos.len().min(neg.len());
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, neg.len(), n_neg).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| sample(neg[i], 0)));
    }
    Ok(out)
}

/// Seeded shuffle followed by a prefix split; the train part has
/// `floor(n * r1 / (r1 + r2))` samples.
pub fn split_train_test<T: Clone>(
    samples: &[T],
    ratio: (u32, u32),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    let (r1, r2) = ratio;
    if r1 == 0 || r2 == 0 {
        return Err(DatasetError::InvalidRatio(r1, r2));
    }
    let n_train = train_size(samples.len(), ratio);
    let mut shuffled = samples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(n_train);
    Ok((shuffled, test))
}

pub fn train_size(n: usize, (r1, r2): (u32, u32)) -> usize {
    ((n as u128 * r1 as u128) / (r1 as u128 + r2 as u128)) as usize
}

/// Document-level split: whole documents go to one side, so no document
/// contributes to both. The train side receives `floor(n_docs * r1 / (r1 + r2))`
/// documents.
pub fn split_by_document(
    samples: &[TrainingSample],
    ratio: (u32, u32),
    seed: u64,
) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>), DatasetError> {
    let (r1, r2) = ratio;
    if r1 == 0 || r2 == 0 {
        return Err(DatasetError::InvalidRatio(r1, r2));
    }
    let docs: BTreeSet<&str> = samples.iter().map(|s| s.doc_id.as_str()).collect();
    let mut docs: Vec<&str> = docs.into_iter().collect();
    docs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_docs: BTreeSet<&str> = docs[..train_size(docs.len(), ratio)].iter().copied().collect();
    Ok(samples
        .iter()
        .cloned()
        .partition(|s| train_docs.contains(s.doc_id.as_str())))
}

/// Reads a JSON Lines file; blank lines are skipped.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(raw: &str) -> Result<Vec<T>, DatasetError> {
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Malformed {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    canonical::to_canonical_jsonl(records)
}
