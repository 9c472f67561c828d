//! Synthetic documents for tests, benchmarks and demos.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{BBox, Block, BlockType, Document, Page};

const PAGE_W: f64 = 1240.0;
const PAGE_H: f64 = 1754.0;

const WORDS: &[&str] = &[
    "accuracy", "baseline", "error", "rate", "model", "dataset", "training", "latency", "memory",
    "results", "ablation", "precision", "recall", "cohort", "patients", "dose", "response",
    "survival", "median", "variance", "encoder", "layer", "token", "benchmark", "throughput",
    "sample", "protein", "expression", "gene", "treatment", "control", "score", "metric",
];

fn bbox(slot: usize) -> BBox {
    let y0 = 40.0 + (slot % 20) as f64 * 80.0;
    BBox::new(60.0, y0, 1180.0, y0 + 70.0)
}

fn words<R: Rng + ?Sized>(rng: &mut R, n: usize) -> String {
    (0..n)
        .map(|_| *WORDS.choose(rng).expect("non-empty word list"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Specification for a synthetic document.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub doc_id: String,
    pub source: String,
    pub n_pages: u32,
    pub n_tables: usize,
    pub n_texts: usize,
}

/// Random document: `n_tables` Table blocks numbered 1.., `n_texts` Text/List
/// blocks with random vocabulary (some citing a table number), spread over
/// `n_pages` pages, plus one Title block and one Figure per page.
pub fn random_document<R: Rng + ?Sized>(rng: &mut R, spec: &SynthSpec) -> Document {
    let n_pages = spec.n_pages.max(1);
    let mut pages: Vec<Page> = (0..n_pages)
        .map(|page_id| Page {
            page_id,
            width_px: PAGE_W,
            height_px: PAGE_H,
            blocks: vec![
                Block {
                    block_id: format!("p{page_id}-title"),
                    page_id,
                    kind: BlockType::Title,
                    bbox: bbox(0),
                    text: words(rng, 3),
                },
                Block {
                    block_id: format!("p{page_id}-fig"),
                    page_id,
                    kind: BlockType::Figure,
                    bbox: bbox(1),
                    text: String::new(),
                },
            ],
        })
        .collect();

    for i in 0..spec.n_tables {
        let page_id = rng.gen_range(0..n_pages);
        let n = rng.gen_range(3..10);
        pages[page_id as usize].blocks.push(Block {
            block_id: format!("tab{i:03}"),
            page_id,
            kind: BlockType::Table,
            bbox: bbox(2 + i),
            text: format!("Table {} {}", i + 1, words(rng, n)),
        });
    }
    for i in 0..spec.n_texts {
        let page_id = rng.gen_range(0..n_pages);
        let n = rng.gen_range(0..15);
        let mut text = words(rng, n);
        if spec.n_tables > 0 && rng.gen_bool(0.3) {
            let cited = rng.gen_range(1..=spec.n_tables);
            text = format!("As shown in Table {cited}, {text}");
        }
        let kind = if rng.gen_bool(0.2) { BlockType::List } else { BlockType::Text };
        pages[page_id as usize].blocks.push(Block {
            block_id: format!("txt{i:03}"),
            page_id,
            kind,
            bbox: bbox(3 + i),
            text,
        });
    }
    Document {
        doc_id: spec.doc_id.clone(),
        source: spec.source.clone(),
        pages,
    }
    .normalized()
    .expect("synthetic documents are valid")
}

/// Distributes `total` items over `n` bins as evenly as possible.
pub fn spread(total: u64, n: u64) -> Vec<u64> {
    (0..n).map(|i| total / n + u64::from(i < total % n)).collect()
}

/// Deterministic documents whose aggregate counts are exactly
/// `(n_pdf, n_page, n_table, n_text)` for one source.
pub fn corpus_fixture(source: &str, n_pdf: u64, n_page: u64, n_table: u64, n_text: u64) -> Vec<Document> {
    let pages = spread(n_page, n_pdf);
    let tables = spread(n_table, n_pdf);
    let texts = spread(n_text, n_pdf);
    (0..n_pdf as usize)
        .map(|d| {
            let n_pages = pages[d].max(1) as u32;
            let mut doc_pages: Vec<Page> = (0..n_pages)
                .map(|page_id| Page {
                    page_id,
                    width_px: PAGE_W,
                    height_px: PAGE_H,
                    blocks: Vec::new(),
                })
                .collect();
            for t in 0..tables[d] as usize {
                let page_id = (t as u32) % n_pages;
                doc_pages[page_id as usize].blocks.push(Block {
                    block_id: format!("t{t:04}"),
                    page_id,
                    kind: BlockType::Table,
                    bbox: bbox(t),
                    text: format!("Table {}", t + 1),
                });
            }
            for s in 0..texts[d] as usize {
                let page_id = (s as u32) % n_pages;
                doc_pages[page_id as usize].blocks.push(Block {
                    block_id: format!("s{s:04}"),
                    page_id,
                    kind: if s % 3 == 2 { BlockType::List } else { BlockType::Text },
                    bbox: bbox(s),
                    text: format!("paragraph {s}"),
                });
            }
            Document {
                doc_id: format!("{source}-{d:04}"),
                source: source.to_string(),
                pages: doc_pages,
            }
            .normalized()
            .expect("fixture documents are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::corpus_stats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_documents_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..20 {
            let spec = SynthSpec {
                doc_id: format!("d{i}"),
                source: "synthetic".into(),
                n_pages: 3,
                n_tables: i % 6,
                n_texts: 3 * i,
            };
            let d = random_document(&mut rng, &spec);
            assert!(d.validate().is_ok());
            assert_eq!(d.tables().len(), spec.n_tables);
            assert_eq!(d.text_blocks().len(), spec.n_texts);
        }
    }

    #[test]
    fn fixture_counts_exact() {
        let docs = corpus_fixture("x", 3, 10, 7, 11);
        let stats = corpus_stats(&docs);
        assert_eq!(
            (stats.total.n_pdf, stats.total.n_page, stats.total.n_table_block, stats.total.n_text_block),
            (3, 10, 7, 11)
        );
    }
}
