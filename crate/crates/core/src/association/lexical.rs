//! TF-IDF cosine similarity with blocks as the documents of one source file.

use std::collections::BTreeMap;

use crate::model::Document;

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Document frequencies over the blocks of a single document.
///
/// Every block counts as one document, whatever its kind.
#[derive(Debug, Clone, Default)]
pub struct DocumentVocabulary {
    n_blocks: usize,
    doc_freq: BTreeMap<String, usize>,
}

impl DocumentVocabulary {
    pub fn from_document(doc: &Document) -> Self {
        Self::from_texts(doc.blocks().map(|b| b.text.as_str()))
    }

    pub fn from_texts<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Self {
        let mut vocab = DocumentVocabulary::default();
        for text in texts {
            vocab.n_blocks += 1;
            let mut terms = tokenize(text);
            terms.sort_unstable();
            terms.dedup();
            for term in terms {
                *vocab.doc_freq.entry(term).or_insert(0) += 1;
            }
        }
        vocab
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    /// Smoothed inverse document frequency `ln(1 + N / (1 + df))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_blocks as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + n / (1.0 + df)).ln()
    }

    /// Sparse TF-IDF vector of `text`, sorted by term.
    pub fn vectorize(&self, text: &str) -> TfIdfVector {
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for token in tokenize(text) {
            *tf.entry(token).or_insert(0) += 1;
        }
        TfIdfVector {
            weights: tf
                .into_iter()
                .map(|(term, count)| {
                    let w = count as f64 * self.idf(&term);
                    (term, w)
                })
                .collect(),
        }
    }
}

/// Sparse vector with entries sorted by term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TfIdfVector {
    weights: Vec<(String, f64)>,
}

impl TfIdfVector {
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn squared_norm(&self) -> f64 {
        self.weights.iter().map(|(_, w)| w * w).sum()
    }

    fn dot(&self, other: &TfIdfVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < self.weights.len() && j < other.weights.len() {
            let (ta, wa) = &self.weights[i];
            let (tb, wb) = &other.weights[j];
            match ta.cmp(tb) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += wa * wb;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Cosine similarity clamped to `[0, 1]`; 0 when either vector is empty
    /// or has zero norm.
    pub fn cosine(&self, other: &TfIdfVector) -> f64 {
        let na = self.squared_norm();
        let nb = other.squared_norm();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): identical vectors give exactly 1.
        (self.dot(other) / (na * nb).sqrt()).clamp(0.0, 1.0)
    }
}

/// Lexical relatedness of two texts under `vocab`.
pub fn lexical_score(a: &str, b: &str, vocab: &DocumentVocabulary) -> f64 {
    vocab.vectorize(a).cosine(&vocab.vectorize(b))
}
