//! Metric suite: pair-level P/R/F1, document-level correctness counts,
//! Recall@K and latency statistics over shuffled batches.
//!
//! Percentages are kept as exact rationals ([`Ratio`]) and only rounded
//! (half-up, two decimals) for display.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::RetrievalRanking;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("prediction and gold lengths differ: {pred} vs {gold}")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("document {0:?} has no pairs")]
    EmptyGroup(String),
    #[error("query {0:?} has no gold table")]
    MissingGold(String),
    #[error("n_batches must be in 1..={max}, got {got}")]
    InvalidBatchCount { got: usize, max: usize },
    #[error("no durations given")]
    NoDurations,
    #[error("K must be at least 1")]
    InvalidK,
}

/// Exact non-negative fraction `num / den`; `den == 0` reads as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }

    pub fn value(&self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.value()
    }

    /// Percentage rounded half-up to two decimals, computed in integers.
    pub fn percent_2dp(&self) -> f64 {
        self.percent_hundredths() as f64 / 100.0
    }

    /// Percentage in hundredths of a point, rounded half-up (e.g. 9010 for 90.10%).
    pub fn percent_hundredths(&self) -> u64 {
        if self.den == 0 {
            return 0;
        }
        let num = self.num as u128 * 10_000;
        let den = self.den as u128;
        ((2 * num + den) / (2 * den)) as u64
    }

    pub fn display_percent(&self) -> String {
        let h = self.percent_hundredths();
        format!("{}.{:02}", h / 100, h % 100)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(pred: &[bool], gold: &[bool]) -> Result<ConfusionCounts, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), gold: gold.len() });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.iter().zip(gold) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

impl Prf {
    /// `(precision, recall, f1)` in percent, rounded to two decimals.
    pub fn rounded(&self) -> (f64, f64, f64) {
        (self.precision.percent_2dp(), self.recall.percent_2dp(), self.f1.percent_2dp())
    }
}

/// Precision, recall and F1. Each is 0 when its denominator is 0.
///
/// F1 = 2PR/(P+R) is held exactly as `2tp / (2tp + fp + fn)`.
pub fn prf(c: &ConfusionCounts) -> Prf {
    let f1 = if c.tp == 0 {
        Ratio::new(0, 0)
    } else {
        Ratio::new(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
    };
    Prf {
        precision: Ratio::new(c.tp, c.tp + c.fp),
        recall: Ratio::new(c.tp, c.tp + c.fn_),
        f1,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocLevelResult {
    pub all_correct: u64,
    pub pos_correct: u64,
    pub neg_correct: u64,
    pub n_docs: u64,
}

impl std::ops::Add for DocLevelResult {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            all_correct: self.all_correct + rhs.all_correct,
            pos_correct: self.pos_correct + rhs.pos_correct,
            neg_correct: self.neg_correct + rhs.neg_correct,
            n_docs: self.n_docs + rhs.n_docs,
        }
    }
}

impl DocLevelResult {
    pub fn is_consistent(&self) -> bool {
        self.all_correct <= self.pos_correct.min(self.neg_correct)
            && self.pos_correct.max(self.neg_correct) <= self.n_docs
    }
}

/// Document-level counts over `(pred, gold)` pairs grouped by document.
///
/// A document with no gold positives counts toward `pos_correct` vacuously,
/// and likewise for negatives.
pub fn doc_level<K: AsRef<str>>(groups: &BTreeMap<K, Vec<(bool, bool)>>) -> Result<DocLevelResult, EvalError> {
    let mut r = DocLevelResult::default();
    for (doc, pairs) in groups {
        if pairs.is_empty() {
            return Err(EvalError::EmptyGroup(doc.as_ref().to_string()));
        }
        let pos_ok = pairs.iter().filter(|(_, g)| *g).all(|(p, _)| *p);
        let neg_ok = pairs.iter().filter(|(_, g)| !*g).all(|(p, _)| !*p);
        r.n_docs += 1;
        r.pos_correct += u64::from(pos_ok);
        r.neg_correct += u64::from(neg_ok);
        r.all_correct += u64::from(pos_ok && neg_ok);
    }
    Ok(r)
}

/// Fraction of queries whose gold table is among the first `k` ranked tables.
pub fn recall_at_k(
    rankings: &[RetrievalRanking],
    gold: &BTreeMap<String, String>,
    k: usize,
) -> Result<Ratio, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let mut hits = 0;
    for r in rankings {
        let g = gold
            .get(&r.query_id)
            .ok_or_else(|| EvalError::MissingGold(r.query_id.clone()))?;
        if r.ranked.iter().take(k).any(|t| &t.table_block_id == g) {
            hits += 1;
        }
    }
    Ok(Ratio::new(hits, rankings.len() as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub batch_id: usize,
    pub size: usize,
    pub mean_s: f64,
    pub median_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub seed: u64,
    pub n_samples: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub batches: Vec<BatchStats>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median; the average of the two central values for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Seeded shuffle, then round-robin into `n_batches` groups whose sizes
/// differ by at most one.
pub fn partition_batches(durations: &[f64], n_batches: usize, seed: u64) -> Result<Vec<Vec<f64>>, EvalError> {
    if durations.is_empty() {
        return Err(EvalError::NoDurations);
    }
    if n_batches == 0 || n_batches > durations.len() {
        return Err(EvalError::InvalidBatchCount { got: n_batches, max: durations.len() });
    }
    let mut shuffled = durations.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut batches = vec![Vec::with_capacity(durations.len() / n_batches + 1); n_batches];
    for (i, d) in shuffled.into_iter().enumerate() {
        batches[i % n_batches].push(d);
    }
    Ok(batches)
}

pub fn latency_batches(durations: &[f64], n_batches: usize, seed: u64) -> Result<LatencyReport, EvalError> {
    let batches = partition_batches(durations, n_batches, seed)?;
    Ok(LatencyReport {
        seed,
        n_samples: durations.len(),
        mean_s: mean(durations),
        median_s: median(durations),
        batches: batches
            .iter()
            .enumerate()
            .map(|(i, b)| BatchStats {
                batch_id: i,
                size: b.len(),
                mean_s: mean(b),
                median_s: median(b),
            })
            .collect(),
    })
}

/// Per-batch CSV (`batch_id,mean_s,median_s`) for external plotting.
pub fn latency_csv(report: &LatencyReport) -> String {
    let mut out = String::from("batch_id,mean_s,median_s\n");
    for b in &report.batches {
        let _ = writeln!(out, "{},{},{}", b.batch_id, b.mean_s, b.median_s);
    }
    out
}

/// Aligned plain-text table; the first row is the header.
pub fn text_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:>w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}
