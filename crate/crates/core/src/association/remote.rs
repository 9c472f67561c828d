//! HTTP client for an external model scorer.
//!
//! Wire protocol (JSON over HTTP):
//!
//! ```text
//! POST /score        {"pairs":[{"table_text":..,"text_text":..}]} -> {"scores":[p, ..]}   p in [0,1]
//! POST /score_query  {"query":..,"tables":[..]}                 -> {"scores":[s, ..]}   s real
//! errors: HTTP 400 {"error": ".."}
//! ```

use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{PairScorer, QueryScorer, ScorerError, ScoringContext};
use crate::model::Block;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairText {
    pub table_text: String,
    pub text_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub pairs: Vec<PairText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreQueryRequest {
    pub query: String,
    pub tables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
}

/// Client for `/score` and `/score_query`.
#[derive(Clone)]
pub struct RemoteScorer {
    endpoint: String,
    agent: Agent,
    batch_size: usize,
    max_in_flight: usize,
}

impl std::fmt::Debug for RemoteScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteScorer")
            .field("endpoint", &self.endpoint)
            .field("batch_size", &self.batch_size)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

impl RemoteScorer {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self::with_timeout(endpoint, Duration::from_secs(30))
    }

    pub fn with_timeout(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let config = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            agent: config.into(),
            batch_size: super::DEFAULT_BATCH_SIZE,
            max_in_flight: 4,
        }
    }

    /// Pairs per HTTP request.
    pub fn batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    /// Upper bound on concurrently outstanding requests.
    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn post<B: Serialize>(&self, path: &str, body: &B) -> Result<ScoreResponse, ScorerError> {
        let url = format!("{}{}", self.endpoint, path);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| ScorerError::Transport(format!("{url}: {e}")))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ScorerError::Transport(format!("{url}: reading body: {e}")))?;
        if !status.is_success() {
            let detail = serde_json::from_str::<WireError>(&text)
                .map(|w| w.error)
                .unwrap_or(text);
            return Err(ScorerError::Protocol(format!("{url}: HTTP {status}: {detail}")));
        }
        serde_json::from_str(&text)
            .map_err(|e| ScorerError::Protocol(format!("{url}: malformed reply: {e}")))
    }

    /// Scores one batch with a single request.
    pub fn score_batch(&self, pairs: &[PairText]) -> Result<Vec<f64>, ScorerError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self.post("/score", &ScoreRequest { pairs: pairs.to_vec() })?;
        check_count(resp.scores.len(), pairs.len())?;
        if let Some(bad) = resp.scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ScorerError::Protocol(format!("probability {bad} outside [0, 1]")));
        }
        Ok(resp.scores)
    }

    /// Scores any number of pairs, chunked into batches with at most
    /// `max_in_flight` requests outstanding. Output order matches input order.
    pub fn score_texts(&self, pairs: &[PairText]) -> Result<Vec<f64>, ScorerError> {
        let batches: Vec<&[PairText]> = pairs.chunks(self.batch_size).collect();
        let mut out = Vec::with_capacity(pairs.len());
        for wave in batches.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<f64>, ScorerError>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| s.spawn(move || self.score_batch(batch)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("scoring thread panicked"))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }

    pub fn score_query_texts(&self, query: &str, tables: &[String]) -> Result<Vec<f64>, ScorerError> {
        if query.trim().is_empty() {
            return Err(ScorerError::EmptyQuery);
        }
        if tables.is_empty() {
            return Ok(Vec::new());
        }
        let body = ScoreQueryRequest {
            query: query.to_string(),
            tables: tables.to_vec(),
        };
        let resp = self.post("/score_query", &body)?;
        check_count(resp.scores.len(), tables.len())?;
        if let Some(bad) = resp.scores.iter().find(|s| !s.is_finite()) {
            return Err(ScorerError::Protocol(format!("non-finite score {bad}")));
        }
        Ok(resp.scores)
    }
}

fn check_count(got: usize, want: usize) -> Result<(), ScorerError> {
    if got != want {
        return Err(ScorerError::Protocol(format!(
            "expected {want} scores, got {got}"
        )));
    }
    Ok(())
}

impl PairScorer for RemoteScorer {
    fn score_pairs(
        &self,
        _ctx: &ScoringContext<'_>,
        pairs: &[(&Block, &Block)],
    ) -> Result<Vec<f64>, ScorerError> {
        let texts: Vec<PairText> = pairs
            .iter()
            .map(|(t, s)| PairText {
                table_text: t.text.clone(),
                text_text: s.text.clone(),
            })
            .collect();
        self.score_texts(&texts)
    }
}

impl QueryScorer for RemoteScorer {
    fn score_query(
        &self,
        _ctx: &ScoringContext<'_>,
        query: &str,
        table_texts: &[String],
    ) -> Result<Vec<f64>, ScorerError> {
        self.score_query_texts(query, table_texts)
    }
}
