//! Annotation projects backed by an append-only JSON Lines event log.
//!
//! Every accepted write is appended (and synced) before it is applied to the
//! in-memory state, so replaying the log on startup reproduces the state
//! exactly. Without a log path the store is memory-only.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tablescope_core::association::{extract_table_numbers, own_table_number};
use tablescope_core::canonical::to_canonical_line;
use tablescope_core::dataset::{
    completeness_check, write_jsonl, AnnotationTriplet, CompletenessWarning, ConflictRecord,
    CONSENSUS_ANNOTATOR,
};
use tablescope_core::{BlockType, Document};

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectStatus {
    Open,
    Reconciling,
    Finalized,
}

impl ProjectStatus {
    fn name(self) -> &'static str {
        match self {
            ProjectStatus::Open => "Open",
            ProjectStatus::Reconciling => "Reconciling",
            ProjectStatus::Finalized => "Finalized",
        }
    }
}

/// What annotators were shown: rendered page images or OCR text only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationMode {
    PageImage,
    TextOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub project_id: String,
    pub doc_id: String,
    pub annotator_ids: Vec<String>,
    pub status: ProjectStatus,
    pub annotation_mode: AnnotationMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Related,
    Unrelated,
}

impl Label {
    pub fn is_related(self) -> bool {
        self == Label::Related
    }

    pub fn from_related(related: bool) -> Self {
        if related {
            Label::Related
        } else {
            Label::Unrelated
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub project_id: String,
    pub annotator_id: String,
    pub table_id: String,
    pub text_block_id: String,
    pub label: Label,
    pub revision: u64,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    ProjectCreated {
        project: Project,
        document: Document,
        timestamp_ms: u64,
    },
    Label(LabelEvent),
    Resolved {
        project_id: String,
        table_id: String,
        text_block_id: String,
        related: bool,
        note: String,
        timestamp_ms: u64,
    },
    Finalized {
        project_id: String,
        acknowledged_warnings: bool,
        timestamp_ms: u64,
    },
}

/// The current label of one annotator on one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurrentLabel {
    pub label: Label,
    pub revision: u64,
}

type Pair = (String, String);

#[derive(Debug, Clone)]
struct ProjectState {
    project: Project,
    doc: Document,
    labels: BTreeMap<Pair, BTreeMap<String, CurrentLabel>>,
    resolutions: BTreeMap<Pair, (bool, String)>,
}

/// A pair labeled by some but not all annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompletePair {
    pub table_id: String,
    pub text_block_id: String,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub project_id: String,
    pub status: ProjectStatus,
    /// Unresolved disagreements; finalize needs this empty.
    pub conflicts: Vec<ConflictRecord>,
    pub resolved: Vec<ConflictRecord>,
    pub incomplete: Vec<IncompletePair>,
    /// Tables without any related paragraph under the current consensus.
    pub completeness_warnings: Vec<CompletenessWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub text_block_id: String,
    pub page_id: u32,
    #[serde(rename = "type")]
    pub kind: BlockType,
    pub text: String,
    /// The text cites this table's number ("Table 3", "Tab. III").
    pub number_match: bool,
    pub labels: BTreeMap<String, CurrentLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub labeled: usize,
    pub total: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub table_id: String,
    pub page_id: u32,
    pub table_text: String,
    pub page_image: Option<String>,
    pub candidates: Vec<Candidate>,
    pub progress: BTreeMap<String, Progress>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskList {
    pub project: Project,
    pub tasks: Vec<Task>,
}

/// Body of a label submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub annotator_id: String,
    pub table_id: String,
    pub text_block_id: String,
    pub label: Label,
    pub revision: u64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn storage(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(e.to_string())
}

#[derive(Debug)]
pub struct Store {
    log: Option<(PathBuf, File)>,
    projects: BTreeMap<String, ProjectState>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store {
            log: None,
            projects: BTreeMap::new(),
        }
    }

    /// Opens (creating if needed) the log at `path` and replays it.
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let mut store = Store::in_memory();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(storage)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(storage)?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: Event = serde_json::from_str(&line)
                    .map_err(|e| storage(format!("{}:{}: {e}", path.display(), i + 1)))?;
                store.apply(event)?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(storage)?;
        store.log = Some((path.to_path_buf(), file));
        Ok(store)
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|(p, _)| p.as_path())
    }

    fn commit(&mut self, event: Event) -> Result<(), ServiceError> {
        if let Some((_, file)) = &mut self.log {
            let mut line = to_canonical_line(&event);
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(storage)?;
            file.sync_data().map_err(storage)?;
        }
        self.apply(event)
    }

    fn apply(&mut self, event: Event) -> Result<(), ServiceError> {
        match event {
            Event::ProjectCreated { project, document, .. } => {
                let doc = document
                    .normalized()
                    .map_err(|e| storage(format!("stored document is invalid: {e}")))?;
                self.projects.insert(
                    project.project_id.clone(),
                    ProjectState {
                        project,
                        doc,
                        labels: BTreeMap::new(),
                        resolutions: BTreeMap::new(),
                    },
                );
            }
            Event::Label(ev) => {
                let state = self.state_mut(&ev.project_id)?;
                state
                    .labels
                    .entry((ev.table_id, ev.text_block_id))
                    .or_default()
                    .insert(
                        ev.annotator_id,
                        CurrentLabel {
                            label: ev.label,
                            revision: ev.revision,
                        },
                    );
            }
            Event::Resolved {
                project_id,
                table_id,
                text_block_id,
                related,
                note,
                ..
            } => {
                let state = self.state_mut(&project_id)?;
                state.project.status = ProjectStatus::Reconciling;
                state.resolutions.insert((table_id, text_block_id), (related, note));
            }
            Event::Finalized { project_id, .. } => {
                self.state_mut(&project_id)?.project.status = ProjectStatus::Finalized;
            }
        }
        Ok(())
    }

    fn state(&self, project_id: &str) -> Result<&ProjectState, ServiceError> {
        self.projects
            .get(project_id)
            .ok_or_else(|| ServiceError::ProjectNotFound(project_id.to_string()))
    }

    fn state_mut(&mut self, project_id: &str) -> Result<&mut ProjectState, ServiceError> {
        self.projects
            .get_mut(project_id)
            .ok_or_else(|| ServiceError::ProjectNotFound(project_id.to_string()))
    }

    pub fn projects(&self) -> Vec<Project> {
        self.projects.values().map(|s| s.project.clone()).collect()
    }

    pub fn project(&self, project_id: &str) -> Result<Project, ServiceError> {
        Ok(self.state(project_id)?.project.clone())
    }

    pub fn document(&self, project_id: &str) -> Result<Document, ServiceError> {
        Ok(self.state(project_id)?.doc.clone())
    }

    pub fn create_project(
        &mut self,
        doc: Document,
        annotator_ids: Vec<String>,
        project_id: Option<String>,
        annotation_mode: AnnotationMode,
    ) -> Result<Project, ServiceError> {
        let distinct: BTreeSet<&str> = annotator_ids.iter().map(String::as_str).collect();
        if distinct.len() != annotator_ids.len() {
            return Err(ServiceError::BadRequest("annotator ids must be distinct".into()));
        }
        if annotator_ids.iter().any(|a| a.trim().is_empty() || a == CONSENSUS_ANNOTATOR) {
            return Err(ServiceError::BadRequest(format!(
                "annotator ids must be non-empty and not {CONSENSUS_ANNOTATOR:?}"
            )));
        }
        if annotator_ids.len() < 2 {
            return Err(ServiceError::TooFewAnnotators(annotator_ids.len()));
        }
        doc.validate()
            .map_err(|e| ServiceError::InvalidDocument(e.to_string()))?;
        let project_id = match project_id {
            Some(id) if id.trim().is_empty() => {
                return Err(ServiceError::BadRequest("project_id is empty".into()))
            }
            Some(id) => id,
            None => {
                let mut n = self.projects.len() + 1;
                while self.projects.contains_key(&format!("proj-{n:04}")) {
                    n += 1;
                }
                format!("proj-{n:04}")
            }
        };
        if self.projects.contains_key(&project_id) {
            return Err(ServiceError::ProjectExists(project_id));
        }
        let project = Project {
            project_id,
            doc_id: doc.doc_id.clone(),
            annotator_ids,
            status: ProjectStatus::Open,
            annotation_mode,
        };
        self.commit(Event::ProjectCreated {
            project: project.clone(),
            document: doc,
            timestamp_ms: now_ms(),
        })?;
        Ok(project)
    }

    fn check_pair(doc: &Document, table_id: &str, text_block_id: &str) -> Result<(), ServiceError> {
        match doc.block(table_id) {
            Some(b) if b.kind == BlockType::Table => {}
            _ => return Err(ServiceError::UnknownBlock(format!("{table_id:?} is not a table of {}", doc.doc_id))),
        }
        match doc.block(text_block_id) {
            Some(b) if b.kind.is_textual() => Ok(()),
            _ => Err(ServiceError::UnknownBlock(format!(
                "{text_block_id:?} is not a Text/List block of {}",
                doc.doc_id
            ))),
        }
    }

    /// Stores a label under optimistic concurrency.
    ///
    /// `revision` must be the current revision plus one. Resubmitting the
    /// current revision with the same label is a no-op that returns it.
    pub fn submit_label(&mut self, project_id: &str, req: LabelRequest) -> Result<LabelEvent, ServiceError> {
        let state = self.state(project_id)?;
        if state.project.status != ProjectStatus::Open {
            return Err(ServiceError::ProjectClosed(state.project.status.name()));
        }
        if !state.project.annotator_ids.contains(&req.annotator_id) {
            return Err(ServiceError::UnknownAnnotator(req.annotator_id));
        }
        Self::check_pair(&state.doc, &req.table_id, &req.text_block_id)?;
        let key = (req.table_id.clone(), req.text_block_id.clone());
        let current = state
            .labels
            .get(&key)
            .and_then(|m| m.get(&req.annotator_id))
            .copied();
        let current_rev = current.map_or(0, |c| c.revision);
        let event = LabelEvent {
            project_id: project_id.to_string(),
            annotator_id: req.annotator_id,
            table_id: req.table_id,
            text_block_id: req.text_block_id,
            label: req.label,
            revision: req.revision,
            timestamp_ms: now_ms(),
        };
        match current {
            Some(c) if c.revision == req.revision && c.label == req.label => return Ok(event),
            _ if req.revision == current_rev + 1 => {}
            _ => {
                return Err(ServiceError::StaleRevision {
                    got: req.revision,
                    current: current_rev,
                })
            }
        }
        self.commit(Event::Label(event.clone()))?;
        Ok(event)
    }

    pub fn tasks(
        &self,
        project_id: &str,
        page_image: impl Fn(&str, u32) -> Option<String>,
    ) -> Result<TaskList, ServiceError> {
        let state = self.state(project_id)?;
        let texts = state.doc.text_blocks();
        let empty = BTreeMap::new();
        let tasks = state
            .doc
            .tables()
            .into_iter()
            .map(|table| {
                let own = own_table_number(&table.text);
                let candidates: Vec<Candidate> = texts
                    .iter()
                    .map(|s| Candidate {
                        text_block_id: s.block_id.clone(),
                        page_id: s.page_id,
                        kind: s.kind,
                        text: s.text.clone(),
                        number_match: own.is_some_and(|n| extract_table_numbers(&s.text).contains(n)),
                        labels: state
                            .labels
                            .get(&(table.block_id.clone(), s.block_id.clone()))
                            .unwrap_or(&empty)
                            .clone(),
                    })
                    .collect();
                let progress = state
                    .project
                    .annotator_ids
                    .iter()
                    .map(|a| {
                        let labeled = candidates.iter().filter(|c| c.labels.contains_key(a)).count();
                        let p = Progress {
                            labeled,
                            total: candidates.len(),
                            complete: labeled == candidates.len(),
                        };
                        (a.clone(), p)
                    })
                    .collect();
                Task {
                    table_id: table.block_id.clone(),
                    page_id: table.page_id,
                    table_text: table.text.clone(),
                    page_image: page_image(&state.doc.doc_id, table.page_id),
                    candidates,
                    progress,
                }
            })
            .collect();
        Ok(TaskList {
            project: state.project.clone(),
            tasks,
        })
    }

    pub fn conflicts(&self, project_id: &str) -> Result<ConflictReport, ServiceError> {
        let state = self.state(project_id)?;
        Ok(report(state))
    }

    pub fn resolve_conflict(
        &mut self,
        project_id: &str,
        table_id: &str,
        text_block_id: &str,
        related: bool,
        note: String,
    ) -> Result<ConflictRecord, ServiceError> {
        let state = self.state(project_id)?;
        if state.project.status == ProjectStatus::Finalized {
            return Err(ServiceError::ProjectClosed("Finalized"));
        }
        Self::check_pair(&state.doc, table_id, text_block_id)?;
        let key = (table_id.to_string(), text_block_id.to_string());
        let labels = match state.labels.get(&key) {
            Some(m) if is_conflict(&state.project, m) => m,
            _ => return Err(ServiceError::NotInConflict(key.0, key.1)),
        };
        let record = ConflictRecord {
            table_id: key.0.clone(),
            text_block_id: key.1.clone(),
            labels: labels.iter().map(|(a, c)| (a.clone(), c.label.is_related())).collect(),
            resolution: Some(related),
            resolver_note: note.clone(),
        };
        self.commit(Event::Resolved {
            project_id: project_id.to_string(),
            table_id: key.0,
            text_block_id: key.1,
            related,
            note,
            timestamp_ms: now_ms(),
        })?;
        Ok(record)
    }

    pub fn finalize(&mut self, project_id: &str, acknowledge_warnings: bool) -> Result<Project, ServiceError> {
        let state = self.state(project_id)?;
        if state.project.status == ProjectStatus::Finalized {
            return Err(ServiceError::ProjectClosed("Finalized"));
        }
        let r = report(state);
        if !r.conflicts.is_empty() {
            return Err(ServiceError::UnresolvedConflicts(r.conflicts.len()));
        }
        if !acknowledge_warnings && (!r.incomplete.is_empty() || !r.completeness_warnings.is_empty()) {
            return Err(ServiceError::WarningsNotAcknowledged(format!(
                "{} partially labeled pairs, {} tables without related text",
                r.incomplete.len(),
                r.completeness_warnings.len()
            )));
        }
        self.commit(Event::Finalized {
            project_id: project_id.to_string(),
            acknowledged_warnings: acknowledge_warnings,
            timestamp_ms: now_ms(),
        })?;
        self.project(project_id)
    }

    /// Consensus triplets, one per table in document order.
    pub fn export_triplets(&self, project_id: &str) -> Result<Vec<AnnotationTriplet>, ServiceError> {
        let state = self.state(project_id)?;
        if state.project.status != ProjectStatus::Finalized {
            return Err(ServiceError::NotFinalized);
        }
        Ok(consensus(state))
    }

    pub fn export_jsonl(&self, project_id: &str) -> Result<Vec<u8>, ServiceError> {
        Ok(write_jsonl(&self.export_triplets(project_id)?))
    }
}

/// All annotators labeled the pair and they do not all agree.
fn is_conflict(project: &Project, labels: &BTreeMap<String, CurrentLabel>) -> bool {
    let complete = project.annotator_ids.iter().all(|a| labels.contains_key(a));
    let distinct: BTreeSet<Label> = labels.values().map(|c| c.label).collect();
    complete && distinct.len() > 1
}

/// A pair is related in the consensus when every annotator marked it related
/// or a reconciler resolved it as related. Unresolved and partially labeled
/// pairs count as unrelated.
fn consensus(state: &ProjectState) -> Vec<AnnotationTriplet> {
    let annotators = &state.project.annotator_ids;
    state
        .doc
        .tables()
        .into_iter()
        .map(|table| {
            let related = state
                .doc
                .text_blocks()
                .into_iter()
                .filter(|s| {
                    let key = (table.block_id.clone(), s.block_id.clone());
                    let labels = state.labels.get(&key);
                    let conflict = labels.is_some_and(|m| is_conflict(&state.project, m));
                    match state.resolutions.get(&key) {
                        Some((r, _)) if conflict => *r,
                        _ => labels.is_some_and(|m| {
                            annotators
                                .iter()
                                .all(|a| m.get(a).is_some_and(|c| c.label.is_related()))
                        }),
                    }
                })
                .map(|s| s.block_id.clone())
                .collect();
            AnnotationTriplet {
                doc_id: state.doc.doc_id.clone(),
                table_id: table.block_id.clone(),
                page_id: table.page_id,
                related_paragraphs: related,
                annotator_id: CONSENSUS_ANNOTATOR.to_string(),
            }
        })
        .collect()
}

fn report(state: &ProjectState) -> ConflictReport {
    let mut conflicts = Vec::new();
    let mut resolved = Vec::new();
    let mut incomplete = Vec::new();
    for ((table_id, text_block_id), labels) in &state.labels {
        if is_conflict(&state.project, labels) {
            let resolution = state.resolutions.get(&(table_id.clone(), text_block_id.clone()));
            let record = ConflictRecord {
                table_id: table_id.clone(),
                text_block_id: text_block_id.clone(),
                labels: labels.iter().map(|(a, c)| (a.clone(), c.label.is_related())).collect(),
                resolution: resolution.map(|(r, _)| *r),
                resolver_note: resolution.map(|(_, n)| n.clone()).unwrap_or_default(),
            };
            if record.resolution.is_some() {
                resolved.push(record);
            } else {
                conflicts.push(record);
            }
        } else {
            let missing: Vec<String> = state
                .project
                .annotator_ids
                .iter()
                .filter(|a| !labels.contains_key(*a))
                .cloned()
                .collect();
            if !missing.is_empty() {
                incomplete.push(IncompletePair {
                    table_id: table_id.clone(),
                    text_block_id: text_block_id.clone(),
                    missing,
                });
            }
        }
    }
    ConflictReport {
        project_id: state.project.project_id.clone(),
        status: state.project.status,
        conflicts,
        resolved,
        incomplete,
        completeness_warnings: completeness_check(&state.doc, &consensus(state)),
    }
}
