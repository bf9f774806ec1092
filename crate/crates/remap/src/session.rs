//! Session state and its on-disk directory.
//!
//! [`SessionState::apply`] is the only way state changes. Live code appends an
//! event to the journal and then applies it; loading replays the journal
//! through the same function, so a session is a pure function of its journal.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use remap_core::codec::structure_key;
use remap_core::embedding::{interpretable_projection, refresh, EmbeddingError};
use remap_core::metrics::{append_row, MetricError, ModelRef};
use remap_core::trainer::RunStatus;
use remap_core::{Architecture, DistanceMatrix, Embedding2D, Metric, Projection, TrainingConfig, TrainingRecord};
use serde::{Deserialize, Serialize};

use crate::dataset::Manifest;
use crate::event::{Event, Job, JobState};
use crate::journal::{self, Entry, Journal, JournalError};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const DATASET_FILE: &str = "dataset.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("session directory {0} does not exist")]
    Missing(String),
    #[error("session directory {0} already holds a journal")]
    AlreadyExists(String),
    #[error("journal is empty or does not start with session_created")]
    NoHeader,
    #[error("session_created may only appear once")]
    DuplicateHeader,
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("model {0} already exists")]
    DuplicateModel(String),
    #[error("job {0} already exists")]
    DuplicateJob(String),
    #[error("model {0} already has a complete record")]
    AlreadyTrained(String),
    #[error("job {job_id} cannot go from {from} to {to}")]
    IllegalTransition { job_id: String, from: &'static str, to: &'static str },
    #[error("job {0} is not queued")]
    NotQueued(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub architecture: Architecture,
    pub structure_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<TrainingRecord>,
}

impl ModelEntry {
    pub fn is_complete(&self) -> bool {
        self.record.as_ref().is_some_and(|r| r.status == RunStatus::Complete)
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.record.as_ref().map(|r| r.final_accuracy())
    }

    pub fn class_accuracy(&self, class: usize) -> Option<f64> {
        self.record.as_ref().and_then(|r| r.per_class_accuracy.get(class).copied())
    }
}

/// Everything a session knows. Equality is registry, queue, matrices and embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub name: String,
    pub dataset: Manifest,
    pub config: TrainingConfig,
    pub created_at: u64,
    pub models: Vec<ModelEntry>,
    pub jobs: Vec<Job>,
    /// Complete models only, in completion order.
    pub structural: DistanceMatrix,
    pub prediction: DistanceMatrix,
    /// MDS overviews; absent until three complete models exist.
    pub embeddings: BTreeMap<Projection, Embedding2D>,
    /// Sequence number of the last applied event.
    pub seq: u64,
    #[serde(skip)]
    model_index: BTreeMap<String, usize>,
    #[serde(skip)]
    job_index: BTreeMap<String, usize>,
}

impl SessionState {
    pub fn new(name: String, dataset: Manifest, config: TrainingConfig, created_at: u64) -> Self {
        SessionState {
            name,
            dataset,
            config,
            created_at,
            models: Vec::new(),
            jobs: Vec::new(),
            structural: DistanceMatrix::empty(Metric::Structural),
            prediction: DistanceMatrix::empty(Metric::Prediction),
            embeddings: BTreeMap::new(),
            seq: 0,
            model_index: BTreeMap::new(),
            job_index: BTreeMap::new(),
        }
    }

    /// State after a journal's entries.
    pub fn replay(entries: &[Entry]) -> Result<Self, SessionError> {
        let first = entries.first().ok_or(SessionError::NoHeader)?;
        let Event::SessionCreated { name, dataset, config, created_at } = &first.event else {
            return Err(SessionError::NoHeader);
        };
        let mut state = SessionState::new(name.clone(), dataset.clone(), config.clone(), *created_at);
        state.seq = first.seq;
        for entry in &entries[1..] {
            state.apply(&entry.event)?;
            state.seq = entry.seq;
        }
        Ok(state)
    }

    /// Rebuilds the lookup tables after deserializing.
    pub fn reindex(&mut self) {
        self.model_index = self.models.iter().enumerate().map(|(i, m)| (m.id.clone(), i)).collect();
        self.job_index = self.jobs.iter().enumerate().map(|(i, j)| (j.job_id.clone(), i)).collect();
    }

    pub fn model(&self, id: &str) -> Option<&ModelEntry> {
        self.model_index.get(id).map(|&i| &self.models[i])
    }

    pub fn job(&self, id: &str) -> Option<&Job> {
        self.job_index.get(id).map(|&i| &self.jobs[i])
    }

    pub fn model_by_structure(&self, key: &str) -> Option<&ModelEntry> {
        self.models.iter().find(|m| m.structure_key == key)
    }

    pub fn next_model_id(&self) -> String {
        format!("m{:04}", self.models.len() + 1)
    }

    pub fn next_job_id(&self) -> String {
        format!("j{:04}", self.jobs.len() + 1)
    }

    pub fn num_classes(&self) -> usize {
        self.dataset.class_names.len()
    }

    pub fn complete_models(&self) -> impl Iterator<Item = &ModelEntry> {
        self.models.iter().filter(|m| m.is_complete())
    }

    /// Queued job that runs next: lowest rank, then earliest submission.
    pub fn next_runnable(&self) -> Option<&Job> {
        self.jobs.iter().filter(|j| j.state == JobState::Queued).min_by_key(|j| (j.rank, self.job_index[&j.job_id]))
    }

    /// Checks that `event` can be applied, without changing anything.
    pub fn check(&self, event: &Event) -> Result<(), SessionError> {
        match event {
            Event::SessionCreated { .. } => Err(SessionError::DuplicateHeader),
            Event::ModelAdded { model_id, .. } => {
                if self.model_index.contains_key(model_id) {
                    Err(SessionError::DuplicateModel(model_id.clone()))
                } else {
                    Ok(())
                }
            }
            Event::RecordFinished { model_id, job_id, .. } => {
                let m = self.model(model_id).ok_or_else(|| SessionError::UnknownModel(model_id.clone()))?;
                if m.is_complete() {
                    return Err(SessionError::AlreadyTrained(model_id.clone()));
                }
                if let Some(j) = job_id {
                    self.job(j).ok_or_else(|| SessionError::UnknownJob(j.clone()))?;
                }
                Ok(())
            }
            Event::JobQueued { job_id, model_id, .. } => {
                if self.job_index.contains_key(job_id) {
                    return Err(SessionError::DuplicateJob(job_id.clone()));
                }
                self.model(model_id).ok_or_else(|| SessionError::UnknownModel(model_id.clone()))?;
                Ok(())
            }
            Event::JobStateChanged { job_id, state, .. } => {
                let job = self.job(job_id).ok_or_else(|| SessionError::UnknownJob(job_id.clone()))?;
                if job.state.can_become(*state) {
                    Ok(())
                } else {
                    Err(SessionError::IllegalTransition {
                        job_id: job_id.clone(),
                        from: job.state.name(),
                        to: state.name(),
                    })
                }
            }
            Event::JobReordered { job_id, .. } => {
                let job = self.job(job_id).ok_or_else(|| SessionError::UnknownJob(job_id.clone()))?;
                if job.state == JobState::Queued {
                    Ok(())
                } else {
                    Err(SessionError::NotQueued(job_id.clone()))
                }
            }
            Event::ProjectionsRefit => Ok(()),
        }
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), SessionError> {
        self.check(event)?;
        match event {
            Event::SessionCreated { .. } => unreachable!("rejected by check"),
            Event::ModelAdded { model_id, architecture } => {
                let mut architecture = architecture.clone();
                architecture.id = model_id.clone();
                self.model_index.insert(model_id.clone(), self.models.len());
                self.models.push(ModelEntry {
                    id: model_id.clone(),
                    structure_key: structure_key(&architecture),
                    architecture,
                    config: None,
                    record: None,
                });
            }
            Event::RecordFinished { model_id, config, record, .. } => {
                let i = self.model_index[model_id];
                self.models[i].config = Some(config.clone());
                self.models[i].record = Some(record.clone());
                if record.status == RunStatus::Complete {
                    self.add_to_matrices(i)?;
                    self.refresh_embeddings(false)?;
                }
            }
            Event::JobQueued { job_id, model_id, config, rank, submitted_at } => {
                self.job_index.insert(job_id.clone(), self.jobs.len());
                self.jobs.push(Job {
                    job_id: job_id.clone(),
                    model_id: model_id.clone(),
                    config: config.clone(),
                    state: JobState::Queued,
                    rank: *rank,
                    submitted_at: *submitted_at,
                    detail: None,
                });
            }
            Event::JobStateChanged { job_id, state, detail } => {
                let i = self.job_index[job_id];
                self.jobs[i].state = *state;
                self.jobs[i].detail = detail.clone();
            }
            Event::JobReordered { job_id, rank } => {
                let i = self.job_index[job_id];
                self.jobs[i].rank = *rank;
            }
            Event::ProjectionsRefit => self.refresh_embeddings(true)?,
        }
        Ok(())
    }

    fn add_to_matrices(&mut self, index: usize) -> Result<(), SessionError> {
        let new = &self.models[index];
        let refs = |ids: &[String]| -> Vec<ModelRef<'_>> {
            ids.iter()
                .map(|id| {
                    let m = &self.models[self.model_index[id]];
                    ModelRef { id: &m.id, arch: &m.architecture, predictions: m.record.as_ref().map(|r| &r.predictions[..]) }
                })
                .collect()
        };
        let new_ref = ModelRef {
            id: &new.id,
            arch: &new.architecture,
            predictions: new.record.as_ref().map(|r| &r.predictions[..]),
        };
        let mut structural = self.structural.clone();
        append_row(&mut structural, &refs(&self.structural.ids), &new_ref)?;
        let mut prediction = self.prediction.clone();
        append_row(&mut prediction, &refs(&self.prediction.ids), &new_ref)?;
        self.structural = structural;
        self.prediction = prediction;
        Ok(())
    }

    fn refresh_embeddings(&mut self, refit: bool) -> Result<(), SessionError> {
        for projection in [Projection::Structural, Projection::Prediction] {
            let matrix = if projection == Projection::Structural { &self.structural } else { &self.prediction };
            let current = self.embeddings.remove(&projection);
            if let Some(e) = refresh(current, matrix, refit)? {
                self.embeddings.insert(projection, e);
            }
        }
        Ok(())
    }

    pub fn matrix(&self, metric: Metric) -> &DistanceMatrix {
        match metric {
            Metric::Structural => &self.structural,
            Metric::Prediction => &self.prediction,
        }
    }

    /// The requested overview. The interpretable one is derived from complete records.
    pub fn projection(&self, projection: Projection) -> Option<Embedding2D> {
        match projection {
            Projection::Interpretable => Some(interpretable_projection(
                self.complete_models().map(|m| (m.id.as_str(), m.record.as_ref().unwrap().param_count, m.accuracy().unwrap())),
            )),
            p => self.embeddings.get(&p).cloned(),
        }
    }

    /// Complete models not dominated in (parameters, accuracy).
    pub fn pareto_ids(&self) -> Vec<String> {
        let models: Vec<&ModelEntry> = self.complete_models().collect();
        let points: Vec<(u64, f64)> =
            models.iter().map(|m| (m.record.as_ref().unwrap().param_count, m.accuracy().unwrap())).collect();
        remap_core::pareto::pareto_front(&points).into_iter().map(|i| models[i].id.clone()).collect()
    }

    /// Events that rebuild this state with reorders folded into their queue events
    /// and redundant refits dropped.
    pub fn compacted_events(entries: &[Entry]) -> Vec<Event> {
        let mut ranks: BTreeMap<&str, i64> = BTreeMap::new();
        for e in entries {
            if let Event::JobReordered { job_id, rank } = &e.event {
                ranks.insert(job_id, *rank);
            }
        }
        let mut out: Vec<Event> = Vec::with_capacity(entries.len());
        for e in entries {
            match &e.event {
                Event::JobReordered { .. } => {}
                Event::JobQueued { job_id, model_id, config, rank, submitted_at } => out.push(Event::JobQueued {
                    job_id: job_id.clone(),
                    model_id: model_id.clone(),
                    config: config.clone(),
                    rank: ranks.get(job_id.as_str()).copied().unwrap_or(*rank),
                    submitted_at: *submitted_at,
                }),
                Event::ProjectionsRefit => {
                    let affects = out.iter().rev().find(|ev| matches!(ev, Event::ProjectionsRefit | Event::RecordFinished { .. }));
                    if !matches!(affects, Some(Event::ProjectionsRefit)) {
                        out.push(Event::ProjectionsRefit);
                    }
                }
                ev => out.push(ev.clone()),
            }
        }
        out
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io { path: path.display().to_string(), source }
}

/// A session directory opened for writing.
#[derive(Debug)]
pub struct Session {
    dir: PathBuf,
    journal: Journal,
    pub state: SessionState,
}

impl Session {
    /// Creates `dir` (if needed) and starts a new journal.
    pub fn create(dir: &Path, dataset: Manifest, config: TrainingConfig) -> Result<Self, SessionError> {
        fs::create_dir_all(dir.join(SNAPSHOT_DIR)).map_err(io_err(dir))?;
        let path = dir.join(JOURNAL_FILE);
        if path.exists() {
            return Err(SessionError::AlreadyExists(dir.display().to_string()));
        }
        let manifest_path = dir.join(DATASET_FILE);
        fs::write(&manifest_path, serde_json::to_string_pretty(&dataset).expect("manifest serializes"))
            .map_err(io_err(&manifest_path))?;
        let created = Event::SessionCreated {
            name: dataset.name.clone(),
            dataset: dataset.clone(),
            config: config.clone(),
            created_at: crate::event::now_ms(),
        };
        let mut journal = Journal::create(&path)?;
        let seq = journal.append(&created)?;
        let Event::SessionCreated { name, created_at, .. } = created else { unreachable!() };
        let mut state = SessionState::new(name, dataset, config, created_at);
        state.seq = seq;
        Ok(Session { dir: dir.to_path_buf(), journal, state })
    }

    /// Opens an existing session, truncating a torn journal tail.
    pub fn open(dir: &Path) -> Result<Self, SessionError> {
        if !dir.is_dir() {
            return Err(SessionError::Missing(dir.display().to_string()));
        }
        let path = dir.join(JOURNAL_FILE);
        if !path.exists() {
            return Err(SessionError::Missing(path.display().to_string()));
        }
        let (journal, entries) = Journal::open(&path)?;
        let state = SessionState::replay(&entries)?;
        Ok(Session { dir: dir.to_path_buf(), journal, state })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends `event` durably and applies it. Returns its sequence number.
    pub fn commit(&mut self, event: Event) -> Result<u64, SessionError> {
        self.state.check(&event)?;
        let seq = self.journal.append(&event)?;
        self.state.apply(&event)?;
        self.state.seq = seq;
        Ok(seq)
    }

    /// Writes a compacted copy of the journal to `path`.
    pub fn snapshot(&self, path: &Path) -> Result<(), SessionError> {
        let entries = journal::read(self.journal.path())?.entries;
        journal::write_atomic(path, &SessionState::compacted_events(&entries))?;
        Ok(())
    }

    /// Snapshot into `snapshots/` named after the current sequence number.
    pub fn snapshot_in_dir(&self) -> Result<PathBuf, SessionError> {
        let dir = self.dir.join(SNAPSHOT_DIR);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(format!("snapshot-{:08}.jsonl", self.state.seq));
        self.snapshot(&path)?;
        Ok(path)
    }

    /// Replaces the journal with its compacted form and reopens it.
    pub fn compact(&mut self) -> Result<(), SessionError> {
        let path = self.journal.path().to_path_buf();
        self.snapshot(&path)?;
        let (journal, entries) = Journal::open(&path)?;
        self.state = SessionState::replay(&entries)?;
        self.journal = journal;
        Ok(())
    }
}

/// Read-only load of a session directory or a journal/snapshot file.
pub fn load(path: &Path) -> Result<SessionState, SessionError> {
    let file = if path.is_dir() { path.join(JOURNAL_FILE) } else { path.to_path_buf() };
    if !file.exists() {
        return Err(SessionError::Missing(path.display().to_string()));
    }
    let decoded = journal::read(&file)?;
    if decoded.torn {
        log::warn!("{}: ignoring torn final record", file.display());
    }
    SessionState::replay(&decoded.entries)
}
