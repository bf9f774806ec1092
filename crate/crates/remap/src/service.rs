//! The training service: job queue, workers, queries and the event stream.
//!
//! All state lives in one [`Session`] behind a mutex. Workers take the lock
//! only to pick a job and to commit its outcome; training runs unlocked and
//! talks back through the progress sink and a per-job cancel flag.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use remap_core::codec::{structure_key, structure_seed};
use remap_core::edits::{BudgetExhausted, EditKind};
use remap_core::embedding::MdsFit;
use remap_core::trainer::{FlagSink, RunStatus};
use remap_core::{
    ablations, apply_edit, count_parameters, snac_encoding, train, validate, variations, Architecture, Dataset,
    EditError, EditOp, Grids, Limits, Projection, Provenance, SnacChipSequence, TrainingConfig, VariationConstraints,
    Violation,
};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::dataset::{load_from_manifest, LoadError};
use crate::event::{now_ms, Event, Job, JobState};
use crate::session::{ModelEntry, Session, SessionError, SessionState};

const STREAM_CAPACITY: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Dataset(#[from] LoadError),
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("unknown class {0}")]
    UnknownClass(usize),
    #[error("unknown projection {0}")]
    UnknownProjection(String),
    #[error("model {0} has not finished training")]
    NotTrained(String),
    #[error("job {0} is not queued")]
    NotQueued(String),
    #[error("architecture is invalid")]
    InvalidArchitecture(Vec<Violation>),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error("service is shutting down")]
    ShuttingDown,
}

/// One message on the event stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamMessage {
    /// Full state; every later `journal` message has a larger `seq`.
    Snapshot { state: Box<SessionState> },
    Journal { seq: u64, event: Event },
    Progress { job_id: String, epoch: u32, train_loss: f64, val_accuracy: f64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CancelOutcome {
    /// The job was queued and will never run.
    Cancelled,
    /// The job is running and stops at the next epoch boundary.
    CancelRequested,
    /// The job had already finished; nothing changed.
    AlreadyFinished { state: JobState },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelFilter {
    pub class: Option<usize>,
    pub min_accuracy: Option<f64>,
    pub provenance: Option<Provenance>,
    #[serde(default)]
    pub pareto_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: String,
    pub provenance: Provenance,
    pub parent_id: Option<String>,
    pub architecture: Architecture,
    pub param_count: Option<u64>,
    pub accuracy: Option<f64>,
    /// Accuracy on the filtered class, when a class filter is set.
    pub class_accuracy: Option<f64>,
    pub status: Option<RunStatus>,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDetail {
    pub model: ModelEntry,
    pub snac: SnacChipSequence,
    pub jobs: Vec<Job>,
    pub pareto: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub accuracy: f64,
    pub param_count: u64,
    /// Part of the fitted base rather than inserted out-of-sample.
    pub base: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionView {
    pub projection: Projection,
    pub fitted: bool,
    pub fit: Option<MdsFit>,
    pub points: Vec<ProjectionPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub id: String,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassOverview {
    pub class: usize,
    pub class_name: String,
    pub models: Vec<ClassAccuracy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Invalid,
    Duplicate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub reason: SkipReason,
    /// Removed layer, for ablations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpawnOutcome {
    pub jobs: Vec<Job>,
    pub skipped: Vec<Skipped>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhausted: Option<BudgetExhausted>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRequest {
    pub parent: String,
    /// Layer indices to remove one at a time; all layers when absent.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationRequest {
    pub parent: String,
    pub n_children: usize,
    #[serde(default)]
    pub seed: u64,
    /// Allowed ops per parent layer; every op everywhere when absent.
    #[serde(default)]
    pub layers: Option<Vec<BTreeSet<EditKind>>>,
    #[serde(default)]
    pub head_prepend: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandcraftRequest {
    pub parent: String,
    /// Applied in order; every intermediate result must be valid.
    pub edits: Vec<EditOp>,
}

struct Core {
    session: Session,
    cancel: HashMap<String, Arc<AtomicBool>>,
    running: usize,
}

struct Inner {
    core: Mutex<Core>,
    wake: Condvar,
    idle: Condvar,
    tx: Mutex<Option<broadcast::Sender<StreamMessage>>>,
    dataset: Arc<Dataset>,
    shutdown: AtomicBool,
    paused: AtomicBool,
    workers: Mutex<Vec<JoinHandle<()>>>,
    grids: Grids,
    limits: Limits,
}

/// Handle to a running service; clones share the same state.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

impl Inner {
    fn lock(&self) -> MutexGuard<'_, Core> {
        self.core.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn broadcast(&self, message: StreamMessage) {
        if let Some(tx) = self.tx.lock().unwrap_or_else(|e| e.into_inner()).as_ref() {
            let _ = tx.send(message);
        }
    }

    /// Journals, applies and broadcasts one event. Call with the core lock held.
    fn commit(&self, core: &mut Core, event: Event) -> Result<u64, ServiceError> {
        let seq = core.session.commit(event.clone())?;
        self.broadcast(StreamMessage::Journal { seq, event });
        Ok(seq)
    }

    fn queue_model(&self, core: &mut Core, arch: Architecture, config: TrainingConfig, rank: i64) -> Result<Job, ServiceError> {
        let model_id = core.session.state.next_model_id();
        let job_id = core.session.state.next_job_id();
        let mut architecture = arch;
        architecture.id = model_id.clone();
        if architecture.created_at == 0 {
            architecture.created_at = now_ms();
        }
        self.commit(core, Event::ModelAdded { model_id: model_id.clone(), architecture })?;
        self.commit(core, Event::JobQueued { job_id: job_id.clone(), model_id, config, rank, submitted_at: now_ms() })?;
        core.cancel.insert(job_id.clone(), Arc::new(AtomicBool::new(false)));
        self.wake.notify_all();
        Ok(core.session.state.job(&job_id).expect("just queued").clone())
    }

    fn child_config(&self, state: &SessionState, child: &Architecture, epochs: u32) -> TrainingConfig {
        TrainingConfig { epochs, seed: state.config.seed ^ structure_seed(child), ..state.config.clone() }
    }

    fn worker_loop(self: Arc<Self>) {
        loop {
            let mut core = self.lock();
            let job = loop {
                if self.shutdown.load(Ordering::Acquire) {
                    return;
                }
                if !self.paused.load(Ordering::Acquire) {
                    if let Some(job) = core.session.state.next_runnable().cloned() {
                        break job;
                    }
                }
                core = self.wake.wait(core).unwrap_or_else(|e| e.into_inner());
            };
            let model = core.session.state.model(&job.model_id).expect("job model exists").clone();
            if let Err(e) = self.commit(&mut core, Event::JobStateChanged { job_id: job.job_id.clone(), state: JobState::Running, detail: None }) {
                log::error!("starting {}: {e}", job.job_id);
                return;
            }
            core.running += 1;
            let flag = core.cancel.entry(job.job_id.clone()).or_default().clone();
            drop(core);

            let started = Instant::now();
            let result = {
                let mut sink = FlagSink {
                    on_epoch: |p: &remap_core::trainer::EpochProgress| {
                        self.broadcast(StreamMessage::Progress {
                            job_id: job.job_id.clone(),
                            epoch: p.epoch,
                            train_loss: p.train_loss,
                            val_accuracy: p.val_accuracy,
                        })
                    },
                    cancel: &flag,
                };
                train(&model.architecture, &self.dataset, &job.config, &mut sink)
            };

            let mut core = self.lock();
            core.running -= 1;
            let interrupted = self.shutdown.load(Ordering::Acquire)
                && matches!(&result, Ok(r) if r.status == RunStatus::Cancelled);
            if !interrupted {
                if let Err(e) = self.finish(&mut core, &job, result, started.elapsed()) {
                    log::error!("recording {}: {e}", job.job_id);
                }
            }
            core.cancel.remove(&job.job_id);
            self.idle.notify_all();
        }
    }

    fn finish(
        &self,
        core: &mut Core,
        job: &Job,
        result: Result<remap_core::TrainingRecord, remap_core::trainer::TrainError>,
        elapsed: Duration,
    ) -> Result<(), ServiceError> {
        let (state, detail) = match result {
            Ok(mut record) => {
                record.wall_time_ms = elapsed.as_millis() as u64;
                let state = match record.status {
                    RunStatus::Complete => JobState::Done,
                    RunStatus::Cancelled => JobState::Cancelled,
                    RunStatus::Failed => JobState::Failed,
                };
                let detail = (state == JobState::Failed).then(|| "training diverged".to_string());
                self.commit(
                    core,
                    Event::RecordFinished {
                        model_id: job.model_id.clone(),
                        job_id: Some(job.job_id.clone()),
                        config: job.config.clone(),
                        record,
                    },
                )?;
                (state, detail)
            }
            Err(e) => (JobState::Failed, Some(e.to_string())),
        };
        self.commit(core, Event::JobStateChanged { job_id: job.job_id.clone(), state, detail })?;
        Ok(())
    }
}

fn summarize(m: &ModelEntry, class: Option<usize>) -> ModelSummary {
    ModelSummary {
        id: m.id.clone(),
        provenance: m.architecture.provenance,
        parent_id: m.architecture.parent_id.clone(),
        architecture: m.architecture.clone(),
        param_count: m.record.as_ref().map(|r| r.param_count).or_else(|| count_parameters(&m.architecture).ok()),
        accuracy: m.accuracy(),
        class_accuracy: class.and_then(|c| m.class_accuracy(c)),
        status: m.record.as_ref().map(|r| r.status),
        epochs: m.record.as_ref().map_or(0, |r| r.epochs_run()),
    }
}

impl Service {
    /// Starts workers over an open session. Jobs left running by a previous
    /// process are marked failed and queued again.
    pub fn start(session: Session, dataset: Dataset, workers: usize) -> Result<Service, ServiceError> {
        let (tx, _) = broadcast::channel(STREAM_CAPACITY);
        let inner = Arc::new(Inner {
            core: Mutex::new(Core { session, cancel: HashMap::new(), running: 0 }),
            wake: Condvar::new(),
            idle: Condvar::new(),
            tx: Mutex::new(Some(tx)),
            dataset: Arc::new(dataset),
            shutdown: AtomicBool::new(false),
            paused: AtomicBool::new(false),
            workers: Mutex::new(Vec::new()),
            grids: Grids::default(),
            limits: Limits::default(),
        });
        {
            let mut core = inner.lock();
            let stale: Vec<Job> =
                core.session.state.jobs.iter().filter(|j| j.state == JobState::Running).cloned().collect();
            for job in stale {
                log::warn!("job {} was running when the service stopped; queueing it again", job.job_id);
                inner.commit(
                    &mut core,
                    Event::JobStateChanged {
                        job_id: job.job_id.clone(),
                        state: JobState::Failed,
                        detail: Some("interrupted".into()),
                    },
                )?;
                let job_id = core.session.state.next_job_id();
                inner.commit(
                    &mut core,
                    Event::JobQueued {
                        job_id,
                        model_id: job.model_id,
                        config: job.config,
                        rank: job.rank,
                        submitted_at: now_ms(),
                    },
                )?;
            }
            let queued: Vec<String> =
                core.session.state.jobs.iter().filter(|j| j.state == JobState::Queued).map(|j| j.job_id.clone()).collect();
            for id in queued {
                core.cancel.insert(id, Arc::new(AtomicBool::new(false)));
            }
        }
        let handles = (0..workers.max(1))
            .map(|i| {
                let inner = inner.clone();
                std::thread::Builder::new()
                    .name(format!("remap-worker-{i}"))
                    .spawn(move || inner.worker_loop())
                    .expect("spawn worker")
            })
            .collect();
        *inner.workers.lock().unwrap() = handles;
        Ok(Service { inner })
    }

    /// Opens the session directory and loads its dataset.
    pub fn open(dir: &Path, workers: usize) -> Result<Service, ServiceError> {
        let session = Session::open(dir)?;
        let dataset = load_from_manifest(&session.state.dataset)?;
        Self::start(session, dataset, workers)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.inner.dataset
    }

    /// Copy of the current state.
    pub fn state(&self) -> SessionState {
        self.inner.lock().session.state.clone()
    }

    /// Runs `f` against the state under the lock.
    pub fn with_state<R>(&self, f: impl FnOnce(&SessionState) -> R) -> R {
        f(&self.inner.lock().session.state)
    }

    /// A snapshot and a receiver positioned right after it.
    pub fn subscribe(&self) -> Option<(SessionState, broadcast::Receiver<StreamMessage>)> {
        let core = self.inner.lock();
        let rx = self.inner.tx.lock().unwrap_or_else(|e| e.into_inner()).as_ref()?.subscribe();
        Some((core.session.state.clone(), rx))
    }

    pub fn enqueue(&self, arch: Architecture, config: Option<TrainingConfig>, rank: i64) -> Result<Job, ServiceError> {
        validate(&arch).map_err(ServiceError::InvalidArchitecture)?;
        if self.inner.shutdown.load(Ordering::Acquire) {
            return Err(ServiceError::ShuttingDown);
        }
        let mut core = self.inner.lock();
        let config = config.unwrap_or_else(|| {
            let state = &core.session.state;
            self.inner.child_config(state, &arch, state.config.epochs)
        });
        self.inner.queue_model(&mut core, arch, config, rank)
    }

    pub fn reorder(&self, job_id: &str, rank: i64) -> Result<Job, ServiceError> {
        let mut core = self.inner.lock();
        let job = core.session.state.job(job_id).ok_or_else(|| ServiceError::UnknownJob(job_id.into()))?;
        if job.state != JobState::Queued {
            return Err(ServiceError::NotQueued(job_id.into()));
        }
        self.inner.commit(&mut core, Event::JobReordered { job_id: job_id.into(), rank })?;
        Ok(core.session.state.job(job_id).unwrap().clone())
    }

    pub fn cancel(&self, job_id: &str) -> Result<CancelOutcome, ServiceError> {
        let mut core = self.inner.lock();
        let job = core.session.state.job(job_id).ok_or_else(|| ServiceError::UnknownJob(job_id.into()))?;
        match job.state {
            JobState::Queued => {
                self.inner.commit(
                    &mut core,
                    Event::JobStateChanged { job_id: job_id.into(), state: JobState::Cancelled, detail: None },
                )?;
                core.cancel.remove(job_id);
                self.inner.idle.notify_all();
                Ok(CancelOutcome::Cancelled)
            }
            JobState::Running => {
                if let Some(flag) = core.cancel.get(job_id) {
                    flag.store(true, Ordering::Release);
                }
                Ok(CancelOutcome::CancelRequested)
            }
            state => Ok(CancelOutcome::AlreadyFinished { state }),
        }
    }

    fn trained_parent(state: &SessionState, id: &str) -> Result<ModelEntry, ServiceError> {
        let parent = state.model(id).ok_or_else(|| ServiceError::UnknownModel(id.into()))?;
        if !parent.is_complete() {
            return Err(ServiceError::NotTrained(id.into()));
        }
        Ok(parent.clone())
    }

    fn spawn(
        &self,
        core: &mut Core,
        children: Vec<(Option<usize>, Architecture)>,
        epochs: u32,
        outcome: &mut SpawnOutcome,
    ) -> Result<(), ServiceError> {
        for (index, child) in children {
            let key = structure_key(&child);
            if let Some(existing) = core.session.state.model_by_structure(&key) {
                outcome.skipped.push(Skipped {
                    reason: SkipReason::Duplicate,
                    index,
                    duplicate_of: Some(existing.id.clone()),
                    violations: Vec::new(),
                });
                continue;
            }
            let config = self.inner.child_config(&core.session.state, &child, epochs);
            outcome.jobs.push(self.inner.queue_model(core, child, config, 0)?);
        }
        Ok(())
    }

    /// One child per selected layer with that layer removed, trained for the
    /// parent's epoch count.
    pub fn spawn_ablations(&self, request: &AblationRequest) -> Result<SpawnOutcome, ServiceError> {
        let mut core = self.inner.lock();
        let parent = Self::trained_parent(&core.session.state, &request.parent)?;
        let selected: BTreeSet<usize> = match &request.layers {
            Some(l) => l.iter().copied().collect(),
            None => (0..parent.architecture.layers.len()).collect(),
        };
        let set = ablations(&parent.architecture, &selected, &self.inner.limits)?;
        let epochs = parent.config.as_ref().map_or(core.session.state.config.epochs, |c| c.epochs);
        let mut outcome = SpawnOutcome::default();
        for s in set.skipped {
            outcome.skipped.push(Skipped {
                reason: SkipReason::Invalid,
                index: Some(s.index),
                duplicate_of: None,
                violations: s.violations,
            });
        }
        let children = set.children.into_iter().map(|(i, c)| (Some(i), c)).collect();
        self.spawn(&mut core, children, epochs, &mut outcome)?;
        Ok(outcome)
    }

    pub fn spawn_variations(&self, request: &VariationRequest) -> Result<SpawnOutcome, ServiceError> {
        let mut core = self.inner.lock();
        let parent = Self::trained_parent(&core.session.state, &request.parent)?;
        let mut constraints = VariationConstraints::unconstrained(&parent.architecture, request.n_children, request.seed);
        if let Some(layers) = &request.layers {
            constraints.layers = layers.clone();
        }
        if let Some(h) = request.head_prepend {
            constraints.head_prepend = h;
        }
        let set = variations(&parent.architecture, &constraints, &self.inner.grids, &self.inner.limits)?;
        let epochs = core.session.state.config.epochs;
        let mut outcome = SpawnOutcome { exhausted: set.exhausted, ..SpawnOutcome::default() };
        let children = set.children.into_iter().map(|c| (None, c.architecture)).collect();
        self.spawn(&mut core, children, epochs, &mut outcome)?;
        Ok(outcome)
    }

    pub fn spawn_handcrafted(&self, request: &HandcraftRequest) -> Result<SpawnOutcome, ServiceError> {
        let mut core = self.inner.lock();
        let parent = Self::trained_parent(&core.session.state, &request.parent)?;
        if request.edits.is_empty() {
            return Err(EditError::EmptySelection.into());
        }
        let mut child = parent.architecture.clone();
        for edit in &request.edits {
            child = apply_edit(&child, edit, &self.inner.grids, &self.inner.limits)?;
        }
        child.parent_id = Some(parent.id.clone());
        let epochs = core.session.state.config.epochs;
        let mut outcome = SpawnOutcome::default();
        self.spawn(&mut core, vec![(None, child)], epochs, &mut outcome)?;
        Ok(outcome)
    }

    pub fn refit_projections(&self) -> Result<u64, ServiceError> {
        let mut core = self.inner.lock();
        self.inner.commit(&mut core, Event::ProjectionsRefit)
    }

    pub fn list_models(&self, filter: &ModelFilter) -> Result<Vec<ModelSummary>, ServiceError> {
        let core = self.inner.lock();
        let state = &core.session.state;
        if let Some(c) = filter.class {
            if c >= state.num_classes() {
                return Err(ServiceError::UnknownClass(c));
            }
        }
        let pareto: BTreeSet<String> = if filter.pareto_only { state.pareto_ids().into_iter().collect() } else { BTreeSet::new() };
        Ok(state
            .models
            .iter()
            .filter(|m| filter.provenance.map_or(true, |p| m.architecture.provenance == p))
            .filter(|m| !filter.pareto_only || pareto.contains(&m.id))
            .filter(|m| {
                filter.min_accuracy.map_or(true, |t| {
                    let acc = match filter.class {
                        Some(c) => m.class_accuracy(c),
                        None => m.accuracy(),
                    };
                    acc.is_some_and(|a| a >= t)
                })
            })
            .map(|m| summarize(m, filter.class))
            .collect())
    }

    pub fn pareto(&self) -> Vec<ModelSummary> {
        self.list_models(&ModelFilter { pareto_only: true, ..ModelFilter::default() }).expect("no class filter")
    }

    pub fn model_detail(&self, id: &str) -> Result<ModelDetail, ServiceError> {
        let core = self.inner.lock();
        let state = &core.session.state;
        let model = state.model(id).ok_or_else(|| ServiceError::UnknownModel(id.into()))?.clone();
        let snac = snac_encoding(&model.architecture)
            .map_err(|_| ServiceError::InvalidArchitecture(validate(&model.architecture).err().unwrap_or_default()))?;
        let jobs = state.jobs.iter().filter(|j| j.model_id == id).cloned().collect();
        let pareto = state.pareto_ids().contains(&model.id);
        Ok(ModelDetail { model, snac, jobs, pareto })
    }

    pub fn projection(&self, name: &str) -> Result<ProjectionView, ServiceError> {
        let projection = Projection::from_name(name).ok_or_else(|| ServiceError::UnknownProjection(name.into()))?;
        let core = self.inner.lock();
        let state = &core.session.state;
        let Some(embedding) = state.projection(projection) else {
            return Ok(ProjectionView { projection, fitted: false, fit: None, points: Vec::new() });
        };
        let base: BTreeSet<&str> = embedding.base_ids.iter().map(String::as_str).collect();
        let points = embedding
            .points
            .iter()
            .map(|p| {
                let m = state.model(&p.id).expect("embedded ids are registered");
                let r = m.record.as_ref().expect("embedded models are trained");
                ProjectionPoint {
                    id: p.id.clone(),
                    x: p.x,
                    y: p.y,
                    accuracy: r.final_accuracy(),
                    param_count: r.param_count,
                    base: base.contains(p.id.as_str()),
                }
            })
            .collect();
        Ok(ProjectionView { projection, fitted: true, fit: embedding.fit.clone(), points })
    }

    /// Accuracy of every complete model on true class `class`.
    pub fn class_accuracies(&self, class: usize) -> Result<ClassOverview, ServiceError> {
        let core = self.inner.lock();
        let state = &core.session.state;
        let class_name = state.dataset.class_names.get(class).ok_or(ServiceError::UnknownClass(class))?.clone();
        let models = state
            .complete_models()
            .map(|m| ClassAccuracy { id: m.id.clone(), accuracy: m.class_accuracy(class).unwrap_or(0.0) })
            .collect();
        Ok(ClassOverview { class, class_name, models })
    }

    /// Running jobs, then queued jobs in execution order, then finished jobs.
    pub fn queue(&self) -> Vec<Job> {
        let core = self.inner.lock();
        let state = &core.session.state;
        let order: HashMap<&str, usize> = state.jobs.iter().enumerate().map(|(i, j)| (j.job_id.as_str(), i)).collect();
        let mut jobs = state.jobs.clone();
        jobs.sort_by_key(|j| {
            let group = match j.state {
                JobState::Running => 0,
                JobState::Queued => 1,
                _ => 2,
            };
            let rank = if j.state == JobState::Queued { j.rank } else { 0 };
            (group, rank, order[j.job_id.as_str()])
        });
        jobs
    }

    /// While paused, workers finish their current job but start no new ones.
    pub fn set_paused(&self, paused: bool) {
        let _core = self.inner.lock();
        self.inner.paused.store(paused, Ordering::Release);
        self.inner.wake.notify_all();
    }

    /// Blocks until no job is queued or running, or `timeout` passes.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut core = self.inner.lock();
        loop {
            let busy = core.running > 0
                || core.session.state.jobs.iter().any(|j| matches!(j.state, JobState::Queued | JobState::Running));
            if !busy {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            core = self.inner.idle.wait_timeout(core, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    /// Writes a compacted snapshot into the session's `snapshots/` directory.
    pub fn snapshot(&self) -> Result<std::path::PathBuf, ServiceError> {
        Ok(self.inner.lock().session.snapshot_in_dir()?)
    }

    /// Stops the workers and closes every event stream. Running jobs are
    /// interrupted and resume on the next start.
    pub fn shutdown(&self) {
        self.inner.shutdown.store(true, Ordering::Release);
        {
            let core = self.inner.lock();
            for flag in core.cancel.values() {
                flag.store(true, Ordering::Release);
            }
        }
        self.inner.wake.notify_all();
        let handles = std::mem::take(&mut *self.inner.workers.lock().unwrap_or_else(|e| e.into_inner()));
        for h in handles {
            let _ = h.join();
        }
        self.inner.tx.lock().unwrap_or_else(|e| e.into_inner()).take();
        self.inner.idle.notify_all();
    }
}
