//! Concurrent session store.
//!
//! Each session has a FIFO writer lock: mutations queue in arrival order and
//! run one at a time. Reads take a short read lock on the state and never
//! wait for a running optimization, so they see the last completed layout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use simembed::datasets::Registry;
use simembed::metrics::MetricReport;
use simembed::{ManipulationSet64, ModelFamily, Move64};

use crate::error::{ErrorBody, ServiceError, ServiceResult};
use crate::session::{
    create, points, AuditEntry, CreateSession, ScenarioKind, SessionData, SessionState, Trajectories,
    SNAPSHOT_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub job_id: String,
    /// Iterations completed so far.
    pub iteration: usize,
    pub total: usize,
    pub current_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub session_id: String,
    pub state: JobState,
    pub progress: Progress,
    pub result: Option<OptimizeResponse>,
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResponse {
    pub session_id: String,
    pub step: usize,
    pub layout: Vec<[f64; 2]>,
    pub metrics: MetricReport,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub dataset: String,
    pub scenario: ScenarioKind,
    pub family: ModelFamily,
    pub init: simembed::InitMethod,
    pub n_points: usize,
    /// Index of the latest layout.
    pub step: usize,
    pub control_points: Option<Vec<usize>>,
    pub labels: Option<Vec<i64>>,
    pub layout: Vec<[f64; 2]>,
    pub metrics: MetricReport,
    pub loss_trace: Vec<f64>,
    pub pending_moves: usize,
    /// Set while an optimization of this session is running.
    pub job: Option<Progress>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutResponse {
    pub session_id: String,
    pub step: usize,
    pub layout: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotInfo {
    pub session_id: String,
    pub path: PathBuf,
    pub version: u64,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub description: String,
    pub control_points: Option<usize>,
    pub k_original: Option<usize>,
    pub k_visual: Option<usize>,
    pub drag_class: Option<i64>,
}

struct Session {
    writer: tokio::sync::Mutex<()>,
    state: RwLock<SessionState>,
    data: Arc<SessionData>,
    running: Mutex<Option<Progress>>,
}

impl Session {
    fn read<R>(&self, f: impl FnOnce(&SessionState) -> R) -> R {
        f(&self.state.read().unwrap_or_else(|e| e.into_inner()))
    }

    fn write<R>(&self, f: impl FnOnce(&mut SessionState) -> R) -> R {
        f(&mut self.state.write().unwrap_or_else(|e| e.into_inner()))
    }
}

pub struct SessionManager {
    registry: Registry,
    store: Option<PathBuf>,
    sessions: RwLock<BTreeMap<String, Arc<Session>>>,
    jobs: RwLock<BTreeMap<String, Arc<Mutex<JobStatus>>>>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn new_id(prefix: &str) -> String {
    format!("{prefix}-{}", uuid::Uuid::new_v4().simple())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ServiceResult<T> + Send + 'static) -> ServiceResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

impl SessionManager {
    /// Manager without on-disk persistence.
    pub fn in_memory(registry: Registry) -> Self {
        Self {
            registry,
            store: None,
            sessions: RwLock::default(),
            jobs: RwLock::default(),
        }
    }

    /// Manager persisting every session to `<store>/<session_id>.json`.
    /// Sessions already in the directory are loaded.
    pub fn open(registry: Registry, store: impl Into<PathBuf>) -> ServiceResult<Self> {
        let store = store.into();
        std::fs::create_dir_all(&store)?;
        let manager = Self {
            registry,
            store: Some(store.clone()),
            sessions: RwLock::default(),
            jobs: RwLock::default(),
        };
        for entry in std::fs::read_dir(&store)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let state = SessionState::load_snapshot(&path)?;
            let data = SessionData::load(&manager.registry, &state)?;
            manager.insert(state, data);
        }
        Ok(manager)
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    fn insert(&self, state: SessionState, data: SessionData) -> Arc<Session> {
        let id = state.session_id.clone();
        let session = Arc::new(Session {
            writer: tokio::sync::Mutex::new(()),
            state: RwLock::new(state),
            data: Arc::new(data),
            running: Mutex::new(None),
        });
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, session.clone());
        session
    }

    fn session(&self, id: &str) -> ServiceResult<Arc<Session>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn persist(&self, state: &SessionState) -> ServiceResult<()> {
        let Some(dir) = &self.store else {
            return Ok(());
        };
        write_atomic(&dir.join(format!("{}.json", state.session_id)), &state.to_snapshot()?)
    }

    pub fn list_sessions(&self) -> Vec<String> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }

    pub fn datasets(&self) -> Vec<DatasetInfo> {
        self.registry
            .datasets
            .iter()
            .map(|(name, e)| DatasetInfo {
                name: name.clone(),
                description: e.description.clone(),
                control_points: e.control_points,
                k_original: e.k_original,
                k_visual: e.k_visual,
                drag_class: e.drag_class,
            })
            .collect()
    }

    pub async fn create_session(self: &Arc<Self>, req: CreateSession) -> ServiceResult<SessionSummary> {
        let me = self.clone();
        let payload = serde_json::to_value(&req)?;
        let id = new_id("s");
        let (mut state, data) = blocking(move || create(&me.registry, id, &req)).await?;
        state.audit.push(AuditEntry::now("create_session", &payload));
        self.persist(&state)?;
        let session = self.insert(state, data);
        Ok(summary(&session))
    }

    pub fn summary(&self, id: &str) -> ServiceResult<SessionSummary> {
        let session = self.session(id)?;
        Ok(summary(&session))
    }

    pub fn layout(&self, id: &str, step: Option<usize>) -> ServiceResult<LayoutResponse> {
        self.session(id)?.read(|s| {
            let step = step.unwrap_or(s.steps.len() - 1);
            Ok(LayoutResponse {
                session_id: s.session_id.clone(),
                step,
                layout: points(&s.step(step)?.layout),
            })
        })
    }

    pub fn metrics(&self, id: &str, step: Option<usize>) -> ServiceResult<MetricReport> {
        self.session(id)?.read(|s| {
            let step = step.unwrap_or(s.steps.len() - 1);
            Ok(s.step(step)?.metrics.clone())
        })
    }

    pub fn trajectories(&self, id: &str, from: usize, to: usize) -> ServiceResult<Trajectories> {
        self.session(id)?.read(|s| s.trajectories(from, to))
    }

    pub fn audit(&self, id: &str) -> ServiceResult<Vec<AuditEntry>> {
        Ok(self.session(id)?.read(|s| s.audit.clone()))
    }

    /// Full state of a session, as stored in snapshots.
    pub fn state(&self, id: &str) -> ServiceResult<SessionState> {
        Ok(self.session(id)?.read(SessionState::clone))
    }

    pub async fn submit_manipulation(&self, id: &str, moves: Vec<Move64>) -> ServiceResult<usize> {
        let session = self.session(id)?;
        let _turn = session.writer.lock().await;
        let payload = json!({ "moves": moves });
        session.write(|s| {
            let n = s.submit(ManipulationSet64::new(moves))?;
            s.audit.push(AuditEntry::now("submit_manipulation", &payload));
            self.persist(s)?;
            Ok(n)
        })
    }

    /// Runs the refit and waits for it.
    pub async fn optimize(&self, id: &str) -> ServiceResult<OptimizeResponse> {
        self.optimize_with(id, new_id("j"), None).await
    }

    /// Queues the refit and returns its job id at once.
    pub fn start_optimize(self: &Arc<Self>, id: &str) -> ServiceResult<String> {
        let session = self.session(id)?;
        let job_id = new_id("j");
        let total = session.read(|s| s.config.refit.iterations);
        let job = Arc::new(Mutex::new(JobStatus {
            job_id: job_id.clone(),
            session_id: id.to_string(),
            state: JobState::Queued,
            progress: Progress {
                job_id: job_id.clone(),
                iteration: 0,
                total,
                current_loss: None,
            },
            result: None,
            error: None,
        }));
        self.jobs
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(job_id.clone(), job.clone());
        let me = self.clone();
        let id = id.to_string();
        let jid = job_id.clone();
        tokio::spawn(async move {
            let outcome = me.optimize_with(&id, jid, Some(job.clone())).await;
            let mut status = lock(&job);
            match outcome {
                Ok(r) => {
                    status.state = JobState::Succeeded;
                    status.result = Some(r);
                }
                Err(e) => {
                    status.state = JobState::Failed;
                    status.error = Some(e.body());
                }
            }
        });
        Ok(job_id)
    }

    pub fn job(&self, job_id: &str) -> ServiceResult<JobStatus> {
        let jobs = self.jobs.read().unwrap_or_else(|e| e.into_inner());
        let job = jobs.get(job_id).ok_or_else(|| ServiceError::UnknownJob(job_id.to_string()))?;
        let mut status = lock(job).clone();
        if status.state == JobState::Running {
            if let Ok(session) = self.session(&status.session_id) {
                if let Some(p) = lock(&session.running).as_ref().filter(|p| p.job_id == job_id) {
                    status.progress = p.clone();
                }
            }
        }
        Ok(status)
    }

    async fn optimize_with(
        &self,
        id: &str,
        job_id: String,
        job: Option<Arc<Mutex<JobStatus>>>,
    ) -> ServiceResult<OptimizeResponse> {
        let session = self.session(id)?;
        let _turn = session.writer.lock().await;
        if let Some(j) = &job {
            lock(j).state = JobState::Running;
        }
        let state = session.read(SessionState::clone);
        *lock(&session.running) = Some(Progress {
            job_id,
            iteration: 0,
            total: state.config.refit.iterations,
            current_loss: None,
        });

        let worker = session.clone();
        let computed = blocking(move || {
            let mut observe = |i: usize, loss: f64| {
                if let Some(p) = lock(&worker.running).as_mut() {
                    p.iteration = i + 1;
                    p.current_loss = Some(loss);
                }
            };
            let out = state.compute_refit(&worker.data, Some(&mut observe));
            out.map(|o| (o, state))
        })
        .await;
        let final_progress = lock(&session.running).take();
        if let (Some(j), Some(p)) = (&job, final_progress) {
            lock(j).progress = p;
        }
        let (outcome, _) = computed?;

        session.write(|s| {
            let step = s.apply_refit(outcome);
            s.audit.push(AuditEntry::now("optimize", &Value::Null));
            self.persist(s)?;
            let rec = s.current();
            Ok(OptimizeResponse {
                session_id: s.session_id.clone(),
                step,
                layout: points(&rec.layout),
                metrics: rec.metrics.clone(),
                loss_trace: rec.loss_trace.clone(),
            })
        })
    }

    /// Writes the session's state to `path`, or to its store file when no
    /// path is given.
    pub async fn snapshot(&self, id: &str, path: Option<PathBuf>) -> ServiceResult<SnapshotInfo> {
        let session = self.session(id)?;
        let _turn = session.writer.lock().await;
        let path = match (path, &self.store) {
            (Some(p), _) => p,
            (None, Some(dir)) => dir.join(format!("{id}.json")),
            (None, None) => {
                return Err(ServiceError::BadRequest(
                    "no snapshot path given and the service has no store directory".into(),
                ))
            }
        };
        let bytes = session.read(SessionState::to_snapshot)?;
        write_atomic(&path, &bytes)?;
        Ok(SnapshotInfo {
            session_id: id.to_string(),
            path,
            version: SNAPSHOT_VERSION,
            bytes: bytes.len(),
        })
    }

    /// Loads a snapshot as a new session with a fresh id.
    pub async fn restore(self: &Arc<Self>, path: PathBuf) -> ServiceResult<SessionSummary> {
        let me = self.clone();
        let payload = json!({ "path": path });
        let (mut state, data) = blocking(move || {
            let state = SessionState::load_snapshot(&path)?;
            let data = SessionData::load(&me.registry, &state)?;
            Ok((state, data))
        })
        .await?;
        state.session_id = new_id("s");
        state.audit.push(AuditEntry::now("restore", &payload));
        self.persist(&state)?;
        Ok(summary(&self.insert(state, data)))
    }
}

fn summary(session: &Session) -> SessionSummary {
    let job = lock(&session.running).clone();
    session.read(|s| {
        let cur = s.current();
        SessionSummary {
            session_id: s.session_id.clone(),
            dataset: s.dataset.clone(),
            scenario: s.scenario,
            family: s.family,
            init: s.init,
            n_points: s.n_points(),
            step: s.steps.len() - 1,
            control_points: s.control.as_ref().map(|c| c.indices.clone()),
            labels: session.data.labels.clone(),
            layout: points(&cur.layout),
            metrics: cur.metrics.clone(),
            loss_trace: cur.loss_trace.clone(),
            pending_moves: s.pending.len(),
            job,
        }
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> ServiceResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
