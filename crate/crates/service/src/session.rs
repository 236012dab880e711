//! Session state and the synchronous operations on it. Locking, jobs and
//! persistence live in [`crate::manager`].

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use simembed::datasets::Registry;
use simembed::init::{force_scheme, load_external_layout, pca_2d, DEFAULT_FORCE_ITERATIONS};
use simembed::metrics::{evaluate, MetricReport, DEFAULT_NEIGHBOR_K};
use simembed::optimizer::Observer;
use simembed::preprocess::fit_pca;
use simembed::scenarios::{clone_layout, neighbor_refit, refit_to_layout, select_control_points};
use simembed::{
    ControlPointSet, Error, InitMethod, Layout2D64, LayoutSource, ManipulationSet64, ModelFamily, Move64,
    NeighborSpec, PcaReduction64, ProjectionModel64, ScenarioConfig,
};

use crate::error::{ServiceError, ServiceResult};

pub const SNAPSHOT_FORMAT: &str = "simembed-session";
pub const SNAPSHOT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Refit on control points only, project everything.
    #[serde(alias = "1")]
    Interpolation,
    /// Refit on all points against the neighbour target.
    #[serde(alias = "2", alias = "neighbours")]
    Neighbors,
}

/// Optional overrides for a new session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionOptions {
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub refit_learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub control_points: Option<usize>,
    pub k_original: Option<usize>,
    pub k_visual: Option<usize>,
    /// Layout file for the external init, one `x,y` line per dataset row.
    pub layout_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub dataset: String,
    pub scenario: ScenarioKind,
    pub init: InitMethod,
    pub family: ModelFamily,
    #[serde(default)]
    pub options: SessionOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub operation: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
    /// Hex SHA-256 of the request payload as JSON.
    pub payload_sha256: String,
}

impl AuditEntry {
    pub fn now(operation: &str, payload: &Value) -> Self {
        let bytes = serde_json::to_vec(payload).unwrap_or_default();
        Self {
            operation: operation.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            payload_sha256: hex::encode(Sha256::digest(&bytes)),
        }
    }
}

/// One entry of the layout history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub layout: Layout2D64,
    /// Moves that led to this step; empty for the first layout.
    pub manipulation: ManipulationSet64,
    pub loss_trace: Vec<f64>,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub dataset: String,
    pub scenario: ScenarioKind,
    pub init: InitMethod,
    pub family: ModelFamily,
    pub pca: PcaReduction64,
    /// Present for interpolation sessions.
    pub control: Option<ControlPointSet>,
    pub model: ProjectionModel64,
    /// Append-only; never empty once created.
    pub steps: Vec<StepRecord>,
    pub pending: ManipulationSet64,
    pub config: ScenarioConfig,
    pub neighbor_spec: NeighborSpec,
    pub seed: u64,
    pub audit: Vec<AuditEntry>,
}

/// Reduced features of a session's dataset, rebuilt from the registry.
#[derive(Debug, Clone)]
pub struct SessionData {
    pub x: Array2<f64>,
    /// Control-point rows of `x` for interpolation sessions.
    pub control_x: Option<Array2<f64>>,
    pub labels: Option<Vec<i64>>,
}

impl SessionData {
    pub fn load(registry: &Registry, state: &SessionState) -> ServiceResult<Self> {
        let ds = registry.load_dataset(&state.dataset)?;
        let x = state.pca.transform(ds.features.view())?;
        let control_x = state.control.as_ref().map(|c| x.select(Axis(0), &c.indices));
        Ok(Self {
            x,
            control_x,
            labels: ds.labels,
        })
    }

    /// Rows the model is trained on.
    fn training(&self) -> &Array2<f64> {
        self.control_x.as_ref().unwrap_or(&self.x)
    }

    fn metrics(&self, layout: &Layout2D64) -> ServiceResult<MetricReport> {
        Ok(evaluate(
            layout.coords.view(),
            self.labels.as_deref(),
            self.x.view(),
            DEFAULT_NEIGHBOR_K,
        )?)
    }
}

/// Preprocesses the dataset, builds the initial layout and clones it.
pub fn create(registry: &Registry, session_id: String, req: &CreateSession) -> ServiceResult<(SessionState, SessionData)> {
    let entry = registry.entry(&req.dataset)?;
    let ds = registry.load_dataset(&req.dataset)?;
    let o = &req.options;
    let seed = o.seed.unwrap_or(0);
    let pca = fit_pca(ds.features.view(), entry.retained_fraction)?;
    let x = pca.transform(ds.features.view())?;

    let mut config = match req.scenario {
        ScenarioKind::Interpolation => ScenarioConfig::for_family(req.family),
        ScenarioKind::Neighbors => ScenarioConfig::for_neighbor_learning(req.family),
    }
    .with_seed(seed);
    if let Some(it) = o.iterations {
        config = config.with_iterations(it);
    }
    if let Some(lr) = o.learning_rate {
        config.clone.learning_rate = lr;
        config.refit.learning_rate = lr;
    }
    if let Some(lr) = o.refit_learning_rate {
        config.refit.learning_rate = lr;
    }
    config.validate()?;

    let defaults = NeighborSpec::default();
    let neighbor_spec = NeighborSpec {
        k_original: o.k_original.or(entry.k_original).unwrap_or(defaults.k_original),
        k_visual: o.k_visual.or(entry.k_visual).unwrap_or(defaults.k_visual),
        ..defaults
    };
    let control = match req.scenario {
        ScenarioKind::Interpolation => Some(select_control_points(
            x.nrows(),
            o.control_points.or(entry.control_points),
            seed,
        )?),
        ScenarioKind::Neighbors => {
            neighbor_spec.validate(x.nrows())?;
            None
        }
    };
    let rows = control.as_ref().map(|c| c.indices.as_slice());

    let init = match (req.init, rows) {
        (InitMethod::Pca, None) => pca_2d(x.view())?,
        (InitMethod::Pca, Some(r)) => pca_2d(x.view())?.select(r),
        (InitMethod::Force, None) => force_scheme(x.view(), DEFAULT_FORCE_ITERATIONS, seed)?,
        (InitMethod::Force, Some(r)) => force_scheme(x.select(Axis(0), r).view(), DEFAULT_FORCE_ITERATIONS, seed)?,
        (InitMethod::External, rows) => {
            let path = o
                .layout_path
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("external init needs options.layout_path".into()))?;
            let full: Layout2D64 = load_external_layout(path, Some(x.nrows()))?;
            match rows {
                Some(r) => full.select(r),
                None => full,
            }
        }
    };

    let data = SessionData {
        control_x: control.as_ref().map(|c| x.select(Axis(0), &c.indices)),
        x,
        labels: ds.labels,
    };
    let fit = clone_layout(data.training().view(), &init, req.family, &config, None)?;
    let layout = Layout2D64::new(fit.model.project(data.x.view())?, LayoutSource::Learned);
    let metrics = data.metrics(&layout)?;
    let state = SessionState {
        session_id,
        dataset: req.dataset.clone(),
        scenario: req.scenario,
        init: req.init,
        family: req.family,
        pca,
        control,
        model: fit.model,
        steps: vec![StepRecord {
            layout,
            manipulation: ManipulationSet64::default(),
            loss_trace: fit.loss_trace,
            metrics,
        }],
        pending: ManipulationSet64::default(),
        config,
        neighbor_spec,
        seed,
        audit: Vec::new(),
    };
    Ok((state, data))
}

impl SessionState {
    pub fn n_points(&self) -> usize {
        self.current().layout.len()
    }

    pub fn current(&self) -> &StepRecord {
        self.steps.last().expect("history is never empty")
    }

    pub fn step(&self, step: usize) -> ServiceResult<&StepRecord> {
        self.steps.get(step).ok_or(ServiceError::StepOutOfRange {
            step,
            steps: self.steps.len(),
        })
    }

    /// Replaces the pending manipulation. An empty list leaves the state
    /// unchanged. Returns the number of accepted moves.
    pub fn submit(&mut self, moves: ManipulationSet64) -> ServiceResult<usize> {
        if moves.is_empty() {
            return Ok(0);
        }
        moves.validate(self.n_points())?;
        for m in &moves.moves {
            if !m.position.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteInput {
                    context: format!("move of point {}", m.index),
                }
                .into());
            }
        }
        if let Some(c) = &self.control {
            moves.to_control_positions(c)?;
        }
        let n = moves.len();
        self.pending = moves;
        Ok(n)
    }

    /// Per-point displacement between two history steps, with the moves
    /// submitted in between.
    pub fn trajectories(&self, from: usize, to: usize) -> ServiceResult<Trajectories> {
        let a = &self.step(from)?.layout;
        let b = &self.step(to)?.layout;
        let points = (0..a.len())
            .map(|i| Trajectory {
                index: i,
                from: [a.coords[[i, 0]], a.coords[[i, 1]]],
                to: [b.coords[[i, 0]], b.coords[[i, 1]]],
            })
            .collect();
        let manipulations = if from < to {
            self.steps[from + 1..=to].iter().map(|s| s.manipulation.clone()).collect()
        } else {
            Vec::new()
        };
        Ok(Trajectories {
            from,
            to,
            points,
            manipulations,
        })
    }

    /// Refit config for the next step; the seed advances with the history.
    fn step_config(&self) -> ScenarioConfig {
        let mut c = self.config.clone();
        c.refit.seed = self.seed.wrapping_add(self.steps.len() as u64);
        c
    }

    /// Runs the scenario's refit on the pending manipulation without
    /// touching the state.
    pub fn compute_refit(&self, data: &SessionData, observer: Option<Observer<'_>>) -> ServiceResult<RefitOutcome> {
        let config = self.step_config();
        let current = &self.current().layout;
        let fit = match (&self.control, &data.control_x) {
            (Some(control), Some(xs)) => {
                let control_layout = Layout2D64::new(self.model.project(xs.view())?, LayoutSource::Learned);
                let manipulated = self.pending.to_control_positions(control)?.apply(&control_layout)?;
                refit_to_layout(xs.view(), &self.model, &manipulated, &config, observer)?
            }
            _ => {
                neighbor_refit(
                    data.x.view(),
                    &self.model,
                    current,
                    &self.pending,
                    &self.neighbor_spec,
                    &config,
                    observer,
                )?
                .0
            }
        };
        let layout = Layout2D64::new(fit.model.project(data.x.view())?, LayoutSource::Learned);
        let metrics = data.metrics(&layout)?;
        Ok(RefitOutcome {
            model: fit.model,
            step: StepRecord {
                layout,
                manipulation: self.pending.clone(),
                loss_trace: fit.loss_trace,
                metrics,
            },
        })
    }

    /// Appends the refit's layout and clears the pending manipulation.
    pub fn apply_refit(&mut self, outcome: RefitOutcome) -> usize {
        self.model = outcome.model;
        self.steps.push(outcome.step);
        self.pending = ManipulationSet64::default();
        self.steps.len() - 1
    }

    pub fn to_snapshot(&self) -> ServiceResult<Vec<u8>> {
        Ok(serde_json::to_vec(&serde_json::json!({
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "state": self,
        }))?)
    }

    pub fn from_snapshot(bytes: &[u8]) -> ServiceResult<Self> {
        let mut doc: Value = serde_json::from_slice(bytes)?;
        let version = doc.get("version").and_then(Value::as_u64);
        if doc.get("format").and_then(Value::as_str) != Some(SNAPSHOT_FORMAT) || version.is_none() {
            return Err(Error::InvalidConfig("not a session snapshot".into()).into());
        }
        let found = version.unwrap_or_default();
        if found != SNAPSHOT_VERSION {
            return Err(ServiceError::VersionMismatch {
                found,
                expected: SNAPSHOT_VERSION,
            });
        }
        let state: SessionState = serde_json::from_value(doc["state"].take())?;
        if state.steps.is_empty() {
            return Err(Error::InvalidConfig("snapshot has an empty layout history".into()).into());
        }
        Ok(state)
    }

    pub fn load_snapshot(path: &Path) -> ServiceResult<Self> {
        Self::from_snapshot(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct RefitOutcome {
    pub model: ProjectionModel64,
    pub step: StepRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub index: usize,
    pub from: [f64; 2],
    pub to: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectories {
    pub from: usize,
    pub to: usize,
    pub points: Vec<Trajectory>,
    pub manipulations: Vec<ManipulationSet64>,
}

/// `[x, y]` rows of a layout.
pub fn points(layout: &Layout2D64) -> Vec<[f64; 2]> {
    layout.coords.rows().into_iter().map(|r| [r[0], r[1]]).collect()
}

/// Moves as sent by clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitManipulation {
    pub moves: Vec<Move64>,
}
