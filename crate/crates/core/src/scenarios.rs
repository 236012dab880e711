//! Interactive steering of a learned projection.
//!
//! Two interaction loops are provided:
//!
//! * **Control-point interpolation** ([`run_interpolation`]): a small subset
//!   of the data is laid out by an existing technique, the learner clones
//!   that layout, the user rearranges the subset, the learner clones the
//!   rearrangement and the resulting mapping projects the whole dataset.
//! * **Neighbour learning** ([`run_neighbor_learning`]): the full dataset is
//!   cloned, the user drags points, and the refit target pulls each dragged
//!   point's feature-space and layout neighbours along with it.
//!
//! Neither loop reads class labels. Labels only enter through the
//! manipulation simulators ([`simulate_center_manipulation`],
//! [`drag_class`]) and the metrics.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::init::{Layout2D, LayoutSource};
use crate::knn::neighbors_of;
use crate::optimizer::{self, FitResult, ModelFamily, Observer, OptimizerConfig, ProjectionModel};
use crate::similarity::{clone_target, projected_similarity, uniform_mask, MaskMatrix, Scale, SimilarityMatrix};
use crate::{Error, Result, Scalar};

/// Default jitter of simulated class-centre moves, relative to the layout's
/// RMS radius.
pub const DEFAULT_SPREAD: f64 = 0.05;

/// Refit learning rate of neighbour learning, for both families.
pub const NEIGHBOR_REFIT_LR: f64 = 1e-3;

/// Rows of the dataset the user arranges directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlPointSet {
    pub indices: Vec<usize>,
}

impl ControlPointSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in &indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if !seen.insert(i) {
                return Err(Error::DuplicateIndex(i));
            }
        }
        Ok(Self { indices })
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    /// Position of dataset row `index` within the control set.
    pub fn position(&self, index: usize) -> Option<usize> {
        self.indices.iter().position(|&i| i == index)
    }
}

/// `round(sqrt(n))`.
pub fn default_control_count(n: usize) -> usize {
    (n as f64).sqrt().round() as usize
}

/// Uniform sample of control points without replacement, sorted by index.
pub fn select_control_points(n: usize, count: Option<usize>, seed: u64) -> Result<ControlPointSet> {
    let count = count.unwrap_or_else(|| default_control_count(n));
    if count < 2 || count > n {
        return Err(Error::CountOutOfRange { count, min: 2, max: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, count).into_vec();
    indices.sort_unstable();
    Ok(ControlPointSet { indices })
}

/// One user move: dataset row `index` goes to `position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Move<T: Scalar> {
    pub index: usize,
    pub position: [T; 2],
}

/// Moved points with their new layout coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ManipulationSet<T: Scalar> {
    pub moves: Vec<Move<T>>,
}

impl<T: Scalar> Default for ManipulationSet<T> {
    fn default() -> Self {
        Self { moves: Vec::new() }
    }
}

impl<T: Scalar> ManipulationSet<T> {
    pub fn new(moves: Vec<Move<T>>) -> Self {
        Self { moves }
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.moves.iter().map(|m| m.index).collect()
    }

    /// Indices unique and below `len`, coordinates finite.
    pub fn validate(&self, len: usize) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.moves.len());
        for m in &self.moves {
            if m.index >= len {
                return Err(Error::IndexOutOfRange { index: m.index, len });
            }
            if !seen.insert(m.index) {
                return Err(Error::DuplicateIndex(m.index));
            }
            if !(m.position[0].is_finite() && m.position[1].is_finite()) {
                return Err(Error::NonFiniteInput {
                    context: format!("move of point {}", m.index),
                });
            }
        }
        Ok(())
    }

    /// Copy of `layout` with every move applied. Indices address rows of
    /// `layout` directly.
    pub fn apply(&self, layout: &Layout2D<T>) -> Result<Layout2D<T>> {
        self.validate(layout.len())?;
        let mut coords = layout.coords.clone();
        for m in &self.moves {
            coords[[m.index, 0]] = m.position[0];
            coords[[m.index, 1]] = m.position[1];
        }
        Ok(Layout2D::new(coords, layout.source))
    }

    /// Rewrites dataset-row indices to positions within `control`.
    pub fn to_control_positions(&self, control: &ControlPointSet) -> Result<ManipulationSet<T>> {
        let moves = self
            .moves
            .iter()
            .map(|m| {
                control
                    .position(m.index)
                    .map(|p| Move {
                        index: p,
                        position: m.position,
                    })
                    .ok_or(Error::NotControlPoint(m.index))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ManipulationSet { moves })
    }

    /// Adds the moves of `other`, later moves overriding earlier ones for the
    /// same index.
    pub fn merged(&self, other: &ManipulationSet<T>) -> ManipulationSet<T> {
        let mut moves = self.moves.clone();
        for m in &other.moves {
            match moves.iter_mut().find(|x| x.index == m.index) {
                Some(x) => x.position = m.position,
                None => moves.push(*m),
            }
        }
        ManipulationSet { moves }
    }
}

/// Produces the user's manipulation from the layout the learner currently
/// shows. `layout` rows are dataset rows for neighbour learning and control
/// points (in control-set order) for interpolation; returned indices are
/// always dataset rows.
pub trait Manipulator<T: Scalar> {
    fn manipulate(&mut self, layout: &Layout2D<T>, rows: &[usize]) -> Result<ManipulationSet<T>>;
}

impl<T: Scalar> Manipulator<T> for ManipulationSet<T> {
    fn manipulate(&mut self, _layout: &Layout2D<T>, _rows: &[usize]) -> Result<ManipulationSet<T>> {
        Ok(self.clone())
    }
}

impl<T: Scalar, F> Manipulator<T> for F
where
    F: FnMut(&Layout2D<T>, &[usize]) -> Result<ManipulationSet<T>>,
{
    fn manipulate(&mut self, layout: &Layout2D<T>, rows: &[usize]) -> Result<ManipulationSet<T>> {
        self(layout, rows)
    }
}

/// Optimizer settings for the clone stage and the refit stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub clone: OptimizerConfig,
    pub refit: OptimizerConfig,
    /// Scale of every clone target built by the scenario.
    pub sigma_copy: Scale,
}

impl ScenarioConfig {
    pub fn for_family(family: ModelFamily) -> Self {
        let base = OptimizerConfig::for_family(family);
        Self {
            clone: base.clone(),
            refit: base,
            sigma_copy: Scale::Auto,
        }
    }

    /// Family defaults with the refit learning rate of neighbour learning.
    pub fn for_neighbor_learning(family: ModelFamily) -> Self {
        let mut c = Self::for_family(family);
        c.refit.learning_rate = NEIGHBOR_REFIT_LR;
        c
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.clone.seed = seed;
        self.refit.seed = seed.wrapping_add(1);
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.clone.iterations = iterations;
        self.refit.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.clone.validate()?;
        self.refit.validate()
    }
}

/// Wall-clock time of the two gradient-descent stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub clone: Duration,
    pub refit: Duration,
}

/// Fits a fresh model whose layout of `features` imitates `init`.
pub fn clone_layout<T: Scalar>(
    features: ArrayView2<'_, T>,
    init: &Layout2D<T>,
    family: ModelFamily,
    config: &ScenarioConfig,
    observer: Option<Observer<'_>>,
) -> Result<FitResult<ProjectionModel<T>>> {
    if init.len() != features.nrows() {
        return Err(Error::RowCountMismatch {
            expected: features.nrows(),
            found: init.len(),
        });
    }
    let target = clone_target(init.coords.view(), config.sigma_copy)?;
    let mask = uniform_mask(features.nrows(), 1.0)?;
    optimizer::fit(features, family, &target, &mask, &config.clone, None, observer)
}

/// Result of a control-point interpolation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InterpolationOutcome<T: Scalar> {
    /// Model fitted to the initial control layout.
    pub initial_model: ProjectionModel<T>,
    /// Model refitted to the manipulated control layout.
    pub model: ProjectionModel<T>,
    /// Control points as projected by the initial model.
    pub control_layout: Layout2D<T>,
    /// Control points after the manipulation.
    pub manipulated_control_layout: Layout2D<T>,
    /// Every row of the dataset through the refitted model.
    pub layout: Layout2D<T>,
    pub clone_trace: Vec<f64>,
    pub refit_trace: Vec<f64>,
    #[serde(skip)]
    pub timings: StageTimings,
}

/// Clones the control layout, applies the user's manipulation, clones the
/// manipulated control layout and projects all of `x`.
///
/// The kernel family trains on the control points only and projects `x`
/// through the kernel between `x` and the control points.
pub fn run_interpolation<T: Scalar, M: Manipulator<T>>(
    x: ArrayView2<'_, T>,
    control: &ControlPointSet,
    init: &Layout2D<T>,
    manipulation: &mut M,
    family: ModelFamily,
    config: &ScenarioConfig,
) -> Result<InterpolationOutcome<T>> {
    config.validate()?;
    ControlPointSet::new(control.indices.clone(), x.nrows())?;
    if init.len() != control.count() {
        return Err(Error::RowCountMismatch {
            expected: control.count(),
            found: init.len(),
        });
    }
    let xs = x.select(Axis(0), &control.indices);

    let started = Instant::now();
    let first = clone_layout(xs.view(), init, family, config, None)?;
    let clone_time = started.elapsed();

    let control_layout = Layout2D::new(first.model.project(xs.view())?, LayoutSource::Learned);
    let moves = manipulation.manipulate(&control_layout, &control.indices)?;
    let local = moves.to_control_positions(control)?;
    let manipulated = local.apply(&control_layout)?;

    let started = Instant::now();
    let refit = refit_to_layout(xs.view(), &first.model, &manipulated, config, None)?;
    let refit_time = started.elapsed();

    let layout = Layout2D::new(refit.model.project(x)?, LayoutSource::Learned);
    Ok(InterpolationOutcome {
        initial_model: first.model,
        model: refit.model,
        control_layout,
        manipulated_control_layout: manipulated,
        layout,
        clone_trace: first.loss_trace,
        refit_trace: refit.loss_trace,
        timings: StageTimings {
            clone: clone_time,
            refit: refit_time,
        },
    })
}

/// Refits `model` (warm start) so its layout of `features` imitates
/// `layout`.
pub fn refit_to_layout<T: Scalar>(
    features: ArrayView2<'_, T>,
    model: &ProjectionModel<T>,
    layout: &Layout2D<T>,
    config: &ScenarioConfig,
    observer: Option<Observer<'_>>,
) -> Result<FitResult<ProjectionModel<T>>> {
    if layout.len() != features.nrows() {
        return Err(Error::RowCountMismatch {
            expected: features.nrows(),
            found: layout.len(),
        });
    }
    let target = clone_target(layout.coords.view(), config.sigma_copy)?;
    let mask = uniform_mask(features.nrows(), 1.0)?;
    optimizer::fit(
        features,
        model.family(),
        &target,
        &mask,
        &config.refit,
        Some(model.clone()),
        observer,
    )
}

/// Neighbour counts and mask weights for neighbour learning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborSpec {
    /// Feature-space neighbours of each moved point.
    pub k_original: usize,
    /// Layout neighbours of each moved point, found after the move.
    pub k_visual: usize,
    pub mask_original: f64,
    pub mask_visual: f64,
    /// Weight of every other pair that involves a moved point.
    pub mask_manipulated: f64,
    /// Weight of all remaining pairs.
    pub mask_base: f64,
}

impl Default for NeighborSpec {
    fn default() -> Self {
        Self {
            k_original: 20,
            k_visual: 5,
            mask_original: 1.0,
            mask_visual: 0.5,
            mask_manipulated: 1.0,
            mask_base: 0.1,
        }
    }
}

impl NeighborSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        for (what, v) in [
            ("mask_original", self.mask_original),
            ("mask_visual", self.mask_visual),
            ("mask_manipulated", self.mask_manipulated),
            ("mask_base", self.mask_base),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { what, value: v });
            }
        }
        for k in [self.k_original, self.k_visual] {
            if k >= n {
                return Err(Error::CountOutOfRange {
                    count: k,
                    min: 0,
                    max: n.saturating_sub(1),
                });
            }
        }
        Ok(())
    }
}

/// Target and mask for the neighbour-learning refit.
///
/// The base target is the similarity of the manipulated layout measured with
/// `sigma_p`, the scale the learner's own layout lives in, weighted by
/// `mask_base`. Pairs that involve a moved point get `mask_manipulated`. For
/// each moved point its layout neighbours get target 1 and `mask_visual`,
/// then its feature-space neighbours get target 1 and `mask_original`. All
/// entries are written symmetrically.
pub fn neighbor_target<T: Scalar>(
    features: ArrayView2<'_, T>,
    manipulated: &Layout2D<T>,
    moved: &[usize],
    spec: &NeighborSpec,
    sigma_p: T,
) -> Result<(SimilarityMatrix<T>, MaskMatrix<T>)> {
    let n = features.nrows();
    if manipulated.len() != n {
        return Err(Error::RowCountMismatch {
            expected: n,
            found: manipulated.len(),
        });
    }
    spec.validate(n)?;
    let mut target = projected_similarity(manipulated.coords.view(), sigma_p)?;
    let mut mask = Array2::from_elem((n, n), T::lit(spec.mask_base));
    let emphasis = T::lit(spec.mask_manipulated);
    for &i in moved {
        mask.row_mut(i).fill(emphasis);
        mask.column_mut(i).fill(emphasis);
    }
    let mut set = |i: usize, j: usize, w: T| {
        target.values[[i, j]] = T::one();
        target.values[[j, i]] = T::one();
        mask[[i, j]] = w;
        mask[[j, i]] = w;
    };
    let visual_w = T::lit(spec.mask_visual);
    let original_w = T::lit(spec.mask_original);
    for &i in moved {
        for j in neighbors_of(manipulated.coords.view(), i, spec.k_visual) {
            set(i, j, visual_w);
        }
    }
    for &i in moved {
        for j in neighbors_of(features, i, spec.k_original) {
            set(i, j, original_w);
        }
    }
    for i in 0..n {
        target.values[[i, i]] = T::one();
    }
    Ok((target, MaskMatrix::from_values(mask)?))
}

/// Result of a neighbour-learning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NeighborOutcome<T: Scalar> {
    pub initial_model: ProjectionModel<T>,
    pub model: ProjectionModel<T>,
    /// Layout of the cloned model, before the manipulation.
    pub initial_layout: Layout2D<T>,
    pub manipulated_layout: Layout2D<T>,
    pub manipulation: ManipulationSet<T>,
    /// Layout of the refitted model.
    pub layout: Layout2D<T>,
    pub clone_trace: Vec<f64>,
    pub refit_trace: Vec<f64>,
    #[serde(skip)]
    pub timings: StageTimings,
}

/// Clones `init` over all of `x`, applies the manipulation to the learned
/// layout and refits against the neighbour target.
pub fn run_neighbor_learning<T: Scalar, M: Manipulator<T>>(
    x: ArrayView2<'_, T>,
    init: &Layout2D<T>,
    manipulation: &mut M,
    spec: &NeighborSpec,
    family: ModelFamily,
    config: &ScenarioConfig,
) -> Result<NeighborOutcome<T>> {
    config.validate()?;
    spec.validate(x.nrows())?;
    let started = Instant::now();
    let first = clone_layout(x, init, family, config, None)?;
    let clone_time = started.elapsed();
    let initial_layout = Layout2D::new(first.model.project(x)?, LayoutSource::Learned);

    let rows: Vec<usize> = (0..x.nrows()).collect();
    let moves = manipulation.manipulate(&initial_layout, &rows)?;
    let started = Instant::now();
    let (refit, manipulated) = neighbor_refit(x, &first.model, &initial_layout, &moves, spec, config, None)?;
    let refit_time = started.elapsed();
    let layout = Layout2D::new(refit.model.project(x)?, LayoutSource::Learned);
    Ok(NeighborOutcome {
        initial_model: first.model,
        model: refit.model,
        initial_layout,
        manipulated_layout: manipulated,
        manipulation: moves,
        layout,
        clone_trace: first.loss_trace,
        refit_trace: refit.loss_trace,
        timings: StageTimings {
            clone: clone_time,
            refit: refit_time,
        },
    })
}

/// The refit half of neighbour learning: applies `moves` to `current`,
/// builds the neighbour target and refits `model` from its current state.
pub fn neighbor_refit<T: Scalar>(
    x: ArrayView2<'_, T>,
    model: &ProjectionModel<T>,
    current: &Layout2D<T>,
    moves: &ManipulationSet<T>,
    spec: &NeighborSpec,
    config: &ScenarioConfig,
    observer: Option<Observer<'_>>,
) -> Result<(FitResult<ProjectionModel<T>>, Layout2D<T>)> {
    if moves.is_empty() {
        return Err(Error::EmptyManipulation);
    }
    let manipulated = moves.apply(current)?;
    let moved = moves.indices();
    let (target, mask) = neighbor_target(x, &manipulated, &moved, spec, T::lit(config.refit.sigma_p))?;
    let fit = optimizer::fit(
        x,
        model.family(),
        &target,
        &mask,
        &config.refit,
        Some(model.clone()),
        observer,
    )?;
    Ok((fit, manipulated))
}

/// Outcome of [`simulate_center_manipulation`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedManipulation<T: Scalar> {
    pub moves: ManipulationSet<T>,
    /// Set when every point carries the same label; the moves still collapse
    /// everything onto one centroid.
    pub single_class: bool,
}

/// Moves each point to the centroid of its class in `layout` plus Gaussian
/// jitter with standard deviation `spread` times the layout's RMS radius.
///
/// `layout` row `r` corresponds to dataset row `rows[r]` with label
/// `labels[r]`.
pub fn simulate_center_manipulation<T: Scalar>(
    layout: &Layout2D<T>,
    rows: &[usize],
    labels: &[i64],
    spread: f64,
    seed: u64,
) -> Result<SimulatedManipulation<T>> {
    let n = layout.len();
    if rows.len() != n || labels.len() != n {
        return Err(Error::RowCountMismatch {
            expected: n,
            found: rows.len().min(labels.len()),
        });
    }
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let centroid = |c: i64| -> [T; 2] {
        let members: Vec<usize> = (0..n).filter(|&r| labels[r] == c).collect();
        let cnt = T::from_usize_lossy(members.len());
        let sx = members.iter().map(|&r| layout.coords[[r, 0]]).sum::<T>();
        let sy = members.iter().map(|&r| layout.coords[[r, 1]]).sum::<T>();
        [sx / cnt, sy / cnt]
    };
    let centers: Vec<(i64, [T; 2])> = classes.iter().map(|&c| (c, centroid(c))).collect();
    let sd = spread * layout.rms_radius().as_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moves = (0..n)
        .map(|r| {
            let c = centers.iter().find(|(l, _)| *l == labels[r]).expect("class present").1;
            let jx: f64 = StandardNormal.sample(&mut rng);
            let jy: f64 = StandardNormal.sample(&mut rng);
            Move {
                index: rows[r],
                position: [c[0] + T::lit(jx * sd), c[1] + T::lit(jy * sd)],
            }
        })
        .collect();
    Ok(SimulatedManipulation {
        moves: ManipulationSet { moves },
        single_class: classes.len() < 2,
    })
}

/// Shifts every point of `class_id` by `delta`.
pub fn drag_class<T: Scalar>(
    layout: &Layout2D<T>,
    labels: &[i64],
    class_id: i64,
    delta: [T; 2],
) -> Result<ManipulationSet<T>> {
    if labels.len() != layout.len() {
        return Err(Error::RowCountMismatch {
            expected: layout.len(),
            found: labels.len(),
        });
    }
    let moves: Vec<Move<T>> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == class_id)
        .map(|(i, _)| Move {
            index: i,
            position: [layout.coords[[i, 0]] + delta[0], layout.coords[[i, 1]] + delta[1]],
        })
        .collect();
    if moves.is_empty() {
        return Err(Error::UnknownClass(class_id));
    }
    Ok(ManipulationSet { moves })
}

/// Target asking same-class pairs for similarity `same_class_similarity` and
/// every other pair for 0, with a uniform unit mask.
pub fn supervised_target<T: Scalar>(
    labels: &[i64],
    same_class_similarity: f64,
) -> Result<(SimilarityMatrix<T>, MaskMatrix<T>)> {
    if !(same_class_similarity > 0.0 && same_class_similarity <= 1.0) {
        return Err(Error::OutOfRange {
            what: "same_class_similarity",
            value: same_class_similarity,
        });
    }
    let n = labels.len();
    let s = T::lit(same_class_similarity);
    let values = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            T::one()
        } else if labels[i] == labels[j] {
            s
        } else {
            T::zero()
        }
    });
    Ok((SimilarityMatrix { values, sigma: T::one() }, uniform_mask(n, 1.0)?))
}
