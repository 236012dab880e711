//! Learned 2D projections that imitate a given layout and can be steered by
//! moving points.
//!
//! A projection model (linear map or RBF-kernel expansion) is fitted by
//! gradient descent so that the pairwise similarities of its 2D output match
//! a target similarity matrix under a per-pair weight mask. Cloning an
//! existing layout, interpolating a rearranged subset and pulling
//! neighbourhoods along with dragged points are all expressed as choices of
//! target and mask.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix it to `f64`.
//!
//! ```no_run
//! use simembed::{datasets::Registry, init, optimizer::ModelFamily, scenarios};
//!
//! let wine = Registry::bundled()?.load_dataset("wine")?;
//! let x = simembed::preprocess::fit_pca(wine.features.view(), 0.9)?.transform(wine.features.view())?;
//! let control = scenarios::select_control_points(x.nrows(), Some(14), 1)?;
//! let init = init::pca_2d(x.view())?.select(&control.indices);
//! let labels: Vec<i64> = control.indices.iter().map(|&i| wine.labels.as_ref().unwrap()[i]).collect();
//! let mut drag = |l: &simembed::Layout2D64, rows: &[usize]| {
//!     Ok(scenarios::simulate_center_manipulation(l, rows, &labels, 0.05, 1)?.moves)
//! };
//! let out = scenarios::run_interpolation(
//!     x.view(),
//!     &control,
//!     &init,
//!     &mut drag,
//!     ModelFamily::Kernel,
//!     &scenarios::ScenarioConfig::for_family(ModelFamily::Kernel),
//! )?;
//! println!("{}", out.layout.coords);
//! # Ok::<(), simembed::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
mod error;
pub mod init;
pub mod knn;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod preprocess;
mod scalar;
pub mod scenarios;
pub mod similarity;

pub use error::{Error, Result};
pub use init::{InitMethod, Layout2D, LayoutSource};
pub use optimizer::{FitResult, ModelFamily, OptimizerConfig, ProjectionModel};
pub use scalar::Scalar;
pub use scenarios::{ControlPointSet, ManipulationSet, Move, NeighborSpec, ScenarioConfig};
pub use similarity::{MaskMatrix, Scale, SimilarityMatrix};

pub type Layout2D64 = Layout2D<f64>;
pub type ProjectionModel64 = ProjectionModel<f64>;
pub type LinearModel64 = optimizer::LinearModel<f64>;
pub type KernelModel64 = optimizer::KernelModel<f64>;
pub type PcaReduction64 = preprocess::PcaReduction<f64>;
pub type SimilarityMatrix64 = SimilarityMatrix<f64>;
pub type MaskMatrix64 = MaskMatrix<f64>;
pub type KernelMatrix64 = similarity::KernelMatrix<f64>;
pub type ManipulationSet64 = ManipulationSet<f64>;
pub type Move64 = Move<f64>;
