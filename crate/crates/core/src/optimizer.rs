//! Similarity-embedding learning.
//!
//! A projection maps feature rows to layout rows through a design matrix:
//! `Y = X W` for the linear family and `Y = K A` for the kernel family, with
//! `K` the RBF kernel between the rows and the training set. The objective is
//!
//! ```text
//! J = 1 / (2 |M|_1) * sum_{i != j} M_ij (P_ij - T_ij)^2,   P_ij = exp(-|y_i - y_j|^2 / sigma_p)
//! ```
//!
//! Both families share the layout gradient `dJ/dY`; the parameter gradient is
//! `F^T dJ/dY` for design matrix `F`.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::similarity::{self, rbf_kernel, rbf_kernel_with, KernelMatrix, MaskMatrix, Scale, SimilarityMatrix};
use crate::{Error, Result, Scalar};

pub const DEFAULT_LINEAR_LR: f64 = 1e-3;
pub const DEFAULT_KERNEL_LR: f64 = 1e-4;
pub const DEFAULT_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Linear,
    Kernel,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Kernel => "kernel",
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            ModelFamily::Linear => DEFAULT_LINEAR_LR,
            ModelFamily::Kernel => DEFAULT_KERNEL_LR,
        }
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelFamily::Linear),
            "kernel" => Ok(ModelFamily::Kernel),
            other => Err(Error::InvalidConfig(format!("unknown model family `{other}`"))),
        }
    }
}

/// `f(x) = W^T x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearModel<T: Scalar> {
    /// `n x m`
    pub weights: Array2<T>,
}

/// `f(x) = A^T k(x)`, where `k(x)` holds the kernel values between `x` and
/// every training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KernelModel<T: Scalar> {
    /// `N_train x m`
    pub coefficients: Array2<T>,
    pub training_data: Array2<T>,
    pub gamma: T,
}

impl<T: Scalar> LinearModel<T> {
    pub fn project(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.ncols() != self.weights.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.nrows(),
                found: x.ncols(),
            });
        }
        Ok(x.dot(&self.weights))
    }
}

impl<T: Scalar> KernelModel<T> {
    pub fn kernel_for(&self, x: ArrayView2<'_, T>) -> Result<KernelMatrix<T>> {
        rbf_kernel_with(x, Some(self.training_data.view()), self.gamma)
    }

    pub fn project(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.kernel_for(x)?.values.dot(&self.coefficients))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "family", rename_all = "lowercase")]
pub enum ProjectionModel<T: Scalar> {
    Linear(LinearModel<T>),
    Kernel(KernelModel<T>),
}

impl<T: Scalar> ProjectionModel<T> {
    pub fn family(&self) -> ModelFamily {
        match self {
            ProjectionModel::Linear(_) => ModelFamily::Linear,
            ProjectionModel::Kernel(_) => ModelFamily::Kernel,
        }
    }

    /// Maps feature rows into the visual space.
    pub fn project(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        match self {
            ProjectionModel::Linear(m) => m.project(x),
            ProjectionModel::Kernel(m) => m.project(x),
        }
    }

    pub fn parameters(&self) -> &Array2<T> {
        match self {
            ProjectionModel::Linear(m) => &m.weights,
            ProjectionModel::Kernel(m) => &m.coefficients,
        }
    }
}

/// Optional patience-based stop on the best-so-far loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// Scale of the projected-space similarity.
    pub sigma_p: f64,
    /// Output dimension `m`.
    pub output_dim: usize,
    #[serde(default)]
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LINEAR_LR,
            iterations: DEFAULT_ITERATIONS,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            sigma_p: 1.0,
            output_dim: 2,
            early_stopping: None,
        }
    }
}

impl OptimizerConfig {
    pub fn for_family(family: ModelFamily) -> Self {
        Self {
            learning_rate: family.default_learning_rate(),
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        // zero is allowed: it freezes the model
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) || !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("adam betas must lie in (0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if !(self.sigma_p > 0.0) {
            return Err(Error::NonPositiveSigma(self.sigma_p));
        }
        if self.output_dim == 0 {
            return bad("output_dim must be at least 1");
        }
        Ok(())
    }
}

fn check_pair_shapes<T: Scalar>(n: usize, target: &SimilarityMatrix<T>, mask: &MaskMatrix<T>) -> Result<()> {
    if target.values.dim() != (n, n) || mask.values.dim() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "expected {n}x{n} target and mask, got {:?} and {:?}",
            target.values.dim(),
            mask.values.dim()
        )));
    }
    Ok(())
}

/// Masked similarity-matching loss; the diagonal is excluded.
pub fn objective<T: Scalar>(p: &SimilarityMatrix<T>, t: &SimilarityMatrix<T>, m: &MaskMatrix<T>) -> Result<T> {
    let n = p.values.nrows();
    if p.values.ncols() != n {
        return Err(Error::ShapeMismatch("projected similarity is not square".into()));
    }
    check_pair_shapes(n, t, m)?;
    let norm = m.l1_norm();
    if !(norm > T::zero()) {
        return Err(Error::ZeroMask);
    }
    let mut sum = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = p.values[[i, j]] - t.values[[i, j]];
                sum = sum + m.values[[i, j]] * r * r;
            }
        }
    }
    Ok(sum / (T::lit(2.0) * norm))
}

/// Loss and its gradient with respect to the layout rows.
pub fn layout_gradient<T: Scalar>(
    y: ArrayView2<'_, T>,
    target: &SimilarityMatrix<T>,
    mask: &MaskMatrix<T>,
    sigma_p: T,
) -> Result<(T, Array2<T>)> {
    let n = y.nrows();
    check_pair_shapes(n, target, mask)?;
    let norm = mask.l1_norm();
    if !(norm > T::zero()) {
        return Err(Error::ZeroMask);
    }
    let p = similarity::projected_similarity(y, sigma_p)?;

    // s_ij = r_ij + r_ji with r_ij = M_ij (P_ij - T_ij) P_ij
    let mut s = Array2::<T>::zeros((n, n));
    let mut loss = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.values[[i, j]];
            let resid = pij - target.values[[i, j]];
            let w = mask.values[[i, j]];
            loss = loss + w * resid * resid;
            s[[i, j]] = s[[i, j]] + w * resid * pij;
            s[[j, i]] = s[[j, i]] + w * resid * pij;
        }
    }
    let loss = loss / (T::lit(2.0) * norm);

    // dJ/dy_a = -2 / (sigma_p |M|) * sum_j s_aj (y_a - y_j)
    let scale = -T::lit(2.0) / (sigma_p * norm);
    let m = y.ncols();
    let mut grad = Array2::<T>::zeros((n, m));
    for a in 0..n {
        let ya = y.row(a);
        let mut row = grad.row_mut(a);
        for j in 0..n {
            let w = s[[a, j]];
            if w == T::zero() {
                continue;
            }
            let yj = y.row(j);
            for t in 0..m {
                row[t] = row[t] + w * (ya[t] - yj[t]);
            }
        }
        row.mapv_inplace(|v| v * scale);
    }
    Ok((loss, grad))
}

/// `dJ/dW` for a linear projection of `x`.
pub fn linear_gradient<T: Scalar>(
    model: &LinearModel<T>,
    x: ArrayView2<'_, T>,
    target: &SimilarityMatrix<T>,
    mask: &MaskMatrix<T>,
    sigma_p: T,
) -> Result<Array2<T>> {
    let y = model.project(x)?;
    let (_, gy) = layout_gradient(y.view(), target, mask, sigma_p)?;
    Ok(x.t().dot(&gy))
}

/// `dJ/dA` for a kernel projection; `kernel` rows are the projected points,
/// columns the training points.
pub fn kernel_gradient<T: Scalar>(
    model: &KernelModel<T>,
    kernel: &KernelMatrix<T>,
    target: &SimilarityMatrix<T>,
    mask: &MaskMatrix<T>,
    sigma_p: T,
) -> Result<Array2<T>> {
    if kernel.values.ncols() != model.coefficients.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "kernel has {} columns but model has {} coefficient rows",
            kernel.values.ncols(),
            model.coefficients.nrows()
        )));
    }
    let y = kernel.values.dot(&model.coefficients);
    let (_, gy) = layout_gradient(y.view(), target, mask, sigma_p)?;
    Ok(kernel.values.t().dot(&gy))
}

/// Adam moment state for one parameter matrix.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    m: Array2<T>,
    v: Array2<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(shape: (usize, usize), config: &OptimizerConfig) -> Self {
        Self {
            lr: T::lit(config.learning_rate),
            beta1: T::lit(config.adam_beta1),
            beta2: T::lit(config.adam_beta2),
            eps: T::lit(config.adam_epsilon),
            step: 0,
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }

    pub fn update(&mut self, params: &mut Array2<T>, grad: &Array2<T>) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        ndarray::Zip::from(params)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = self.beta1 * *m + (one - self.beta1) * g;
                *v = self.beta2 * *v + (one - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p = *p - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            });
    }
}

/// Outcome of a fit: the final model and the loss before every update.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "M: Serialize + serde::de::DeserializeOwned")]
pub struct FitResult<M> {
    pub model: M,
    pub loss_trace: Vec<f64>,
}

impl<M> FitResult<M> {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace.first().copied().unwrap_or(f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.loss_trace
            .iter()
            .map(|&l| {
                best = best.min(l);
                best
            })
            .collect()
    }

    pub fn map<N>(self, f: impl FnOnce(M) -> N) -> FitResult<N> {
        FitResult {
            model: f(self.model),
            loss_trace: self.loss_trace,
        }
    }
}

/// Writes `iteration,loss` rows.
pub fn write_loss_trace<W: std::io::Write>(trace: &[f64], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,loss")?;
    for (i, l) in trace.iter().enumerate() {
        writeln!(out, "{i},{l}")?;
    }
    Ok(())
}

/// Gaussian draw with standard deviation `1/sqrt(rows)`, rescaled so the
/// layout it produces on `design` has mean squared pairwise distance
/// `sigma_p`.
pub fn random_parameters<T: Scalar>(design: ArrayView2<'_, T>, config: &OptimizerConfig) -> Array2<T> {
    let rows = design.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sd = 1.0 / (rows.max(1) as f64).sqrt();
    let mut params = Array2::from_shape_fn((rows, config.output_dim), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(z * sd)
    });
    if design.nrows() >= 2 {
        let y = design.dot(&params);
        let msd = similarity::mean_squared_distance(y.view());
        if msd > T::zero() && msd.is_finite() {
            let factor = (T::lit(config.sigma_p) / msd).sqrt();
            params.mapv_inplace(|v| v * factor);
        }
    }
    params
}

/// Progress hook: `(iteration, loss)` before each update.
pub type Observer<'a> = &'a mut dyn FnMut(usize, f64);

/// Runs Adam on `params` with layout `design . params`.
pub fn optimize_design<T: Scalar>(
    design: ArrayView2<'_, T>,
    params: &mut Array2<T>,
    target: &SimilarityMatrix<T>,
    mask: &MaskMatrix<T>,
    config: &OptimizerConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<Vec<f64>> {
    config.validate()?;
    if design.ncols() != params.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "design has {} columns, parameters have {} rows",
            design.ncols(),
            params.nrows()
        )));
    }
    let sigma_p = T::lit(config.sigma_p);
    let mut adam = Adam::new(params.dim(), config);
    let mut trace = Vec::with_capacity(config.iterations);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    for it in 0..config.iterations {
        let y = design.dot(params);
        if y.iter().any(|v| !v.is_finite()) {
            trace.push(f64::NAN);
            return Err(Error::NonFiniteLoss { iteration: it, trace });
        }
        let (loss, gy) = layout_gradient(y.view(), target, mask, sigma_p)?;
        let loss = loss.as_f64();
        trace.push(loss);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, trace });
        }
        if let Some(obs) = observer.as_mut() {
            obs(it, loss);
        }
        if let Some(es) = config.early_stopping {
            if loss < best - es.min_delta {
                best = loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > es.patience {
                    break;
                }
            }
        }
        let grad = design.t().dot(&gy);
        adam.update(params, &grad);
    }
    Ok(trace)
}

pub fn fit_linear<T: Scalar>(
    x: ArrayView2<'_, T>,
    target: &SimilarityMatrix<T>,
    mask: &MaskMatrix<T>,
    config: &OptimizerConfig,
    init: Option<LinearModel<T>>,
    observer: Option<Observer<'_>>,
) -> Result<FitResult<LinearModel<T>>> {
    config.validate()?;
    let mut weights = match init {
        Some(m) => {
            if m.weights.nrows() != x.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: x.ncols(),
                    found: m.weights.nrows(),
                });
            }
            m.weights
        }
        None => random_parameters(x, config),
    };
    let trace = optimize_design(x, &mut weights, target, mask, config, observer)?;
    Ok(FitResult {
        model: LinearModel { weights },
        loss_trace: trace,
    })
}

/// Fits kernel coefficients on the training set described by `kernel`
/// (square, training rows by training rows).
pub fn fit_kernel<T: Scalar>(
    training_data: ArrayView2<'_, T>,
    kernel: &KernelMatrix<T>,
    target: &SimilarityMatrix<T>,
    mask: &MaskMatrix<T>,
    config: &OptimizerConfig,
    init: Option<KernelModel<T>>,
    observer: Option<Observer<'_>>,
) -> Result<FitResult<KernelModel<T>>> {
    config.validate()?;
    let n = training_data.nrows();
    if kernel.values.dim() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "training kernel is {:?}, expected {n}x{n}",
            kernel.values.dim()
        )));
    }
    let mut coefficients = match init {
        Some(m) => {
            if m.coefficients.nrows() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.coefficients.nrows(),
                });
            }
            m.coefficients
        }
        None => random_parameters(kernel.values.view(), config),
    };
    let trace = optimize_design(kernel.values.view(), &mut coefficients, target, mask, config, observer)?;
    Ok(FitResult {
        model: KernelModel {
            coefficients,
            training_data: training_data.to_owned(),
            gamma: kernel.gamma,
        },
        loss_trace: trace,
    })
}

/// Fits either family on `features`.
///
/// For the kernel family a warm-start model keeps its own training set and
/// width when that set is `features`; otherwise the training kernel is built
/// with the automatic width.
pub fn fit<T: Scalar>(
    features: ArrayView2<'_, T>,
    family: ModelFamily,
    target: &SimilarityMatrix<T>,
    mask: &MaskMatrix<T>,
    config: &OptimizerConfig,
    init: Option<ProjectionModel<T>>,
    observer: Option<Observer<'_>>,
) -> Result<FitResult<ProjectionModel<T>>> {
    match family {
        ModelFamily::Linear => {
            let init = match init {
                None => None,
                Some(ProjectionModel::Linear(m)) => Some(m),
                Some(ProjectionModel::Kernel(_)) => {
                    return Err(Error::InvalidConfig("kernel model given to a linear fit".into()))
                }
            };
            Ok(fit_linear(features, target, mask, config, init, observer)?.map(ProjectionModel::Linear))
        }
        ModelFamily::Kernel => {
            let (kernel, init) = match init {
                Some(ProjectionModel::Kernel(m)) => {
                    if m.training_data.view() != features {
                        return Err(Error::InvalidConfig(
                            "warm-start kernel model was trained on different rows".into(),
                        ));
                    }
                    (rbf_kernel_with(features, None, m.gamma)?, Some(m))
                }
                Some(ProjectionModel::Linear(_)) => {
                    return Err(Error::InvalidConfig("linear model given to a kernel fit".into()))
                }
                None => (rbf_kernel(features, None, Scale::Auto)?, None),
            };
            Ok(fit_kernel(features, &kernel, target, mask, config, init, observer)?.map(ProjectionModel::Kernel))
        }
    }
}

/// Subtracts the column means.
pub fn centered<T: Scalar>(y: ArrayView2<'_, T>) -> Array2<T> {
    let mean = y.mean_axis(Axis(0)).expect("non-empty layout");
    &y - &mean
}
