//! Centering and principal component reduction applied before any
//! projection is learned.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg::symmetric_eigen;
use crate::{Error, Result, Scalar};

/// Options for [`fit_pca_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaOptions {
    /// Fraction of total variance the kept components must explain.
    pub retained_fraction: f64,
    /// Divide each feature by its standard deviation before the
    /// decomposition. Off by default: features are only centered.
    pub standardize: bool,
    /// Rescale each output component to unit variance.
    pub whiten: bool,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            retained_fraction: 0.9,
            standardize: false,
            whiten: false,
        }
    }
}

/// A fitted principal component reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PcaReduction<T: Scalar> {
    pub mean: Array1<T>,
    /// Per-feature divisor, present when the reduction was fitted with
    /// standardization.
    pub scale: Option<Array1<T>>,
    /// `k x n`, one orthonormal component per row.
    pub components: Array2<T>,
    /// Variance captured by each kept component (eigenvalues).
    pub explained_variance: Array1<T>,
    pub explained_variance_ratio: Array1<T>,
    pub retained_fraction: f64,
    pub whiten: bool,
}

impl<T: Scalar> PcaReduction<T> {
    pub fn n_features(&self) -> usize {
        self.components.ncols()
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn cumulative_ratio(&self) -> T {
        self.explained_variance_ratio.sum()
    }

    /// Projects rows of `data` onto the kept components.
    pub fn transform(&self, data: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if data.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: data.ncols(),
            });
        }
        let mut centered = &data - &self.mean;
        if let Some(scale) = &self.scale {
            centered = &centered / scale;
        }
        let mut out = centered.dot(&self.components.t());
        if self.whiten {
            for (mut col, &var) in out.axis_iter_mut(Axis(1)).zip(self.explained_variance.iter()) {
                let sd = var.sqrt();
                if sd > T::zero() {
                    col.mapv_inplace(|v| v / sd);
                }
            }
        }
        Ok(out)
    }

    /// Maps reduced coordinates back to feature space (ignores whitening).
    pub fn inverse_transform(&self, reduced: ArrayView2<'_, T>) -> Array2<T> {
        let mut x = reduced.dot(&self.components);
        if let Some(scale) = &self.scale {
            x = &x * scale;
        }
        x + &self.mean
    }
}

/// Fits a centered (not scaled) reduction keeping the smallest number of
/// components whose explained variance reaches `retained_fraction`.
pub fn fit_pca<T: Scalar>(data: ArrayView2<'_, T>, retained_fraction: f64) -> Result<PcaReduction<T>> {
    fit_pca_with(
        data,
        &PcaOptions {
            retained_fraction,
            ..PcaOptions::default()
        },
    )
}

pub fn fit_pca_with<T: Scalar>(data: ArrayView2<'_, T>, options: &PcaOptions) -> Result<PcaReduction<T>> {
    let frac = options.retained_fraction;
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::OutOfRange {
            what: "retained_fraction",
            value: frac,
        });
    }
    let spectrum = decompose(data, options.standardize)?;
    let total = spectrum.values.iter().fold(T::zero(), |a, &v| a + v.max(T::zero()));
    let ratios: Vec<T> = spectrum.values.iter().map(|&v| v.max(T::zero()) / total).collect();

    let target = T::lit(frac - 1e-12);
    let mut k = 0;
    let mut cumulative = T::zero();
    while k < ratios.len() {
        cumulative = cumulative + ratios[k];
        k += 1;
        if cumulative >= target {
            break;
        }
    }
    Ok(spectrum.into_reduction(k, &ratios, frac, options.whiten))
}

/// Fits a reduction with a fixed number of components.
pub fn fit_pca_components<T: Scalar>(
    data: ArrayView2<'_, T>,
    n_components: usize,
    standardize: bool,
) -> Result<PcaReduction<T>> {
    let spectrum = decompose(data, standardize)?;
    let total = spectrum.values.iter().fold(T::zero(), |a, &v| a + v.max(T::zero()));
    let ratios: Vec<T> = spectrum.values.iter().map(|&v| v.max(T::zero()) / total).collect();
    let k = n_components.min(ratios.len());
    let cum: f64 = ratios[..k].iter().map(|r| r.as_f64()).sum();
    Ok(spectrum.into_reduction(k, &ratios, cum.min(1.0), false))
}

struct Spectrum<T: Scalar> {
    mean: Array1<T>,
    scale: Option<Array1<T>>,
    /// Descending eigenvalues of the sample covariance.
    values: Vec<T>,
    /// `r x n`, rows are unit eigenvectors matching `values`.
    vectors: Array2<T>,
}

impl<T: Scalar> Spectrum<T> {
    fn into_reduction(self, k: usize, ratios: &[T], retained: f64, whiten: bool) -> PcaReduction<T> {
        let mut components = self.vectors.slice(ndarray::s![..k, ..]).to_owned();
        for mut row in components.rows_mut() {
            fix_sign(row.view_mut());
        }
        PcaReduction {
            mean: self.mean,
            scale: self.scale,
            components,
            explained_variance: Array1::from_iter(self.values[..k].iter().copied()),
            explained_variance_ratio: Array1::from_iter(ratios[..k].iter().copied()),
            retained_fraction: retained,
            whiten,
        }
    }
}

/// Largest-magnitude entry of each component is made positive.
fn fix_sign<T: Scalar>(mut row: ndarray::ArrayViewMut1<'_, T>) {
    let mut best = T::zero();
    let mut sign = T::one();
    for &v in row.iter() {
        if v.abs() > best {
            best = v.abs();
            sign = if v < T::zero() { -T::one() } else { T::one() };
        }
    }
    if sign < T::zero() {
        row.mapv_inplace(|v| -v);
    }
}

fn decompose<T: Scalar>(data: ArrayView2<'_, T>, standardize: bool) -> Result<Spectrum<T>> {
    let (n_rows, n_cols) = data.dim();
    if n_rows < 2 || n_cols == 0 {
        return Err(Error::EmptyData);
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            context: "PCA input".into(),
        });
    }
    let mean = data.mean_axis(Axis(0)).expect("non-empty");
    let mut centered = &data - &mean;
    let denom = T::from_usize_lossy(n_rows - 1);

    let scale = if standardize {
        let sd = centered.map_axis(Axis(0), |c| (c.iter().map(|&v| v * v).sum::<T>() / denom).sqrt());
        let sd = sd.mapv(|s| if s > T::zero() { s } else { T::one() });
        centered = &centered / &sd;
        Some(sd)
    } else {
        None
    };

    let total: T = centered.iter().map(|&v| v * v).sum::<T>() / denom;
    if !(total > T::zero()) {
        return Err(Error::DegenerateVariance);
    }

    let (values, vectors) = if n_cols <= n_rows {
        let cov = centered.t().dot(&centered) / denom;
        let (vals, vecs) = symmetric_eigen(&cov);
        (vals.to_vec(), vecs.reversed_axes())
    } else {
        // Gram trick: eigenvectors of X X^T map to those of X^T X.
        let gram = centered.dot(&centered.t()) / denom;
        let (vals, vecs) = symmetric_eigen(&gram);
        let floor = vals[0] * T::lit(1e-12);
        let keep = vals.iter().take_while(|&&v| v > floor).count();
        let mut comps = Array2::zeros((keep, n_cols));
        for r in 0..keep {
            let v = centered.t().dot(&vecs.column(r));
            let norm = v.dot(&v).sqrt();
            comps.row_mut(r).assign(&(v / norm));
        }
        (vals.iter().take(keep).copied().collect(), comps)
    };

    Ok(Spectrum {
        mean,
        scale,
        values,
        vectors,
    })
}
