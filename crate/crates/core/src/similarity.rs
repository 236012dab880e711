//! Gaussian similarity matrices for layouts and clone targets, RBF kernel
//! matrices over feature rows, and the weighting masks of the objective.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, self_squared_distances, squared_distances, upper_mean};
use crate::{Error, Result, Scalar};

/// Either a fixed scale or one derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Fixed(f64),
    #[default]
    Auto,
}

/// Pairwise similarities `exp(-|a - b|^2 / sigma)` over one point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SimilarityMatrix<T: Scalar> {
    pub values: Array2<T>,
    pub sigma: T,
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-pair weights of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MaskMatrix<T: Scalar> {
    pub values: Array2<T>,
}

impl<T: Scalar> MaskMatrix<T> {
    pub fn from_values(values: Array2<T>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::ShapeMismatch(format!("mask is {:?}, expected square", values.dim())));
        }
        if let Some(&v) = values.iter().find(|&&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::OutOfRange {
                what: "mask entry",
                value: v.as_f64(),
            });
        }
        Ok(Self { values })
    }

    /// Entrywise l1 norm, including the diagonal.
    pub fn l1_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a + v.abs())
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// RBF kernel values between a row set and the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KernelMatrix<T: Scalar> {
    pub values: Array2<T>,
    pub gamma: T,
}

fn check_finite<T: Scalar>(a: ArrayView2<'_, T>, context: &str) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            context: context.to_string(),
        });
    }
    Ok(())
}

fn gaussian<T: Scalar>(mut sq: Array2<T>, sigma: T) -> Array2<T> {
    sq.mapv_inplace(|d| (-d / sigma).exp());
    sq
}

/// Similarities between projected points, `exp(-|y_i - y_j|^2 / sigma_p)`.
pub fn projected_similarity<T: Scalar>(layout: ArrayView2<'_, T>, sigma_p: T) -> Result<SimilarityMatrix<T>> {
    if !(sigma_p > T::zero()) {
        return Err(Error::NonPositiveSigma(sigma_p.as_f64()));
    }
    check_finite(layout, "layout")?;
    let sq = linalg::direct_self_squared_distances(layout);
    Ok(SimilarityMatrix {
        values: gaussian(sq, sigma_p),
        sigma: sigma_p,
    })
}

/// Mean squared pairwise distance over all unordered pairs.
pub fn mean_squared_distance<T: Scalar>(coords: ArrayView2<'_, T>) -> T {
    upper_mean(&linalg::direct_self_squared_distances(coords))
}

/// Target similarities that make the learner imitate a given layout.
///
/// With [`Scale::Auto`] the scale is the mean squared pairwise distance of
/// `coords`; when every point coincides the scale falls back to 1.
pub fn clone_target<T: Scalar>(coords: ArrayView2<'_, T>, sigma_copy: Scale) -> Result<SimilarityMatrix<T>> {
    if coords.nrows() < 2 {
        return Err(Error::SinglePoint);
    }
    check_finite(coords, "cloned coordinates")?;
    let sq = linalg::direct_self_squared_distances(coords);
    let sigma = match sigma_copy {
        Scale::Fixed(s) => {
            if !(s > 0.0) {
                return Err(Error::NonPositiveSigma(s));
            }
            T::lit(s)
        }
        Scale::Auto => {
            let m = upper_mean(&sq);
            if m > T::zero() {
                m
            } else {
                T::one()
            }
        }
    };
    Ok(SimilarityMatrix {
        values: gaussian(sq, sigma),
        sigma,
    })
}

/// Mean Euclidean distance over all unordered pairs of rows.
pub fn mean_pairwise_distance<T: Scalar>(x: ArrayView2<'_, T>) -> T {
    let d = self_squared_distances(x).mapv(|v| v.sqrt());
    upper_mean(&d)
}

/// RBF kernel `exp(-|x_i - x_j|^2 / gamma^2)`.
///
/// `cols = None` builds the square training kernel over `rows`; that is the
/// only case where [`Scale::Auto`] (mean pairwise distance) is accepted.
pub fn rbf_kernel<T: Scalar>(
    rows: ArrayView2<'_, T>,
    cols: Option<ArrayView2<'_, T>>,
    gamma: Scale,
) -> Result<KernelMatrix<T>> {
    check_finite(rows, "kernel rows")?;
    let gamma = match (gamma, &cols) {
        (Scale::Fixed(g), _) => {
            if !(g > 0.0) {
                return Err(Error::NonPositiveGamma(g));
            }
            T::lit(g)
        }
        (Scale::Auto, None) => {
            let g = mean_pairwise_distance(rows);
            if !(g > T::zero()) {
                return Err(Error::NonPositiveGamma(g.as_f64()));
            }
            g
        }
        (Scale::Auto, Some(_)) => {
            return Err(Error::InvalidConfig(
                "automatic kernel width is only defined on the training set".into(),
            ))
        }
    };
    rbf_kernel_with(rows, cols, gamma)
}

/// Same as [`rbf_kernel`] with an explicit width.
pub fn rbf_kernel_with<T: Scalar>(
    rows: ArrayView2<'_, T>,
    cols: Option<ArrayView2<'_, T>>,
    gamma: T,
) -> Result<KernelMatrix<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::NonPositiveGamma(gamma.as_f64()));
    }
    let sq = match cols {
        None => self_squared_distances(rows),
        Some(c) => {
            if c.ncols() != rows.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: c.ncols(),
                    found: rows.ncols(),
                });
            }
            check_finite(c, "kernel columns")?;
            squared_distances(rows, c)
        }
    };
    Ok(KernelMatrix {
        values: gaussian(sq, gamma * gamma),
        gamma,
    })
}

/// Constant mask with every entry equal to `value`.
pub fn uniform_mask<T: Scalar>(n: usize, value: f64) -> Result<MaskMatrix<T>> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::OutOfRange { what: "mask value", value });
    }
    if n < 2 {
        return Err(Error::SinglePoint);
    }
    Ok(MaskMatrix {
        values: Array2::from_elem((n, n), T::lit(value)),
    })
}
